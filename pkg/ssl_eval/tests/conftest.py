import pytest
import torch
from transformers import WavLMConfig, WavLMModel

# A miniature WavLM keeps the tests offline and fast; the architecture
# and loading path are the same ones the full checkpoint goes through.
TINY_CONFIG = dict(
    hidden_size=16,
    num_hidden_layers=2,
    num_attention_heads=2,
    intermediate_size=32,
    conv_dim=(8, 8),
    conv_stride=(5, 2),
    conv_kernel=(10, 3),
    num_conv_pos_embeddings=16,
    num_conv_pos_embedding_groups=4,
    num_buckets=32,
    max_bucket_distance=80,
    do_stable_layer_norm=False,
    vocab_size=32,
)


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    torch.manual_seed(0)
    model = WavLMModel(WavLMConfig(**TINY_CONFIG))
    d = tmp_path_factory.mktemp("tiny_wavlm")
    model.save_pretrained(d)
    return d


@pytest.fixture(scope="session")
def tiny_model(tiny_model_dir):
    from ssl_eval.wavlm import load_model

    return load_model(tiny_model_dir)
