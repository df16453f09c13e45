"""Shared test utilities: oracles and gradient checking.

The least-squares FIR oracle is deliberately independent of the adaptive
filter implementation: it solves the normal equations for the best causal
FIR fit via LSQR on an implicit convolution operator, so it only shares
numpy/scipy primitives with the code under test.
"""

import numpy as np
from scipy.signal import fftconvolve
from scipy.sparse.linalg import LinearOperator, lsqr

from echofree.bark import build_bark_matrix
from echofree.model import ModelConfig, init_params
from echofree.model.network import PostFilterNet
from echofree.training.losses import ProxyEmbeddingProvider
from echofree.training.trainer import _StageLoss


# ---------------------------------------------------------------------------
# Least-squares FIR oracle
# ---------------------------------------------------------------------------


def lsq_fir_residual(far, mic, n_taps, iter_lim=4000):
    """Best causal FIR fit of mic from far, solved with LSQR.

    Returns (taps, residual). The operator maps taps w to
    sum_k w[k] * far[t-k] for t in [0, len(mic)).
    """
    far = np.asarray(far, dtype=np.float64)
    mic = np.asarray(mic, dtype=np.float64)
    n = mic.shape[0]

    def matvec(w):
        return fftconvolve(far, w)[:n]

    def rmatvec(y):
        # (A^T y)[k] = sum_t far[t-k] y[t]
        return fftconvolve(y, far[::-1])[n - 1:n - 1 + n_taps]

    op = LinearOperator((n, n_taps), matvec=matvec, rmatvec=rmatvec,
                        dtype=np.float64)
    taps = lsqr(op, mic, atol=1e-14, btol=1e-14, iter_lim=iter_lim)[0]
    return taps, mic - matvec(taps)


# ---------------------------------------------------------------------------
# Finite-difference gradient checking
# ---------------------------------------------------------------------------


def rel_err(a, b, floor=1e-6):
    """Relative error with an absolute floor so zero-gradient params compare sanely."""
    return abs(a - b) / max(abs(a), abs(b), floor)


def fd_check_tensor(loss_fn, params, name, analytic, eps=1e-5,
                    max_elems=None, rng=None):
    """Central-difference check of one parameter tensor.

    loss_fn(params) -> scalar. Mutates params[name] in place and restores it.
    Returns the worst relative error over the checked elements.
    """
    tensor = params[name]
    flat = tensor.reshape(-1)
    grad = np.asarray(analytic, dtype=np.float64).reshape(-1)
    idx = np.arange(flat.size)
    if max_elems is not None and flat.size > max_elems:
        rng = rng or np.random.default_rng(0)
        idx = rng.choice(flat.size, size=max_elems, replace=False)
    worst = 0.0
    for i in idx:
        keep = flat[i]
        flat[i] = keep + eps
        up = loss_fn(params)
        flat[i] = keep - eps
        down = loss_fn(params)
        flat[i] = keep
        fd = (up - down) / (2.0 * eps)
        worst = max(worst, rel_err(grad[i], fd))
    return worst


# ---------------------------------------------------------------------------
# Reduced model configurations
# ---------------------------------------------------------------------------


def mini_config():
    """Two encoder stages, 16 GRU units, 10 bands. Small enough for FD sweeps."""
    return ModelConfig(enc_channels=(8, 16), echo_enc_channels=8,
                       gru_units=16, fc_units=16, skip_channels=16,
                       out_bands=10)


def tiny_config():
    """Even smaller variant for the most expensive per-element checks."""
    return ModelConfig(enc_channels=(8, 16), echo_enc_channels=8,
                       gru_units=16, fc_units=16, skip_channels=16,
                       out_bands=2)


# ---------------------------------------------------------------------------
# Full-chain gradient sweep
# ---------------------------------------------------------------------------


def make_grad_setup(n_bins=17, batch=2, frames=12, seed=7):
    """Mini model plus a random batch, ready for loss evaluation."""
    cfg = mini_config()
    net = PostFilterNet(cfg)
    params = init_params(cfg, seed=0)
    bark = build_bark_matrix(cfg.out_bands, n_bins)
    provider = ProxyEmbeddingProvider(bark)
    stage = _StageLoss(net, bark, provider)
    rng = np.random.default_rng(seed)
    data = {
        "feats_mic": rng.standard_normal((batch, frames, cfg.in_features)),
        "feats_echo": rng.standard_normal((batch, frames, cfg.in_features)),
        "gains": rng.uniform(0.0, 1.0, (batch, frames, cfg.out_bands)),
        "mag_mic": np.abs(rng.standard_normal((batch, frames, n_bins))) + 0.1,
        "mag_near": np.abs(rng.standard_normal((batch, frames, n_bins))) + 0.1,
    }
    return cfg, net, params, stage, data


def gradient_suite(stage_id, eps=1e-5, exhaustive_below=256, big_sample=96):
    """FD-check every trainable tensor against the stage loss backward pass.

    Returns {tensor name: worst relative error}. Large tensors are spot
    checked on a fixed random subset to keep the sweep fast.
    """
    _, _, params, stage, data = make_grad_setup()

    def loss_fn(p):
        return stage.forward_backward(p, data, stage_id)[0]

    _, grads, _ = stage.forward_backward(params, data, stage_id)
    rng = np.random.default_rng(13)
    worst = {}
    for name in sorted(grads):
        if name.endswith(".mean") or name.endswith(".var"):
            continue  # running stats are buffers, not trained
        cap = None if params[name].size <= exhaustive_below else big_sample
        worst[name] = fd_check_tensor(loss_fn, params, name, grads[name],
                                      eps=eps, max_elems=cap, rng=rng)
    return worst
