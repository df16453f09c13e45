"""Frame-streaming inference for the post-filter.

Keeps a two-frame input ring buffer per depthwise conv (time kernel 3,
causal) and the GRU hidden vector.  All other ops are pointwise in time.
Batch norm always uses running statistics here, matching
``forward_sequence(..., training=False)``.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError
from . import layers as L
from .config import ModelConfig, build_layout


def _ds_step(win, dw, pw_w, pw_b, f_out):
    """One output frame of a depthwise-separable conv from a [C, F, 3] window."""
    C, F, _ = win.shape
    kf, kt = dw.shape[1], dw.shape[2]
    wp = np.pad(win, ((0, 0), (0, f_out * kf - F), (0, 0)))
    wp = wp.reshape(C, f_out, kf, kt)
    mid = np.einsum("cij,cfij->cf", dw, wp, optimize=True)
    return pw_w @ mid + pw_b[:, None]


def _bn_elu(x, p, name):
    inv = 1.0 / np.sqrt(p[f"{name}.bn.var"] + L.BN_EPS)
    y = (x - p[f"{name}.bn.mean"][:, None]) * inv[:, None]
    y = p[f"{name}.bn.gamma"][:, None] * y + p[f"{name}.bn.beta"][:, None]
    return np.where(y > 0, y, np.expm1(np.minimum(y, 0.0)))


class StreamingPostFilter:
    """Stateful per-frame gain predictor; reset() restores sequence start."""

    def __init__(self, cfg: ModelConfig, params: dict):
        self.cfg = cfg
        self.layout = build_layout(cfg)
        self.params = params
        self._dtype = params["head.w"].dtype
        self.reset()

    def reset(self):
        cfg, layout = self.cfg, self.layout
        fs = cfg.feature_sizes
        kt = cfg.kernel[1]
        self._bufs = {
            "enc1_mic": np.zeros((1, fs[0], kt - 1), dtype=self._dtype),
            "enc1_echo": np.zeros((1, fs[0], kt - 1), dtype=self._dtype),
        }
        for i, spec in enumerate(layout.mic_layers[1:], start=2):
            self._bufs[spec.name] = np.zeros(
                (spec.in_ch, fs[i - 1], kt - 1), dtype=self._dtype
            )
        self._h = np.zeros(cfg.gru_units, dtype=self._dtype)

    def _conv_block(self, name, x, f_out):
        p = self.params
        buf = self._bufs[name]
        win = np.concatenate([buf, x[:, :, None]], axis=2)
        self._bufs[name] = win[:, :, 1:]
        y = _ds_step(win, p[f"{name}.dw"], p[f"{name}.pw.w"], p[f"{name}.pw.b"], f_out)
        return _bn_elu(y, p, name)

    def forward_frame(self, feat_mic, feat_echo) -> np.ndarray:
        cfg, layout, p = self.cfg, self.layout, self.params
        fm = np.asarray(feat_mic, dtype=self._dtype)
        fe = np.asarray(feat_echo, dtype=self._dtype)
        if fm.shape != (cfg.in_features,) or fe.shape != (cfg.in_features,):
            raise ContractError(
                f"feature frames must have shape ({cfg.in_features},), "
                f"got {fm.shape} and {fe.shape}"
            )
        fs = cfg.feature_sizes

        m = self._conv_block("enc1_mic", fm[None, :], fs[1])
        e = self._conv_block("enc1_echo", fe[None, :], fs[1])
        h = np.concatenate([m, e], axis=0)
        skips = [h]
        for i, spec in enumerate(layout.mic_layers[1:], start=2):
            h = self._conv_block(spec.name, h, fs[i])
            skips.append(h)

        flat = h.reshape(-1)
        H = cfg.gru_units
        a = p["gru.wx"] @ flat + p["gru.b"]
        hprev = self._h
        z = L.sigmoid(a[:H] + p["gru.wh"][:H] @ hprev)
        r = L.sigmoid(a[H:2 * H] + p["gru.wh"][H:2 * H] @ hprev)
        n = np.tanh(a[2 * H:] + r * (p["gru.wh"][2 * H:] @ hprev))
        self._h = (1.0 - z) * n + z * hprev

        fc = p["fc.w"] @ self._h + p["fc.b"]
        fc = _bn_elu(fc[:, None], p, "fc")[:, 0]
        h = fc.reshape(layout.dec_in_ch, fs[-1])

        depth = len(cfg.enc_channels)
        for i, spec in enumerate(layout.decoders):
            skip = skips[depth - 1 - i]
            sp = p[f"{spec.name}.skip.w"] @ skip + p[f"{spec.name}.skip.b"][:, None]
            cat = np.concatenate([h, sp], axis=0)
            up = p[f"{spec.name}.up.w"] @ cat + p[f"{spec.name}.up.b"][:, None]
            C = spec.out_ch
            sh = up.reshape(C, 4, -1).transpose(0, 2, 1).reshape(C, -1)
            y = _bn_elu(sh[:, :spec.f_out], p, spec.name)
            if spec.residual:
                r1 = p[f"{spec.name}.res1.w"] @ y + p[f"{spec.name}.res1.b"][:, None]
                r2 = p[f"{spec.name}.res2.w"] @ r1 + p[f"{spec.name}.res2.b"][:, None]
                y = y + r2
            h = y

        logits = p["head.w"] @ h[0] + p["head.b"]
        return L.sigmoid(logits)
