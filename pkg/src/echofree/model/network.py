"""Whole-sequence forward and reverse-mode backward for the post-filter."""

from __future__ import annotations

import numpy as np

from ..errors import ContractError, TrainingDivergedError
from . import layers as L
from .config import ModelConfig, build_layout, parameter_shapes


class PostFilterNet:
    """Gain predictor over feature sequences.

    ``forward_sequence`` is the public inference path.  Training uses
    ``forward_with_cache`` followed by ``backward``, which returns a
    gradient map whose keys equal the parameter keys (running batch-norm
    statistics receive zero gradients; their updates come from the forward
    pass and are reported separately).
    """

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        self.layout = build_layout(cfg)

    # -- helpers ---------------------------------------------------------

    def _as_batch(self, feats, name: str, dtype) -> np.ndarray:
        arr = np.asarray(feats, dtype=dtype)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3 or arr.shape[2] != self.cfg.in_features or arr.shape[1] < 1:
            raise ContractError(
                f"{name}: expected [T, {self.cfg.in_features}] or batched form, "
                f"got {np.shape(feats)}"
            )
        return arr

    def _conv_block(self, p, name, x, f_out, training, cache, bn_updates):
        y, cv = L.dsconv_forward(
            x, p[f"{name}.dw"], p[f"{name}.pw.w"], p[f"{name}.pw.b"], f_out
        )
        y, cb, upd = L.bn_forward(
            y, p[f"{name}.bn.gamma"], p[f"{name}.bn.beta"],
            p[f"{name}.bn.mean"], p[f"{name}.bn.var"], training,
        )
        y, ce = L.elu_forward(y)
        cache[name] = (cv, cb, ce)
        if training:
            bn_updates[f"{name}.bn.mean"], bn_updates[f"{name}.bn.var"] = upd
        return y

    def _conv_block_backward(self, p, name, dy, cache, grads):
        cv, cb, ce = cache[name]
        d = L.elu_backward(dy, ce)
        d, dgamma, dbeta = L.bn_backward(d, cb)
        dx, ddw, dpww, dpwb = L.dsconv_backward(d, cv, p[f"{name}.dw"], p[f"{name}.pw.w"])
        grads[f"{name}.dw"] = ddw
        grads[f"{name}.pw.w"] = dpww
        grads[f"{name}.pw.b"] = dpwb
        grads[f"{name}.bn.gamma"] = dgamma
        grads[f"{name}.bn.beta"] = dbeta
        return dx

    # -- forward ---------------------------------------------------------

    def forward_with_cache(self, params, feats_mic, feats_echo, training=False):
        cfg, layout = self.cfg, self.layout
        dtype = params["head.w"].dtype
        fm = self._as_batch(feats_mic, "feats_mic", dtype)
        fe = self._as_batch(feats_echo, "feats_echo", dtype)
        if fm.shape != fe.shape:
            raise ContractError(
                f"mic/echo feature shapes differ: {fm.shape} vs {fe.shape}"
            )
        p = params
        fs = cfg.feature_sizes
        cache: dict = {"batched": np.asarray(feats_mic).ndim == 3, "T": fm.shape[1]}
        bn_updates: dict = {}

        xm = fm.transpose(0, 2, 1)[:, None]     # [B,1,F,T]
        xe = fe.transpose(0, 2, 1)[:, None]
        m = self._conv_block(p, "enc1_mic", xm, fs[1], training, cache, bn_updates)
        e = self._conv_block(p, "enc1_echo", xe, fs[1], training, cache, bn_updates)
        h = np.concatenate([m, e], axis=1)
        skips = [h]
        for i, spec in enumerate(layout.mic_layers[1:], start=2):
            h = self._conv_block(p, spec.name, h, fs[i], training, cache, bn_updates)
            skips.append(h)

        B, C, F, T = h.shape
        flat = np.ascontiguousarray(h.reshape(B, C * F, T).transpose(0, 2, 1))
        hs, cache["gru"] = L.gru_forward(flat, p["gru.wx"], p["gru.wh"], p["gru.b"])
        fc = np.einsum("bth,uh->btu", hs, p["fc.w"], optimize=True) + p["fc.b"]
        cache["fc.in"] = hs
        fc4 = fc.transpose(0, 2, 1)[:, :, None, :]   # [B,U,1,T]
        fc4, cb, upd = L.bn_forward(
            fc4, p["fc.bn.gamma"], p["fc.bn.beta"],
            p["fc.bn.mean"], p["fc.bn.var"], training,
        )
        fc4, ce = L.elu_forward(fc4)
        cache["fc"] = (cb, ce)
        if training:
            bn_updates["fc.bn.mean"], bn_updates["fc.bn.var"] = upd

        h = fc4.reshape(B, layout.dec_in_ch, fs[-1], T)
        depth = len(cfg.enc_channels)
        for i, spec in enumerate(layout.decoders):
            skip = skips[depth - 1 - i]
            sp, cs = L.pconv_forward(skip, p[f"{spec.name}.skip.w"], p[f"{spec.name}.skip.b"])
            cat = np.concatenate([h, sp], axis=1)
            up, cu = L.pconv_forward(cat, p[f"{spec.name}.up.w"], p[f"{spec.name}.up.b"])
            sh = L.shuffle_forward(up, 4)
            y = np.ascontiguousarray(sh[:, :, :spec.f_out, :])
            y, cb, upd = L.bn_forward(
                y, p[f"{spec.name}.bn.gamma"], p[f"{spec.name}.bn.beta"],
                p[f"{spec.name}.bn.mean"], p[f"{spec.name}.bn.var"], training,
            )
            y, ce = L.elu_forward(y)
            if training:
                bn_updates[f"{spec.name}.bn.mean"], bn_updates[f"{spec.name}.bn.var"] = upd
            res = None
            if spec.residual:
                r1, c1 = L.pconv_forward(y, p[f"{spec.name}.res1.w"], p[f"{spec.name}.res1.b"])
                r2, c2 = L.pconv_forward(r1, p[f"{spec.name}.res2.w"], p[f"{spec.name}.res2.b"])
                res = (c1, c2)
                y = y + r2
            cache[spec.name] = (cs, cu, cb, ce, sh.shape[2], h.shape[1], res)
            h = y

        feat = h[:, 0].transpose(0, 2, 1)            # [B,T,F]
        logits = np.einsum("btf,of->bto", feat, p["head.w"], optimize=True) + p["head.b"]
        gains = L.sigmoid(logits)
        cache["head"] = (feat, gains)
        return gains, cache, bn_updates

    def forward_sequence(self, params, feats_mic, feats_echo, training=False):
        gains, cache, _ = self.forward_with_cache(params, feats_mic, feats_echo, training)
        return gains if cache["batched"] else gains[0]

    # -- backward --------------------------------------------------------

    def backward(self, params, cache, dgains) -> dict:
        """Gradients of a scalar loss given d(loss)/d(gains)."""
        cfg, layout = self.cfg, self.layout
        p = params
        grads: dict = {}
        dgains = np.asarray(dgains, dtype=p["head.w"].dtype)
        if dgains.ndim == 2:
            dgains = dgains[None]

        feat, gains = cache["head"]
        dlogits = dgains * gains * (1.0 - gains)
        grads["head.w"] = np.einsum("bto,btf->of", dlogits, feat, optimize=True)
        grads["head.b"] = dlogits.sum(axis=(0, 1))
        dfeat = np.einsum("bto,of->btf", dlogits, p["head.w"], optimize=True)
        dh = dfeat.transpose(0, 2, 1)[:, None]

        depth = len(cfg.enc_channels)
        dskips = [None] * depth
        for i in range(len(layout.decoders) - 1, -1, -1):
            spec = layout.decoders[i]
            cs, cu, cb, ce, f_up, in_ch, res = cache[spec.name]
            if res is not None:
                c1, c2 = res
                dr1, dw2, db2 = L.pconv_backward(dh, c2, p[f"{spec.name}.res2.w"])
                dy, dw1, db1 = L.pconv_backward(dr1, c1, p[f"{spec.name}.res1.w"])
                grads[f"{spec.name}.res1.w"], grads[f"{spec.name}.res1.b"] = dw1, db1
                grads[f"{spec.name}.res2.w"], grads[f"{spec.name}.res2.b"] = dw2, db2
                dh = dh + dy
            d = L.elu_backward(dh, ce)
            d, dgamma, dbeta = L.bn_backward(d, cb)
            grads[f"{spec.name}.bn.gamma"], grads[f"{spec.name}.bn.beta"] = dgamma, dbeta
            B, C, _, T = d.shape
            dsh = np.zeros((B, C, f_up, T), dtype=d.dtype)
            dsh[:, :, :spec.f_out, :] = d
            dup = L.shuffle_backward(dsh, 4)
            dcat, duw, dub = L.pconv_backward(dup, cu, p[f"{spec.name}.up.w"])
            grads[f"{spec.name}.up.w"], grads[f"{spec.name}.up.b"] = duw, dub
            dsp = dcat[:, in_ch:]
            dskip, dsw, dsb = L.pconv_backward(dsp, cs, p[f"{spec.name}.skip.w"])
            grads[f"{spec.name}.skip.w"], grads[f"{spec.name}.skip.b"] = dsw, dsb
            j = depth - 1 - i
            dskips[j] = dskip if dskips[j] is None else dskips[j] + dskip
            dh = np.ascontiguousarray(dcat[:, :in_ch])

        B = dh.shape[0]
        T = cache["T"]
        dfc4 = dh.reshape(B, cfg.fc_units, 1, T)
        cb, ce = cache["fc"]
        dfc4 = L.elu_backward(dfc4, ce)
        dfc4, dgamma, dbeta = L.bn_backward(dfc4, cb)
        grads["fc.bn.gamma"], grads["fc.bn.beta"] = dgamma, dbeta
        dfc = dfc4[:, :, 0, :].transpose(0, 2, 1)
        hs = cache["fc.in"]
        grads["fc.w"] = np.einsum("btu,bth->uh", dfc, hs, optimize=True)
        grads["fc.b"] = dfc.sum(axis=(0, 1))
        dhs = np.einsum("btu,uh->bth", dfc, p["fc.w"], optimize=True)

        dflat, dwx, dwh, dgb = L.gru_backward(dhs, cache["gru"])
        grads["gru.wx"], grads["gru.wh"], grads["gru.b"] = dwx, dwh, dgb

        fs = cfg.feature_sizes
        dh = np.ascontiguousarray(
            dflat.transpose(0, 2, 1).reshape(B, cfg.enc_channels[-1], fs[-1], T)
        )
        dh = dh + dskips[depth - 1]
        for i in range(len(layout.mic_layers) - 1, 0, -1):
            spec = layout.mic_layers[i]
            dh = self._conv_block_backward(p, spec.name, dh, cache, grads)
            if i - 1 >= 1:
                dh = dh + dskips[i - 1]
        dh = dh + dskips[0]
        c0 = cfg.enc_channels[0]
        self._conv_block_backward(p, "enc1_mic", np.ascontiguousarray(dh[:, :c0]), cache, grads)
        self._conv_block_backward(p, "enc1_echo", np.ascontiguousarray(dh[:, c0:]), cache, grads)

        for name, shape in parameter_shapes(cfg).items():
            if name not in grads:
                grads[name] = np.zeros(shape, dtype=dgains.dtype)
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise TrainingDivergedError(f"non-finite gradient in {name}")
        return grads
