"""Training losses and the proxy embedding provider.

The bark-gain loss combines quartic and squared errors on
root-compressed gains with a small cross-entropy term.  The SSL loss
averages squared embedding distances over provider layers; during
training the provider runs on masked magnitude spectra so the whole
path stays differentiable without an inverse transform.
"""

from __future__ import annotations

import numpy as np

from ..bark import LOG_EPS, BarkMatrix
from ..errors import ContractError

BCE_CLAMP = 1e-7
BCE_WEIGHT = 0.01
QUARTIC_WEIGHT = 10.0


def _check_gains(g, name):
    g = np.asarray(g, dtype=np.float64)
    if g.size == 0:
        raise ContractError(f"{name}: empty gain array")
    if g.min() < 0.0 or g.max() > 1.0:
        raise ContractError(f"{name}: gains outside [0,1]")
    return g


def bark_gain_loss(est, target, c: float = 0.5) -> float:
    est = _check_gains(est, "est")
    target = _check_gains(target, "target")
    if est.shape != target.shape:
        raise ContractError(f"gain shapes differ: {est.shape} vs {target.shape}")
    u = est ** c - target ** c
    # clamp inside each log so agreement at the endpoints stays exactly 0
    bce = -(target * np.log(np.maximum(est, BCE_CLAMP))
            + (1.0 - target) * np.log(np.maximum(1.0 - est, BCE_CLAMP)))
    return float(np.mean(QUARTIC_WEIGHT * u ** 4 + u ** 2 + BCE_WEIGHT * bce))


def bark_gain_loss_grad(est, target, c: float = 0.5) -> np.ndarray:
    """d(bark_gain_loss)/d(est), same shape as est."""
    est = np.asarray(est, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    u = est ** c - target ** c
    dpow = (4.0 * QUARTIC_WEIGHT * u ** 3 + 2.0 * u) * c * est ** (c - 1.0)
    dbce = (np.where(est > BCE_CLAMP, -target / np.maximum(est, BCE_CLAMP), 0.0)
            + np.where(1.0 - est > BCE_CLAMP,
                       (1.0 - target) / np.maximum(1.0 - est, BCE_CLAMP), 0.0))
    return (dpow + BCE_WEIGHT * dbce) / est.size


class ProxyEmbeddingProvider:
    """Two-layer differentiable embedding of magnitude spectra.

    Layer 1 is the bark log-power of each frame; layer 2 is its backward
    difference at ``context`` stride (zero where no history exists), which
    discards constant level offsets.
    """

    def __init__(self, bark: BarkMatrix, context: int = 4):
        if context < 1:
            raise ContractError("context stride must be >= 1")
        self.bark = bark
        self.context = context
        self.layer_count = 2

    def embed(self, mags) -> list:
        mags = np.asarray(mags, dtype=np.float64)
        power = mags ** 2 @ self.bark.weights.T + LOG_EPS
        l1 = np.log10(power)
        l2 = np.zeros_like(l1)
        k = self.context
        if l1.shape[-2] > k:
            l2[..., k:, :] = l1[..., k:, :] - l1[..., :-k, :]
        return [l1, l2]

    def embed_with_cache(self, mags):
        mags = np.asarray(mags, dtype=np.float64)
        power = mags ** 2 @ self.bark.weights.T + LOG_EPS
        l1 = np.log10(power)
        l2 = np.zeros_like(l1)
        k = self.context
        if l1.shape[-2] > k:
            l2[..., k:, :] = l1[..., k:, :] - l1[..., :-k, :]
        return [l1, l2], (mags, power)

    def input_gradient(self, upstream, cache) -> np.ndarray:
        """Map per-layer embedding gradients back to the input magnitudes."""
        mags, power = cache
        dl1, dl2 = upstream
        dl1 = np.array(dl1, dtype=np.float64, copy=True)
        k = self.context
        if dl1.shape[-2] > k:
            dl1[..., k:, :] += dl2[..., k:, :]
            dl1[..., :-k, :] -= dl2[..., k:, :]
        dpower = dl1 / (power * np.log(10.0))
        return 2.0 * mags * (dpower @ self.bark.weights)


def ssl_loss(provider, est_input, ref_input) -> float:
    est = provider.embed(est_input)
    ref = provider.embed(ref_input)
    if len(est) != len(ref):
        raise ContractError("provider returned differing layer counts")
    total = 0.0
    for e, r in zip(est, ref):
        if e.shape != r.shape:
            raise ContractError(f"embedding shapes differ: {e.shape} vs {r.shape}")
        total += float(np.mean((e - r) ** 2))
    return total / len(est)


def ssl_loss_grad(provider, est_input, ref_input):
    """(loss, d loss / d est_input)."""
    est, cache = provider.embed_with_cache(est_input)
    ref = provider.embed(ref_input)
    L = len(est)
    total = 0.0
    upstream = []
    for e, r in zip(est, ref):
        diff = e - r
        total += float(np.mean(diff ** 2))
        upstream.append(2.0 * diff / (diff.size * L))
    return total / L, provider.input_gradient(upstream, cache)


def stage_loss(stage: int, l_bark: float, l_ssl: float) -> float:
    if stage == 1:
        return l_ssl
    if stage == 2:
        return 10.0 * l_bark + 0.5 * l_ssl
    raise ContractError(f"stage must be 1 or 2, got {stage}")
