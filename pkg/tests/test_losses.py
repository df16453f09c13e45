"""Loss functions: frozen values, identities, and gradient checks."""

import numpy as np
import pytest

from echofree.bark import build_bark_matrix
from echofree.errors import ContractError
from echofree.training.losses import (
    ProxyEmbeddingProvider,
    bark_gain_loss,
    bark_gain_loss_grad,
    ssl_loss,
    ssl_loss_grad,
    stage_loss,
)

from helpers import rel_err


@pytest.fixture(scope="module")
def provider():
    return ProxyEmbeddingProvider(build_bark_matrix(10, 17))


# ---------------------------------------------------------------------------
# Bark gain loss
# ---------------------------------------------------------------------------


class TestBarkGainLoss:
    def test_zero_for_matching_binary_gains(self):
        g = np.array([[0.0, 1.0, 1.0, 0.0]])
        assert bark_gain_loss(g, g) == 0.0

    def test_zero_for_all_ones(self):
        g = np.ones((3, 5))
        assert bark_gain_loss(g, g) == 0.0

    def test_zero_for_all_zeros(self):
        g = np.zeros((3, 5))
        assert bark_gain_loss(g, g) == 0.0

    def test_frozen_value_opposite_binary(self):
        # computed once with an independent high-precision evaluation
        got = bark_gain_loss(np.array([[0.0]]), np.array([[1.0]]))
        assert got == pytest.approx(11.161180956509583, rel=1e-12)

    def test_frozen_value_quarter(self):
        got = bark_gain_loss(np.array([[0.25]]), np.array([[0.25]]))
        assert got == pytest.approx(0.005623351446188083, rel=1e-12)

    def test_matching_nonbinary_gains_leave_only_bce(self):
        # u = 0 kills the power terms; the clamped BCE entropy floor remains
        g = np.full((2, 3), 0.5)
        expect = 0.01 * (-np.log(0.5))
        assert bark_gain_loss(g, g) == pytest.approx(expect, rel=1e-12)

    def test_mean_reduction(self):
        est = np.array([[0.0, 0.0]])
        tgt = np.array([[1.0, 1.0]])
        one = bark_gain_loss(np.array([[0.0]]), np.array([[1.0]]))
        assert bark_gain_loss(est, tgt) == pytest.approx(one, rel=1e-12)

    def test_gradient_matches_finite_difference(self):
        rng = np.random.default_rng(0)
        est = rng.uniform(0.05, 0.95, (4, 6))
        tgt = rng.uniform(0.0, 1.0, (4, 6))
        grad = bark_gain_loss_grad(est, tgt)
        eps = 1e-7
        worst = 0.0
        for i in range(4):
            for j in range(6):
                up = est.copy(); up[i, j] += eps
                dn = est.copy(); dn[i, j] -= eps
                fd = (bark_gain_loss(up, tgt) - bark_gain_loss(dn, tgt)) / (2 * eps)
                worst = max(worst, rel_err(grad[i, j], fd))
        assert worst <= 1e-5

    def test_out_of_range_rejected(self):
        with pytest.raises(ContractError):
            bark_gain_loss(np.array([[1.2]]), np.array([[1.0]]))
        with pytest.raises(ContractError):
            bark_gain_loss(np.array([[0.5]]), np.array([[-0.1]]))


# ---------------------------------------------------------------------------
# Stage combination
# ---------------------------------------------------------------------------


class TestStageLoss:
    def test_stage1_is_pure_ssl(self):
        assert stage_loss(1, 3.7, 2.5) == 2.5

    def test_stage2_weighting_exact(self):
        a, b = 1.3, 0.7
        assert stage_loss(2, a, b) == 10.0 * a + 0.5 * b

    def test_bad_stage_rejected(self):
        with pytest.raises(ContractError):
            stage_loss(3, 1.0, 1.0)


# ---------------------------------------------------------------------------
# Proxy embedding provider and SSL loss
# ---------------------------------------------------------------------------


class TestProxyProvider:
    def test_layer_count(self, provider):
        assert provider.layer_count == 2

    def test_ssl_loss_identity_zero(self, provider):
        mags = np.abs(np.random.default_rng(1).standard_normal((12, 17)))
        assert ssl_loss(provider, mags, mags) == 0.0

    def test_power_doubling_shifts_layer1_only(self, provider):
        mags = np.abs(np.random.default_rng(2).standard_normal((12, 17))) + 0.1
        e1 = provider.embed(mags)
        e2 = provider.embed(mags * np.sqrt(2.0))
        # bands with no assigned bins sit at the log floor and never move;
        # tolerance on the rest covers the additive floor inside the log
        populated = e1[0] > -9.0
        assert populated.any()
        np.testing.assert_allclose(
            (e2[0] - e1[0])[populated], np.log10(2.0), atol=1e-6)
        np.testing.assert_allclose(e2[1][populated], e1[1][populated], atol=1e-6)

    def test_zero_input_floor(self, provider):
        e = provider.embed(np.zeros((8, 17)))
        np.testing.assert_allclose(e[0], -10.0)
        np.testing.assert_allclose(e[1], 0.0)

    def test_context_shift_structure(self, provider):
        mags = np.abs(np.random.default_rng(3).standard_normal((12, 17))) + 0.1
        e = provider.embed(mags)
        np.testing.assert_allclose(e[1][4:], e[0][4:] - e[0][:-4], atol=1e-12)
        np.testing.assert_array_equal(e[1][:4], 0.0)

    def test_input_gradient_finite_difference(self, provider):
        rng = np.random.default_rng(4)
        est = np.abs(rng.standard_normal((9, 17))) + 0.1
        ref = np.abs(rng.standard_normal((9, 17))) + 0.1
        loss, grad = ssl_loss_grad(provider, est, ref)
        assert loss == pytest.approx(ssl_loss(provider, est, ref), rel=1e-12)
        eps = 1e-6
        worst = 0.0
        for t in (0, 4, 8):
            for k in (0, 9, 16):
                up = est.copy(); up[t, k] += eps
                dn = est.copy(); dn[t, k] -= eps
                fd = (ssl_loss(provider, up, ref) - ssl_loss(provider, dn, ref)) / (2 * eps)
                worst = max(worst, rel_err(grad[t, k], fd))
        assert worst <= 1e-5

    def test_ssl_loss_symmetric_zero_and_positive(self, provider):
        rng = np.random.default_rng(5)
        a = np.abs(rng.standard_normal((10, 17))) + 0.1
        b = np.abs(rng.standard_normal((10, 17))) + 0.1
        assert ssl_loss(provider, a, b) > 0.0
