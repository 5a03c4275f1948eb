import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftcal.aci import AciState, aci_step, run_aci
from driftcal.conformal import TargetLevel, pinball_subgradient
from driftcal.rng import SUB_STREAM, make_rng


def state(alpha_t=0.1, gamma=0.005, alpha=0.1):
    return AciState(alpha_t=alpha_t, gamma=gamma, target=TargetLevel(alpha))


class TestAciStep:
    def test_no_error_raises_level(self):
        s = aci_step(state(), err=0.0)
        assert s.alpha_t == 0.1 + 0.005 * 0.1
        assert s.alpha_t == pytest.approx(0.1005)

    def test_error_lowers_level(self):
        s = aci_step(state(), err=1.0)
        assert s.alpha_t == 0.1 + 0.005 * (0.1 - 1.0)
        assert s.alpha_t == pytest.approx(0.0955)

    def test_zero_gamma_freezes(self):
        s = aci_step(state(alpha_t=0.3, gamma=0.0), err=1.0)
        assert s.alpha_t == 0.3

    def test_err_must_be_binary(self):
        for bad in (0.5, -1.0, 2.0, np.nan):
            with pytest.raises(ValueError, match="err must be exactly"):
                aci_step(state(), err=bad)

    def test_negative_gamma_rejected(self):
        with pytest.raises(ValueError, match="step size"):
            state(gamma=-0.01)

    @given(
        st.floats(min_value=-0.5, max_value=1.5),
        st.floats(min_value=0.0, max_value=0.2),
        st.floats(min_value=0.01, max_value=0.99),
        st.booleans(),
    )
    def test_equals_pinball_subgradient_descent(self, theta, gamma, alpha, miss):
        # err = 1{beta < theta}; pick a beta on the requested side
        beta = theta - 1.0 if miss else theta + 1.0
        err = 1.0 if beta < theta else 0.0
        stepped = aci_step(AciState(theta, gamma, TargetLevel(alpha)), err)
        descended = theta - gamma * pinball_subgradient(beta, theta, alpha)
        assert stepped.alpha_t == descended  # bitwise


class TestRunAci:
    def test_all_covered_drifts_up(self):
        alphas, errs = run_aci(np.ones(200), gamma=0.01, alpha=0.1)
        assert not errs.any()
        np.testing.assert_allclose(alphas, 0.1 + 0.001 * np.arange(200), rtol=0, atol=1e-12)

    def test_all_missed_drifts_down_until_nonpositive(self):
        alphas, errs = run_aci(np.zeros(200), gamma=0.01, alpha=0.1)
        # errors persist while the level is above beta = 0, dropping it by
        # gamma (1 - alpha) per step; once it crosses zero the tracker
        # hovers just below
        assert errs[:12].all() and not errs[12]
        np.testing.assert_allclose(np.diff(alphas[:13]), -0.009, rtol=0, atol=1e-15)
        assert alphas.min() >= -0.01
        assert alphas[50:].max() <= 0.002

    def test_emitted_level_precedes_update(self):
        alphas, _ = run_aci(np.array([0.0, 1.0]), gamma=0.01, alpha=0.1, alpha_init=0.25)
        assert alphas[0] == 0.25

    def test_iterate_stays_in_band(self):
        rng = make_rng(21, SUB_STREAM)
        for gamma in (0.005, 0.05, 0.5):
            alphas, _ = run_aci(rng.random(100_000), gamma=gamma, alpha=0.1)
            assert alphas.min() >= -gamma - 1e-15
            assert alphas.max() <= 1.0 + gamma + 1e-15

    def test_band_under_adversarial_streams(self):
        for betas in (np.zeros(5000), np.ones(5000), np.tile([0.0, 1.0], 2500)):
            alphas, _ = run_aci(betas, gamma=0.3, alpha=0.1)
            assert alphas.min() >= -0.3 and alphas.max() <= 1.3

    def test_long_run_error_frequency(self):
        betas = make_rng(11, SUB_STREAM).random(100_000)
        _, errs = run_aci(betas, gamma=0.01, alpha=0.1)
        assert errs.mean() == 0.10001  # frozen for this seed
        assert abs(errs.mean() - 0.1) <= 0.01

    def test_matches_stepwise_gradient_descent_bitwise(self):
        rng = make_rng(33, SUB_STREAM)
        betas = rng.random(10_000)
        alphas, errs = run_aci(betas, gamma=0.02, alpha=0.1)
        theta = 0.1
        for t in range(betas.size):
            assert alphas[t] == theta
            err = 1.0 if betas[t] < theta else 0.0
            assert errs[t] == err
            theta = theta - 0.02 * pinball_subgradient(betas[t], theta, 0.1)

    def test_input_validation(self):
        with pytest.raises(ValueError, match="one-dimensional"):
            run_aci(np.zeros((3, 3)), gamma=0.01, alpha=0.1)
        with pytest.raises(ValueError, match="lie in"):
            run_aci(np.array([0.5, 1.5]), gamma=0.01, alpha=0.1)
        with pytest.raises(ValueError, match="step size"):
            run_aci(np.array([0.5]), gamma=-0.1, alpha=0.1)
        with pytest.raises(ValueError, match="target level"):
            run_aci(np.array([0.5]), gamma=0.1, alpha=1.0)
