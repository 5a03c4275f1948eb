import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from driftcal.aci import run_aci
from driftcal.batch import ETA_DECAYING, ETA_FIXED, ETA_WINDOWED, ensemble_path
from driftcal.conformal import pinball_loss
from driftcal.faci import (
    DEFAULT_GAMMA_GRID,
    EnsembleState,
    EtaSchedule,
    dynamic_eta,
    faci_step_averaged,
    faci_step_randomized,
    fixed_eta_heuristic,
    pinball_second_moment,
    update_experts,
    update_weights,
)
from driftcal.rng import SUB_LEARNER, SUB_STREAM, make_rng

ALPHA = 0.1


def two_expert_ensemble(alphas=(0.1, 0.1), weights=(0.5, 0.5), gammas=(0.01, 0.02), sigma=0.0):
    sched = EtaSchedule("fixed", alpha=ALPHA, k=2, fixed_eta=1.0, sigma=sigma)
    ens = EnsembleState.create(ALPHA, gammas=gammas, schedule=sched)
    for e, a in zip(ens.experts, alphas):
        e.alpha_t = a
    ens.weights = np.asarray(weights, dtype=np.float64)
    ens.weights = ens.weights / ens.weights.sum()
    return ens


class TestSecondMoment:
    def test_closed_form_at_half(self):
        assert pinball_second_moment(0.5) == 0.0625 / 3.0

    def test_value_at_default_target(self):
        assert pinball_second_moment(0.1) == pytest.approx(0.0027, rel=1e-12)
        assert pinball_second_moment(0.1) == pytest.approx(float(oracles.m2_mp(0.1)), rel=1e-14)

    def test_monte_carlo_agreement(self):
        # E[l(U, alpha)^2] for U uniform
        u = make_rng(5, SUB_STREAM).random(2_000_000)
        losses = ALPHA * (u - ALPHA) - np.minimum(0.0, u - ALPHA)
        m2 = pinball_second_moment(ALPHA)
        se = losses.var() ** 0.5 / math.sqrt(u.size) * 2  # crude se of the mean of squares
        assert abs(np.mean(losses**2) - m2) < 3 * max(se, 1e-5)

    def test_rejects_degenerate_target(self):
        with pytest.raises(ValueError, match="target level"):
            pinball_second_moment(0.0)


class TestFixedEtaHeuristic:
    def test_frozen_value(self):
        val = fixed_eta_heuristic(0.1, 8, 500)
        assert val == pytest.approx(2.7613804438416536, rel=1e-13)
        assert val == pytest.approx(float(oracles.fixed_eta_mp(0.1, 8, 500)), rel=1e-14)
        assert abs(val - 2.7614) <= 1e-3

    def test_guards(self):
        with pytest.raises(ValueError, match="tracker"):
            fixed_eta_heuristic(0.1, 0, 500)
        with pytest.raises(ValueError, match="interval length"):
            fixed_eta_heuristic(0.1, 8, 0)


class TestDynamicEta:
    def test_reproduces_heuristic_on_matched_window(self):
        # constant losses at the uniform second moment make the realized
        # rate collapse to the closed form
        loss = math.sqrt(pinball_second_moment(0.1))
        losses = np.full(500, loss)
        assert dynamic_eta(losses, 8, 500) == pytest.approx(fixed_eta_heuristic(0.1, 8, 500), rel=1e-12)

    def test_unit_losses(self):
        assert dynamic_eta(np.ones(500), 8, 500) == pytest.approx(0.14348553683282526, rel=1e-13)
        assert dynamic_eta(np.ones(500), 8, 500) == pytest.approx(
            float(oracles.windowed_eta_mp([1.0] * 500, 8, 500)), rel=1e-14
        )

    def test_scaling_halves_exactly(self):
        losses = make_rng(3, SUB_STREAM).random(500) + 0.01
        assert dynamic_eta(2.0 * losses, 8, 500) == dynamic_eta(losses, 8, 500) / 2.0

    def test_guards(self):
        with pytest.raises(ValueError, match="nonempty and nonnegative"):
            dynamic_eta(np.array([]), 8, 500)
        with pytest.raises(ValueError, match="nonempty and nonnegative"):
            dynamic_eta(np.array([0.1, -0.2]), 8, 500)
        with pytest.raises(ValueError, match="degenerate loss window"):
            dynamic_eta(np.zeros(10), 8, 500)
        with pytest.raises(ValueError, match=">= 1"):
            dynamic_eta(np.ones(5), 0, 500)


class TestEtaSchedule:
    def test_mode_validation(self):
        with pytest.raises(ValueError, match="unknown eta schedule"):
            EtaSchedule("annealed", alpha=0.1, k=8)

    def test_sigma_validation(self):
        with pytest.raises(ValueError, match="mixing floor"):
            EtaSchedule("fixed", alpha=0.1, k=8, sigma=0.6)

    def test_fixed_defaults(self):
        s = EtaSchedule("fixed", alpha=0.1, k=8, interval_length=500)
        eta, sigma = s.rates(1)
        assert eta == fixed_eta_heuristic(0.1, 8, 500)
        assert sigma == 0.001
        assert s.rates(999) == (eta, sigma)

    def test_windowed_falls_back_until_full(self):
        s = EtaSchedule("windowed", alpha=0.1, k=8, interval_length=10)
        heuristic = s.fixed_eta
        for i in range(9):
            s.record(0.5)
            assert s.rates(i + 2)[0] == heuristic
        s.record(0.5)
        eta, _ = s.rates(11)
        assert eta == pytest.approx(math.sqrt((math.log(80) + 2) / (10 * 0.25)), rel=1e-12)

    def test_windowed_ring_buffer_matches_recompute(self):
        s = EtaSchedule("windowed", alpha=0.1, k=8, interval_length=50)
        losses = make_rng(17, SUB_STREAM).random(400)
        for i, x in enumerate(losses):
            s.record(x)
            if i >= 49:
                tail = losses[i - 49 : i + 1]
                expect = math.sqrt((math.log(8 * 50) + 2) / float(np.dot(tail, tail)))
                assert s.rates(i + 2)[0] == pytest.approx(expect, rel=1e-9)

    def test_windowed_degenerate_window_falls_back(self):
        s = EtaSchedule("windowed", alpha=0.1, k=8, interval_length=5)
        for _ in range(5):
            s.record(0.0)
        assert s.rates(6)[0] == s.fixed_eta

    def test_decaying_rates(self):
        s = EtaSchedule("decaying", alpha=0.1, k=8, eta_scale=2.0)
        assert s.rates(1) == (2.0, 0.5)
        assert s.rates(2) == (2.0 / math.sqrt(2.0), 0.5)
        assert s.rates(3) == (2.0 / math.sqrt(3.0), pytest.approx(1.0 / 3.0))
        assert s.rates(10_000)[1] == 1.0 / 10_000

    def test_record_is_noop_outside_windowed(self):
        s = EtaSchedule("fixed", alpha=0.1, k=8)
        before = s.rates(1)
        for _ in range(10):
            s.record(123.0)
        assert s.rates(1) == before


class TestUpdateWeights:
    def test_pure_exponential_reweighting(self):
        # losses (0, log 2) at eta 1 halve the second weight
        ens = two_expert_ensemble(alphas=(0.1, 0.1 + math.log(2.0) / 0.9))
        beta = 0.1  # loss_i = alpha (beta - a_i) - min(0, beta - a_i)
        # engineer losses exactly: expert 1 at alpha_t = beta gives 0
        ens.experts[0].alpha_t = beta
        ens.experts[1].alpha_t = beta + math.log(2.0)  # loss = (1 - alpha) log 2 ... not log 2
        # instead check the ratio against the recomputed formula
        losses = ens.expert_losses(beta)
        update_weights(ens, beta, eta_t=1.0, sigma_t=0.0)
        p = ens.probabilities()
        expect = np.exp(-losses)
        expect = expect / expect.sum()
        np.testing.assert_allclose(p, expect, rtol=1e-14)

    def test_known_two_expert_probabilities(self):
        # construct losses (0, log 2): second expert pays exactly log 2
        ens = two_expert_ensemble()
        beta = 0.5
        ens.experts[0].alpha_t = 0.5
        ens.experts[1].alpha_t = 0.5 + math.log(2.0) / 0.9  # miss side: loss (1 - alpha) d
        losses = ens.expert_losses(beta)
        assert losses[0] == 0.0
        assert losses[1] == pytest.approx(math.log(2.0), rel=1e-12)
        update_weights(ens, beta, eta_t=1.0, sigma_t=0.0)
        np.testing.assert_allclose(ens.probabilities(), [2.0 / 3.0, 1.0 / 3.0], rtol=1e-12)

    def test_mixing_floor_shifts_mass(self):
        # same losses with sigma = 1/2: raw (1, 1/2) mixes to (0.875, 0.625)
        # before normalization, so probabilities are (7/12, 5/12)
        ens = two_expert_ensemble()
        ens.experts[0].alpha_t = 0.5
        ens.experts[1].alpha_t = 0.5 + math.log(2.0) / 0.9
        update_weights(ens, 0.5, eta_t=1.0, sigma_t=0.5)
        np.testing.assert_allclose(ens.probabilities(), [7.0 / 12.0, 5.0 / 12.0], rtol=1e-12)

    def test_equal_losses_leave_probabilities_alone(self):
        ens = two_expert_ensemble(weights=(0.25, 0.75))
        before = ens.probabilities().copy()
        update_weights(ens, 0.1, eta_t=2.0, sigma_t=0.0)
        np.testing.assert_allclose(ens.probabilities(), before, rtol=1e-14)

    @given(
        st.lists(st.floats(min_value=0.01, max_value=1.0), min_size=2, max_size=8),
        st.floats(min_value=0.0, max_value=1.0),
        st.floats(min_value=0.1, max_value=5.0),
        st.floats(min_value=1e-4, max_value=0.5),
    )
    @settings(max_examples=80, deadline=None)
    def test_probability_floor(self, weights, beta, eta, sigma):
        k = len(weights)
        sched = EtaSchedule("fixed", alpha=ALPHA, k=k, fixed_eta=eta, sigma=sigma)
        ens = EnsembleState.create(ALPHA, gammas=tuple(0.01 * (i + 1) for i in range(k)), schedule=sched)
        ens.weights = np.asarray(weights) / np.sum(weights)
        for i, e in enumerate(ens.experts):
            e.alpha_t = (i + 1.0) / (k + 1.0)
        update_weights(ens, beta, eta_t=eta, sigma_t=sigma)
        assert ens.probabilities().min() >= sigma / k * (1.0 - 1e-12)
        assert ens.weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_rate_guards(self):
        ens = two_expert_ensemble()
        with pytest.raises(ValueError, match="learning rate"):
            update_weights(ens, 0.5, eta_t=0.0, sigma_t=0.0)
        with pytest.raises(ValueError, match="mixing floor"):
            update_weights(ens, 0.5, eta_t=1.0, sigma_t=0.7)

    def test_weight_collapse_detected(self):
        ens = two_expert_ensemble(alphas=(0.5, 0.6))
        with pytest.raises(FloatingPointError, match="collapse"):
            update_weights(ens, 0.0, eta_t=1e10, sigma_t=0.0)


class TestUpdateExperts:
    def test_both_sides_of_the_indicator(self):
        ens = two_expert_ensemble(alphas=(0.1, 0.1), gammas=(0.01, 0.02))
        update_experts(ens, beta=0.05)  # both miss
        assert ens.experts[0].alpha_t == pytest.approx(0.091)
        assert ens.experts[1].alpha_t == pytest.approx(0.082)
        assert [e.err_count for e in ens.experts] == [1, 1]

        ens = two_expert_ensemble(alphas=(0.1, 0.1), gammas=(0.01, 0.02))
        update_experts(ens, beta=0.5)  # both covered
        assert ens.experts[0].alpha_t == pytest.approx(0.101)
        assert ens.experts[1].alpha_t == pytest.approx(0.102)
        assert [e.err_count for e in ens.experts] == [0, 0]

    def test_tie_counts_as_covered(self):
        ens = two_expert_ensemble(alphas=(0.1, 0.1), gammas=(0.01, 0.02))
        update_experts(ens, beta=0.1)
        assert ens.experts[0].alpha_t == pytest.approx(0.101)
        assert ens.experts[1].alpha_t == pytest.approx(0.102)

    def test_loss_accounting(self):
        ens = two_expert_ensemble(alphas=(0.2, 0.4))
        update_experts(ens, beta=0.3)
        assert ens.experts[0].loss_sum == pytest.approx(pinball_loss(0.3, 0.2, ALPHA))
        assert ens.experts[1].loss_sum == pytest.approx(pinball_loss(0.3, 0.4, ALPHA))

    def test_literal_variant_collapses_the_bank(self):
        sched = EtaSchedule("fixed", alpha=ALPHA, k=2, fixed_eta=1.0)
        ens = EnsembleState.create(ALPHA, gammas=(0.01, 0.02), schedule=sched, literal_update=True)
        ens.experts[0].alpha_t = 0.05
        ens.experts[1].alpha_t = 0.15
        update_experts(ens, beta=0.5, emitted=0.1)
        assert ens.experts[0].alpha_t == pytest.approx(0.101)
        assert ens.experts[1].alpha_t == pytest.approx(0.102)


class TestEnsembleState:
    def test_create_defaults(self):
        ens = EnsembleState.create(0.1)
        assert len(ens.experts) == len(DEFAULT_GAMMA_GRID)
        np.testing.assert_allclose(ens.weights, 1.0 / len(DEFAULT_GAMMA_GRID))
        assert ens.t == 1
        np.testing.assert_array_equal(ens.expert_alphas(), 0.1)

    def test_weights_normalized_on_init(self):
        ens = two_expert_ensemble(weights=(2.0, 6.0))
        np.testing.assert_allclose(ens.weights, [0.25, 0.75])

    def test_bad_weights_rejected(self):
        sched = EtaSchedule("fixed", alpha=ALPHA, k=2, fixed_eta=1.0)
        with pytest.raises(ValueError, match="weights"):
            EnsembleState(
                experts=EnsembleState.create(ALPHA, gammas=(0.01, 0.02), schedule=sched).experts,
                weights=np.array([0.5, -0.5]),
                target=EnsembleState.create(ALPHA, gammas=(0.01,), schedule=None).target,
                schedule=sched,
            )

    def test_empty_bank_rejected(self):
        sched = EtaSchedule("fixed", alpha=ALPHA, k=1, fixed_eta=1.0)
        with pytest.raises(ValueError, match="at least one tracker"):
            EnsembleState(experts=[], weights=np.array([]), target=None, schedule=sched)


class TestStepVariants:
    def test_beta_validation(self):
        ens = EnsembleState.create(ALPHA)
        with pytest.raises(ValueError, match="realized level"):
            faci_step_averaged(ens, 1.5)

    def test_draw_validation(self):
        ens = EnsembleState.create(ALPHA)
        with pytest.raises(ValueError, match="uniform draw"):
            faci_step_randomized(ens, 0.5, 1.0)

    def test_averaged_emits_probability_mean(self):
        ens = two_expert_ensemble(alphas=(0.2, 0.4), weights=(0.25, 0.75))
        _, out, err = faci_step_averaged(ens, beta=0.3)
        assert out == pytest.approx(0.25 * 0.2 + 0.75 * 0.4)
        assert err == 1.0  # 0.3 < 0.35
        assert ens.t == 2

    def test_randomized_linear_scan_bins(self):
        ens = two_expert_ensemble(alphas=(0.2, 0.4), weights=(0.25, 0.75))
        _, out, _ = faci_step_randomized(ens, beta=0.3, rng_draw=0.1)
        assert out == 0.2
        ens = two_expert_ensemble(alphas=(0.2, 0.4), weights=(0.25, 0.75))
        _, out, _ = faci_step_randomized(ens, beta=0.3, rng_draw=0.9)
        assert out == 0.4

    def test_selection_frequencies(self):
        # equal trackers keep the weights at (0.25, 0.75) with sigma = 0, so
        # the draws hit the first bin at its probability
        draws = make_rng(7, SUB_LEARNER).random(100_000)
        ens = two_expert_ensemble(alphas=(0.1, 0.1), weights=(0.25, 0.75), gammas=(0.01, 0.01))
        betas = make_rng(7, SUB_STREAM).random(200)
        for u, b in zip(draws[:200], betas):
            np.testing.assert_allclose(ens.probabilities(), [0.25, 0.75], rtol=1e-9)
            faci_step_randomized(ens, b, u)
        # identical trackers keep the bins fixed, so the draw stream decides
        freq = np.mean(draws < 0.25)
        assert freq == 0.25015  # frozen for this seed
        assert abs(freq - 0.25) <= 0.01

    def test_single_tracker_reduces_to_plain_recursion(self):
        betas = make_rng(9, SUB_STREAM).random(3000)
        sched = EtaSchedule("fixed", alpha=ALPHA, k=1, fixed_eta=2.0, sigma=0.0)
        ens = EnsembleState.create(ALPHA, gammas=(0.02,), schedule=sched)
        outs = np.empty(betas.size)
        errs = np.empty(betas.size)
        for i, b in enumerate(betas):
            _, outs[i], errs[i] = faci_step_averaged(ens, b)
        ref_a, ref_e = run_aci(betas, gamma=0.02, alpha=ALPHA)
        np.testing.assert_array_equal(outs, ref_a)
        np.testing.assert_array_equal(errs, ref_e)

    def test_output_does_not_feed_back(self):
        # averaged and randomized walks share internal state bitwise under
        # a fixed learning rate
        betas = make_rng(15, SUB_STREAM).random(2000)
        draws = make_rng(15, SUB_LEARNER).random(2000)
        sched_a = EtaSchedule("fixed", alpha=ALPHA, k=3, fixed_eta=1.5)
        sched_r = EtaSchedule("fixed", alpha=ALPHA, k=3, fixed_eta=1.5)
        gammas = (0.01, 0.04, 0.16)
        ens_a = EnsembleState.create(ALPHA, gammas=gammas, schedule=sched_a)
        ens_r = EnsembleState.create(ALPHA, gammas=gammas, schedule=sched_r)
        for b, u in zip(betas, draws):
            a_bar = float(np.dot(ens_r.weights, ens_r.expert_alphas()))
            _, out_a, _ = faci_step_averaged(ens_a, b)
            faci_step_randomized(ens_r, b, u)
            assert out_a == a_bar
            np.testing.assert_array_equal(ens_a.weights, ens_r.weights)
            np.testing.assert_array_equal(ens_a.expert_alphas(), ens_r.expert_alphas())


class TestBatchKernel:
    def run_python(self, betas, gammas, eta_mode, fixed_eta=2.0, sigma=0.001, eta_scale=2.0, draws=None):
        mode = {ETA_FIXED: "fixed", ETA_WINDOWED: "windowed", ETA_DECAYING: "decaying"}[eta_mode]
        sched = EtaSchedule(
            mode, alpha=ALPHA, k=len(gammas), interval_length=50,
            fixed_eta=fixed_eta, sigma=sigma, eta_scale=eta_scale,
        )
        ens = EnsembleState.create(ALPHA, gammas=gammas, schedule=sched)
        outs = np.empty(betas.size)
        errs = np.empty(betas.size)
        for i, b in enumerate(betas):
            if draws is None:
                _, outs[i], errs[i] = faci_step_averaged(ens, b)
            else:
                _, outs[i], errs[i] = faci_step_randomized(ens, b, draws[i])
        return outs, errs, ens

    @pytest.mark.parametrize("eta_mode", [ETA_FIXED, ETA_WINDOWED, ETA_DECAYING])
    def test_kernel_tracks_stepwise_path(self, eta_mode):
        gammas = (0.004, 0.016, 0.064)
        betas = make_rng(23, SUB_STREAM).random(400)
        outs, errs, ens = self.run_python(betas, gammas, eta_mode)
        g = np.asarray(gammas)
        log_term = math.log(3 * 50) + 2.0
        k_out = ensemble_path(
            betas, g, ALPHA, np.full(3, ALPHA), np.full(3, 1.0 / 3.0), eta_mode,
            2.0, 0.001, 2.0, log_term, 50, False, np.zeros(0), False,
        )
        np.testing.assert_allclose(k_out[0], outs, rtol=0, atol=1e-12)
        np.testing.assert_array_equal(k_out[1], errs)
        np.testing.assert_allclose(k_out[8], ens.weights, rtol=0, atol=1e-12)
        np.testing.assert_allclose(k_out[9], ens.expert_alphas(), rtol=0, atol=1e-12)

    def test_kernel_randomized_matches_stepwise(self):
        gammas = (0.004, 0.016, 0.064)
        betas = make_rng(29, SUB_STREAM).random(400)
        draws = make_rng(29, SUB_LEARNER).random(400)
        outs, errs, _ = self.run_python(betas, gammas, ETA_FIXED, draws=draws)
        k_out = ensemble_path(
            betas, np.asarray(gammas), ALPHA, np.full(3, ALPHA), np.full(3, 1.0 / 3.0),
            ETA_FIXED, 2.0, 0.001, 2.0, 0.0, 50, True, draws, False,
        )
        np.testing.assert_allclose(k_out[0], outs, rtol=0, atol=1e-12)
        np.testing.assert_array_equal(k_out[1], errs)

    def test_kernel_single_gamma_equals_plain_recursion(self):
        from driftcal.batch import aci_path

        betas = make_rng(31, SUB_STREAM).random(5000)
        a_ref, e_ref = run_aci(betas, gamma=0.008, alpha=ALPHA)
        a_k, e_k = aci_path(betas, 0.008, ALPHA, ALPHA)
        np.testing.assert_array_equal(a_k, a_ref)
        np.testing.assert_array_equal(e_k, e_ref)

    def test_recorded_history_is_pre_update(self):
        betas = np.array([0.5, 0.05, 0.7])
        g = np.array([0.01, 0.02])
        out = ensemble_path(
            betas, g, ALPHA, np.full(2, ALPHA), np.full(2, 0.5), ETA_FIXED,
            2.0, 0.0, 0.0, 0.0, 500, False, np.zeros(0), True,
        )
        np.testing.assert_array_equal(out[6][0], [ALPHA, ALPHA])
        np.testing.assert_array_equal(out[7][0], [0.5, 0.5])
        # second row shows the post-step trackers from step one
        np.testing.assert_allclose(out[6][1], [0.101, 0.102], rtol=1e-12)
