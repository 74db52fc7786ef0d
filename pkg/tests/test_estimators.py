import itertools
import math

import numpy as np
import pytest

from littlenet import oracle
from littlenet.estimators import (
    EstimatorConfig,
    mvd_directional_estimate,
    replicate_directional,
    replicate_spmvd,
    replicate_spsa,
    sample_rademacher_direction,
    spmvd_estimate,
    spsa_estimate,
    start_state,
    trainable_mask,
)
from littlenet.net import ClampSpec, NetworkParams, PerturbationDirection, apply_step
from littlenet.rng import UniformStream

FIRST_BIT = lambda bits: np.asarray(bits)[..., 0].astype(np.float64)
CONSTANT = lambda bits: np.full(np.asarray(bits).shape[:-1], 2.5)


def reference_network():
    """Single unit, no self-weight, bias log 3; gradient known exactly."""
    return NetworkParams([[0.0]], [math.log(3)])


# oracle values reproduced in tests/test_oracle.py via implicit differentiation
REF_GRAD_W = 0.140625
REF_GRAD_B = 0.1875


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            EstimatorConfig(m0=-1)
        with pytest.raises(ValueError):
            EstimatorConfig(m1=0)
        with pytest.raises(ValueError):
            EstimatorConfig(lam=0.0)
        with pytest.raises(ValueError):
            EstimatorConfig(replications=0)


class TestRademacher:
    def test_entries_are_signs(self):
        v = sample_rademacher_direction(4, UniformStream(1))
        assert set(np.unique(v.dw)) <= {-1.0, 1.0}
        assert set(np.unique(v.db)) <= {-1.0, 1.0}
        np.testing.assert_array_equal(v.dw**2, np.ones((4, 4)))

    def test_mask_zeroes_rows_into_clamped_units(self):
        clamp = ClampSpec([1], [0])
        v = sample_rademacher_direction(3, UniformStream(2), clamp)
        np.testing.assert_array_equal(v.dw[1], np.zeros(3))
        assert v.db[1] == 0.0
        assert set(np.unique(v.dw[[0, 2]])) <= {-1.0, 1.0}

    def test_mask_switchable(self):
        clamp = ClampSpec([1], [0])
        v = sample_rademacher_direction(3, UniformStream(2), clamp, mask_clamped=False)
        assert set(np.unique(v.dw)) <= {-1.0, 1.0}

    def test_zero_mean(self):
        n = 2
        draws = 4000
        s = UniformStream(3)
        total = np.zeros(n * n + n)
        for _ in range(draws):
            v = sample_rademacher_direction(n, s)
            total += v.flat()
        se = 1.0 / math.sqrt(draws)
        assert np.abs(total / draws).max() < 4 * se

    def test_reconstruction_by_enumeration(self):
        # E[(g . v) v] = g when v ranges uniformly over all sign vectors
        m = 6
        g = UniformStream(5).uniforms(m) * 2 - 1
        acc = np.zeros(m)
        count = 0
        for signs in itertools.product((-1.0, 1.0), repeat=m):
            v = np.array(signs)
            acc += (g @ v) * v
            count += 1
        np.testing.assert_allclose(acc / count, g, atol=1e-12)


class TestDirectionalEstimate:
    def test_constant_cost_is_exactly_zero(self):
        v = PerturbationDirection([[0.0]], [1.0])
        cfg = EstimatorConfig(m0=5, m1=5)
        got = mvd_directional_estimate(
            reference_network(), v, CONSTANT, None, cfg, UniformStream(7)
        )
        assert got == 0.0

    def test_reference_bias_coordinate(self):
        v = PerturbationDirection([[0.0]], [1.0])
        cfg = EstimatorConfig(m0=100, m1=100)
        deltas = replicate_directional(
            reference_network(), v, FIRST_BIT, None, cfg,
            UniformStream(11), replications=10_000,
        )
        se = deltas.std(ddof=1) / math.sqrt(deltas.size)
        assert abs(deltas.mean() - REF_GRAD_B) < 3 * se

    def test_random_network_matches_oracle_projection(self):
        stream = UniformStream(13)
        n = 3
        params = NetworkParams(
            (2 * stream.uniforms((n, n)) - 1) * 0.8,
            (2 * stream.uniforms(n) - 1) * 0.5,
        )
        flat = np.where(stream.uniforms(n * n + n) < 0.5, -1.0, 1.0)
        v = PerturbationDirection(flat[: n * n].reshape(n, n), flat[n * n :])
        dw, db = oracle.exact_gradient(params, FIRST_BIT)
        target = float((dw * v.dw).sum() + (db * v.db).sum())
        cfg = EstimatorConfig(m0=200, m1=200)
        deltas = replicate_directional(
            params, v, FIRST_BIT, None, cfg, UniformStream(17), replications=20_000
        )
        se = deltas.std(ddof=1) / math.sqrt(deltas.size)
        assert abs(deltas.mean() - target) < 3 * se

    def test_bias_shrinks_with_horizon(self):
        # slow-ish mixing instance: the short-horizon estimate is visibly
        # biased, the long-horizon one is not (within noise)
        params = NetworkParams([[2.0, -1.0], [1.5, 1.0]], [-0.5, 0.3])
        v = PerturbationDirection(np.ones((2, 2)), np.ones(2))
        dw, db = oracle.exact_gradient(params, FIRST_BIT)
        target = float((dw * v.dw).sum() + (db * v.db).sum())
        bias = {}
        noise = {}
        for m in (5, 20, 100):
            cfg = EstimatorConfig(m0=m, m1=m)
            deltas = replicate_directional(
                params, v, FIRST_BIT, None, cfg, UniformStream(19), replications=30_000
            )
            bias[m] = abs(deltas.mean() - target)
            noise[m] = deltas.std(ddof=1) / math.sqrt(deltas.size)
        assert bias[20] <= bias[5] + 3 * (noise[5] + noise[20])
        assert bias[100] <= bias[20] + 3 * (noise[20] + noise[100])

    def test_include_t0_changes_the_sum(self):
        # zero parameters at x0 = 1 with an all-positive direction: the
        # positive measure is a point mass at 1, so whenever the negative
        # sample is 0 the t = 0 summand is exactly c * 1
        params = NetworkParams([[0.0]], [0.0])
        v = PerturbationDirection([[1.0]], [1.0])
        x0 = np.array([1], dtype=np.int8)
        seen_difference = False
        for seed in range(10):
            args = (params, v, FIRST_BIT, None)
            with_t0 = mvd_directional_estimate(
                *args, EstimatorConfig(m0=0, m1=3, include_t0=True),
                UniformStream(seed), x0=x0,
            )
            without = mvd_directional_estimate(
                *args, EstimatorConfig(m0=0, m1=3, include_t0=False),
                UniformStream(seed), x0=x0,
            )
            if with_t0 != without:
                seen_difference = True
                assert with_t0 - without == pytest.approx(1.0)
        assert seen_difference

    def test_degenerate_direction_raises(self):
        from littlenet.mvd import DegenerateDirectionError

        v = PerturbationDirection([[1.0]], [0.0])  # annihilated at x0 = 0
        with pytest.raises(DegenerateDirectionError):
            mvd_directional_estimate(
                NetworkParams([[0.0]], [-1e6]), v, FIRST_BIT, None,
                EstimatorConfig(m0=1, m1=1), UniformStream(3),
            )


class TestCrnCoupling:
    def test_chains_stay_equal_after_first_agreement(self):
        params = NetworkParams(
            (2 * UniformStream(29).uniforms((3, 3)) - 1) * 0.5,
            np.zeros(3),
        )
        s = UniformStream(31)
        xp = np.array([1, 1, 1], dtype=np.int8)
        xm = np.array([0, 0, 0], dtype=np.int8)
        met = None
        history = []
        for t in range(60):
            u = s.uniforms(3)
            xp = apply_step(params, xp, u)
            xm = apply_step(params, xm, u)
            history.append((xp.copy(), xm.copy()))
            if met is None and np.array_equal(xp, xm):
                met = t
        assert met is not None, "coupled chains never met"
        for xp_t, xm_t in history[met:]:
            np.testing.assert_array_equal(xp_t, xm_t)

    def test_summands_vanish_after_coalescence(self):
        params = reference_network()
        s = UniformStream(37)
        xp = np.array([1], dtype=np.int8)
        xm = np.array([0], dtype=np.int8)
        diffs = []
        for _ in range(30):
            u = s.uniforms(1)
            xp = apply_step(params, xp, u)
            xm = apply_step(params, xm, u)
            diffs.append(float(FIRST_BIT(xp) - FIRST_BIT(xm)))
        # single unit with shared uniforms coalesces at the first step
        assert diffs == [0.0] * 30


class TestSpmvd:
    def test_constant_cost_zero_vector(self):
        est = spmvd_estimate(
            reference_network(), CONSTANT, None, EstimatorConfig(m0=3, m1=3),
            stream=UniformStream(41),
        )
        np.testing.assert_array_equal(est.d_weights, np.zeros((1, 1)))
        np.testing.assert_array_equal(est.d_biases, np.zeros(1))

    def test_metadata(self):
        cfg = EstimatorConfig(m0=2, m1=2)
        est = spmvd_estimate(reference_network(), FIRST_BIT, None, cfg, UniformStream(43))
        assert est.seed == 43
        assert est.config == cfg
        assert set(np.unique(est.direction.dw)) <= {-1.0, 1.0}

    def test_single_draw_equals_batch_replication(self):
        cfg = EstimatorConfig(m0=20, m1=20)
        params = reference_network()
        root = UniformStream(47)
        singles = [
            spmvd_estimate(params, FIRST_BIT, None, cfg, child)
            for child in root.spawn(5)
        ]
        batch = replicate_spmvd(
            params, FIRST_BIT, None, cfg, UniformStream(47), replications=5
        )
        for r, est in enumerate(singles):
            np.testing.assert_array_equal(est.d_weights, batch.d_weights[r])
            np.testing.assert_array_equal(est.d_biases, batch.d_biases[r])

    def test_chunk_invariance(self):
        cfg = EstimatorConfig(m0=10, m1=10)
        a = replicate_spmvd(
            reference_network(), FIRST_BIT, None, cfg, UniformStream(53),
            replications=7, chunk=2,
        )
        b = replicate_spmvd(
            reference_network(), FIRST_BIT, None, cfg, UniformStream(53),
            replications=7, chunk=100,
        )
        np.testing.assert_array_equal(a.d_weights, b.d_weights)
        np.testing.assert_array_equal(a.d_biases, b.d_biases)

    def test_reference_mean_near_oracle(self):
        cfg = EstimatorConfig(m0=100, m1=100)
        batch = replicate_spmvd(
            reference_network(), FIRST_BIT, None, cfg, UniformStream(59),
            replications=20_000,
        )
        mw, mb = batch.mean()
        sw, sb = batch.stderr()
        assert abs(mw[0, 0] - REF_GRAD_W) < 4 * sw[0, 0]
        assert abs(mb[0] - REF_GRAD_B) < 4 * sb[0]

    def test_clamped_coordinates_are_zero(self):
        n = 3
        params = NetworkParams(np.zeros((n, n)), np.zeros(n))
        clamp = ClampSpec([0], [1])
        cfg = EstimatorConfig(m0=5, m1=5)
        est = spmvd_estimate(params, FIRST_BIT, clamp, cfg, UniformStream(61))
        np.testing.assert_array_equal(est.d_weights[0], np.zeros(n))
        assert est.d_biases[0] == 0.0

    def test_warm_start_state(self):
        cfg = EstimatorConfig(m0=0, m1=2)
        est = spmvd_estimate(
            reference_network(), FIRST_BIT, None, cfg, UniformStream(67),
            x0=np.array([1], dtype=np.int8),
        )
        assert np.isfinite(est.d_biases).all()


class TestSpsa:
    def test_constant_cost_zero(self):
        est = spsa_estimate(
            reference_network(), CONSTANT, None, M=10, lam=0.1, stream=UniformStream(71)
        )
        np.testing.assert_array_equal(est.d_biases, np.zeros(1))

    def test_deterministic(self):
        a = spsa_estimate(reference_network(), FIRST_BIT, None, 20, 0.05, UniformStream(73))
        b = spsa_estimate(reference_network(), FIRST_BIT, None, 20, 0.05, UniformStream(73))
        np.testing.assert_array_equal(a.d_biases, b.d_biases)

    def test_lambda_validation(self):
        with pytest.raises(ValueError):
            spsa_estimate(reference_network(), FIRST_BIT, None, 10, 0.0, UniformStream(1))

    def test_mean_tracks_oracle_within_fd_bias(self):
        batch = replicate_spsa(
            reference_network(), FIRST_BIT, None, M=150, lam=0.05,
            stream=UniformStream(79), replications=30_000,
        )
        mw, mb = batch.mean()
        # finite differences carry O(lam^2) bias on top of the noise
        assert abs(mw[0, 0] - REF_GRAD_W) < 0.15 * REF_GRAD_W
        assert abs(mb[0] - REF_GRAD_B) < 0.15 * REF_GRAD_B

    def test_variance_grows_as_lambda_shrinks(self):
        var = {}
        for lam in (0.2, 0.02):
            batch = replicate_spsa(
                reference_network(), FIRST_BIT, None, M=60, lam=lam,
                stream=UniformStream(83), replications=6_000,
            )
            var[lam] = batch.deltas.var(ddof=1)
        assert var[0.02] > 3 * var[0.2]


class TestHelpers:
    def test_start_state_applies_clamp(self):
        clamp = ClampSpec([1], [1])
        np.testing.assert_array_equal(start_state(3, clamp), [0, 1, 0])

    def test_trainable_mask(self):
        wm, bm = trainable_mask(3, ClampSpec([2], [0]))
        assert not wm[2].any() and bm[2] == False  # noqa: E712
        assert wm[:2].all() and bm[:2].all()
