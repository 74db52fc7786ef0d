import math

import numpy as np
import pytest

from littlenet import oracle
from littlenet.mvd import (
    DegenerateDirectionError,
    MvdCoefficients,
    NormalizationError,
    directional_c,
    minus_coefficients,
    mvd_triple,
    plus_coefficients,
    q_prefix_marginal,
    q_probability,
    sample_q,
    sample_q_many,
)
from littlenet.net import ClampSpec, NetworkParams, PerturbationDirection, sigmoid
from littlenet.rng import UniformStream


def zero_params(n):
    return NetworkParams(np.zeros((n, n)), np.zeros(n))


def random_instance(stream, n_max=6, clamp_prob=0.0, direction="real"):
    n = 1 + int(stream.uniform() * n_max)
    params = NetworkParams(
        (2 * stream.uniforms((n, n)) - 1) * 1.5, (2 * stream.uniforms(n) - 1)
    )
    clamp = None
    if n >= 2 and stream.uniform() < clamp_prob:
        k = 1 + int(stream.uniform() * (n - 1))
        idx = np.sort(np.argsort(stream.uniforms(n))[:k])
        clamp = ClampSpec(idx, (stream.uniforms(k) < 0.5).astype(np.int8))
    flat = stream.uniforms(n * n + n)
    if direction == "rademacher":
        flat = np.where(flat < 0.5, -1.0, 1.0)
    else:
        flat = (2 * flat - 1) * 2.0
    v = PerturbationDirection(flat[: n * n].reshape(n, n), flat[n * n :])
    x0 = (stream.uniforms(n) < 0.5).astype(np.int8)
    return params, clamp, v, x0


class TestDirectionalC:
    def test_unit_example(self):
        # sigma(0) = 1/2 contributes through both the bias and the weight term
        v = PerturbationDirection([[1.0]], [1.0])
        assert directional_c(zero_params(1), v, [1]) == pytest.approx(1.0)

    def test_zero_direction_signals(self):
        v = PerturbationDirection([[0.0]], [0.0])
        with pytest.raises(DegenerateDirectionError):
            directional_c(zero_params(1), v, [0])

    def test_annihilated_weight_direction_signals(self):
        # x0 = 0 kills the weight term and there is no bias entry
        v = PerturbationDirection([[1.0]], [0.0])
        with pytest.raises(DegenerateDirectionError):
            directional_c(zero_params(1), v, [0])

    def test_matches_elementwise_sum(self):
        stream = UniformStream(13)
        for _ in range(20):
            params, _, v, x0 = random_instance(stream)
            sig = sigmoid(params.weights @ x0 + params.biases)
            expected = float(
                np.sum(np.abs(v.db) * sig)
                + np.sum(np.abs(v.dw) * x0[None, :] * sig[:, None])
            )
            assert directional_c(params, v, x0) == pytest.approx(expected, rel=1e-12)


class TestCoefficients:
    def test_plus_unit_example(self):
        v = PerturbationDirection([[1.0]], [1.0])
        plus = plus_coefficients(zero_params(1), v, [1])
        assert plus.d == 0.0
        np.testing.assert_allclose(plus.a, [2.0])
        np.testing.assert_allclose(plus.beta, [0.5])
        assert plus.c == pytest.approx(1.0)
        assert q_probability(plus, [1]) == pytest.approx(1.0)
        assert q_probability(plus, [0]) == pytest.approx(0.0)

    def test_minus_unit_example(self):
        v = PerturbationDirection([[1.0]], [1.0])
        minus = minus_coefficients(zero_params(1), v, [1])
        assert minus.d == pytest.approx(1.0)
        np.testing.assert_allclose(minus.a, [0.0])
        assert q_probability(minus, [1]) == pytest.approx(0.5)
        assert q_probability(minus, [0]) == pytest.approx(0.5)

    def test_all_negative_direction_gives_product_form(self):
        n = 3
        flat = -np.abs(UniformStream(2).uniforms(n * n + n)) - 0.1
        v = PerturbationDirection(flat[: n * n].reshape(n, n), flat[n * n :])
        plus = plus_coefficients(zero_params(n), v, [1, 1, 1])
        np.testing.assert_array_equal(plus.a, np.zeros(n))
        assert plus.d == pytest.approx(plus.c)
        minus = minus_coefficients(zero_params(n), v, [1, 1, 1])
        assert (minus.a > 0).all()

    def test_mass_closure_exact(self):
        stream = UniformStream(17)
        for _ in range(30):
            params, clamp, v, x0 = random_instance(stream, clamp_prob=0.4)
            triple = mvd_triple(params, v, x0, clamp)
            assert triple.plus.mass_gap() < 1e-14
            assert triple.minus.mass_gap() < 1e-14

    def test_measures_sum_to_one_by_enumeration(self):
        stream = UniformStream(19)
        for _ in range(15):
            params, _, v, x0 = random_instance(stream, n_max=4)
            triple = mvd_triple(params, v, x0)
            states = oracle.enumerate_states(params.n)
            for coeffs in (triple.plus, triple.minus):
                total = sum(q_probability(coeffs, s) for s in states)
                assert total == pytest.approx(1.0, abs=1e-10)


class TestQProbability:
    def test_hand_example(self):
        coeffs = MvdCoefficients(d=0.25, a=[1.0], beta=[0.5], c=0.75)
        assert q_probability(coeffs, [1]) == pytest.approx(5.0 / 6.0)
        assert q_probability(coeffs, [0]) == pytest.approx(1.0 / 6.0)

    def test_pure_product_when_a_zero(self):
        coeffs = MvdCoefficients(d=1.0, a=[0.0, 0.0], beta=[0.3, 0.8], c=1.0)
        assert q_probability(coeffs, [1, 0]) == pytest.approx(0.3 * 0.2)
        assert q_probability(coeffs, [1, 1]) == pytest.approx(0.3 * 0.8)

    def test_sums_to_one_with_matching_c(self):
        stream = UniformStream(23)
        for _ in range(10):
            n = 1 + int(stream.uniform() * 6)
            a = stream.uniforms(n) * 2
            beta = 0.05 + 0.9 * stream.uniforms(n)
            d = float(stream.uniform())
            c = d + float(beta @ a)
            coeffs = MvdCoefficients(d=d, a=a, beta=beta, c=c)
            states = oracle.enumerate_states(n)
            total = sum(q_probability(coeffs, s) for s in states)
            assert total == pytest.approx(1.0, abs=1e-10)

    def test_validation(self):
        with pytest.raises(ValueError):
            MvdCoefficients(d=-0.1, a=[1.0], beta=[0.5], c=1.0)
        with pytest.raises(ValueError):
            MvdCoefficients(d=0.1, a=[1.0], beta=[1.0], c=1.0)
        with pytest.raises(ValueError):
            MvdCoefficients(d=0.1, a=[1.0], beta=[0.5], c=0.0)


class TestPrefixMarginal:
    def full_coeffs(self):
        return MvdCoefficients(
            d=0.25, a=[1.0, 0.5, 2.0], beta=[0.5, 0.3, 0.7],
            c=0.25 + 0.5 * 1 + 0.3 * 0.5 + 0.7 * 2.0,
        )

    def test_full_prefix_equals_probability(self):
        coeffs = self.full_coeffs()
        for s in oracle.enumerate_states(3):
            assert q_prefix_marginal(coeffs, s) == pytest.approx(
                q_probability(coeffs, s), abs=1e-15
            )

    def test_single_unit_example(self):
        coeffs = MvdCoefficients(d=0.25, a=[1.0], beta=[0.5], c=0.75)
        assert q_prefix_marginal(coeffs, [1]) == pytest.approx(5.0 / 6.0)

    def test_marginalization_consistency(self):
        coeffs = self.full_coeffs()
        for k in (1, 2):
            for s in oracle.enumerate_states(k):
                left = q_prefix_marginal(coeffs, s)
                ext0 = q_prefix_marginal(coeffs, list(s) + [0])
                ext1 = q_prefix_marginal(coeffs, list(s) + [1])
                assert left == pytest.approx(ext0 + ext1, abs=1e-12)

    def test_prefix_bounds(self):
        with pytest.raises(ValueError):
            q_prefix_marginal(self.full_coeffs(), [0, 1, 0, 1])


class TestSampler:
    def test_mass_point_always_one(self):
        v = PerturbationDirection([[1.0]], [1.0])
        plus = plus_coefficients(zero_params(1), v, [1])
        s = UniformStream(3)
        draws = [sample_q(plus, s) for _ in range(200)]
        assert all(d[0] == 1 for d in draws)

    def test_consumes_one_uniform_per_unit(self):
        coeffs = MvdCoefficients(d=0.5, a=[0.0, 0.0, 0.0], beta=[0.5, 0.5, 0.5], c=0.5)
        s = UniformStream(1)
        sample_q(coeffs, s)
        assert s.count == 3

    def test_normalization_violation_raises(self):
        bad = MvdCoefficients(d=0.5, a=[1.0], beta=[0.5], c=2.0)
        with pytest.raises(NormalizationError):
            sample_q(bad, UniformStream(0))

    def test_product_reduction_matches_bernoulli(self):
        # a = 0 turns Q into independent Bernoulli(beta)
        beta = np.array([0.2, 0.5, 0.8])
        coeffs = MvdCoefficients(d=1.0, a=np.zeros(3), beta=beta, c=1.0)
        draws = sample_q_many(coeffs, 200_000, UniformStream(5))
        freq = draws.mean(axis=0)
        se = np.sqrt(beta * (1 - beta) / draws.shape[0])
        assert (np.abs(freq - beta) < 4 * se).all()

    def test_empirical_law_matches_exact(self):
        from scipy.stats import chisquare

        stream = UniformStream(29)
        params, _, v, x0 = random_instance(stream, n_max=4, direction="real")
        n = params.n
        triple = mvd_triple(params, v, x0)
        states = oracle.enumerate_states(n)
        q = np.array([q_probability(triple.plus, s) for s in states])
        draws = 200_000
        bits = sample_q_many(triple.plus, draws, stream.spawn(1)[0])
        counts = np.bincount(oracle.state_index(bits), minlength=2**n)
        mask = q * draws >= 5
        stat = chisquare(counts[mask], (q / q[mask].sum() * draws)[mask])
        assert stat.pvalue > 1e-3

    def test_single_matches_batch_row(self):
        coeffs = MvdCoefficients(
            d=0.3, a=[0.5, 1.0], beta=[0.4, 0.6], c=0.3 + 0.4 * 0.5 + 0.6 * 1.0
        )
        single = sample_q(coeffs, UniformStream(41))
        batch = sample_q_many(coeffs, 1, UniformStream(41))
        np.testing.assert_array_equal(single, batch[0])


class TestTriple:
    def test_shared_scale(self):
        stream = UniformStream(43)
        params, _, v, x0 = random_instance(stream)
        t = mvd_triple(params, v, x0)
        assert t.plus.c == t.minus.c == t.c_value

    def test_unit_identity(self):
        # c * [Q+(e) - Q-(e)] = (e(1) - e(0)) / 2 for the worked single-unit case
        v = PerturbationDirection([[1.0]], [1.0])
        t = mvd_triple(zero_params(1), v, [1])
        for e0, e1 in ((0.0, 1.0), (2.0, -1.0), (0.3, 0.7)):
            got = t.c_value * (
                (e1 * q_probability(t.plus, [1]) + e0 * q_probability(t.plus, [0]))
                - (e1 * q_probability(t.minus, [1]) + e0 * q_probability(t.minus, [0]))
            )
            assert got == pytest.approx(0.5 * (e1 - e0), abs=1e-12)

    def test_coordinate_direction_vs_finite_difference(self):
        stream = UniformStream(47)
        for _ in range(8):
            params, _, _, x0 = random_instance(stream, n_max=3)
            n = params.n
            # one +1 entry picks out a single-parameter derivative
            i = int(stream.uniform() * n)
            j = int(stream.uniform() * n)
            dw = np.zeros((n, n))
            dw[i, j] = 1.0
            v = PerturbationDirection(dw, np.zeros(n))
            if x0[j] == 0:
                continue  # direction annihilated at this state
            t = mvd_triple(params, v, x0)
            table = stream.uniforms(2**n)
            e = lambda bits: table[oracle.state_index(bits)]
            states = oracle.enumerate_states(n)
            qp = np.array([q_probability(t.plus, s) for s in states])
            qm = np.array([q_probability(t.minus, s) for s in states])
            lhs = t.c_value * float(table @ (qp - qm))
            h = 1e-5
            up = oracle.one_step_expected_cost(params.perturbed(v, h), x0, e)
            dn = oracle.one_step_expected_cost(params.perturbed(v, -h), x0, e)
            fd = (up - dn) / (2 * h)
            assert lhs == pytest.approx(fd, rel=1e-6, abs=1e-9)

    def test_homogeneity(self):
        stream = UniformStream(53)
        params, _, v, x0 = random_instance(stream, n_max=4)
        t1 = mvd_triple(params, v, x0)
        v2 = PerturbationDirection(2.0 * v.dw, 2.0 * v.db)
        t2 = mvd_triple(params, v2, x0)
        assert t2.c_value == pytest.approx(2.0 * t1.c_value, rel=1e-14)
        for s in oracle.enumerate_states(params.n):
            assert q_probability(t2.plus, s) == pytest.approx(
                q_probability(t1.plus, s), rel=1e-12
            )
            assert q_probability(t2.minus, s) == pytest.approx(
                q_probability(t1.minus, s), rel=1e-12
            )


class TestDerivativeIdentity:
    def check_instance(self, params, clamp, v, x0, table_stream):
        n = params.n
        free = np.arange(n) if clamp is None else clamp.free_indices(n)
        triple = mvd_triple(params, v, x0, clamp)
        states = oracle.enumerate_states(free.size)
        full = np.zeros((states.shape[0], n), dtype=np.int8)
        full[:, free] = states
        if clamp is not None:
            full[:, clamp.indices] = clamp.values
        table = table_stream.uniforms(2**n)
        e = lambda bits: table[oracle.state_index(bits)]
        qp = np.array([q_probability(triple.plus, s) for s in states])
        qm = np.array([q_probability(triple.minus, s) for s in states])
        ev = table[oracle.state_index(full)]
        lhs = triple.c_value * float(ev @ (qp - qm))
        analytic = oracle.one_step_directional_derivative(params, v, x0, e, clamp)
        h = 1e-5
        up = oracle.one_step_expected_cost(params.perturbed(v, h), x0, e, clamp)
        dn = oracle.one_step_expected_cost(params.perturbed(v, -h), x0, e, clamp)
        fd = (up - dn) / (2 * h)
        scale = max(abs(analytic), abs(fd), 1e-3)
        assert abs(lhs - analytic) / scale < 1e-6
        assert abs(lhs - fd) / scale < 1e-6

    def test_random_instances(self):
        stream = UniformStream(59)
        for k in range(30):
            params, clamp, v, x0 = random_instance(
                stream, n_max=5,
                direction="rademacher" if k % 2 else "real",
            )
            self.check_instance(params, clamp, v, x0, stream)

    def test_clamped_instances(self):
        stream = UniformStream(61)
        done = 0
        while done < 10:
            params, clamp, v, x0 = random_instance(stream, n_max=5, clamp_prob=1.0)
            if clamp is None:
                continue
            self.check_instance(params, clamp, v, x0, stream)
            done += 1
