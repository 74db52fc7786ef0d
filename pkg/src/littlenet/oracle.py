"""Exact brute-force references for small networks.

Everything here enumerates the full state space, so it only runs for small
free-unit counts, but within that range it is an independent ground truth:
explicit transition matrices, stationary distributions by power iteration,
gradients by central finite differences, the closed-form one-step directional
derivative, and an exponential-mixture fixture whose directional derivative
measures are known in closed form.

State ordering is fixed project-wide: the state with index s has bit i equal
to (s >> i) & 1, i.e. unit 0 occupies the lowest-order position.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mvd import DegenerateDirectionError
from .net import NetworkParams, _as_clamp, as_state, local_field, sigmoid

MAX_FREE_UNITS = 20  # 2^20 stationary vectors at most
MAX_ONESTEP_UNITS = 12


def enumerate_states(f):
    """All 2^f bit vectors as an (2^f, f) int8 array in index order."""
    if f > MAX_FREE_UNITS:
        raise ValueError(f"{f} free units exceeds the exact-enumeration limit")
    idx = np.arange(2**f, dtype=np.int64)
    return ((idx[:, None] >> np.arange(f)) & 1).astype(np.int8)


def state_index(bits):
    """Index of a bit vector (or batch of them) under the fixed ordering."""
    bits = np.asarray(bits, dtype=np.int64)
    return bits @ (1 << np.arange(bits.shape[-1], dtype=np.int64))


def _embed_free(free_bits, clamp, n):
    """Lift (S, f) free-unit bits to (S, n) full states with clamps set."""
    clamp = _as_clamp(clamp)
    free = clamp.free_indices(n)
    full = np.zeros(free_bits.shape[:-1] + (n,), dtype=np.int8)
    full[..., free] = free_bits
    if clamp.indices.size:
        full[..., clamp.indices] = clamp.values
    return full


def build_transition_matrix(params, clamp=None):
    """Row-stochastic one-step matrix over the free-unit state space."""
    clamp = _as_clamp(clamp)
    free = clamp.free_indices(params.n)
    f = free.size
    if f > MAX_FREE_UNITS:
        raise ValueError(f"{f} free units exceeds the exact-enumeration limit")
    states = enumerate_states(f)
    fields = local_field(params, _embed_free(states, clamp, params.n))[:, free]
    # log sigmoid(x) = -log(1 + exp(-x)), computed stably
    log_on = -np.logaddexp(0.0, -fields)
    log_off = -np.logaddexp(0.0, fields)
    sf = states.astype(np.float64)
    return np.exp(log_on @ sf.T + log_off @ (1.0 - sf.T))


@dataclass(frozen=True)
class ExactDistribution:
    """A probability vector over the enumerated free-unit states."""

    probabilities: np.ndarray

    def __post_init__(self):
        p = np.ascontiguousarray(self.probabilities, dtype=np.float64)
        if p.ndim != 1 or p.size == 0 or (p.size & (p.size - 1)):
            raise ValueError("length must be a power of two")
        if (p < 0).any() or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("not a probability vector")
        object.__setattr__(self, "probabilities", p)
        p.setflags(write=False)

    @property
    def free_units(self):
        return int(np.log2(self.probabilities.size))


def stationary_distribution(matrix, tol=1e-12, max_iter=200_000):
    """Fixed point of pi = pi @ matrix by power iteration.

    The kernel's strictly positive entries guarantee geometric convergence;
    failure to reach the residual tolerance within the iteration cap signals
    a bad input matrix.
    """
    P = np.asarray(matrix, dtype=np.float64)
    pi = np.full(P.shape[0], 1.0 / P.shape[0])
    for _ in range(max_iter):
        nxt = pi @ P
        nxt /= nxt.sum()
        if np.abs(nxt - pi).sum() < tol:
            return ExactDistribution(nxt)
        pi = nxt
    raise RuntimeError(f"power iteration did not reach residual {tol:.0e}")


def stationary_cost(params, e, clamp=None):
    """Long-run average of the cost e under the stationary law of the chain."""
    clamp = _as_clamp(clamp)
    pi = stationary_distribution(build_transition_matrix(params, clamp))
    f = pi.free_units
    full = _embed_free(enumerate_states(f), clamp, params.n)
    return float(pi.probabilities @ np.asarray(e(full), dtype=np.float64))


def exact_gradient(params, e, clamp=None, h=1e-5):
    """Central-difference gradient of the stationary cost, coordinate-wise.

    Returns (d_weights, d_biases).  Parameters feeding clamped units do not
    move the free dynamics, so their entries come out exactly zero.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError("step h outside [1e-7, 1e-3]")
    n = params.n
    w = params.weights.copy()
    b = params.biases.copy()
    dw = np.zeros((n, n))
    db = np.zeros(n)

    def cost(wm, bm):
        return stationary_cost(NetworkParams(wm, bm), e, clamp)

    for i in range(n):
        for j in range(n):
            w[i, j] += h
            up = cost(w, b)
            w[i, j] -= 2 * h
            dn = cost(w, b)
            w[i, j] += h
            dw[i, j] = (up - dn) / (2 * h)
    for i in range(n):
        b[i] += h
        up = cost(w, b)
        b[i] -= 2 * h
        dn = cost(w, b)
        b[i] += h
        db[i] = (up - dn) / (2 * h)
    return dw, db


def one_step_expected_cost(params, x0, e, clamp=None):
    """Expected cost after one transition from x0, by successor enumeration."""
    clamp = _as_clamp(clamp)
    x0 = as_state(x0, params.n)
    if clamp.indices.size:
        x0 = clamp.apply(x0)
    free = clamp.free_indices(params.n)
    if free.size > MAX_ONESTEP_UNITS:
        raise ValueError("too many free units for one-step enumeration")
    sig = sigmoid(local_field(params, x0)[free])
    states = enumerate_states(free.size)
    row = np.prod(np.where(states == 1, sig, 1.0 - sig).astype(np.float64), axis=1)
    costs = np.asarray(e(_embed_free(states, clamp, params.n)), dtype=np.float64)
    return float(row @ costs)


def one_step_directional_derivative(params, v, x0, e, clamp=None):
    """Closed-form derivative of the one-step expected cost along v.

    Enumerates the successor states x1 and evaluates

        sum_x1 e(x1) P(x0, x1) sum_i (x1_i - sigmoid(field_i))
                                     * (sum_j v_{i,j} x0_j + v_i)

    with sums over free units.  This is the independent check for the
    derivative-measure construction.
    """
    clamp = _as_clamp(clamp)
    x0 = as_state(x0, params.n)
    if clamp.indices.size:
        x0 = clamp.apply(x0)
    free = clamp.free_indices(params.n)
    f = free.size
    if f > MAX_ONESTEP_UNITS:
        raise ValueError(f"{f} free units exceeds the one-step enumeration limit")
    sig = sigmoid(local_field(params, x0)[free])
    g = v.dw[free] @ x0.astype(np.float64) + v.db[free]
    states = enumerate_states(f)
    # P(x0, .) over successor free states
    row = np.prod(
        np.where(states == 1, sig, 1.0 - sig).astype(np.float64), axis=1
    )
    full = _embed_free(states, clamp, params.n)
    costs = np.asarray(e(full), dtype=np.float64)
    return float(np.sum(costs * row * ((states - sig) @ g)))


def total_variation(mu1, mu2):
    """Total variation distance between two finite distributions (half L1)."""
    mu1 = np.asarray(mu1, dtype=np.float64)
    mu2 = np.asarray(mu2, dtype=np.float64)
    if mu1.shape != mu2.shape:
        raise ValueError("distributions must have equal length")
    return 0.5 * float(np.abs(mu1 - mu2).sum())


@dataclass(frozen=True)
class MixtureSpec:
    """An exponentially weighted mixture sum_i exp(-theta_i)/Z * mu_i.

    ``components`` holds the m component distributions as rows over a common
    finite space.
    """

    thetas: np.ndarray
    components: np.ndarray

    def __post_init__(self):
        t = np.ascontiguousarray(self.thetas, dtype=np.float64)
        comp = np.ascontiguousarray(self.components, dtype=np.float64)
        if t.ndim != 1 or t.size < 1 or comp.shape[0] != t.size:
            raise ValueError("one component distribution per theta required")
        if (comp < 0).any() or not np.allclose(comp.sum(axis=1), 1.0, atol=1e-12):
            raise ValueError("components must be probability vectors")
        object.__setattr__(self, "thetas", t)
        object.__setattr__(self, "components", comp)
        t.setflags(write=False)
        comp.setflags(write=False)

    @property
    def m(self):
        return self.thetas.size

    def distribution(self, thetas=None):
        """The mixed distribution at the given (default: stored) weights."""
        t = self.thetas if thetas is None else np.asarray(thetas, dtype=np.float64)
        w = np.exp(-t)
        return (w / w.sum()) @ self.components


@dataclass(frozen=True)
class MixtureDerivative:
    """Directional derivative triple of an exponential mixture."""

    c: float
    plus_weights: np.ndarray
    minus_weights: np.ndarray
    plus_dist: np.ndarray
    minus_dist: np.ndarray


def mixture_directional_mvd(spec, v):
    """Derivative triple (c, mu_plus, mu_minus) of the mixture along v.

    With weights w_i = exp(-theta_i) and Z = sum w_i, the derivative of the
    mixture expectation along v is c * (mu_plus(e) - mu_minus(e)) where
    c = sum_j w_j |v_j| / Z and the mixing weights of mu_plus are

        alpha_i = w_i * ((v_i)_- + sum_j w_j (v_j)_+ / Z) / (sum_j w_j |v_j|)

    (mu_minus swaps the positive and negative parts).  Both weight vectors
    are probability vectors by construction.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (spec.m,):
        raise ValueError("direction length must match the number of components")
    w = np.exp(-spec.thetas)
    Z = w.sum()
    K = float(w @ np.abs(v))
    if K < 1e-300:
        raise DegenerateDirectionError("direction does not move the mixture")
    vp = np.maximum(v, 0.0)
    vn = np.maximum(-v, 0.0)
    alpha = w * (vn + (w @ vp) / Z) / K
    beta = w * (vp + (w @ vn) / Z) / K
    return MixtureDerivative(
        c=K / Z,
        plus_weights=alpha,
        minus_weights=beta,
        plus_dist=alpha @ spec.components,
        minus_dist=beta @ spec.components,
    )
