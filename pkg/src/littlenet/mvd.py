"""Directional measure-valued derivatives of the Little-model kernel.

For a parameter point theta, a direction v in parameter space, and a current
state x0, the derivative of the one-step expectation along v splits into a
positive and a negative probability measure sharing a common scale factor:

    d/dlambda  E[e(X1) | x0, theta + lambda*v]  at 0
        =  c * ( E_plus[e] - E_minus[e] ).

Both measures have the same "tilted product of Bernoullis" shape

    Q(x) = (1/c) * (d + sum_i x_i a_i) * prod_i beta_i^x_i (1-beta_i)^(1-x_i)

with beta_i = sigmoid(field_i(x0)) and nonnegative (d, a) built from the
positive/negative parts of v.  Because the prefix marginals of Q are available
in closed form, exact sequential sampling costs one uniform per unit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .net import _as_clamp, as_state, local_field, sigmoid

# Below this scale the direction does not move the kernel at all and the
# normalized measures are undefined.
DEGENERATE_C = 1e-300


class DegenerateDirectionError(ValueError):
    """The perturbation direction has zero effect on the one-step kernel."""


class NormalizationError(ValueError):
    """Coefficient data does not describe a normalized probability measure."""


@dataclass(frozen=True)
class MvdCoefficients:
    """Data (d, a, beta, c) defining one tilted-Bernoulli measure Q.

    The measure is normalized exactly when c == d + sum_i beta_i a_i; the
    construction below guarantees this identity up to rounding.
    """

    d: float
    a: np.ndarray
    beta: np.ndarray
    c: float

    def __post_init__(self):
        a = np.ascontiguousarray(self.a, dtype=np.float64)
        beta = np.ascontiguousarray(self.beta, dtype=np.float64)
        if a.ndim != 1 or a.shape != beta.shape:
            raise ValueError("a and beta must be equal-length vectors")
        if self.d < 0 or (a < 0).any():
            raise ValueError("d and a must be nonnegative")
        if ((beta <= 0) | (beta >= 1)).any():
            raise ValueError("beta entries must lie strictly inside (0,1)")
        if not self.c > 0:
            raise ValueError("c must be positive")
        object.__setattr__(self, "d", float(self.d))
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "beta", beta)
        a.setflags(write=False)
        beta.setflags(write=False)

    @property
    def node_count(self):
        return self.a.shape[0]

    def mass_gap(self):
        """Relative gap between c and the total mass d + sum beta_i a_i."""
        total = self.d + float(self.beta @ self.a)
        return abs(self.c - total) / max(1.0, abs(self.c))


@dataclass(frozen=True)
class MvdTriple:
    """The directional derivative data (c, Q_plus, Q_minus) at one state."""

    c_value: float
    plus: MvdCoefficients
    minus: MvdCoefficients

    def __post_init__(self):
        if not (self.plus.c == self.c_value == self.minus.c):
            raise ValueError("both measures must share the common scale c")


def _direction_parts(params, v, x0, clamp):
    """Per-free-unit ingredients shared by all coefficient constructions.

    Returns (sig, pos, neg) where sig[i] = sigmoid(field_i(x0)) and pos/neg
    collect the positive/negative parts of the direction as seen from unit i:
    pos_i = (v_i)_+ + sum_j (v_{i,j})_+ x0_j, restricted to free units.
    """
    clamp = _as_clamp(clamp)
    x0 = as_state(x0, params.n)
    if clamp.indices.size:
        x0 = clamp.apply(x0)
    free = clamp.free_indices(params.n)
    xf = x0.astype(np.float64)
    sig = sigmoid(local_field(params, x0)[free])
    dw = v.dw[free]
    db = v.db[free]
    pos = np.maximum(db, 0.0) + np.maximum(dw, 0.0) @ xf
    neg = np.maximum(-db, 0.0) + np.maximum(-dw, 0.0) @ xf
    return sig, pos, neg


def directional_c(params, v, x0, clamp=None):
    """Common scale factor of the derivative measures at state x0.

    Equals sum_i sigmoid(field_i) * (|v_i| + sum_j |v_{i,j}| x0_j) over free
    units.  Raises DegenerateDirectionError when the direction cannot move
    the kernel (all bias entries zero and every weight entry annihilated by
    a zero bit of x0).
    """
    sig, pos, neg = _direction_parts(params, v, x0, clamp)
    c = float(sig @ (pos + neg))
    if c < DEGENERATE_C:
        raise DegenerateDirectionError(
            "direction does not perturb the kernel at this state (c ~ 0)"
        )
    return c


def plus_coefficients(params, v, x0, clamp=None):
    """Coefficients of the positive derivative measure Q_plus at x0."""
    sig, pos, neg = _direction_parts(params, v, x0, clamp)
    c = float(sig @ (pos + neg))
    if c < DEGENERATE_C:
        raise DegenerateDirectionError("degenerate direction (c ~ 0)")
    return MvdCoefficients(d=float(sig @ neg), a=pos, beta=sig, c=c)


def minus_coefficients(params, v, x0, clamp=None):
    """Coefficients of the negative derivative measure Q_minus at x0."""
    sig, pos, neg = _direction_parts(params, v, x0, clamp)
    c = float(sig @ (pos + neg))
    if c < DEGENERATE_C:
        raise DegenerateDirectionError("degenerate direction (c ~ 0)")
    return MvdCoefficients(d=float(sig @ pos), a=neg, beta=sig, c=c)


def mvd_triple(params, v, x0, clamp=None):
    """Bundle (c, Q_plus, Q_minus) for one (theta, v, x0).

    Scaling v by kappa > 0 scales c by kappa and leaves both measures
    unchanged.
    """
    sig, pos, neg = _direction_parts(params, v, x0, clamp)
    c = float(sig @ (pos + neg))
    if c < DEGENERATE_C:
        raise DegenerateDirectionError("degenerate direction (c ~ 0)")
    plus = MvdCoefficients(d=float(sig @ neg), a=pos, beta=sig, c=c)
    minus = MvdCoefficients(d=float(sig @ pos), a=neg, beta=sig, c=c)
    return MvdTriple(c_value=c, plus=plus, minus=minus)


def q_probability(coeffs, x):
    """Probability Q(x) of a full bit vector under the tilted measure."""
    x = as_state(x, coeffs.node_count).astype(np.float64)
    bern = np.prod(np.where(x == 1.0, coeffs.beta, 1.0 - coeffs.beta), axis=-1)
    return float((coeffs.d + x @ coeffs.a) * bern / coeffs.c)


def q_prefix_marginal(coeffs, prefix):
    """Marginal probability Q(x_1, ..., x_k) of the first k bits.

    Units beyond the prefix are summed out; their (a_i beta_i) products join
    the additive term.  With k == n this reduces to q_probability.
    """
    prefix = as_state(prefix)
    k = prefix.shape[-1]
    n = coeffs.node_count
    if not 1 <= k <= n:
        raise ValueError(f"prefix length {k} outside 1..{n}")
    xf = prefix.astype(np.float64)
    tail = float(coeffs.beta[k:] @ coeffs.a[k:])
    bern = np.prod(np.where(xf == 1.0, coeffs.beta[:k], 1.0 - coeffs.beta[:k]), axis=-1)
    return float((coeffs.d + xf @ coeffs.a[:k] + tail) * bern / coeffs.c)


def _check_normalized(coeffs, tol=1e-9):
    if coeffs.mass_gap() > tol:
        raise NormalizationError(
            f"c differs from total mass by {coeffs.mass_gap():.3e} (tol {tol:.0e})"
        )


def _sample_rows(d, a, beta, u):
    """Sequentially sample bit rows from tilted-Bernoulli measures.

    Row r uses its own coefficient set (d[r], a[r], beta[r]) and its own
    uniforms u[r, :], consumed in unit order.  Returns (R, n) int8 bits.
    """
    from . import _kernels

    R, n = beta.shape
    bits = np.empty((R, n), dtype=np.int8)
    _kernels.sample_rows(
        np.ascontiguousarray(d, dtype=np.float64),
        np.ascontiguousarray(a, dtype=np.float64),
        np.ascontiguousarray(beta, dtype=np.float64),
        np.ascontiguousarray(u, dtype=np.float64),
        bits,
    )
    return bits


def sample_q(coeffs, stream):
    """Draw one state from the tilted-Bernoulli measure Q.

    Bits are generated unit by unit from the exact conditional probabilities
    (a ratio of prefix marginals maintained with running partial sums), so the
    output is distributed exactly as q_probability.  Consumes one uniform per
    unit.  Requires normalized coefficients: c == d + sum beta_i a_i.
    """
    _check_normalized(coeffs)
    u = stream.uniforms(coeffs.node_count)
    return _sample_rows(
        np.array([coeffs.d]),
        coeffs.a[None, :],
        coeffs.beta[None, :],
        u[None, :],
    )[0]


def sample_q_many(coeffs, size, stream):
    """Draw ``size`` independent states from Q (vectorized sample_q)."""
    _check_normalized(coeffs)
    u = stream.uniforms((size, coeffs.node_count))
    d = np.full(size, coeffs.d)
    a = np.broadcast_to(coeffs.a, u.shape)
    beta = np.broadcast_to(coeffs.beta, u.shape)
    return _sample_rows(d, a, beta, u)
