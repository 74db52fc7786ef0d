"""The Little model: a synchronous network of stochastic binary units.

A network of ``n`` units evolves on the state space {0,1}^n.  At every time
step each unit i computes its local field (weighted sum of the current bits
plus a bias) and independently turns on with probability sigmoid(field).
Equivalently, the unit fires when its field exceeds a fresh logistic-noise
threshold; that threshold form is what the simulation uses, with one uniform
variate consumed per unit per step in fixed unit order so that paired chains
driven by equal streams stay aligned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit


def sigmoid(x):
    """Logistic function 1/(1+exp(-x)), numerically stable for any finite x.

    Satisfies sigmoid(-x) == 1 - sigmoid(x) up to rounding and saturates to
    0.0 / 1.0 (never NaN) at extreme arguments.
    """
    return expit(x)


def _lock(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class NetworkParams:
    """Weights and biases of an n-unit network.

    ``weights[i, j]`` is the strength of the link from unit j into unit i;
    ``biases[i]`` is added to unit i's field.  Arbitrary connectivity is
    allowed, including self-loops and asymmetry.
    """

    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.biases, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"weights must be square, got shape {w.shape}")
        if b.shape != (w.shape[0],):
            raise ValueError(
                f"biases shape {b.shape} inconsistent with weights {w.shape}"
            )
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValueError("parameters must be finite")
        object.__setattr__(self, "weights", _lock(w))
        object.__setattr__(self, "biases", _lock(b))

    @property
    def n(self):
        return self.weights.shape[0]

    def perturbed(self, direction, scale):
        """New parameters theta + scale * direction."""
        return NetworkParams(
            self.weights + scale * direction.dw, self.biases + scale * direction.db
        )


@dataclass(frozen=True)
class PerturbationDirection:
    """A direction in parameter space: one entry per weight and per bias."""

    dw: np.ndarray
    db: np.ndarray

    def __post_init__(self):
        dw = np.asarray(self.dw, dtype=np.float64)
        db = np.asarray(self.db, dtype=np.float64)
        if dw.ndim != 2 or dw.shape[0] != dw.shape[1] or db.shape != (dw.shape[0],):
            raise ValueError("direction shape inconsistent")
        if not (np.isfinite(dw).all() and np.isfinite(db).all()):
            raise ValueError("direction entries must be finite")
        object.__setattr__(self, "dw", _lock(dw))
        object.__setattr__(self, "db", _lock(db))

    @property
    def n(self):
        return self.dw.shape[0]

    def flat(self):
        """Concatenated (weights row-major, then biases) view of the entries."""
        return np.concatenate([self.dw.ravel(), self.db])


@dataclass(frozen=True)
class ClampSpec:
    """A set of units frozen to externally supplied bits.

    Clamped units never change under stepping; they are excluded from the
    stochastic dynamics but their outgoing weights still feed the free units.
    One uniform variate is still consumed for every clamped position so that
    chains with and without identical clamps stay stream-aligned.
    """

    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).ravel()
        val = np.asarray(self.values, dtype=np.int8).ravel()
        if idx.size != val.size:
            raise ValueError("one value per clamped index required")
        if idx.size and (np.unique(idx).size != idx.size or idx.min() < 0):
            raise ValueError("clamped indices must be unique and nonnegative")
        if not np.isin(val, (0, 1)).all():
            raise ValueError("clamp values must be bits")
        order = np.argsort(idx)
        object.__setattr__(self, "indices", _lock(idx[order]))
        object.__setattr__(self, "values", _lock(val[order]))

    def clamped_mask(self, n):
        """Boolean mask of length n, True on clamped positions."""
        if self.indices.size and self.indices.max() >= n:
            raise ValueError("clamped index out of range")
        mask = np.zeros(n, dtype=bool)
        mask[self.indices] = True
        return mask

    def free_indices(self, n):
        return np.flatnonzero(~self.clamped_mask(n))

    def apply(self, bits):
        """Copy of ``bits`` with clamped positions forced to their values."""
        out = np.array(bits, dtype=np.int8, copy=True)
        out[..., self.indices] = self.values
        return out


NO_CLAMP = ClampSpec(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int8))


def _as_clamp(clamp):
    return NO_CLAMP if clamp is None else clamp


def as_state(bits, n=None):
    """Validate and convert a bit vector to the canonical int8 representation."""
    x = np.asarray(bits)
    if not np.isin(x, (0, 1)).all():
        raise ValueError("state entries must be 0 or 1")
    x = x.astype(np.int8)
    if n is not None and x.shape[-1] != n:
        raise ValueError(f"state length {x.shape[-1]} != n={n}")
    return x


def local_field(params, x):
    """Per-unit input fields: weights @ x + biases.

    ``x`` may carry leading batch axes; the unit axis is last.
    """
    x = np.asarray(x)
    if x.shape[-1] != params.n:
        raise ValueError(f"state length {x.shape[-1]} != n={params.n}")
    return x.astype(np.float64) @ params.weights.T + params.biases


def logistic_thresholds(u):
    """Map uniform(0,1) variates to logistic-noise thresholds.

    A unit fires when its field exceeds the threshold; this is the inverse-CDF
    form of turning on with probability sigmoid(field).  u == 0 maps to -inf
    (the unit fires regardless), which is the correct limit.  The single
    explicit expression is shared by every code path so all simulation
    routes produce bit-identical thresholds.
    """
    u = np.asarray(u, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return np.log(u / (1.0 - u))


def apply_step(params, x, u, clamp=None):
    """Advance one synchronous step using the given uniforms (pure function).

    ``x`` and ``u`` may carry matching leading batch axes.  Every position
    consumes one uniform, clamped or not; clamped bits keep their values.
    """
    clamp = _as_clamp(clamp)
    fields = local_field(params, x)
    nxt = (fields > logistic_thresholds(u)).astype(np.int8)
    if clamp.indices.size:
        nxt[..., clamp.indices] = clamp.values
    return nxt


def step(params, x, clamp=None, stream=None):
    """Draw one synchronous transition of the network.

    Consumes exactly n uniforms from ``stream`` in unit order.
    """
    return apply_step(params, x, stream.uniforms(params.n), clamp)


def transition_probability(params, x0, x1, clamp=None, form="signed"):
    """One-step probability of moving from state x0 to state x1.

    Two algebraically identical product forms are available: ``signed``
    multiplies sigmoid((2*x1 - 1) * field) over units, ``bernoulli``
    multiplies sigmoid(field)^x1 * (1 - sigmoid(field))^(1-x1).  With a
    clamp, the product runs over free units only and clamped bits of x0 are
    forced to their clamp values (x1 must agree with the clamp).
    """
    clamp = _as_clamp(clamp)
    x0 = as_state(x0, params.n)
    x1 = as_state(x1, params.n)
    if clamp.indices.size:
        x0 = clamp.apply(x0)
        if not np.array_equal(x1[clamp.indices], clamp.values):
            return 0.0
    free = clamp.free_indices(params.n)
    fields = local_field(params, x0)[free]
    bits = x1[free].astype(np.float64)
    if form == "signed":
        return float(np.prod(sigmoid((2.0 * bits - 1.0) * fields)))
    if form == "bernoulli":
        p = sigmoid(fields)
        return float(np.prod(np.where(bits == 1.0, p, 1.0 - p)))
    raise ValueError(f"unknown form {form!r}")


def contraction_epsilon(params):
    """Uniform lower bound on every one-step transition probability.

    Equals sigmoid(-(max absolute row sum of weights) - max|bias|)^n, which
    also bounds the per-step total-variation contraction factor at 1 - eps.
    Larger weights give a smaller eps, hence a weaker mixing guarantee.
    """
    w_norm = np.abs(params.weights).sum(axis=1).max() if params.n else 0.0
    b_norm = np.abs(params.biases).max() if params.n else 0.0
    return float(sigmoid(-w_norm - b_norm) ** params.n)
