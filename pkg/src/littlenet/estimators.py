"""Gradient estimators for stationary costs of the Little model.

Three estimators are provided.  ``mvd_directional_estimate`` runs one burn-in
chain, splits it into a coupled pair started from the positive and negative
derivative measures, and accumulates the cost difference over a fixed horizon
(scaled by the common factor c).  ``spmvd_estimate`` multiplies that scalar by
a random sign direction to produce a full parameter-shaped gradient estimate
from a single coupled pair of chains.  ``spsa_estimate`` is the classical
finite-difference-along-a-random-direction baseline.

Both chains of a pair consume identical uniforms (common random numbers), so
after they coalesce every later summand is exactly zero and the estimate's
variance stays bounded no matter how long the horizon is.

Uniform consumption per estimate is fixed and documented: first the direction
(n*n + n draws, when sampled), then burn-in (m0 * n, step-major), then one
draw per free unit for each of the two measure samplers, then the coupled
horizon (m1 * n, step-major).  Replicated runs give each replication its own
spawned child stream, so replication r of ``replicate_*`` reproduces exactly
what the single-draw function returns on that child stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .mvd import DEGENERATE_C, DegenerateDirectionError, _sample_rows
from .net import (
    PerturbationDirection,
    _as_clamp,
    as_state,
    logistic_thresholds,
    sigmoid,
)

DEFAULT_CHUNK = 16384


@dataclass(frozen=True)
class EstimatorConfig:
    """Horizon and replication settings shared by the estimators."""

    m0: int = 10
    m1: int = 10
    lam: float = 0.05
    include_t0: bool = True
    replications: int = 1

    def __post_init__(self):
        if self.m0 < 0:
            raise ValueError("burn-in m0 must be nonnegative")
        if self.m1 < 1:
            raise ValueError("horizon m1 must be at least 1")
        if not self.lam > 0:
            raise ValueError("finite-difference half-step lam must be positive")
        if self.replications < 1:
            raise ValueError("replications must be positive")


@dataclass(frozen=True)
class GradientEstimate:
    """One parameter-shaped gradient estimate with its provenance."""

    d_weights: np.ndarray
    d_biases: np.ndarray
    direction: PerturbationDirection | None
    seed: object
    config: EstimatorConfig


class GradientBatch:
    """A stack of replicated gradient estimates with summary statistics."""

    def __init__(self, d_weights, d_biases, deltas=None, dir_weights=None, dir_biases=None):
        self.d_weights = d_weights  # (R, n, n)
        self.d_biases = d_biases  # (R, n)
        self.deltas = deltas  # (R,) scalar directional estimates
        self.dir_weights = dir_weights  # (R, n, n) int8 signs, when sampled
        self.dir_biases = dir_biases  # (R, n) int8 signs

    @property
    def replications(self):
        return self.d_weights.shape[0]

    def mean(self):
        return self.d_weights.mean(axis=0), self.d_biases.mean(axis=0)

    def stderr(self):
        r = self.replications
        return (
            self.d_weights.std(axis=0, ddof=1) / np.sqrt(r),
            self.d_biases.std(axis=0, ddof=1) / np.sqrt(r),
        )


def trainable_mask(n, clamp=None, mask_clamped=True):
    """Boolean (weight, bias) masks of the trainable coordinates.

    Parameters feeding a clamped unit (its weight row and its bias) cannot
    move the free dynamics; with ``mask_clamped`` they are excluded from
    perturbation directions.
    """
    wm = np.ones((n, n), dtype=bool)
    bm = np.ones(n, dtype=bool)
    clamp = _as_clamp(clamp)
    if mask_clamped and clamp.indices.size:
        wm[clamp.indices, :] = False
        bm[clamp.indices] = False
    return wm, bm


def _signs_from_uniforms(u, wm, bm):
    """Map flat uniforms (R, n*n + n) to masked sign arrays (dw, db)."""
    n = bm.size
    v = np.where(u < 0.5, -1.0, 1.0)
    dw = v[:, : n * n].reshape(-1, n, n) * wm
    db = v[:, n * n :] * bm
    return dw, db


def sample_rademacher_direction(n, stream, clamp=None, mask_clamped=True):
    """Draw a uniform random sign direction over the trainable coordinates."""
    wm, bm = trainable_mask(n, clamp, mask_clamped)
    dw, db = _signs_from_uniforms(stream.uniforms((1, n * n + n)), wm, bm)
    return PerturbationDirection(dw[0], db[0])


def start_state(n, clamp=None, x0=None):
    """Default all-zeros start state (clamps applied), or a validated warm one."""
    clamp = _as_clamp(clamp)
    bits = np.zeros(n, dtype=np.int8) if x0 is None else as_state(x0, n)
    return clamp.apply(bits)


def _spawn_blocks(stream, count, width):
    """One (count, width) uniform block, row r from the r-th child stream."""
    out = np.empty((count, width))
    for r, seq in enumerate(stream._seq.spawn(count)):
        out[r] = np.random.Generator(np.random.Philox(seq)).random(width)
    return out


def _thresholds(u_flat, steps, R, n):
    """Reshape step-major uniforms (R, steps*n) into (steps, R, n) thresholds."""
    u = u_flat.reshape(R, steps, n).swapaxes(0, 1)
    return np.ascontiguousarray(logistic_thresholds(u))


def _cost_rows(e, bits):
    vals = np.asarray(e(bits), dtype=np.float64)
    if vals.shape != bits.shape[:-1]:
        raise ValueError(
            "cost function must map (..., n) bit arrays to (...) values"
        )
    return vals


def _directional_core(params, e, clamp, cfg, rows, fixed_v=None, mask_clamped=True, x0=None):
    """Evaluate the coupled-pair directional estimate for each uniform row.

    ``rows`` is (R, T) with T the total per-replication consumption; columns
    are split into the documented phases.  Returns (deltas, dw_signs,
    db_signs); the sign arrays are None when ``fixed_v`` is given.
    """
    n = params.n
    clamp = _as_clamp(clamp)
    clamped = clamp.clamped_mask(n)
    cvals = np.zeros(n)
    cvals[clamp.indices] = clamp.values
    free = np.flatnonzero(~clamped)
    f = free.size
    R = rows.shape[0]
    w = np.ascontiguousarray(params.weights)
    b = np.ascontiguousarray(params.biases)

    off = 0
    if fixed_v is None:
        wm, bm = trainable_mask(n, clamp, mask_clamped)
        Vw, Vb = _signs_from_uniforms(rows[:, : n * n + n], wm, bm)
        off = n * n + n
    else:
        Vw = np.broadcast_to(fixed_v.dw, (R, n, n))
        Vb = np.broadcast_to(fixed_v.db, (R, n))

    X = np.repeat(start_state(n, clamp, x0)[None, :].astype(np.float64), R, axis=0)
    if cfg.m0:
        _kernels.evolve(
            w, b, X, clamped, cvals,
            _thresholds(rows[:, off : off + cfg.m0 * n], cfg.m0, R, n),
        )
        off += cfg.m0 * n

    # derivative-measure data at the burn-in end states, free units only
    sig = sigmoid(X @ w.T + b)[:, free]
    xw = X[:, None, :]  # (R, 1, n) broadcast against (R, f, n) direction rows
    pos = np.maximum(Vb[:, free], 0.0) + (np.maximum(Vw[:, free, :], 0.0) * xw).sum(-1)
    neg = np.maximum(-Vb[:, free], 0.0) + (np.maximum(-Vw[:, free, :], 0.0) * xw).sum(-1)
    c = (sig * (pos + neg)).sum(axis=1)
    if (c < DEGENERATE_C).any():
        raise DegenerateDirectionError(
            "direction does not perturb the kernel at the burn-in state"
        )

    plus_free = _sample_rows((sig * neg).sum(1), pos, sig, rows[:, off : off + f])
    off += f
    minus_free = _sample_rows((sig * pos).sum(1), neg, sig, rows[:, off : off + f])
    off += f

    def embed(free_bits):
        full = np.zeros((R, n), dtype=np.int8)
        full[:, free] = free_bits
        full[:, clamp.indices] = clamp.values
        return full

    Xp_bits = embed(plus_free)
    Xm_bits = embed(minus_free)
    total = np.zeros(R)
    if cfg.include_t0:
        total += _cost_rows(e, Xp_bits) - _cost_rows(e, Xm_bits)

    Xp = Xp_bits.astype(np.float64)
    Xm = Xm_bits.astype(np.float64)
    OutP = np.empty((cfg.m1, R, n), dtype=np.int8)
    OutM = np.empty((cfg.m1, R, n), dtype=np.int8)
    _kernels.evolve_coupled(
        w, b, Xp, Xm, clamped, cvals,
        _thresholds(rows[:, off:], cfg.m1, R, n), OutP, OutM,
    )
    total += np.add.reduce(_cost_rows(e, OutP) - _cost_rows(e, OutM), axis=0)

    deltas = c * total
    return (deltas, Vw, Vb) if fixed_v is None else (deltas, None, None)


def _consumption(n, f, cfg, with_direction):
    return (n * n + n if with_direction else 0) + (cfg.m0 + cfg.m1) * n + 2 * f


def mvd_directional_estimate(params, v, e, clamp=None, cfg=None, stream=None, x0=None):
    """Scalar estimate of the stationary-cost derivative along a fixed v."""
    cfg = cfg or EstimatorConfig()
    f = _as_clamp(clamp).free_indices(params.n).size
    rows = stream.uniforms((1, _consumption(params.n, f, cfg, False)))
    deltas, _, _ = _directional_core(params, e, clamp, cfg, rows, fixed_v=v, x0=x0)
    return float(deltas[0])


def spmvd_estimate(params, e, clamp=None, cfg=None, stream=None, mask_clamped=True, x0=None):
    """Full-gradient estimate from one random direction and one coupled pair."""
    cfg = cfg or EstimatorConfig()
    f = _as_clamp(clamp).free_indices(params.n).size
    rows = stream.uniforms((1, _consumption(params.n, f, cfg, True)))
    deltas, Vw, Vb = _directional_core(
        params, e, clamp, cfg, rows, mask_clamped=mask_clamped, x0=x0
    )
    return GradientEstimate(
        d_weights=deltas[0] * Vw[0],
        d_biases=deltas[0] * Vb[0],
        direction=PerturbationDirection(Vw[0], Vb[0]),
        seed=stream.seed,
        config=cfg,
    )


def replicate_directional(params, v, e, clamp=None, cfg=None, stream=None,
                          replications=None, chunk=DEFAULT_CHUNK, x0=None):
    """Independent replications of mvd_directional_estimate (vectorized).

    Replication r consumes the r-th child stream of ``stream``, so results
    do not depend on the chunk size.
    """
    cfg = cfg or EstimatorConfig()
    R = replications or cfg.replications
    f = _as_clamp(clamp).free_indices(params.n).size
    width = _consumption(params.n, f, cfg, False)
    out = np.empty(R)
    done = 0
    while done < R:
        m = min(chunk, R - done)
        rows = _spawn_blocks(stream, m, width)
        out[done : done + m] = _directional_core(
            params, e, clamp, cfg, rows, fixed_v=v, x0=x0
        )[0]
        done += m
    return out


def replicate_spmvd(params, e, clamp=None, cfg=None, stream=None,
                    replications=None, chunk=DEFAULT_CHUNK, mask_clamped=True, x0=None):
    """Independent replications of spmvd_estimate, stacked into a batch."""
    cfg = cfg or EstimatorConfig()
    R = replications or cfg.replications
    n = params.n
    f = _as_clamp(clamp).free_indices(n).size
    width = _consumption(n, f, cfg, True)
    dW = np.empty((R, n, n))
    dB = np.empty((R, n))
    sW = np.empty((R, n, n), dtype=np.int8)
    sB = np.empty((R, n), dtype=np.int8)
    deltas = np.empty(R)
    done = 0
    while done < R:
        m = min(chunk, R - done)
        rows = _spawn_blocks(stream, m, width)
        d, Vw, Vb = _directional_core(
            params, e, clamp, cfg, rows, mask_clamped=mask_clamped, x0=x0
        )
        deltas[done : done + m] = d
        dW[done : done + m] = d[:, None, None] * Vw
        dB[done : done + m] = d[:, None] * Vb
        sW[done : done + m] = Vw
        sB[done : done + m] = Vb
        done += m
    return GradientBatch(dW, dB, deltas, sW, sB)


def _spsa_core(params, e, clamp, M, lam, rows, mask_clamped=True, x0=None):
    n = params.n
    clamp = _as_clamp(clamp)
    clamped = clamp.clamped_mask(n)
    cvals = np.zeros(n)
    cvals[clamp.indices] = clamp.values
    R = rows.shape[0]
    wm, bm = trainable_mask(n, clamp, mask_clamped)
    Vw, Vb = _signs_from_uniforms(rows[:, : n * n + n], wm, bm)

    XI = _thresholds(rows[:, n * n + n :], M, R, n)
    x_init = start_state(n, clamp, x0).astype(np.float64)
    Xp = np.repeat(x_init[None, :], R, axis=0)
    Xm = Xp.copy()
    Wp = np.ascontiguousarray(params.weights + lam * Vw)
    Bp = np.ascontiguousarray(params.biases + lam * Vb)
    Wm = np.ascontiguousarray(params.weights - lam * Vw)
    Bm = np.ascontiguousarray(params.biases - lam * Vb)
    _kernels.evolve_multi(Wp, Bp, Xp, clamped, cvals, XI)
    _kernels.evolve_multi(Wm, Bm, Xm, clamped, cvals, XI)
    d = (_cost_rows(e, Xp.astype(np.int8)) - _cost_rows(e, Xm.astype(np.int8))) / (2 * lam)
    return d, Vw, Vb


def spsa_estimate(params, e, clamp=None, M=100, lam=0.05, stream=None,
                  mask_clamped=True, x0=None):
    """Finite-difference gradient estimate along one random sign direction.

    Two chains run M steps under parameters shifted by +lam*v and -lam*v,
    sharing uniforms; the scaled terminal cost difference multiplies v.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    n = params.n
    rows = stream.uniforms((1, n * n + n + M * n))
    d, Vw, Vb = _spsa_core(params, e, clamp, M, lam, rows, mask_clamped, x0)
    cfg = EstimatorConfig(m0=0, m1=M, lam=lam)
    return GradientEstimate(
        d_weights=d[0] * Vw[0],
        d_biases=d[0] * Vb[0],
        direction=PerturbationDirection(Vw[0], Vb[0]),
        seed=stream.seed,
        config=cfg,
    )


def replicate_spsa(params, e, clamp=None, M=100, lam=0.05, stream=None,
                   replications=1, chunk=DEFAULT_CHUNK, mask_clamped=True, x0=None):
    """Independent replications of spsa_estimate, stacked into a batch."""
    n = params.n
    width = n * n + n + M * n
    dW = np.empty((replications, n, n))
    dB = np.empty((replications, n))
    sW = np.empty((replications, n, n), dtype=np.int8)
    sB = np.empty((replications, n), dtype=np.int8)
    deltas = np.empty(replications)
    done = 0
    while done < replications:
        m = min(chunk, replications - done)
        rows = _spawn_blocks(stream, m, width)
        d, Vw, Vb = _spsa_core(params, e, clamp, M, lam, rows, mask_clamped, x0)
        deltas[done : done + m] = d
        dW[done : done + m] = d[:, None, None] * Vw
        dB[done : done + m] = d[:, None] * Vb
        sW[done : done + m] = Vw
        sB[done : done + m] = Vb
        done += m
    return GradientBatch(dW, dB, deltas, sW, sB)
