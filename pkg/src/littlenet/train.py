"""Stochastic-approximation training of the Little model on labeled bits.

The network layout follows the classification convention: the first
``n_input`` units are clamped to a pattern's input bits, the last
``n_output`` units are read out against the label, and optional hidden units
sit in between.  Each update picks a pattern uniformly at random, estimates
the stationary-cost gradient with one SPMVD draw, and takes a plain gradient
step.  The empirical error is measured on fresh chains (one per pattern, run
for the burn-in plus horizon length, cost at the final state).
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .estimators import EstimatorConfig, spmvd_estimate, start_state
from .net import ClampSpec, NetworkParams, _as_clamp, as_state, logistic_thresholds
from .rng import UniformStream


@dataclass(frozen=True)
class LabeledPattern:
    """Input bits plus a label bit vector (one-hot for classification)."""

    input_bits: np.ndarray
    label_bits: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "input_bits", as_state(self.input_bits))
        object.__setattr__(self, "label_bits", as_state(self.label_bits))


@dataclass(frozen=True)
class TrainConfig:
    n_input: int
    n_output: int
    n_hidden: int = 0
    step_size: float = 0.01
    updates: int = 1000
    report_every: int = 500
    m0: int = 10
    m1: int = 10
    include_t0: bool = True
    init_range: float = 0.01
    seed: int = 0
    eval_chains: int = 8  # fresh chains averaged per pattern when reporting

    def __post_init__(self):
        if self.n_input < 1 or self.n_output < 1 or self.n_hidden < 0:
            raise ValueError("need at least one input and one output unit")
        if not self.step_size >= 0:
            raise ValueError("step_size must be nonnegative")
        if not self.init_range > 0:
            raise ValueError("init_range must be positive")
        if self.updates < 0 or self.report_every < 1 or self.eval_chains < 1:
            raise ValueError("bad update counts")

    @property
    def n(self):
        return self.n_input + self.n_hidden + self.n_output

    @property
    def output_indices(self):
        return np.arange(self.n - self.n_output, self.n)

    @property
    def estimator_config(self):
        return EstimatorConfig(m0=self.m0, m1=self.m1, include_t0=self.include_t0)


def error_function(state, label_bits, output_indices):
    """Number of output bits disagreeing with the label (L1 mismatch)."""
    state = np.asarray(state)
    diff = state[..., output_indices].astype(np.int64) - np.asarray(label_bits)
    return np.abs(diff).sum(axis=-1).astype(np.float64)


def pattern_cost(pattern, output_indices):
    """Vectorized cost function for one labeled pattern."""
    label = pattern.label_bits

    def cost(state):
        return error_function(state, label, output_indices)

    return cost


def pattern_clamp(pattern, n):
    """Clamp the leading input units to the pattern's bits."""
    p = pattern.input_bits.size
    if p >= n:
        raise ValueError("pattern leaves no free units")
    return ClampSpec(np.arange(p), pattern.input_bits)


def init_params(cfg, stream):
    """Weights and biases i.i.d. uniform on [-init_range, init_range]."""
    n, r = cfg.n, cfg.init_range
    w = (2.0 * stream.uniforms((n, n)) - 1.0) * r
    b = (2.0 * stream.uniforms(n) - 1.0) * r
    return NetworkParams(w, b)


def make_synthetic_dataset(kind, size, stream, n_input=4, n_classes=2, flip_prob=0.0):
    """Reproducible labeled bit patterns for desk-scale experiments.

    ``stripes``: class k lights up the k-th contiguous segment of the input
    (linearly separable by construction); optional bit flips add noise.
    ``parity``: uniformly random inputs labeled by the parity of their bits
    (two classes).
    """
    if size < 1:
        raise ValueError("size must be positive")
    patterns = []
    if kind == "stripes":
        if n_classes < 2 or n_input < n_classes:
            raise ValueError("need n_input >= n_classes >= 2")
        seg = n_input // n_classes
        flips = stream.uniforms((size, n_input)) < flip_prob
        for i in range(size):
            k = i % n_classes
            bits = np.zeros(n_input, dtype=np.int8)
            hi = (k + 1) * seg if k < n_classes - 1 else n_input
            bits[k * seg : hi] = 1
            bits = np.where(flips[i], 1 - bits, bits)
            label = np.zeros(n_classes, dtype=np.int8)
            label[k] = 1
            patterns.append(LabeledPattern(bits, label))
    elif kind == "parity":
        u = stream.uniforms((size, n_input))
        for i in range(size):
            bits = (u[i] < 0.5).astype(np.int8)
            k = int(bits.sum()) % 2
            label = np.zeros(2, dtype=np.int8)
            label[k] = 1
            patterns.append(LabeledPattern(bits, label))
    else:
        raise ValueError(f"unknown dataset kind {kind!r}")
    return patterns


_IDX_IMAGE_MAGIC = 0x00000803
_IDX_LABEL_MAGIC = 0x00000801


def _read_be32(f, path):
    raw = f.read(4)
    if len(raw) != 4:
        raise ValueError(f"{path}: truncated header")
    return struct.unpack(">I", raw)[0]


def load_idx(images_path, labels_path, limit=None, threshold=128):
    """Parse big-endian IDX image/label files into labeled bit patterns.

    Pixels at or above ``threshold`` become 1.  Labels are one-hot over ten
    outputs.  At most ``limit`` items are read.
    """
    with open(images_path, "rb") as f:
        if _read_be32(f, images_path) != _IDX_IMAGE_MAGIC:
            raise ValueError(f"{images_path}: wrong image magic")
        count = _read_be32(f, images_path)
        rows = _read_be32(f, images_path)
        cols = _read_be32(f, images_path)
        take = count if limit is None else min(limit, count)
        raw = f.read(take * rows * cols)
        if len(raw) != take * rows * cols:
            raise ValueError(f"{images_path}: truncated pixel data")
        pixels = np.frombuffer(raw, dtype=np.uint8).reshape(take, rows * cols)
    with open(labels_path, "rb") as f:
        if _read_be32(f, labels_path) != _IDX_LABEL_MAGIC:
            raise ValueError(f"{labels_path}: wrong label magic")
        lcount = _read_be32(f, labels_path)
        if lcount != count:
            raise ValueError(
                f"item count mismatch: {count} images vs {lcount} labels"
            )
        raw = f.read(take)
        if len(raw) != take:
            raise ValueError(f"{labels_path}: truncated label data")
        digits = np.frombuffer(raw, dtype=np.uint8)
    patterns = []
    for i in range(take):
        bits = (pixels[i] >= threshold).astype(np.int8)
        label = np.zeros(10, dtype=np.int8)
        label[digits[i]] = 1
        patterns.append(LabeledPattern(bits, label))
    return patterns


@dataclass
class TrainTrajectory:
    """Reported (update, empirical error, elapsed seconds) rows plus params.

    The update/error columns are a deterministic function of the seed and
    config; elapsed times are informational only.
    """

    updates: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    elapsed: list = field(default_factory=list)
    final_params: NetworkParams | None = None

    def rows(self):
        return list(zip(self.updates, self.errors, self.elapsed))


def run_chain(params, clamp=None, steps=0, stream=None, x0=None):
    """Advance a single chain ``steps`` transitions, returning the final bits."""
    n = params.n
    clamp = _as_clamp(clamp)
    X = start_state(n, clamp, x0).astype(np.float64)[None, :]
    if steps:
        xi = logistic_thresholds(stream.uniforms((steps, 1, n)))
        clamped = clamp.clamped_mask(n)
        cvals = np.zeros(n)
        cvals[clamp.indices] = clamp.values
        _kernels.evolve(
            np.ascontiguousarray(params.weights),
            np.ascontiguousarray(params.biases),
            X, clamped, cvals, np.ascontiguousarray(xi),
        )
    return X[0].astype(np.int8)


def evaluate_error(params, dataset, cfg, stream):
    """Mean pattern error over fresh chains of length m0 + m1 each.

    For every pattern, ``eval_chains`` independent chains are run and the
    final-state costs averaged before averaging across patterns.
    """
    out_idx = cfg.output_indices
    steps = cfg.m0 + cfg.m1
    total = 0.0
    for pattern, sub in zip(dataset, stream.spawn(len(dataset))):
        clamp = pattern_clamp(pattern, cfg.n)
        acc = 0.0
        for chain_stream in sub.spawn(cfg.eval_chains):
            final = run_chain(params, clamp, steps, chain_stream)
            acc += float(error_function(final, pattern.label_bits, out_idx))
        total += acc / cfg.eval_chains
    return total / len(dataset)


def sgd_train(cfg, dataset, stream=None, gradient_fn=None):
    """Run the gradient-descent recursion theta <- theta - eps * estimate.

    ``gradient_fn(params, cost, clamp, est_cfg, stream)`` defaults to one
    SPMVD draw per update; injecting an exact-gradient function isolates the
    optimizer from estimator noise.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    root = stream if stream is not None else UniformStream(cfg.seed)
    init_s, pick_s, eval_root, est_root = root.spawn(4)
    params = init_params(cfg, init_s)
    est_cfg = cfg.estimator_config
    out_idx = cfg.output_indices
    if gradient_fn is None:
        gradient_fn = spmvd_estimate

    traj = TrainTrajectory()
    t0 = time.perf_counter()

    def report(upd):
        err = evaluate_error(params, dataset, cfg, eval_root.spawn(1)[0])
        traj.updates.append(upd)
        traj.errors.append(err)
        traj.elapsed.append(time.perf_counter() - t0)

    report(0)
    for upd in range(1, cfg.updates + 1):
        k = int(pick_s.uniform() * len(dataset))
        pattern = dataset[k]
        clamp = pattern_clamp(pattern, cfg.n)
        cost = pattern_cost(pattern, out_idx)
        try:
            grad = gradient_fn(params, cost, clamp, est_cfg, est_root.spawn(1)[0])
        except Exception as exc:
            raise RuntimeError(f"gradient estimation failed at update {upd}") from exc
        params = NetworkParams(
            params.weights - cfg.step_size * grad.d_weights,
            params.biases - cfg.step_size * grad.d_biases,
        )
        if upd % cfg.report_every == 0:
            report(upd)
    traj.final_params = params
    return traj
