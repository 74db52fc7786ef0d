"""Compiled inner loops for chain simulation.

All kernels consume pre-transformed logistic thresholds (one per unit per
step, batch axis in the middle) and update bits as float 0.0/1.0 with the
same rule used everywhere in the package: a unit fires when its field
exceeds its threshold.  Randomness never enters here.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def sample_rows(d, a, beta, u, bits):
    """Sequential conditional sampling from tilted-Bernoulli measures.

    Row r draws bits unit by unit: the conditional on-probability is the
    ratio of two prefix marginals, maintained with a running prefix sum and
    precomputed suffix sums.  d is (R,); a, beta, u and the int8 output
    ``bits`` are (R, n).
    """
    R, n = beta.shape
    suffix = np.empty(n + 1)
    for r in range(R):
        suffix[n] = 0.0
        for k in range(n - 1, -1, -1):
            suffix[k] = suffix[k + 1] + beta[r, k] * a[r, k]
        run = d[r]
        for k in range(n):
            num = (run + a[r, k] + suffix[k + 1]) * beta[r, k]
            den = run + suffix[k]
            # den == 0 only on measure-zero paths; any conditional works
            delta = num / den if den > 0.0 else 0.5
            if u[r, k] < delta:
                bits[r, k] = 1
                run += a[r, k]
            else:
                bits[r, k] = 0


@njit(cache=True)
def evolve(w, b, X, clamped, cvals, XI):
    """Advance R chains through T synchronous steps, in place.

    X is (R, n) float64 bits; XI is (T, R, n) thresholds.
    """
    T, R, n = XI.shape
    buf = np.empty(n)
    for t in range(T):
        for r in range(R):
            for i in range(n):
                if clamped[i]:
                    buf[i] = cvals[i]
                else:
                    acc = b[i]
                    for j in range(n):
                        acc += w[i, j] * X[r, j]
                    buf[i] = 1.0 if acc > XI[t, r, i] else 0.0
            for i in range(n):
                X[r, i] = buf[i]


@njit(cache=True)
def evolve_multi(W, B, X, clamped, cvals, XI):
    """Like evolve, but chain r uses its own parameters W[r], B[r]."""
    T, R, n = XI.shape
    buf = np.empty(n)
    for t in range(T):
        for r in range(R):
            for i in range(n):
                if clamped[i]:
                    buf[i] = cvals[i]
                else:
                    acc = B[r, i]
                    for j in range(n):
                        acc += W[r, i, j] * X[r, j]
                    buf[i] = 1.0 if acc > XI[t, r, i] else 0.0
            for i in range(n):
                X[r, i] = buf[i]


@njit(cache=True)
def evolve_coupled(w, b, Xp, Xm, clamped, cvals, XI, OutP, OutM):
    """Advance two coupled chain families sharing thresholds, recording bits.

    Xp, Xm are (R, n) float64 and are updated in place; OutP, OutM are
    (T, R, n) int8 trajectory buffers.  Step t of chain pair r uses the same
    threshold row XI[t, r, :] for both chains, which keeps their difference
    contracting.
    """
    T, R, n = XI.shape
    bufp = np.empty(n)
    bufm = np.empty(n)
    for t in range(T):
        for r in range(R):
            for i in range(n):
                if clamped[i]:
                    bufp[i] = cvals[i]
                    bufm[i] = cvals[i]
                else:
                    accp = b[i]
                    accm = b[i]
                    for j in range(n):
                        accp += w[i, j] * Xp[r, j]
                        accm += w[i, j] * Xm[r, j]
                    xi = XI[t, r, i]
                    bufp[i] = 1.0 if accp > xi else 0.0
                    bufm[i] = 1.0 if accm > xi else 0.0
            for i in range(n):
                Xp[r, i] = bufp[i]
                Xm[r, i] = bufm[i]
                OutP[t, r, i] = np.int8(bufp[i])
                OutM[t, r, i] = np.int8(bufm[i])
