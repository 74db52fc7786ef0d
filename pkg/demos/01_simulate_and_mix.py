#!/usr/bin/env python3
"""Simulate a small stochastic threshold network and watch it mix.

Every unit recomputes its field (weighted sum of the current bits plus a
bias) once per step and turns on with probability sigmoid(field).  The
kernel has strictly positive entries, so the chain forgets its start state
geometrically fast; the contraction factor is computable from the weights.
"""

import numpy as np

from littlenet import (
    NetworkParams,
    UniformStream,
    build_transition_matrix,
    contraction_epsilon,
    stationary_distribution,
    step,
    total_variation,
    transition_probability,
)

rng = UniformStream(7)
n = 3
params = NetworkParams(
    (2 * rng.uniforms((n, n)) - 1) * 1.2,
    (2 * rng.uniforms(n) - 1) * 0.6,
)

# --- a short sample path -------------------------------------------------
x = np.zeros(n, dtype=np.int8)
path = [x]
for _ in range(10):
    x = step(params, x, stream=rng)
    path.append(x)
print("sample path (rows are time):")
print(np.array(path))

# --- the kernel as an explicit matrix ------------------------------------
P = build_transition_matrix(params)
print("\ntransition matrix rows all sum to one:", np.allclose(P.sum(axis=1), 1.0))
print("smallest transition probability:", P.min())
eps = contraction_epsilon(params)
print("uniform lower bound on entries  :", eps)

# the two product forms of each entry agree
p_signed = transition_probability(params, [1, 0, 1], [0, 1, 1], form="signed")
p_bern = transition_probability(params, [1, 0, 1], [0, 1, 1], form="bernoulli")
print("one entry via both product forms:", p_signed, p_bern)

# --- mixing: total variation falls at least as fast as (1 - eps)^t -------
pi = stationary_distribution(P).probabilities
mu = np.zeros(2**n)
mu[0] = 1.0  # start from a point mass
print("\n t   d_TV(mu P^t, pi)   bound (1-eps)^t d_TV(mu, pi)")
bound = total_variation(mu, pi)
for t in range(1, 11):
    mu = mu @ P
    bound *= 1 - eps
    print(f"{t:2d}   {total_variation(mu, pi):16.6f}   {bound:16.6f}")
print("\nstationary law:", np.round(pi, 4))
