"""Deterministic uniform random number streams.

Every stochastic routine in this package draws its randomness from a
:class:`UniformStream`, a thin wrapper around numpy's counter-based Philox
generator.  Fixing the generator project-wide makes every simulation
reproducible from a single integer seed, and independent streams for
parallel replications are derived by spawning child seed sequences.
"""

from __future__ import annotations

import numpy as np

# Fixed project-wide; recorded in run manifests so outputs can be reproduced.
RNG_ALGORITHM = "philox4x64 (numpy.random.Philox via SeedSequence)"


class UniformStream:
    """A seeded stream of uniform(0,1) variates.

    The same seed always yields the same sequence of draws, on any platform.
    A stream is owned by exactly one consumer (one chain, one sampler); use
    :meth:`spawn` to derive independent streams for parallel work.
    """

    def __init__(self, seed=0, _seq=None):
        self._seq = np.random.SeedSequence(seed) if _seq is None else _seq
        self._gen = np.random.Generator(np.random.Philox(self._seq))
        self.seed = seed
        self.count = 0  # total variates drawn so far

    def uniforms(self, shape):
        """Draw an array of uniform(0,1) variates with the given shape."""
        out = self._gen.random(shape)
        self.count += out.size
        return out

    def uniform(self):
        """Draw a single uniform(0,1) variate."""
        self.count += 1
        return self._gen.random()

    def spawn(self, k):
        """Derive ``k`` independent child streams.

        Repeated calls keep producing fresh children; the whole tree is a
        deterministic function of the root seed.
        """
        return [UniformStream(self.seed, _seq=s) for s in self._seq.spawn(k)]

    def __repr__(self):
        return f"UniformStream(seed={self.seed}, count={self.count})"
