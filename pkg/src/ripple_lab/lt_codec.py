"""LT encoding and instrumented peeling decoding (reference implementation).

Only the bipartite graph structure is modeled; no payloads are XORed.  A
symbol's reduced degree is its number of distinct uncovered neighbors, so
a with-replacement symbol whose draws all coincide sits in the ripple and
its parallel edges are removed together once that neighbor is recovered.

This module is the readable Python twin of the compiled kernel in
kernels.py.  Both consume the same RNG stream in the same order, so a
trial run here is bit-identical to the same trial run there.
"""

from dataclasses import dataclass

import numpy as np

from .degree_dist import sample_degree

MODES = ("with_replacement", "without_replacement")


@dataclass
class EncodedSymbol:
    neighbors: list

    @property
    def degree(self):
        return len(self.neighbors)


@dataclass
class DecoderTrajectory:
    ripple_size: np.ndarray  # indexed by u = number of undecoded inputs
    cloud_size: np.ndarray
    success: bool
    halt_u: int  # 0 on success, else the u at which the ripple emptied


def encode(k, n, dist, rng, mode="with_replacement"):
    """Draw n output symbols over k inputs.

    Draw order per symbol: one uniform for the degree, then one draw per
    neighbor (with rejection of duplicates in without_replacement mode).
    """
    if k < 1 or n < 1:
        raise ValueError("k and n must be >= 1")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    without = mode == "without_replacement"
    if without and dist.max_degree > k:
        raise ValueError(
            f"max degree {dist.max_degree} exceeds k={k}; "
            "without-replacement encoding is impossible"
        )
    symbols = []
    for _ in range(n):
        d = sample_degree(dist, rng.uniform())
        nbrs = []
        if without:
            while len(nbrs) < d:
                v = rng.randbelow(k)
                if v not in nbrs:
                    nbrs.append(v)
        else:
            for _ in range(d):
                nbrs.append(rng.randbelow(k))
        symbols.append(EncodedSymbol(nbrs))
    return symbols


def peel_decode(symbols, k, rng=None, pick="random"):
    """Run the peeling decoder, recording ripple and cloud sizes at every u.

    pick="random" consumes one randbelow(len(ripple)) per recovery, even
    when the ripple has a single member, to keep the stream aligned with
    the kernel.  pick="first" is deterministic; the trajectory distribution
    over the code ensemble is the same either way (the ripple members are
    exchangeable), which the test suite checks.
    """
    n = len(symbols)
    if n == 0:
        raise ValueError("no symbols")
    if pick not in ("random", "first"):
        raise ValueError("pick must be 'random' or 'first'")
    if pick == "random" and rng is None:
        raise ValueError("pick='random' needs an rng")

    distinct = [sorted(set(s.neighbors)) for s in symbols]
    rd = [len(d) for d in distinct]
    nbr_sum = [sum(d) for d in distinct]
    by_input = [[] for _ in range(k)]
    for s, ds in enumerate(distinct):
        for v in ds:
            if v < 0 or v >= k:
                raise ValueError(f"neighbor {v} out of range for k={k}")
            by_input[v].append(s)

    ripple = [s for s in range(n) if rd[s] == 1]
    rpos = [-1] * n
    for i, s in enumerate(ripple):
        rpos[s] = i
    ncloud = sum(1 for s in range(n) if rd[s] >= 2)

    ripple_size = np.zeros(k + 1, dtype=np.int64)
    cloud_size = np.zeros(k + 1, dtype=np.int64)
    u = k
    ripple_size[u] = len(ripple)
    cloud_size[u] = ncloud

    while u > 0 and ripple:
        idx = rng.randbelow(len(ripple)) if pick == "random" else 0
        s = ripple[idx]
        v = nbr_sum[s]  # unique uncovered neighbor of a ripple symbol
        for t in by_input[v]:
            rd[t] -= 1
            nbr_sum[t] -= v
            if rd[t] == 1:
                rpos[t] = len(ripple)
                ripple.append(t)
                ncloud -= 1
            elif rd[t] == 0:
                # swap-remove; the chosen symbol s leaves here too
                i = rpos[t]
                last = ripple[-1]
                ripple[i] = last
                rpos[last] = i
                ripple.pop()
                rpos[t] = -1
        u -= 1
        ripple_size[u] = len(ripple)
        cloud_size[u] = ncloud

    success = u == 0
    return DecoderTrajectory(
        ripple_size=ripple_size,
        cloud_size=cloud_size,
        success=success,
        halt_u=0 if success else u,
    )
