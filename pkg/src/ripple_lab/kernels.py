"""Compiled Monte Carlo kernel.

One call peels a contiguous block of trials and adds integer counts into
an accumulator, so merging blocks in any order is exact and the result
cannot depend on worker scheduling.  The RNG is SplitMix64 and must stay
draw-for-draw identical to rng.Stream; the decode loop must mirror
lt_codec.peel_decode (same append order, same swap-remove), which the
test suite checks bit-for-bit.

Accumulator columns, one row per u:
  0 survivors    trials alive at u (ripple >= 1; at u=0: successes)
  1 sum_r        ripple size summed over alive trials
  2 sum_r2       ripple size squared, ditto
  3 sum_c        cloud size, ditto
  4 sum_c2       cloud size squared, ditto
  5 sum_cr       cloud * ripple, ditto
  6 first_fail   trials whose ripple emptied exactly at u
  7 r_lt3        alive trials with ripple < 3
  8 r_lt4        alive trials with ripple < 4
"""

import numpy as np
from numba import njit

NCOLS = 9

U64 = np.uint64
GOLDEN = U64(0x9E3779B97F4A7C15)
_MIX1 = U64(0xBF58476D1CE4E5B9)
_MIX2 = U64(0x94D049BB133111EB)
_R30 = U64(30)
_R27 = U64(27)
_R31 = U64(31)
_R11 = U64(11)
_ONE = U64(1)
INV_2_53 = 1.0 / 9007199254740992.0


@njit(cache=True, nogil=True, inline="always")
def _mix(z):
    z = (z ^ (z >> _R30)) * _MIX1
    z = (z ^ (z >> _R27)) * _MIX2
    return z ^ (z >> _R31)


@njit(cache=True, nogil=True, inline="always")
def _next(state):
    state = state + GOLDEN
    return state, _mix(state)


@njit(cache=True, nogil=True)
def run_block(k, n, cdf, without, master_seed, t0, t1, acc):
    D = cdf.shape[0]
    ku = U64(k)
    seed_mixed = _mix(master_seed)

    nbrs = np.empty(D, np.int64)
    sym_nbrs = np.empty(n * D, np.int64)
    sym_off = np.empty(n + 1, np.int64)
    rd = np.empty(n, np.int64)
    nbr_sum = np.empty(n, np.int64)
    cursor = np.empty(k, np.int64)
    adj_off = np.empty(k + 1, np.int64)
    adj = np.empty(n * D, np.int64)
    ripple = np.empty(n, np.int64)
    rpos = np.empty(n, np.int64)

    for trial in range(t0, t1):
        state = _mix(seed_mixed + GOLDEN * (U64(trial) + _ONE))

        # encode: degree by linear CDF scan (clamped to the top degree,
        # whose CDF entry can sit an ulp below 1), then neighbor draws
        pos = 0
        sym_off[0] = 0
        for s in range(n):
            state, z = _next(state)
            u01 = (z >> _R11) * INV_2_53
            di = 0
            while di < D - 1 and u01 >= cdf[di]:
                di += 1
            d = di + 1
            if without:
                cnt = 0
                while cnt < d:
                    state, z = _next(state)
                    v = np.int64(z % ku)
                    dup = False
                    for t in range(cnt):
                        if nbrs[t] == v:
                            dup = True
                            break
                    if not dup:
                        nbrs[cnt] = v
                        cnt += 1
            else:
                for j in range(d):
                    state, z = _next(state)
                    nbrs[j] = np.int64(z % ku)
            # sort and deduplicate: reduced degree counts distinct neighbors
            for a in range(1, d):
                key = nbrs[a]
                b = a - 1
                while b >= 0 and nbrs[b] > key:
                    nbrs[b + 1] = nbrs[b]
                    b -= 1
                nbrs[b + 1] = key
            prev = np.int64(-1)
            start = pos
            ssum = np.int64(0)
            for a in range(d):
                va = nbrs[a]
                if va != prev:
                    sym_nbrs[pos] = va
                    ssum += va
                    pos += 1
                    prev = va
            sym_off[s + 1] = pos
            rd[s] = pos - start
            nbr_sum[s] = ssum

        # distinct-edge adjacency, inputs -> symbols, symbol index ascending
        for v in range(k):
            cursor[v] = 0
        for e in range(pos):
            cursor[sym_nbrs[e]] += 1
        adj_off[0] = 0
        for v in range(k):
            adj_off[v + 1] = adj_off[v] + cursor[v]
            cursor[v] = 0
        for s in range(n):
            for e in range(sym_off[s], sym_off[s + 1]):
                v = sym_nbrs[e]
                adj[adj_off[v] + cursor[v]] = s
                cursor[v] += 1

        # peel
        rlen = 0
        ncloud = 0
        for s in range(n):
            if rd[s] == 1:
                ripple[rlen] = s
                rpos[s] = rlen
                rlen += 1
            elif rd[s] >= 2:
                ncloud += 1

        u = k
        if rlen > 0:
            r64 = np.int64(rlen)
            c64 = np.int64(ncloud)
            acc[u, 0] += 1
            acc[u, 1] += r64
            acc[u, 2] += r64 * r64
            acc[u, 3] += c64
            acc[u, 4] += c64 * c64
            acc[u, 5] += c64 * r64
            if rlen < 3:
                acc[u, 7] += 1
            if rlen < 4:
                acc[u, 8] += 1
        else:
            acc[u, 6] += 1

        while u > 0 and rlen > 0:
            state, z = _next(state)
            idx = np.int64(z % U64(rlen))
            s = ripple[idx]
            v = nbr_sum[s]  # the unique uncovered neighbor
            for e in range(adj_off[v], adj_off[v + 1]):
                t = adj[e]
                rd[t] -= 1
                nbr_sum[t] -= v
                rdt = rd[t]
                if rdt == 1:
                    ripple[rlen] = t
                    rpos[t] = rlen
                    rlen += 1
                    ncloud -= 1
                elif rdt == 0:
                    i = rpos[t]
                    last = ripple[rlen - 1]
                    ripple[i] = last
                    rpos[last] = i
                    rlen -= 1
                    rpos[t] = -1
            u -= 1
            if u == 0:
                acc[0, 0] += 1
            elif rlen > 0:
                r64 = np.int64(rlen)
                c64 = np.int64(ncloud)
                acc[u, 0] += 1
                acc[u, 1] += r64
                acc[u, 2] += r64 * r64
                acc[u, 3] += c64
                acc[u, 4] += c64 * c64
                acc[u, 5] += c64 * r64
                if rlen < 3:
                    acc[u, 7] += 1
                if rlen < 4:
                    acc[u, 8] += 1
            else:
                acc[u, 6] += 1
