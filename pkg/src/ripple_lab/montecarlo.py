"""Ensemble simulation and simulation-vs-prediction comparison.

Trials are split into fixed blocks of 8192; each block fills its own
integer accumulator and the accumulators are summed in block order, so
the ensemble statistics are byte-identical for any worker count.  Worker
threads share the compiled kernel (it releases the GIL).
"""

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .degree_dist import DegreeDistribution
from .errors import ComparisonFailure
from .exact_recursion import ExactReport
from .analytic_moments import MomentCurves
from .finite_length import RefinedCurves
from .lt_codec import MODES, encode, peel_decode

BLOCK = 8192
NCOLS = 9

_COL = {
    "survivors": 0,
    "sum_r": 1,
    "sum_r2": 2,
    "sum_c": 3,
    "sum_c2": 4,
    "sum_cr": 5,
    "first_fail": 6,
    "r_lt3": 7,
    "r_lt4": 8,
}


def _worker_count(workers):
    if workers is not None:
        if workers < 1:
            raise ValueError("workers must be >= 1")
        return int(workers)
    env = os.environ.get("RIPPLE_LAB_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def run_block_python(k, n, dist, mode, master_seed, t0, t1, acc):
    """Pure-Python twin of kernels.run_block, draw-for-draw identical.

    Slow; exists so the compiled kernel can be checked bit-for-bit.
    """
    for trial in range(t0, t1):
        stream = _rng.Stream(master_seed, trial)
        symbols = encode(k, n, dist, stream, mode=mode)
        traj = peel_decode(symbols, k, rng=stream, pick="random")
        # trajectory arrays are indexed by u; visited states run u = k
        # down to the halt point (ripple empty or u = 0)
        u = k
        while True:
            r = int(traj.ripple_size[u])
            c = int(traj.cloud_size[u])
            if u == 0:
                acc[0, 0] += 1
                break
            if r == 0:
                acc[u, 6] += 1
                break
            acc[u, 0] += 1
            acc[u, 1] += r
            acc[u, 2] += r * r
            acc[u, 3] += c
            acc[u, 4] += c * c
            acc[u, 5] += c * r
            if r < 3:
                acc[u, 7] += 1
            if r < 4:
                acc[u, 8] += 1
            u -= 1


@dataclass
class SimulationReport:
    k: int
    n: int
    trials: int
    master_seed: int
    mode: str
    u: np.ndarray
    survivors: np.ndarray
    ripple_mean_cond: np.ndarray
    ripple_var_cond: np.ndarray
    ripple_mean_uncond: np.ndarray
    cloud_mean: np.ndarray
    fail_freq: np.ndarray
    frac_lt3: np.ndarray
    frac_lt4: np.ndarray
    overall_failure: float
    runtime_s: float
    workers: int
    acc: np.ndarray = field(repr=False)


def _summarize(k, n, trials, master_seed, mode, acc, runtime_s, workers):
    us = np.arange(k, -1, -1)
    rows = acc[us]
    surv = rows[:, 0].astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_r = np.where(surv > 0, rows[:, 1] / surv, np.nan)
        var_r = np.where(
            surv > 0, rows[:, 2] / surv - mean_r**2, np.nan
        )
        mean_c = np.where(surv > 0, rows[:, 3] / surv, np.nan)
        lt3 = np.where(surv > 0, rows[:, 7] / surv, np.nan)
        lt4 = np.where(surv > 0, rows[:, 8] / surv, np.nan)
    var_r = np.where(np.isnan(var_r), var_r, np.maximum(var_r, 0.0))
    t = float(trials)
    fail = rows[:, 6] / t
    mean_r_unc = rows[:, 1] / t
    # u=0 row: survivors column holds full-decode successes
    mean_r[-1] = np.nan
    var_r[-1] = np.nan
    mean_c[-1] = np.nan
    lt3[-1] = np.nan
    lt4[-1] = np.nan
    overall = 1.0 - acc[0, 0] / t
    return SimulationReport(
        k=k,
        n=n,
        trials=trials,
        master_seed=master_seed,
        mode=mode,
        u=us,
        survivors=rows[:, 0].copy(),
        ripple_mean_cond=mean_r,
        ripple_var_cond=var_r,
        ripple_mean_uncond=mean_r_unc,
        cloud_mean=mean_c,
        fail_freq=fail,
        frac_lt3=lt3,
        frac_lt4=lt4,
        overall_failure=float(overall),
        runtime_s=runtime_s,
        workers=workers,
        acc=acc,
    )


def run_ensemble(
    k,
    n,
    dist,
    trials,
    mode="with_replacement",
    master_seed=0,
    workers=None,
    use_python=False,
):
    """Peel `trials` random codes and aggregate per-u decoder statistics.

    Deterministic in (k, n, dist, trials, mode, master_seed): the worker
    count only changes wall time, never a single count.
    """
    if not isinstance(dist, DegreeDistribution):
        raise TypeError("dist must be a DegreeDistribution")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if k < 1 or n < 1:
        raise ValueError("k and n must be >= 1")
    if mode == "without_replacement" and dist.max_degree > k:
        raise ValueError("max degree exceeds k for without-replacement encoding")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    nworkers = _worker_count(workers)
    t_start = time.perf_counter()
    bounds = [(t0, min(t0 + BLOCK, trials)) for t0 in range(0, trials, BLOCK)]
    accs = [np.zeros((k + 1, NCOLS), np.int64) for _ in bounds]

    if use_python:
        for (t0, t1), acc in zip(bounds, accs):
            run_block_python(k, n, dist, mode, master_seed, t0, t1, acc)
    else:
        from . import kernels  # deferred: first import compiles

        cdf = dist.cdf
        without = mode == "without_replacement"
        seed_u64 = np.uint64(master_seed & _rng.MASK64)

        def job(i):
            t0, t1 = bounds[i]
            kernels.run_block(k, n, cdf, without, seed_u64, t0, t1, accs[i])

        if nworkers == 1 or len(bounds) == 1:
            for i in range(len(bounds)):
                job(i)
        else:
            with ThreadPoolExecutor(max_workers=nworkers) as pool:
                list(pool.map(job, range(len(bounds))))

    total = np.zeros((k + 1, NCOLS), np.int64)
    for acc in accs:  # fixed merge order; int64 addition is exact
        total += acc
    runtime = time.perf_counter() - t_start
    return _summarize(k, n, trials, master_seed, mode, total, runtime, nworkers)


@dataclass
class ComparisonRow:
    u: int
    statistic: str
    observed: float
    predicted: float
    se: float
    z: float


@dataclass
class ComparisonTable:
    rows: list
    max_abs_z: float
    coverage3: float
    n_checked: int

    def assert_ok(self, z_limit=4.0, min_coverage=0.99):
        bad = [r for r in self.rows if abs(r.z) > z_limit]
        cov = (
            sum(1 for r in self.rows if abs(r.z) <= z_limit) / len(self.rows)
            if self.rows
            else 1.0
        )
        if cov < min_coverage:
            worst = max(self.rows, key=lambda r: abs(r.z))
            raise ComparisonFailure(
                f"{len(bad)}/{len(self.rows)} statistics beyond {z_limit} SE "
                f"(coverage {cov:.4f} < {min_coverage}); worst: u={worst.u} "
                f"{worst.statistic} obs={worst.observed:.6g} "
                f"pred={worst.predicted:.6g} z={worst.z:.2f}"
            )


def _z_rows(report, pred_by_u, statistic, kind):
    """kind: 'survival' (binomial) or 'mean_r' (conditional ripple mean)."""
    t = report.trials
    rows = []
    for i, u in enumerate(report.u):
        if u == 0 or u not in pred_by_u:
            continue
        pred = pred_by_u[u]
        if not np.isfinite(pred):
            continue
        if kind == "survival":
            obs = report.survivors[i] / t
            se = float(np.sqrt(max(pred * (1.0 - pred), 1e-300) / t))
        else:
            s = report.survivors[i]
            if s < 2:
                continue
            obs = float(report.ripple_mean_cond[i])
            se = float(np.sqrt(max(report.ripple_var_cond[i], 0.0) / s))
            if se == 0.0:
                se = 1.0 / s  # degenerate sample, keep the row harmless
        z = (obs - pred) / se if se > 0 else np.inf
        rows.append(ComparisonRow(int(u), statistic, float(obs), float(pred), se, float(z)))
    return rows


def compare(report, prediction):
    """z-score the ensemble against a prediction object.

    Accepts an ExactReport (per-u survival and conditional ripple mean),
    a MomentCurves (unconditional expected ripple), or RefinedCurves.
    """
    rows = []
    if isinstance(prediction, ExactReport):
        surv = {int(u): float(s) for u, s in zip(prediction.u, prediction.survival)}
        rows += _z_rows(report, surv, "survival", "survival")
        mean_r = {}
        for u, s, r in zip(prediction.u, prediction.survival, prediction.R):
            if s > 0:
                mean_r[int(u)] = 1.0 + float(r) / float(s)
        rows += _z_rows(report, mean_r, "ripple_mean", "mean_r")
    elif isinstance(prediction, (MomentCurves, RefinedCurves)):
        if isinstance(prediction, MomentCurves):
            rvals = prediction.R
            xs = prediction.x
        else:
            rvals = prediction.refined_R
            xs = prediction.x
        k = report.k
        pred_by_u = {}
        for x, r in zip(xs, rvals):
            u = int(round(x * k))
            if abs(x * k - u) < 1e-6 and 1 <= u <= k:
                pred_by_u[u] = float(r)
        t = report.trials
        for i, u in enumerate(report.u):
            if u == 0 or int(u) not in pred_by_u:
                continue
            s = report.survivors[i]
            if s < 2:
                continue
            # defective-mean convention: dead trials count ripple 0, and
            # one unit is subtracted per alive trial
            obs = (report.acc[u, 1] - s) / t
            mr = report.ripple_mean_cond[i]
            vr = max(float(report.ripple_var_cond[i]), 0.0)
            p = s / t
            e1 = mr - 1.0
            var_def = p * vr + p * (1.0 - p) * e1 * e1
            se = float(np.sqrt(max(var_def, 1e-300) / t))
            pred = pred_by_u[int(u)]
            z = (obs - pred) / se if se > 0 else np.inf
            rows.append(
                ComparisonRow(int(u), "ripple_defective_mean", float(obs), pred, se, float(z))
            )
    else:
        raise TypeError(
            "prediction must be ExactReport, MomentCurves, or RefinedCurves"
        )
    if not rows:
        raise ValueError("no overlapping statistics to compare")
    zs = np.array([abs(r.z) for r in rows])
    return ComparisonTable(
        rows=rows,
        max_abs_z=float(zs.max()),
        coverage3=float(np.mean(zs <= 3.0)),
        n_checked=len(rows),
    )
