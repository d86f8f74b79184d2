"""Command line front end.

Subcommands: dist, analyze, refine, exact, simulate, compare, figure1.
Exit codes: 0 success, 1 usage or value error, 2 analysis error
(singularity, instability, unsupported distribution), 3 a --assert
comparison failed.
"""

import argparse
import json
import math
import sys

import numpy as np

from . import csvio
from .analytic_moments import DEFAULT_X_MIN, curves, h_curve
from .degree_dist import omega_derivative, parse_distribution
from .errors import AnalysisError, ComparisonFailure
from .exact_recursion import DEFAULT_MAX_K, PU_MODES, run_exact
from .finite_length import refine_curves
from .lt_codec import MODES
from .montecarlo import ComparisonRow, ComparisonTable, run_ensemble


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _resolve_n(k, eps, n_override):
    if n_override is not None:
        if n_override < 1:
            raise ValueError("n must be >= 1")
        return int(n_override)
    return int(math.floor(k * (1.0 + eps) + 0.5))


def _u_grid(k):
    us = np.arange(k, 0, -1)
    return us, us / float(k)


def _add_model_args(p, with_eps=True):
    p.add_argument("--k", type=int, required=True, help="number of input symbols")
    if with_eps:
        p.add_argument(
            "--eps", type=float, default=0.1, help="overhead, n = k(1+eps) rounded"
        )
        p.add_argument(
            "--n", type=int, default=None, help="override the symbol count directly"
        )
    p.add_argument(
        "--dist",
        default="capped-soliton",
        help='builtin name ("capped-soliton", "ideal-soliton:<k>", "degree<d>"), '
        "inline JSON, or a JSON file",
    )


def _emit(args, kind, config, columns, rows):
    if getattr(args, "out", None):
        csvio.write_csv(args.out, kind, config, columns, rows)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(csvio.render_csv(kind, config, columns, rows))


def _cmd_dist(args):
    dist = parse_distribution(args.dist)
    cdf = dist.cdf
    rows = [
        (d + 1, float(p), float(c))
        for d, (p, c) in enumerate(zip(dist.probs, cdf))
        if p > 0 or d + 1 == dist.max_degree
    ]
    config = {"command": "dist", "dist": args.dist}
    _emit(args, "distribution", config, ["degree", "prob", "cdf"], rows)
    op1 = float(omega_derivative(dist, 1.0, 1))
    print(
        f"# {dist.name or 'distribution'}: max degree {dist.max_degree}, "
        f"Omega_1={dist.omega1!r}, mean degree={dist.mean_degree!r}, "
        f"Omega'(1)={op1!r}"
    )
    return 0


def _cmd_analyze(args):
    dist = parse_distribution(args.dist)
    n = _resolve_n(args.k, args.eps, args.n)
    cs = tuple(args.c or ())
    us, xs = _u_grid(args.k)
    cur = curves(dist, n, args.eps, xs, cs=cs, x_min=args.xmin, k=args.k)
    columns = [
        "x",
        "decoded_frac",
        "u",
        "f",
        "g",
        "C_hat",
        "R_hat",
        "M_hat",
        "L_hat",
        "N_hat",
        "C",
        "R",
        "R_closed",
        "var_leading",
        "valid",
    ]
    hkeys = sorted(cur.h)
    for c in hkeys:
        columns.append(f"h_{c:g}")
    rows = []
    for i in range(len(xs)):
        row = [
            float(xs[i]),
            float(1.0 - xs[i]),
            int(us[i]),
            float(cur.f[i]),
            float(cur.g[i]),
            float(cur.c_hat[i]),
            float(cur.r_hat[i]),
            float(cur.m_hat[i]),
            float(cur.l_hat[i]),
            float(cur.n_hat[i]),
            float(cur.C[i]),
            float(cur.R[i]),
            float(cur.r_closed[i]),
            float(cur.var_leading[i]),
            bool(cur.valid[i]),
        ]
        for c in hkeys:
            row.append(float(cur.h[c][i]))
        rows.append(row)
    config = {
        "command": "analyze",
        "k": args.k,
        "n": n,
        "eps": args.eps,
        "dist": args.dist,
        "xmin": args.xmin,
        "c": list(cs),
    }
    _emit(args, "moments", config, columns, rows)
    return 0


def _cmd_refine(args):
    dist = parse_distribution(args.dist)
    n = _resolve_n(args.k, args.eps, args.n)
    us, xs = _u_grid(args.k)
    ref = refine_curves(dist, n, args.eps, args.k, xs)
    columns = [
        "x",
        "decoded_frac",
        "u",
        "D_C",
        "D_R",
        "D_M",
        "D_L",
        "D_N",
        "refined_C",
        "refined_R",
        "refined_M",
        "refined_L",
        "refined_N",
        "refined_var",
        "valid",
    ]
    rows = []
    for i in range(len(xs)):
        rows.append(
            [
                float(xs[i]),
                float(1.0 - xs[i]),
                int(us[i]),
                float(ref.D_C[i]),
                float(ref.D_R[i]),
                float(ref.D_M[i]),
                float(ref.D_L[i]),
                float(ref.D_N[i]),
                float(ref.refined_C[i]),
                float(ref.refined_R[i]),
                float(ref.refined_M[i]),
                float(ref.refined_L[i]),
                float(ref.refined_N[i]),
                float(ref.refined_var[i]),
                bool(ref.valid[i]),
            ]
        )
    config = {
        "command": "refine",
        "k": args.k,
        "n": n,
        "eps": args.eps,
        "dist": args.dist,
    }
    _emit(args, "refined", config, columns, rows)
    return 0


def _cmd_exact(args):
    dist = parse_distribution(args.dist)
    n = _resolve_n(args.k, args.eps, args.n)
    arithmetic = "rational" if args.rational else "float"
    rep = run_exact(
        args.k, n, dist, pu_mode=args.pu_mode, arithmetic=arithmetic, max_k=args.max_k
    )
    columns = [
        "u",
        "decoded_frac",
        "survival",
        "perr_u",
        "C",
        "R",
        "M",
        "L",
        "N",
        "dirt",
        "prune_loss",
        "resid_frac",
    ]
    rows = []
    for i, u in enumerate(rep.u):
        rows.append(
            [
                int(u),
                float(1.0 - u / args.k),
                float(rep.survival[i]),
                float(rep.perr_u[i]),
                float(rep.C[i]),
                float(rep.R[i]),
                float(rep.M[i]),
                float(rep.L[i]),
                float(rep.N[i]),
                float(rep.dirt[i]),
                float(rep.prune_loss[i]),
                float(rep.resid_frac[i]),
            ]
        )
    config = {
        "command": "exact",
        "k": args.k,
        "n": n,
        "eps": args.eps,
        "dist": args.dist,
        "pu_mode": args.pu_mode,
        "arithmetic": arithmetic,
    }
    _emit(args, "exact", config, columns, rows)
    print(f"# P_fail={rep.total_perr!r} success={rep.success!r}")
    return 0


def _cmd_simulate(args):
    dist = parse_distribution(args.dist)
    n = _resolve_n(args.k, args.eps, args.n)
    rep = run_ensemble(
        args.k,
        n,
        dist,
        trials=args.trials,
        mode=args.mode,
        master_seed=args.seed,
        workers=args.workers,
    )
    columns = [
        "u",
        "decoded_frac",
        "survivors",
        "survival_freq",
        "ripple_mean_cond",
        "ripple_var_cond",
        "ripple_mean_defective",
        "cloud_mean",
        "fail_freq",
        "frac_lt3",
        "frac_lt4",
        "sum_r",
        "sum_r2",
        "sum_c",
        "sum_c2",
        "sum_cr",
    ]
    t = float(args.trials)
    rows = []
    for i, u in enumerate(rep.u):
        a = rep.acc[int(u)]
        rows.append(
            [
                int(u),
                float(1.0 - u / args.k),
                int(rep.survivors[i]),
                float(rep.survivors[i] / t),
                float(rep.ripple_mean_cond[i]),
                float(rep.ripple_var_cond[i]),
                float((a[1] - a[0]) / t) if u > 0 else float("nan"),
                float(rep.cloud_mean[i]),
                float(rep.fail_freq[i]),
                float(rep.frac_lt3[i]),
                float(rep.frac_lt4[i]),
                int(a[1]),
                int(a[2]),
                int(a[3]),
                int(a[4]),
                int(a[5]),
            ]
        )
    # workers deliberately left out: the file must not depend on them
    config = {
        "command": "simulate",
        "k": args.k,
        "n": n,
        "eps": args.eps,
        "dist": args.dist,
        "mode": args.mode,
        "trials": args.trials,
        "seed": args.seed,
    }
    _emit(args, "simulate", config, columns, rows)
    summary = {
        "k": args.k,
        "n": n,
        "trials": args.trials,
        "seed": args.seed,
        "mode": args.mode,
        "workers": rep.workers,
        "overall_failure": rep.overall_failure,
        "runtime_s": round(rep.runtime_s, 3),
        "config_hash": csvio.config_hash(config),
    }
    print(json.dumps(summary, sort_keys=True))
    return 0


def _col(columns, name, path):
    try:
        return columns.index(name)
    except ValueError:
        raise ValueError(f"{path}: missing column {name!r}") from None


def _compare_from_files(sim_path, pred_path):
    smeta, scols, srows = csvio.read_csv(sim_path)
    pmeta, pcols, prows = csvio.read_csv(pred_path)
    if smeta.get("kind") != "simulate":
        raise ValueError(f"{sim_path}: expected a simulate file, got {smeta.get('kind')!r}")
    kind = pmeta.get("kind")
    trials = smeta.get("config", {}).get("trials")
    if not trials:
        raise ValueError(f"{sim_path}: config lacks trials")
    iu = _col(scols, "u", sim_path)
    isv = _col(scols, "survivors", sim_path)
    imr = _col(scols, "ripple_mean_cond", sim_path)
    ivr = _col(scols, "ripple_var_cond", sim_path)
    imd = _col(scols, "ripple_mean_defective", sim_path)
    sim = {int(r[iu]): r for r in srows if r[iu] >= 1}

    rows = []
    if kind == "exact":
        ju = _col(pcols, "u", pred_path)
        jsv = _col(pcols, "survival", pred_path)
        jr = _col(pcols, "R", pred_path)
        for r in prows:
            u = int(r[ju])
            if u not in sim:
                continue
            s = sim[u]
            surv = s[isv]
            pred_surv = r[jsv]
            obs_surv = surv / trials
            se = math.sqrt(max(pred_surv * (1.0 - pred_surv), 1e-300) / trials)
            z = (obs_surv - pred_surv) / se if se > 0 else math.inf
            rows.append(ComparisonRow(u, "survival", obs_surv, pred_surv, se, z))
            if surv >= 2 and pred_surv > 0:
                pred_mr = 1.0 + r[jr] / pred_surv
                obs_mr = s[imr]
                se = math.sqrt(max(s[ivr], 0.0) / surv)
                if se == 0.0:
                    se = 1.0 / surv
                z = (obs_mr - pred_mr) / se
                rows.append(ComparisonRow(u, "ripple_mean", obs_mr, pred_mr, se, z))
    elif kind in ("moments", "refined"):
        ju = _col(pcols, "u", pred_path)
        jr = _col(pcols, "refined_R" if kind == "refined" else "R", pred_path)
        jv = _col(pcols, "valid", pred_path)
        for r in prows:
            if not r[jv]:
                continue
            u = int(r[ju])
            if u not in sim:
                continue
            s = sim[u]
            surv = s[isv]
            if surv < 2:
                continue
            p = surv / trials
            e1 = s[imr] - 1.0
            var_def = p * max(s[ivr], 0.0) + p * (1.0 - p) * e1 * e1
            se = math.sqrt(max(var_def, 1e-300) / trials)
            z = (s[imd] - r[jr]) / se if se > 0 else math.inf
            rows.append(
                ComparisonRow(u, "ripple_defective_mean", s[imd], r[jr], se, z)
            )
    else:
        raise ValueError(
            f"{pred_path}: cannot compare against kind {kind!r} "
            "(expected exact, moments, or refined)"
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


def _cmd_compare(args):
    table = _compare_from_files(args.sim, args.pred)
    worst = sorted(table.rows, key=lambda r: -abs(r.z))[:5]
    print(
        f"compared {table.n_checked} statistics: max |z|={table.max_abs_z:.3f}, "
        f"frac |z|<=3: {table.coverage3:.4f}"
    )
    for r in worst:
        print(
            f"  u={r.u:5d} {r.statistic:22s} obs={r.observed:.8g} "
            f"pred={r.predicted:.8g} z={r.z:+.3f}"
        )
    if args.out:
        columns = ["u", "statistic", "observed", "predicted", "se", "z"]
        rows = [
            (r.u, r.statistic, float(r.observed), float(r.predicted), float(r.se), float(r.z))
            for r in table.rows
        ]
        csvio.write_csv(
            args.out,
            "comparison",
            {"command": "compare", "sim": args.sim, "pred": args.pred},
            columns,
            rows,
        )
        print(f"wrote {args.out}")
    if args.check:
        table.assert_ok(z_limit=args.z_limit, min_coverage=args.min_coverage)
        print(f"assertion passed (coverage at |z|<={args.z_limit:g})")
    return 0


def _cmd_figure1(args):
    k = 800
    eps = 0.1
    xmin = 0.0125
    dist = parse_distribution("capped-soliton")
    n = _resolve_n(k, eps, None)
    us, xs = _u_grid(k)

    cur = curves(dist, n, eps, xs, cs=(1.0, 2.0), x_min=xmin, k=k)
    ref = refine_curves(dist, n, eps, k, xs)
    import warnings as _w

    with _w.catch_warnings():
        _w.simplefilter("ignore", RuntimeWarning)
        h1 = h_curve(dist, n, eps, 1.0, xs, refined=ref, x_min=xmin)
        h2 = h_curve(dist, n, eps, 2.0, xs, refined=ref, x_min=xmin)
    rep = run_ensemble(
        k,
        n,
        dist,
        trials=args.trials,
        mode="with_replacement",
        master_seed=args.seed,
        workers=args.workers,
    )

    prefix = args.out_prefix
    mom_path = f"{prefix}_moments.csv"
    ref_path = f"{prefix}_refined.csv"
    sim_path = f"{prefix}_sim.csv"

    base = {"k": k, "n": n, "eps": eps, "dist": "capped-soliton", "xmin": xmin}
    columns = ["x", "decoded_frac", "u", "R", "var_leading", "h1", "h2", "valid"]
    rows = []
    for i in range(len(xs)):
        rows.append(
            [
                float(xs[i]),
                float(1.0 - xs[i]),
                int(us[i]),
                float(cur.R[i]),
                float(cur.var_leading[i]),
                float(cur.h[1.0][i]),
                float(cur.h[2.0][i]),
                bool(cur.valid[i]),
            ]
        )
    csvio.write_csv(mom_path, "moments", dict(base, command="figure1"), columns, rows)

    columns = [
        "x",
        "decoded_frac",
        "u",
        "refined_R",
        "refined_var",
        "h1_refined",
        "h2_refined",
        "valid",
    ]
    rows = []
    for i in range(len(xs)):
        rows.append(
            [
                float(xs[i]),
                float(1.0 - xs[i]),
                int(us[i]),
                float(ref.refined_R[i]),
                float(ref.refined_var[i]),
                float(h1[i]),
                float(h2[i]),
                bool(ref.valid[i]),
            ]
        )
    csvio.write_csv(ref_path, "refined", dict(base, command="figure1"), columns, rows)

    columns = ["u", "decoded_frac", "survivors", "ripple_mean_cond", "fail_freq"]
    rows = []
    for i, u in enumerate(rep.u):
        rows.append(
            [
                int(u),
                float(1.0 - u / k),
                int(rep.survivors[i]),
                float(rep.ripple_mean_cond[i]),
                float(rep.fail_freq[i]),
            ]
        )
    csvio.write_csv(
        sim_path,
        "simulate",
        dict(base, command="figure1", trials=args.trials, seed=args.seed),
        columns,
        rows,
    )

    # locate the interior local minimum of the refined h2 curve
    ok = ref.valid & (xs >= xmin - 1e-12) & (xs <= 0.5)
    idx = np.flatnonzero(ok)
    best = None
    for j in idx:
        if j == 0 or j == len(xs) - 1:
            continue
        if h2[j] <= h2[j - 1] and h2[j] <= h2[j + 1]:
            if best is None or h2[j] < h2[best]:
                best = j
    if best is not None:
        print(
            f"h2 local min: x={float(xs[best])!r} "
            f"decoded_frac={float(1 - xs[best])!r} value={float(h2[best])!r}"
        )
    else:
        print("h2 local min: none found in the valid window")

    from scipy.stats import spearmanr

    lo_u = int(math.ceil(0.05 * k))
    sel = [i for i, u in enumerate(rep.u) if lo_u <= u <= k]
    fails = rep.fail_freq[sel]
    h2_at = h2[[k - int(rep.u[i]) for i in sel]]
    rho = spearmanr(fails, -h2_at).statistic
    print(f"spearman(fail_freq, -h2) over decoded_frac [0,0.95]: {float(rho)!r}")
    print(f"wrote {mom_path} {ref_path} {sim_path}")
    return 0


def build_parser():
    parser = _Parser(
        prog="ripple-lab",
        description="Peeling-decoder analysis for LT codes: exact state "
        "recursion, asymptotic moment curves, finite-length corrections, "
        "and Monte Carlo ensembles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dist", help="inspect a degree distribution")
    p.add_argument("--dist", default="capped-soliton")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_dist)

    p = sub.add_parser("analyze", help="asymptotic moment curves on the u-grid")
    _add_model_args(p)
    p.add_argument("--xmin", type=float, default=DEFAULT_X_MIN)
    p.add_argument(
        "-c",
        "--c",
        type=float,
        action="append",
        help="deviation multiplier for h = R - c sigma (repeatable)",
    )
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_analyze)

    p = sub.add_parser("refine", help="finite-length discrepancy and refined curves")
    _add_model_args(p)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_refine)

    p = sub.add_parser("exact", help="exact decoder-state distribution by recursion")
    _add_model_args(p)
    p.add_argument("--pu-mode", choices=PU_MODES, default="exact")
    p.add_argument("--rational", action="store_true", help="exact fractions throughout")
    p.add_argument("--max-k", type=int, default=DEFAULT_MAX_K)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_exact)

    p = sub.add_parser("simulate", help="Monte Carlo decode ensemble")
    _add_model_args(p)
    p.add_argument("--mode", choices=MODES, default="with_replacement")
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("compare", help="z-score a simulation against predictions")
    p.add_argument("sim", help="CSV from simulate")
    p.add_argument("pred", help="CSV from exact, analyze, or refine")
    p.add_argument(
        "--assert",
        dest="check",
        action="store_true",
        help="exit 3 unless coverage at the z limit meets the threshold",
    )
    p.add_argument("--z-limit", type=float, default=4.0)
    p.add_argument("--min-coverage", type=float, default=0.99)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_compare)

    p = sub.add_parser(
        "figure1",
        help="k=800 capped-soliton study: curves, refinements, ensemble",
    )
    p.add_argument("--trials", type=int, default=100000)
    p.add_argument("--seed", type=int, default=20260818)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out-prefix", default="figure1")
    p.set_defaults(fn=_cmd_figure1)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ComparisonFailure as exc:
        print(f"comparison failed: {exc}", file=sys.stderr)
        return 3
    except AnalysisError as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
