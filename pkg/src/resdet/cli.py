"""Command-line pipeline: groups -> pips -> solve, plus samplers and sims.

Every command is deterministic under --seed and writes line-delimited
interchange files that the next stage parses losslessly. Exit codes: 0 on
success (including empty results), 2 on usage errors, 3 on data validation
errors, 4 on internal errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from typing import Optional, Sequence

import numpy as np

from . import serialize
from .core import ErrorRateSpec, LocationSpace, WeightFn
from .detect import DetectOptions, certify, detect_fwer, detect_regions
from .errors import InternalError, ResdetError, ValidationError
from .groups import (
    DEFAULT_MAX_SIZE,
    contiguous_groups,
    default_regression_groups,
    dissimilarity_from_corr,
    hierarchical_groups,
    lattice_regions,
)
from .pips import pips_from_samples, pips_from_susie
from .samplers import LssConfig, lss_gibbs, pss_gibbs
from .sim import evaluate, gen_ark_design, gen_sparse_glm

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_INTERNAL = 4


class UsageError(Exception):
    pass


def _parse_locations(spec: str) -> list[int]:
    """"0..99" or "3,7,10" style location lists."""
    spec = spec.strip()
    if ".." in spec:
        lo, hi = spec.split("..")
        return list(range(int(lo), int(hi) + 1))
    return sorted({int(tok) for tok in spec.split(",") if tok.strip()})


def _parse_radii(args) -> list[float]:
    if args.radii and args.radii_log:
        raise UsageError("give either --radii or --radii-log, not both")
    if args.radii:
        return [float(tok) for tok in args.radii.split(",")]
    if args.radii_log:
        lo, hi, count = args.radii_log.split(":")
        return np.geomspace(float(lo), float(hi), int(count)).tolist()
    raise UsageError("lattice needs --radii or --radii-log")


def _parse_weight(spec: Optional[str]) -> Optional[WeightFn]:
    if spec is None or spec == "inverse_size":
        return WeightFn.inverse_size()
    if spec == "log_inverse_size":
        return WeightFn.log_inverse_size()
    if spec == "inverse_radius":
        return WeightFn.inverse_radius()
    if spec == "inverse_count_interval":
        return WeightFn.inverse_count_interval()
    if spec.startswith("constant:"):
        return WeightFn.constant(float(spec.split(":", 1)[1]))
    raise UsageError(f"unknown weight function {spec!r}")


def _load_matrix(path: str) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def _load_design_outcome(path: str):
    """X and outcome from .npz (keys X, y or z) or CSV (first column outcome)."""
    if path.endswith(".npz"):
        data = np.load(path)
        X = data["X"]
        if "y" in data:
            return X, data["y"]
        if "z" in data:
            return X, data["z"]
        raise ValidationError("npz data needs an 'X' and a 'y' or 'z' array")
    mat = _load_matrix(path)
    return mat[:, 1:], mat[:, 0]


# ---------------------------------------------------------------------------
# groups
# ---------------------------------------------------------------------------


def _cmd_groups(args) -> int:
    if args.mode == "contiguous":
        locs = _parse_locations(args.locations)
        groups = contiguous_groups(locs, args.max_size)
    elif args.mode == "cluster":
        if not args.corr:
            raise UsageError("cluster needs --corr (CSV matrix)")
        corr = _load_matrix(args.corr)
        diss = dissimilarity_from_corr(corr, args.dissimilarity)
        locs = _parse_locations(args.locations) if args.locations else None
        groups = hierarchical_groups(diss, args.linkage, args.max_size, locations=locs)
    elif args.mode == "lattice":
        bounds = [
            tuple(float(x) for x in tok.split(":")) for tok in args.bounds.split(",")
        ]
        space = LocationSpace.continuous(bounds)
        radii = _parse_radii(args)
        extras = None
        if args.extra_centers:
            with open(args.extra_centers) as fh:
                extras = [rec for rec in (json.loads(l) for l in fh if l.strip())]
        groups = lattice_regions(space, radii, shape=args.shape, extra_centers=extras)
    else:  # default-regression
        if not args.samples:
            raise UsageError("default-regression needs --samples")
        with open(args.samples) as fh:
            has_records = any(line.strip() for line in fh)
        if not has_records:
            groups = []
        else:
            with open(args.samples) as fh:
                samples = serialize.read_samples(fh)
            design = _load_matrix(args.design) if args.design else None
            indicator = samples.indicator_matrix()
            groups = default_regression_groups(
                indicator, design=design, max_size=args.max_size
            )
    with open(args.out, "w") as fh:
        serialize.write_groups(groups, fh)
    print(f"wrote {len(groups)} groups to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# pips
# ---------------------------------------------------------------------------


def _cmd_pips(args) -> int:
    if bool(args.samples) == bool(args.susie_alphas):
        raise UsageError("give exactly one of --samples or --susie-alphas")
    with open(args.groups) as fh:
        groups = serialize.read_groups(fh)
    if args.samples:
        with open(args.samples) as fh:
            samples = serialize.read_samples(fh)
        if samples.kind == "discrete":
            table = pips_from_samples(samples, groups)
        else:
            from .pips import pips_continuous

            table = pips_continuous(samples, groups)
    else:
        with open(args.susie_alphas) as fh:
            alphas = serialize.read_susie_alphas(fh)
        table = pips_from_susie(alphas, groups)
    with open(args.out, "w") as fh:
        serialize.write_pip_table(table, fh)
    print(f"wrote {len(table.group_pips)} group pips to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def _cmd_solve(args) -> int:
    with open(args.groups) as fh:
        groups = serialize.read_groups(fh)
    with open(args.pips) as fh:
        table = serialize.read_pip_table(fh)
    weight_fn = _parse_weight(args.weight)
    options = DetectOptions(
        kappa_group=args.kappa_group,
        prefilter=not args.no_prefilter,
        prenarrow=not args.no_prenarrow,
        repair=args.repair,
        n_sample=args.n_sample,
        seed=args.seed,
    )
    if args.error == "fdr":
        spec = ErrorRateSpec.fdr(args.q)
    elif args.error == "local-fdr":
        spec = ErrorRateSpec.local_fdr(args.q)
    elif args.error == "pfer":
        if args.v is None:
            raise UsageError("--error pfer needs --v")
        spec = ErrorRateSpec.pfer(args.v)
    else:
        spec = ErrorRateSpec.fwer(args.q, grid_tol=args.grid_tol)

    if args.error == "fwer":
        samples = None
        if args.samples:
            with open(args.samples) as fh:
                samples = serialize.read_samples(fh)
        det = detect_fwer(
            groups,
            q=args.q,
            pip_table=table,
            weight_fn=weight_fn,
            samples=samples,
            options=options,
            grid_tol=args.grid_tol,
        )
    else:
        det = detect_regions(
            groups, spec, pip_table=table, weight_fn=weight_fn, options=options
        )
    report = certify(det)
    with open(args.out, "w") as fh:
        serialize.write_detections(det, fh)
    gap = report.gap
    print(f"discoveries: {len(det)}")
    print(f"objective:   {det.objective:.6f}")
    print(f"upper bound: {det.upper_bound:.6f}  (gap {gap:.2%})")
    print(f"budget used: {det.error_budget_used:.6f}")
    relaxed = det.info.get("relaxed", {})
    if relaxed:
        frac = {k: v for k, v in relaxed.items() if min(v, 1 - v) > 1e-6}
        if frac:
            print("fractional relaxed values:")
            for gid, val in sorted(frac.items()):
                print(f"  {gid}: {val:.6f}")
    if not report.all_ok:  # pragma: no cover - certificate failures are bugs
        raise InternalError(f"certificate failed: {report}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sample
# ---------------------------------------------------------------------------


def _make_config(args) -> LssConfig:
    kwargs = dict(
        n_iter=args.iters,
        burn_in=args.burnin,
        block_size=args.block_size,
        chains=args.chains,
        seed=args.seed,
    )
    if args.preset == "misspec":
        return LssConfig.misspecified(**kwargs)
    if args.preset.startswith("well:"):
        s2, t2, p0 = (float(tok) for tok in args.preset.split(":", 1)[1].split(","))
        return LssConfig.well_specified(s2, t2, p0, **kwargs)
    raise UsageError("--preset must be 'misspec' or 'well:<sigma2>,<tau2>,<p0>'")


def _cmd_sample(args) -> int:
    X, outcome = _load_design_outcome(args.data)
    config = _make_config(args)
    if args.mode == "lss":
        result = lss_gibbs(X, outcome, config)
    else:
        result = pss_gibbs(X, outcome, config)
    with open(args.out, "w") as fh:
        serialize.write_samples(result.samples, fh)
    if args.trace:
        np.save(args.trace, result.betas)
    print(f"wrote {result.n_draws} posterior draws to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate / eval
# ---------------------------------------------------------------------------


def _cmd_simulate(args) -> int:
    with open(args.config) as fh:
        doc = json.load(fh)
    scenarios = doc["scenarios"] if "scenarios" in doc else [doc]
    rows = []
    for cfg in scenarios:
        rows.extend(_run_scenario(cfg))
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} result rows to {args.out}")
    if args.plot:
        _write_plot(rows, args.plot)
    return EXIT_OK


def _run_scenario(cfg: dict) -> list[dict]:
    n = cfg.get("n", 100)
    p = cfg.get("p", 50)
    k = cfg.get("k", 5)
    sparsity = cfg.get("sparsity", 0.1)
    tau2 = cfg.get("tau2", 1.0)
    sigma2 = cfg.get("sigma2", 1.0)
    link = cfg.get("link", "gaussian")
    q = cfg.get("q", 0.1)
    error = cfg.get("error", "fdr")
    replicates = cfg.get("replicates", 1)
    seed0 = cfg.get("seed", 0)
    max_size = cfg.get("max_size", DEFAULT_MAX_SIZE)
    weight_fn = _parse_weight(cfg.get("weight"))
    scfg = cfg.get("sampler", {})

    rows = []
    for rep in range(replicates):
        seed = seed0 + rep
        X = gen_ark_design(n, p, k, seed=seed)
        data = gen_sparse_glm(X, sparsity, tau2=tau2, sigma2=sigma2, link=link, seed=seed)
        config = LssConfig(
            n_iter=scfg.get("iters", 1000),
            burn_in=scfg.get("burnin", 100),
            block_size=scfg.get("block_size", 5),
            chains=scfg.get("chains", 5),
            seed=seed,
        )
        t0 = time.perf_counter()
        sampler = pss_gibbs if link == "probit" else lss_gibbs
        result = sampler(X, data.outcome, config)
        indicator = result.samples.indicator_matrix()
        groups = default_regression_groups(indicator, design=X, max_size=max_size)
        table = pips_from_samples(result.samples, groups)
        if error == "fdr":
            spec = ErrorRateSpec.fdr(q)
        elif error == "local_fdr":
            spec = ErrorRateSpec.local_fdr(q)
        else:
            spec = ErrorRateSpec.pfer(q)
        det = detect_regions(groups, spec, pip_table=table, weight_fn=weight_fn)
        runtime_ms = 1000.0 * (time.perf_counter() - t0)
        res = evaluate(det, data.signals, weight_fn=weight_fn)
        rows.append(
            {
                "scenario": cfg.get("name", "scenario"),
                "replicate": rep,
                "method": f"{'pss' if link == 'probit' else 'lss'}+detect",
                "power": res.power,
                "normalized_power": res.normalized_power,
                "fdp": res.fdp,
                "n_discoveries": len(det),
                "runtime_ms": round(runtime_ms, 3),
            }
        )
    return rows


def _write_plot(rows, path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    reps = [r["replicate"] for r in rows]
    fig, axes = plt.subplots(1, 2, figsize=(8, 3))
    axes[0].bar(reps, [r["normalized_power"] for r in rows])
    axes[0].set_xlabel("replicate")
    axes[0].set_ylabel("normalized power")
    axes[1].bar(reps, [r["fdp"] for r in rows])
    axes[1].set_xlabel("replicate")
    axes[1].set_ylabel("fdp")
    fig.tight_layout()
    fig.savefig(path, dpi=120)


def _cmd_eval(args) -> int:
    with open(args.detections) as fh:
        det = serialize.read_detections(fh)
    with open(args.truth) as fh:
        truth_doc = json.load(fh)
    truth = truth_doc.get("signals", truth_doc.get("points"))
    if truth is None:
        raise ValidationError("truth file needs 'signals' or 'points'")
    weight_fn = None if all(g.weight is not None for g in det.groups) else _parse_weight(args.weight)
    res = evaluate(det, np.asarray(truth), weight_fn=weight_fn, slack=args.slack)
    print(f"power:            {res.power:.6f}")
    print(f"normalized_power: {res.normalized_power:.6f}")
    print(f"fdp:              {res.fdp:.6f}")
    print(f"true/false:       {res.n_true}/{res.n_false}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="resdet",
        description="Resolution-adaptive signal detection pipeline",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=int(os.environ.get("RESDET_THREADS", "1")),
        help="cap on worker threads for parallel stages; all stages currently "
        "run single-threaded for bitwise determinism",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("groups", help="generate candidate groups")
    g.add_argument("mode", choices=["contiguous", "cluster", "lattice", "default-regression"])
    g.add_argument("--locations", help="e.g. '0..99' or '3,7,10'")
    g.add_argument("--max-size", type=int, default=DEFAULT_MAX_SIZE)
    g.add_argument("--corr", help="CSV correlation matrix (cluster mode)")
    g.add_argument("--dissimilarity", choices=["abs_one_minus", "one_plus"], default="abs_one_minus")
    g.add_argument("--linkage", choices=["single", "average", "complete"], default="average")
    g.add_argument("--bounds", default="0:1,0:1", help="lattice box, e.g. '0:1,0:1'")
    g.add_argument("--radii", help="comma-separated radii")
    g.add_argument("--radii-log", help="lo:hi:count log-spaced radii")
    g.add_argument("--shape", choices=["sphere", "cube"], default="sphere")
    g.add_argument("--extra-centers", help="JSON-lines file of points")
    g.add_argument("--samples", help="samples file (default-regression mode)")
    g.add_argument("--design", help="CSV design matrix (default-regression mode)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_groups)

    p = sub.add_parser("pips", help="estimate group inclusion probabilities")
    p.add_argument("--groups", required=True)
    p.add_argument("--samples")
    p.add_argument("--susie-alphas")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_pips)

    s = sub.add_parser("solve", help="select discoveries under an error budget")
    s.add_argument("--groups", required=True)
    s.add_argument("--pips", required=True)
    s.add_argument("--error", choices=["fdr", "local-fdr", "pfer", "fwer"], default="fdr")
    s.add_argument("--q", type=float, default=0.1)
    s.add_argument("--v", type=float)
    s.add_argument("--grid-tol", type=float, default=1e-3)
    s.add_argument("--weight", default=None)
    s.add_argument("--kappa-group", type=float, default=0.5)
    s.add_argument("--no-prefilter", action="store_true")
    s.add_argument("--no-prenarrow", action="store_true")
    s.add_argument("--repair", choices=["ilp", "sample"], default="ilp")
    s.add_argument("--n-sample", type=int, default=128)
    s.add_argument("--samples", help="posterior samples (fwer search mode)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_solve)

    m = sub.add_parser("sample", help="run a spike-and-slab Gibbs sampler")
    m.add_argument("mode", choices=["lss", "pss"])
    m.add_argument("--data", required=True, help=".npz with X and y/z, or CSV")
    m.add_argument("--chains", type=int, default=5)
    m.add_argument("--iters", type=int, default=1000)
    m.add_argument("--burnin", type=int, default=100)
    m.add_argument("--block-size", type=int, default=5)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--preset", default="misspec", help="'misspec' or 'well:s2,t2,p0'")
    m.add_argument("--trace", help="also save the full coefficient draws (.npy)")
    m.add_argument("--out", required=True)
    m.set_defaults(func=_cmd_sample)

    c = sub.add_parser("simulate", help="run an end-to-end simulation from a config")
    c.add_argument("--config", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--plot")
    c.set_defaults(func=_cmd_simulate)

    e = sub.add_parser("eval", help="score detections against known truth")
    e.add_argument("--detections", required=True)
    e.add_argument("--truth", required=True, help="JSON with 'signals' or 'points'")
    e.add_argument("--slack", type=float, default=0.0)
    e.add_argument("--weight", default=None)
    e.set_defaults(func=_cmd_eval)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, FileNotFoundError, OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except InternalError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except ResdetError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
