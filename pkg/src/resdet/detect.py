"""End-to-end detection: preprocess, assemble the LP, solve, repair, certify.

The pipeline turns candidate groups with PIPs into a disjoint set of
discoveries maximizing expected resolution-adjusted power under the chosen
error-rate budget. The relaxed LP optimum is reported alongside the integer
output as a verifiable upper bound, so near-optimality is always visible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cliques import build_intersection_graph, clique_constraints, edge_clique_cover
from .core import (
    CandidateGroup,
    DetectionSet,
    Discovery,
    ErrorRateSpec,
    WeightFn,
    resolve_weights,
)
from .errors import ValidationError
from .lpsolve import (
    LpProblem,
    LpRow,
    ResidualTooLarge,
    randomized_rounding,
    solve_relaxed,
    solve_residual_integer,
)
from .pips import PipTable, SampleSet, apply_pips
from .preprocess import DEFAULT_KAPPA_GROUP, prefilter_groups, prenarrow

__all__ = [
    "DetectOptions",
    "assemble_problem",
    "detect_regions",
    "detect_fwer",
    "maximize_f1",
    "certify",
    "CertReport",
]


@dataclass
class DetectOptions:
    """Tuning knobs for the detection pipeline.

    ``kappa_group`` is the FDR-mode prefilter threshold (0 disables it);
    prenarrowing applies only under FDR / local FDR. ``repair`` picks how the
    fractional part of the relaxed solution is made integral: "ilp" (exact,
    with randomized-rounding fallback if the residual is huge) or "sample"
    (randomized rounding throughout). Problems with at most ``exact_ilp_max``
    variables are solved exactly as one integer program instead of fixing the
    already-integral relaxed values: fixing can strand error budget when a
    fractional group competes with an already-selected one, and at small
    discovery counts that loss is a visible slice of the objective.
    """

    kappa_group: float = DEFAULT_KAPPA_GROUP
    prefilter: bool = True
    prenarrow: bool = True
    prenarrow_alpha: Optional[float] = None
    deduplicate: bool = True
    repair: str = "ilp"  # "ilp" | "sample"
    n_sample: int = 128
    seed: int = 0
    integrality_tol: float = 1e-6
    exact_ilp_max: int = 5000
    # Robust mode: uniform lower bound pip - delta (clipped at 0) replaces
    # every pip before solving, buying slack against PIP estimation error.
    robust_delta: float = 0.0


def assemble_problem(
    groups: Sequence[CandidateGroup],
    error_spec: ErrorRateSpec,
    weight_fn: Optional[WeightFn] = None,
    clique_rows: Optional[Sequence[Sequence[str]]] = None,
) -> LpProblem:
    """Build the LP: objective pip*weight, one budget row, disjointness rows.

    FDR(q) contributes the single row sum (1 - pip - q) x <= 0; PFER(v) and
    FWER (via its PFER surrogate) contribute sum (1 - pip) x <= v; local FDR
    needs no budget row because its prefilter already enforces pip >= 1 - q.
    Disjointness comes either from the supplied clique rows or, for index-set
    regions, from one row per location shared by at least two groups.
    """
    ids = [g.id for g in groups]
    if len(set(ids)) != len(ids):
        raise ValidationError("group ids must be unique; run dedupe first")
    pips = []
    for g in groups:
        if g.pip is None:
            raise ValidationError(f"group {g.id} has no pip")
        pips.append(g.pip)
    pips = np.array(pips, dtype=float)
    weights = np.array(resolve_weights(groups, weight_fn), dtype=float)

    rows: list[LpRow] = []
    if error_spec.kind == "fdr":
        # (1 - q) - p rather than 1 - p - q: the former is exact when p and
        # 1 - q round to the same double, e.g. p = 0.9, q = 0.1.
        rows.append(
            LpRow(
                idx=tuple(range(len(groups))),
                coef=tuple((1.0 - error_spec.q) - pips),
                rhs=0.0,
                tag="error",
            )
        )
    elif error_spec.kind in ("pfer", "fwer"):
        level = error_spec.v if error_spec.kind == "pfer" else error_spec.q
        rows.append(
            LpRow(
                idx=tuple(range(len(groups))),
                coef=tuple(1.0 - pips),
                rhs=float(level),
                tag="error",
            )
        )
    elif error_spec.kind != "local_fdr":
        raise ValidationError(f"unknown error spec kind {error_spec.kind!r}")

    index_by_id = {gid: j for j, gid in enumerate(ids)}
    if clique_rows is not None:
        for clique in clique_rows:
            members = sorted(index_by_id[gid] for gid in clique)
            if len(members) >= 2:
                rows.append(
                    LpRow(idx=tuple(members), coef=(1.0,) * len(members), rhs=1.0)
                )
    else:
        by_location: dict[int, list[int]] = {}
        for j, g in enumerate(groups):
            if g.region.kind != "index_set":
                raise ValidationError(
                    "continuous regions need clique_rows for disjointness"
                )
            for loc in g.region.indices:
                by_location.setdefault(loc, []).append(j)
        for loc in sorted(by_location):
            members = by_location[loc]
            if len(members) >= 2:
                rows.append(
                    LpRow(idx=tuple(members), coef=(1.0,) * len(members), rhs=1.0)
                )

    return LpProblem(var_ids=ids, objective=pips * weights, rows=rows)


def _empty_detection(error_spec: ErrorRateSpec, info: dict) -> DetectionSet:
    return DetectionSet(
        discoveries=[],
        objective=0.0,
        upper_bound=0.0,
        error_budget_used=0.0,
        error_spec=error_spec,
        info=info,
    )


def detect_regions(
    groups: Sequence[CandidateGroup],
    error_spec: ErrorRateSpec,
    pip_table: Optional[PipTable] = None,
    weight_fn: Optional[WeightFn] = None,
    options: Optional[DetectOptions] = None,
) -> DetectionSet:
    """Select a disjoint, budget-feasible set of regions of maximal power.

    Preprocess, solve the relaxed LP, then make the solution integral: fix
    the variables the relaxed optimum already decided and re-solve the
    fractional handful as an integer program. If fixing makes the residual
    infeasible, the lowest-PIP fixed selection is released and the repair is
    retried, which terminates because releasing everything leaves the always
    feasible empty selection. An empty DetectionSet is a valid outcome.
    """
    opts = options or DetectOptions()
    from .groups import dedupe as _dedupe

    work = list(groups)
    if pip_table is not None:
        work = apply_pips(work, pip_table)
    if opts.robust_delta > 0.0:
        work = [
            g.with_pip(max(0.0, g.pip - opts.robust_delta)) if g.pip is not None else g
            for g in work
        ]
    if opts.deduplicate:
        work = _dedupe(work)

    info: dict = {"n_candidates": len(work)}
    if opts.prefilter:
        work = prefilter_groups(work, error_spec, kappa=opts.kappa_group)
    else:
        for g in work:
            if g.pip is None:
                raise ValidationError(f"group {g.id} has no pip")
    if error_spec.kind in ("fdr", "local_fdr") and opts.prenarrow and work:
        work = prenarrow(
            work, q=error_spec.q, alpha=opts.prenarrow_alpha, weight_fn=weight_fn
        )
    info["n_after_preprocess"] = len(work)
    if not work:
        return _empty_detection(error_spec, info)

    clique_rows = None
    if any(g.region.kind != "index_set" for g in work):
        graph = build_intersection_graph(work)
        cover = edge_clique_cover(graph)
        clique_rows = clique_constraints(cover)
        info["n_cliques"] = len(clique_rows)

    problem = assemble_problem(work, error_spec, weight_fn, clique_rows=clique_rows)
    relaxed = solve_relaxed(problem)
    x_star = relaxed.values
    tol = opts.integrality_tol
    frac = np.flatnonzero(np.minimum(x_star, 1.0 - x_star) > tol)
    info["relaxed"] = {
        problem.var_ids[j]: float(x_star[j])
        for j in np.flatnonzero(x_star > tol)
    }
    info["n_fractional"] = int(frac.size)

    pips = np.array([g.pip for g in work])
    if opts.repair == "sample":
        z = randomized_rounding(
            problem, x_star, pips, seed=opts.seed, n_sample=opts.n_sample
        )
        info["repair"] = "sample"
    elif problem.n_vars <= opts.exact_ilp_max:
        res = solve_residual_integer(problem, fixed={})
        z = res.values
        info["repair"] = "exact_" + res.method
    else:
        info["repair"] = "fix_and_repair"
        free = set(int(j) for j in frac)
        backtracks = 0
        while True:
            fixed = {
                j: float(np.round(x_star[j]))
                for j in range(problem.n_vars)
                if j not in free
            }
            try:
                res = solve_residual_integer(problem, fixed, free_ids=sorted(free))
            except ResidualTooLarge:
                z = randomized_rounding(
                    problem, x_star, pips, seed=opts.seed, n_sample=opts.n_sample
                )
                info["repair"] = "sample_fallback"
                break
            if res.feasible:
                z = res.values
                break
            fixed_ones = [j for j, v in fixed.items() if v == 1.0]
            if not fixed_ones:  # pragma: no cover - empty selection is feasible
                z = np.zeros(problem.n_vars)
                break
            g_min = min(fixed_ones, key=lambda j: (pips[j], j))
            free.add(g_min)
            backtracks += 1
        info["backtracks"] = backtracks

    selected = [j for j in range(problem.n_vars) if z[j] > 0.5]
    weights = resolve_weights(work, weight_fn)
    discoveries = []
    for j in selected:
        g = work[j]
        if g.weight is None:
            g = CandidateGroup(
                id=g.id,
                region=g.region,
                count_interval=g.count_interval,
                weight=float(weights[j]),
                pip=g.pip,
            )
        discoveries.append(Discovery(group=g, selection_prob=1.0))

    budget = float(np.sum(1.0 - pips[selected])) if selected else 0.0
    if error_spec.kind == "local_fdr":
        budget = float(max((1.0 - pips[j] for j in selected), default=0.0))
    return DetectionSet(
        discoveries=discoveries,
        objective=float(problem.objective @ z),
        upper_bound=float(relaxed.objective),
        error_budget_used=budget,
        error_spec=error_spec,
        info=info,
    )


def _fraction_any_miss(groups: Sequence[CandidateGroup], samples: SampleSet) -> float:
    """Fraction of posterior draws in which some group contains no signal."""
    if not groups:
        return 0.0
    misses = 0
    for draw in samples.draws:
        if samples.kind == "discrete":
            sig = set(int(v) for v in draw)
            any_miss = any(not (set(g.region.indices) & sig) for g in groups)
        else:
            any_miss = any(
                not any(g.region.contains_point(pt) for pt in draw) for g in groups
            )
        misses += any_miss
    return misses / len(samples)


def detect_fwer(
    groups: Sequence[CandidateGroup],
    q: float,
    pip_table: Optional[PipTable] = None,
    weight_fn: Optional[WeightFn] = None,
    samples: Optional[SampleSet] = None,
    options: Optional[DetectOptions] = None,
    grid_tol: float = 1e-3,
) -> DetectionSet:
    """Familywise error control at level q.

    Without posterior samples, controls the expected number of false
    discoveries at q, which implies P(any false discovery) <= q. Given
    samples, a binary search raises the expected-count budget v as far as the
    empirical P(any selected group is signal-free) stays at most q, and the
    largest verified selection wins; the v = q solution is the fallback and
    is valid regardless of the empirical estimate.
    """
    spec = ErrorRateSpec.fwer(q, grid_tol=grid_tol)

    def run_at(v: float) -> DetectionSet:
        det = detect_regions(
            groups,
            ErrorRateSpec.pfer(v),
            pip_table=pip_table,
            weight_fn=weight_fn,
            options=options,
        )
        det.error_spec = spec
        det.info["pfer_level"] = v
        return det

    best = run_at(q)
    if samples is None:
        return best
    best.info["empirical_fwer"] = _fraction_any_miss(best.groups, samples)

    lo, hi = q, 1.0
    while hi - lo > grid_tol:
        mid = (lo + hi) / 2.0
        cand = run_at(mid)
        emp = _fraction_any_miss(cand.groups, samples)
        cand.info["empirical_fwer"] = emp
        if emp <= q:
            lo = mid
            best = cand
        else:
            hi = mid
    return best


def maximize_f1(
    groups: Sequence[CandidateGroup],
    q_grid: Sequence[float],
    pip_table: PipTable,
    weight_fn: Optional[WeightFn] = None,
    options: Optional[DetectOptions] = None,
) -> tuple[float, DetectionSet]:
    """Pick the FDR level on a grid maximizing the expected F1 score.

    Precision is 1 - (budget used per discovery); recall is achieved power
    over the expected number of signals (the sum of location marginals, the
    power a perfect singleton recovery would attain). Ties break toward the
    smallest, most conservative q. A zero expected signal count yields F1 = 0
    and an empty detection at the smallest grid level.
    """
    grid = sorted(q_grid)
    if not grid:
        raise ValidationError("q_grid must be nonempty")
    for q in grid:
        if not (0.0 < q < 1.0):
            raise ValidationError(f"grid levels must lie in (0,1), got {q}")
    denom = pip_table.total_marginal()
    if denom <= 0.0:
        det = _empty_detection(ErrorRateSpec.fdr(grid[0]), {"f1": 0.0})
        return grid[0], det

    best_q, best_f1, best_det = grid[0], -1.0, None
    for q in grid:
        det = detect_regions(
            groups,
            ErrorRateSpec.fdr(q),
            pip_table=pip_table,
            weight_fn=weight_fn,
            options=options,
        )
        n_disc = len(det)
        realized_fdr = det.error_budget_used / n_disc if n_disc else 0.0
        precision = 1.0 - realized_fdr
        recall = min(1.0, det.objective / denom)
        f1 = 0.0
        if precision > 0 and recall > 0:
            f1 = 2.0 * precision * recall / (precision + recall)
        det.info["f1"] = f1
        if f1 > best_f1 + 1e-12:
            best_q, best_f1, best_det = q, f1, det
    if best_det is None:  # pragma: no cover
        raise ValidationError("empty grid")
    return best_q, best_det


@dataclass
class CertReport:
    disjoint_ok: bool
    budget_ok: bool
    objective_ok: bool
    bound_ok: bool
    gap: float
    gap_flag: bool
    details: dict = field(default_factory=dict)

    @property
    def all_ok(self) -> bool:
        return self.disjoint_ok and self.budget_ok and self.objective_ok and self.bound_ok


def certify(
    detection: DetectionSet,
    gap_threshold: float = 0.01,
) -> CertReport:
    """Recheck a detection set from scratch and report warning flags.

    Verifies pairwise disjointness, the error-budget inequality for the
    stated error rate, the stored objective against a recomputation from the
    discoveries, and the relative optimality gap against the relaxed bound.
    ``gap_flag`` is raised when the gap exceeds the threshold; a large gap
    does not invalidate error control, it only signals lost power.
    """
    disjoint_ok = detection.regions_disjoint()
    budget_ok = detection.budget_ok()
    recomputed = 0.0
    for d in detection.discoveries:
        if d.group.pip is None or d.group.weight is None:
            raise ValidationError(f"discovery {d.group.id} lacks pip or weight")
        recomputed += d.group.pip * d.group.weight * d.selection_prob
    objective_ok = abs(recomputed - detection.objective) <= 1e-8 * max(
        1.0, abs(recomputed)
    )
    bound_ok = detection.objective <= detection.upper_bound + 1e-6
    denom = max(detection.upper_bound, 1e-12)
    gap = max(0.0, detection.upper_bound - detection.objective) / denom
    return CertReport(
        disjoint_ok=disjoint_ok,
        budget_ok=budget_ok,
        objective_ok=objective_ok,
        bound_ok=bound_ok,
        gap=gap,
        gap_flag=gap > gap_threshold,
        details={
            "objective_recomputed": recomputed,
            "n_discoveries": len(detection),
            "budget_used": detection.error_budget_used,
        },
    )
