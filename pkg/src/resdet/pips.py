"""Posterior inclusion probabilities for candidate groups.

Three input routes: posterior samples of signal sets (discrete or continuous),
per-effect inclusion-probability matrices from sum-of-single-effects fits, or
pass-through tables. All estimators also expose per-location marginals where
those are defined, since downstream preprocessing wants them anyway.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .core import CandidateGroup, LocationSpace, Region, make_group
from .errors import InternalError, ValidationError

__all__ = [
    "SampleSet",
    "SusieAlphas",
    "PipTable",
    "pips_from_samples",
    "pips_continuous",
    "count_interval_pips",
    "pips_from_susie",
    "merge_chains",
    "RegionLocator",
    "apply_pips",
]


@dataclass
class SampleSet:
    """N posterior draws of signal-location sets.

    Discrete draws are arrays of location indices; continuous draws are
    (m_i, d) arrays of points. ``chain_ids`` optionally tags each draw with
    the MCMC chain that produced it.
    """

    kind: str  # "discrete" | "continuous"
    draws: list[np.ndarray]
    chain_ids: Optional[np.ndarray] = None
    n_locations: Optional[int] = None
    dim: Optional[int] = None

    @staticmethod
    def discrete(
        draws: Iterable[Iterable[int]],
        chain_ids: Optional[Sequence[int]] = None,
        n_locations: Optional[int] = None,
    ) -> "SampleSet":
        arrs = [np.unique(np.asarray(list(d), dtype=np.int64)) for d in draws]
        if len(arrs) == 0:
            raise ValidationError("a SampleSet needs at least one draw")
        if any(a.size and a.min() < 0 for a in arrs):
            raise ValidationError("signal indices must be nonnegative")
        if n_locations is not None:
            for a in arrs:
                if a.size and a.max() >= n_locations:
                    raise ValidationError(
                        f"signal index {a.max()} out of range for p={n_locations}"
                    )
        cid = _check_chain_ids(chain_ids, len(arrs))
        return SampleSet(kind="discrete", draws=arrs, chain_ids=cid, n_locations=n_locations)

    @staticmethod
    def continuous(
        draws: Iterable[Sequence[Sequence[float]]],
        chain_ids: Optional[Sequence[int]] = None,
        space: Optional[LocationSpace] = None,
    ) -> "SampleSet":
        arrs = []
        dim = space.dim if space is not None else None
        for d in draws:
            a = np.asarray(d, dtype=float)
            if a.size == 0:
                a = a.reshape(0, dim if dim is not None else 0)
            if a.ndim != 2:
                raise ValidationError("each continuous draw must be a list of points")
            if dim is None:
                dim = a.shape[1]
            elif a.shape[0] and a.shape[1] != dim:
                raise ValidationError("inconsistent point dimension across draws")
            if space is not None:
                for pt in a:
                    if not space.contains_point(pt):
                        raise ValidationError(f"point {pt.tolist()} outside the location space")
            arrs.append(a)
        if len(arrs) == 0:
            raise ValidationError("a SampleSet needs at least one draw")
        cid = _check_chain_ids(chain_ids, len(arrs))
        return SampleSet(kind="continuous", draws=arrs, chain_ids=cid, dim=dim)

    def __len__(self) -> int:
        return len(self.draws)

    def indicator_matrix(self) -> np.ndarray:
        """Dense N x p boolean indicator matrix (discrete sample sets only)."""
        if self.kind != "discrete":
            raise ValidationError("indicator_matrix needs a discrete SampleSet")
        p = self.n_locations
        if p is None:
            p = 1 + max((int(a.max()) for a in self.draws if a.size), default=-1)
        mat = np.zeros((len(self.draws), max(p, 1)), dtype=bool)
        for i, a in enumerate(self.draws):
            mat[i, a] = True
        return mat


def _check_chain_ids(chain_ids, n) -> Optional[np.ndarray]:
    if chain_ids is None:
        return None
    cid = np.asarray(chain_ids, dtype=np.int64)
    if cid.shape != (n,):
        raise ValidationError("chain_ids must have one entry per draw")
    return cid


@dataclass
class SusieAlphas:
    """L x p matrix of per-effect inclusion probabilities, rows summing to 1."""

    alpha: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        if a.ndim != 2:
            raise ValidationError("alpha must be an L x p matrix")
        if np.any(a < -1e-12) or np.any(a > 1 + 1e-12):
            raise ValidationError("alpha entries must lie in [0, 1]")
        sums = a.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-6):
            raise ValidationError("each alpha row must sum to 1 within 1e-6")
        self.alpha = np.clip(a, 0.0, 1.0)

    @property
    def n_effects(self) -> int:
        return self.alpha.shape[0]

    @property
    def n_locations(self) -> int:
        return self.alpha.shape[1]


@dataclass
class PipTable:
    """group id -> PIP, plus per-location marginals where they exist."""

    group_pips: dict[str, float] = field(default_factory=dict)
    marginals: dict[int, float] = field(default_factory=dict)
    n_samples: Optional[int] = None

    def pip(self, group_id: str) -> float:
        return self.group_pips.get(group_id, 0.0)

    def total_marginal(self) -> float:
        return float(sum(self.marginals.values()))


def apply_pips(groups: Sequence[CandidateGroup], table: PipTable) -> list[CandidateGroup]:
    """Copies of ``groups`` with pips filled in from ``table`` (0 when absent)."""
    return [g.with_pip(table.pip(g.id)) for g in groups]


def pips_from_samples(samples: SampleSet, groups: Sequence[CandidateGroup]) -> PipTable:
    """Sample-frequency PIPs: the fraction of draws hitting each group.

    Also records the marginal PIP of every location, computed in the same
    pass (the location prefilter needs them regardless).
    """
    if samples.kind != "discrete":
        raise ValidationError("pips_from_samples needs a discrete SampleSet")
    for g in groups:
        if g.region.kind != "index_set":
            raise ValidationError(f"group {g.id} is not an index_set region")
    mat = samples.indicator_matrix()
    p = mat.shape[1]
    for g in groups:
        if g.region.indices[-1] >= p:
            if samples.n_locations is not None:
                raise ValidationError(
                    f"group {g.id} references index {g.region.indices[-1]} "
                    f"outside p={p}"
                )
            grown = np.zeros((mat.shape[0], g.region.indices[-1] + 1), dtype=bool)
            grown[:, :p] = mat
            mat, p = grown, grown.shape[1]
    group_pips = {
        g.id: float(mat[:, list(g.region.indices)].any(axis=1).mean()) for g in groups
    }
    marginals = {j: float(mat[:, j].mean()) for j in range(p)}
    return PipTable(group_pips=group_pips, marginals=marginals, n_samples=len(samples))


class RegionLocator:
    """Answers "which candidate regions contain this point" in O(R * d).

    Regions are bucketed per (kind, extent) family on a grid with cell size
    equal to the extent; any region containing x must have its center within
    extent of x, hence in one of the 3^d neighboring cells. For lattice
    families this reproduces round-to-nearby-lattice-point lookup, and
    off-lattice centers are handled by the same buckets.
    """

    def __init__(self, groups: Sequence[CandidateGroup]):
        self._families: dict[tuple[str, float], dict[tuple, list]] = {}
        self._known = set()
        for g in groups:
            region = g.region
            if region.kind == "index_set":
                raise ValidationError("RegionLocator requires continuous regions")
            fam = self._families.setdefault((region.kind, region.extent), {})
            cell = tuple(int(math.floor(c / region.extent)) for c in region.center)
            fam.setdefault(cell, []).append(g)
            self._known.add(g.id)

    def __call__(self, point: Sequence[float]) -> list[CandidateGroup]:
        hits = []
        pt = tuple(float(x) for x in point)
        for (kind, extent), buckets in self._families.items():
            base = tuple(int(math.floor(x / extent)) for x in pt)
            for cell in _neighbor_cells(base):
                for g in buckets.get(cell, ()):
                    if g.region.contains_point(pt):
                        hits.append(g)
        return hits

    def knows(self, group_id: str) -> bool:
        return group_id in self._known


def _neighbor_cells(base: tuple[int, ...]):
    if len(base) == 1:
        for dx in (-1, 0, 1):
            yield (base[0] + dx,)
        return
    for dx in (-1, 0, 1):
        for rest in _neighbor_cells(base[1:]):
            yield (base[0] + dx,) + rest


def pips_continuous(
    samples: SampleSet,
    groups: Sequence[CandidateGroup],
    locator: Optional[Callable[[Sequence[float]], list[CandidateGroup]]] = None,
) -> PipTable:
    """PIPs over continuous regions by iterating sample points, not groups.

    Equivalent to the naive per-group containment scan, but the work per draw
    is bounded by the number of regions actually containing its points.
    Groups never hit simply stay at PIP zero.
    """
    if samples.kind != "continuous":
        raise ValidationError("pips_continuous needs a continuous SampleSet")
    if locator is None:
        locator = RegionLocator(groups)
    known = {g.id for g in groups}
    counts: dict[str, int] = {}
    for draw in samples.draws:
        hit_ids = set()
        for pt in draw:
            for g in locator(pt):
                hit_ids.add(g.id)
        for gid in hit_ids:
            if gid not in known:
                raise InternalError(f"locator returned unknown group {gid}")
            counts[gid] = counts.get(gid, 0) + 1
    n = len(samples)
    group_pips = {gid: c / n for gid, c in counts.items()}
    return PipTable(group_pips=group_pips, marginals={}, n_samples=n)


def count_interval_pips(
    samples: SampleSet,
    regions: Sequence[Region],
    intervals: Sequence[tuple[int, int]],
) -> list[CandidateGroup]:
    """Groups asserting "the signal count in this region lies in J".

    Every region is paired with every interval; the PIP is the fraction of
    draws whose point count inside the region falls in the interval.
    """
    if samples.kind != "continuous":
        raise ValidationError("count_interval_pips needs a continuous SampleSet")
    ivals = []
    for lo, hi in intervals:
        lo, hi = int(lo), int(hi)
        if lo < 1 or hi < lo:
            raise ValidationError(f"invalid count interval ({lo}, {hi})")
        ivals.append((lo, hi))
    n = len(samples)
    out = []
    for region in regions:
        counts = np.array(
            [sum(1 for pt in draw if region.contains_point(pt)) for draw in samples.draws]
        )
        for lo, hi in ivals:
            pip = float(np.mean((counts >= lo) & (counts <= hi)))
            out.append(make_group(region, count_interval=(lo, hi), pip=pip))
    return out


def pips_from_susie(alphas: SusieAlphas, groups: Sequence[CandidateGroup]) -> PipTable:
    """Aggregate per-effect inclusion rows into group PIPs.

    Under the factorized posterior each effect independently lands in G with
    probability sum_{j in G} alpha_j, so
    p_G = 1 - prod_i (1 - min(1, sum_{j in G} alpha_j^{(i)})). The inner sum
    is clamped to [0, 1] before the product so float noise in the rows cannot
    push a probability outside its range.
    """
    a = alphas.alpha
    p = alphas.n_locations
    group_pips = {}
    for g in groups:
        if g.region.kind != "index_set":
            raise ValidationError(f"group {g.id} is not an index_set region")
        idx = list(g.region.indices)
        if idx[-1] >= p:
            raise ValidationError(f"group {g.id} references index {idx[-1]} outside p={p}")
        inner = np.clip(a[:, idx].sum(axis=1), 0.0, 1.0)
        group_pips[g.id] = float(1.0 - np.prod(1.0 - inner))
    marginals = {
        j: float(1.0 - np.prod(1.0 - np.clip(a[:, j], 0.0, 1.0))) for j in range(p)
    }
    return PipTable(group_pips=group_pips, marginals=marginals, n_samples=None)


def merge_chains(
    per_chain: Sequence[Union[PipTable, SampleSet]],
    per_chain_average: bool = False,
) -> Union[PipTable, SampleSet]:
    """Pool estimates from multiple chains.

    SampleSets are concatenated, so a subsequent PIP pass weights every draw
    equally (longer chains weigh more). PipTables are averaged with weights
    proportional to their sample counts, which gives the same answer as
    pooling the underlying draws. ``per_chain_average`` switches to an
    unweighted mean over chains.
    """
    if len(per_chain) == 0:
        raise ValidationError("merge_chains needs at least one chain")
    if isinstance(per_chain[0], SampleSet):
        kind = per_chain[0].kind
        draws: list[np.ndarray] = []
        ids: list[int] = []
        n_loc = None
        dim = None
        for c, ss in enumerate(per_chain):
            if not isinstance(ss, SampleSet) or ss.kind != kind:
                raise ValidationError("cannot merge sample sets of different kinds")
            if ss.kind == "discrete" and ss.n_locations is not None:
                n_loc = max(n_loc or 0, ss.n_locations)
            if ss.kind == "continuous":
                if dim is not None and ss.dim != dim:
                    raise ValidationError("cannot merge sample sets of different dimensions")
                dim = ss.dim
            draws.extend(ss.draws)
            if ss.chain_ids is not None:
                ids.extend(int(x) for x in ss.chain_ids)
            else:
                ids.extend([c] * len(ss))
        return SampleSet(
            kind=kind,
            draws=draws,
            chain_ids=np.asarray(ids, dtype=np.int64),
            n_locations=n_loc,
            dim=dim,
        )

    tables = list(per_chain)
    universe = set(tables[0].group_pips)
    for t in tables[1:]:
        if set(t.group_pips) != universe:
            raise ValidationError("chains disagree on the candidate-group universe")
    if per_chain_average:
        weights = np.ones(len(tables))
    else:
        if any(t.n_samples is None for t in tables):
            raise ValidationError("sample-weighted pooling needs n_samples on every table")
        weights = np.array([t.n_samples for t in tables], dtype=float)
    weights = weights / weights.sum()
    group_pips = {
        gid: float(sum(w * t.group_pips[gid] for w, t in zip(weights, tables)))
        for gid in sorted(universe)
    }
    loc_universe = sorted(set().union(*[set(t.marginals) for t in tables]))
    marginals = {
        j: float(sum(w * t.marginals.get(j, 0.0) for w, t in zip(weights, tables)))
        for j in loc_universe
    }
    n_samples = None
    if all(t.n_samples is not None for t in tables):
        n_samples = int(sum(t.n_samples for t in tables))
    return PipTable(group_pips=group_pips, marginals=marginals, n_samples=n_samples)
