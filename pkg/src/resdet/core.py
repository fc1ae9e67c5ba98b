"""Domain types: location spaces, regions, candidate groups, weights, error rates.

Everything downstream (group generation, PIP estimation, the LP) is written
against these types. No algorithms live here beyond validation, canonical
hashing and weight evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ValidationError

__all__ = [
    "LocationSpace",
    "Region",
    "CandidateGroup",
    "WeightFn",
    "ErrorRateSpec",
    "Discovery",
    "DetectionSet",
    "OBJECTIVE_SLACK",
    "BUDGET_SLACK",
]

# Numerical slack used when checking DetectionSet invariants.
OBJECTIVE_SLACK = 1e-6
BUDGET_SLACK = 1e-8

# Continuous centers are quantized to this fraction of the box extent before
# hashing, so float noise cannot split identical regions during dedupe.
CENTER_QUANTUM_REL = 1e-9


@dataclass(frozen=True)
class LocationSpace:
    """The set of locations that may harbor signals.

    Either a discrete indexed set {0, ..., p-1} or an axis-aligned box in R^d.
    """

    kind: str  # "discrete" | "continuous"
    p: Optional[int] = None
    bounds: Optional[tuple[tuple[float, float], ...]] = None

    @staticmethod
    def discrete(p: int) -> "LocationSpace":
        if p < 1:
            raise ValidationError(f"discrete space needs p >= 1, got {p}")
        return LocationSpace(kind="discrete", p=int(p))

    @staticmethod
    def continuous(bounds: Sequence[Sequence[float]]) -> "LocationSpace":
        bds = tuple((float(lo), float(hi)) for lo, hi in bounds)
        if len(bds) < 1:
            raise ValidationError("continuous space needs dimension >= 1")
        for lo, hi in bds:
            if not (lo < hi) or not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValidationError(f"invalid bound pair ({lo}, {hi})")
        return LocationSpace(kind="continuous", bounds=bds)

    @property
    def dim(self) -> int:
        if self.kind != "continuous":
            raise ValidationError("dim is only defined for continuous spaces")
        return len(self.bounds)

    def contains_point(self, x: Sequence[float]) -> bool:
        if self.kind != "continuous":
            raise ValidationError("contains_point needs a continuous space")
        return all(lo <= xi <= hi for xi, (lo, hi) in zip(x, self.bounds))


@dataclass(frozen=True)
class Region:
    """A subset of the location space eligible for discovery.

    One of:
      * index_set: a nonempty, sorted, duplicate-free tuple of location indices,
      * sphere: Euclidean ball with a center and positive radius,
      * cube: axis-aligned cube with a center and positive halfwidth.
    """

    kind: str  # "index_set" | "sphere" | "cube"
    indices: Optional[tuple[int, ...]] = None
    center: Optional[tuple[float, ...]] = None
    radius: Optional[float] = None
    halfwidth: Optional[float] = None

    @staticmethod
    def index_set(indices: Iterable[int]) -> "Region":
        idx = tuple(int(i) for i in indices)
        if len(idx) == 0:
            raise ValidationError("index_set region must be nonempty")
        if any(i < 0 for i in idx):
            raise ValidationError("index_set indices must be nonnegative")
        if tuple(sorted(set(idx))) != idx:
            raise ValidationError("index_set indices must be sorted and unique")
        return Region(kind="index_set", indices=idx)

    @staticmethod
    def sphere(center: Sequence[float], radius: float) -> "Region":
        if not radius > 0 or not math.isfinite(radius):
            raise ValidationError(f"sphere radius must be positive, got {radius}")
        return Region(kind="sphere", center=tuple(float(c) for c in center), radius=float(radius))

    @staticmethod
    def cube(center: Sequence[float], halfwidth: float) -> "Region":
        if not halfwidth > 0 or not math.isfinite(halfwidth):
            raise ValidationError(f"cube halfwidth must be positive, got {halfwidth}")
        return Region(kind="cube", center=tuple(float(c) for c in center), halfwidth=float(halfwidth))

    @property
    def size(self) -> int:
        if self.kind != "index_set":
            raise ValidationError("size is only defined for index_set regions")
        return len(self.indices)

    @property
    def extent(self) -> float:
        """Radius-like scalar for continuous regions (radius or halfwidth)."""
        if self.kind == "sphere":
            return self.radius
        if self.kind == "cube":
            return self.halfwidth
        raise ValidationError("extent is only defined for continuous regions")

    def validate_against(self, space: LocationSpace) -> None:
        if self.kind == "index_set":
            if space.kind != "discrete":
                raise ValidationError("index_set region requires a discrete space")
            if self.indices[-1] >= space.p:
                raise ValidationError(
                    f"index {self.indices[-1]} out of range for p={space.p}"
                )
        else:
            if space.kind != "continuous":
                raise ValidationError("continuous region requires a continuous space")
            if len(self.center) != space.dim:
                raise ValidationError("region center dimension mismatch")

    # -- geometry ---------------------------------------------------------

    def contains_point(self, x: Sequence[float]) -> bool:
        """Closed containment test for continuous regions."""
        if self.kind == "sphere":
            d2 = sum((xi - ci) ** 2 for xi, ci in zip(x, self.center))
            return d2 <= self.radius**2
        if self.kind == "cube":
            return all(abs(xi - ci) <= self.halfwidth for xi, ci in zip(x, self.center))
        raise ValidationError("contains_point needs a continuous region")

    def point_distance(self, x: Sequence[float]) -> float:
        """Euclidean distance from point to the (closed) region; 0 inside."""
        if self.kind == "sphere":
            d = math.dist(x, self.center)
            return max(0.0, d - self.radius)
        if self.kind == "cube":
            excess = [max(0.0, abs(xi - ci) - self.halfwidth) for xi, ci in zip(x, self.center)]
            return math.sqrt(sum(e * e for e in excess))
        raise ValidationError("point_distance needs a continuous region")

    def overlaps(self, other: "Region") -> bool:
        """Positive-measure overlap. Boundary tangency counts as disjoint."""
        if self.kind == "index_set" and other.kind == "index_set":
            return bool(set(self.indices) & set(other.indices))
        if self.kind == "index_set" or other.kind == "index_set":
            raise ValidationError("cannot mix index_set and continuous regions")
        if self.kind == "sphere" and other.kind == "sphere":
            return math.dist(self.center, other.center) < self.radius + other.radius
        if self.kind == "cube" and other.kind == "cube":
            return all(
                abs(a - b) < self.halfwidth + other.halfwidth
                for a, b in zip(self.center, other.center)
            )
        sph, cub = (self, other) if self.kind == "sphere" else (other, self)
        excess = [max(0.0, abs(a - b) - cub.halfwidth) for a, b in zip(sph.center, cub.center)]
        return math.sqrt(sum(e * e for e in excess)) < sph.radius

    def contains_region(self, other: "Region") -> bool:
        """Exact geometric/set containment: ``other`` subset of ``self``."""
        if self.kind == "index_set" and other.kind == "index_set":
            return set(other.indices) <= set(self.indices)
        if self.kind == "index_set" or other.kind == "index_set":
            return False
        d = math.dist(self.center, other.center)
        if self.kind == "sphere" and other.kind == "sphere":
            return d + other.radius <= self.radius
        if self.kind == "cube" and other.kind == "cube":
            return all(
                abs(a - b) + other.halfwidth <= self.halfwidth
                for a, b in zip(self.center, other.center)
            )
        if self.kind == "cube" and other.kind == "sphere":
            return all(
                abs(a - b) + other.radius <= self.halfwidth
                for a, b in zip(self.center, other.center)
            )
        # sphere contains cube: the farthest corner must lie inside
        corner2 = sum(
            (abs(a - b) + other.halfwidth) ** 2 for a, b in zip(self.center, other.center)
        )
        return math.sqrt(corner2) <= self.radius

    def canonical_key(self, quantum: float = 0.0) -> tuple:
        """Hashable key identifying the region up to float noise in centers."""
        if self.kind == "index_set":
            return ("index_set", self.indices)
        if quantum > 0:
            center = tuple(round(c / quantum) for c in self.center)
        else:
            center = self.center
        return (self.kind, center, self.extent)


@dataclass
class CandidateGroup:
    """A region eligible for discovery: the unit the LP decides over.

    ``pip`` is filled in by the PIP estimators, ``weight`` by a weight
    function; both may be provided up front. ``count_interval`` (lo, hi) turns
    the group into a count assertion: "the number of signals in this region
    lies in [lo, hi]".
    """

    id: str
    region: Region
    count_interval: Optional[tuple[int, int]] = None
    weight: Optional[float] = None
    pip: Optional[float] = None

    def __post_init__(self):
        if self.count_interval is not None:
            lo, hi = self.count_interval
            if lo < 1 or hi < lo:
                raise ValidationError(f"invalid count interval ({lo}, {hi})")
            self.count_interval = (int(lo), int(hi))
        if self.weight is not None and not (self.weight >= 0 and math.isfinite(self.weight)):
            raise ValidationError(f"weight must be finite and >= 0, got {self.weight}")
        if self.pip is not None and not (0.0 <= self.pip <= 1.0):
            raise ValidationError(f"pip must lie in [0, 1], got {self.pip}")

    def canonical_key(self, quantum: float = 0.0) -> tuple:
        return (self.region.canonical_key(quantum), self.count_interval)

    def with_pip(self, pip: float) -> "CandidateGroup":
        return replace(self, pip=float(pip))


def group_id_for_region(region: Region, count_interval: Optional[tuple[int, int]] = None) -> str:
    """Deterministic human-readable id derived from the canonical region."""
    if region.kind == "index_set":
        idx = region.indices
        if len(idx) == 1:
            base = f"i{idx[0]}"
        elif idx == tuple(range(idx[0], idx[-1] + 1)):
            base = f"i{idx[0]}-{idx[-1]}"
        else:
            base = "i" + ".".join(str(i) for i in idx)
    else:
        tag = "s" if region.kind == "sphere" else "c"
        coords = ",".join(format(c, ".9g") for c in region.center)
        base = f"{tag}r{format(region.extent, '.9g')}@{coords}"
    if count_interval is not None:
        lo, hi = count_interval
        base += f"|n{lo}-{hi}"
    return base


def make_group(
    region: Region,
    count_interval: Optional[tuple[int, int]] = None,
    weight: Optional[float] = None,
    pip: Optional[float] = None,
) -> CandidateGroup:
    return CandidateGroup(
        id=group_id_for_region(region, count_interval),
        region=region,
        count_interval=count_interval,
        weight=weight,
        pip=pip,
    )


@dataclass(frozen=True)
class WeightFn:
    """Maps a candidate group to a strictly positive discovery weight.

    Built-in kinds:
      * inverse_size:           1/m for an index set of size m (singletons get 1)
      * log_inverse_size:       1/(1 + log2 m)
      * inverse_radius:         1/r for spheres, 1/halfwidth for cubes
      * inverse_count_interval: 1/|J| for a count interval J
      * constant:               c
      * custom:                 explicit id -> weight table
    """

    kind: str
    c: float = 1.0
    table: Optional[dict] = None

    @staticmethod
    def inverse_size() -> "WeightFn":
        return WeightFn(kind="inverse_size")

    @staticmethod
    def log_inverse_size() -> "WeightFn":
        return WeightFn(kind="log_inverse_size")

    @staticmethod
    def inverse_radius() -> "WeightFn":
        return WeightFn(kind="inverse_radius")

    @staticmethod
    def inverse_count_interval() -> "WeightFn":
        return WeightFn(kind="inverse_count_interval")

    @staticmethod
    def constant(c: float) -> "WeightFn":
        return WeightFn(kind="constant", c=float(c))

    @staticmethod
    def custom(table: dict) -> "WeightFn":
        return WeightFn(kind="custom", table=dict(table))

    def __call__(self, group: CandidateGroup) -> float:
        if self.kind == "inverse_size":
            w = 1.0 / group.region.size
        elif self.kind == "log_inverse_size":
            w = 1.0 / (1.0 + math.log2(group.region.size))
        elif self.kind == "inverse_radius":
            w = 1.0 / group.region.extent
        elif self.kind == "inverse_count_interval":
            if group.count_interval is None:
                raise ValidationError(f"group {group.id} has no count interval")
            lo, hi = group.count_interval
            w = 1.0 / (hi - lo + 1)
        elif self.kind == "constant":
            w = self.c
        elif self.kind == "custom":
            if group.id not in self.table:
                raise ValidationError(f"no weight for group {group.id} in custom table")
            w = float(self.table[group.id])
        else:
            raise ValidationError(f"unknown weight function kind {self.kind!r}")
        if not (w > 0 and math.isfinite(w)):
            raise ValidationError(f"weight for group {group.id} must be positive finite, got {w}")
        return w


def resolve_weights(
    groups: Sequence[CandidateGroup], weight_fn: Optional[WeightFn]
) -> list[float]:
    """Evaluate weights, falling back to precomputed ``group.weight``."""
    out = []
    for g in groups:
        if weight_fn is not None:
            out.append(weight_fn(g))
        elif g.weight is not None:
            if not g.weight > 0:
                raise ValidationError(f"group {g.id} has nonpositive stored weight")
            out.append(g.weight)
        else:
            raise ValidationError(f"group {g.id} has no weight and no weight_fn was given")
    return out


@dataclass(frozen=True)
class ErrorRateSpec:
    """Which Bayesian error rate to control, and at what level.

    kinds: fdr(q), local_fdr(q), pfer(v), fwer(q, grid_tol).
    """

    kind: str
    q: Optional[float] = None
    v: Optional[float] = None
    grid_tol: float = 1e-3

    @staticmethod
    def fdr(q: float) -> "ErrorRateSpec":
        _check_q(q)
        return ErrorRateSpec(kind="fdr", q=float(q))

    @staticmethod
    def local_fdr(q: float) -> "ErrorRateSpec":
        _check_q(q)
        return ErrorRateSpec(kind="local_fdr", q=float(q))

    @staticmethod
    def pfer(v: float) -> "ErrorRateSpec":
        if not v > 0:
            raise ValidationError(f"pfer level v must be positive, got {v}")
        return ErrorRateSpec(kind="pfer", v=float(v))

    @staticmethod
    def fwer(q: float, grid_tol: float = 1e-3) -> "ErrorRateSpec":
        _check_q(q)
        if not grid_tol > 0:
            raise ValidationError(f"grid_tol must be positive, got {grid_tol}")
        return ErrorRateSpec(kind="fwer", q=float(q), grid_tol=float(grid_tol))

    @property
    def level(self) -> float:
        return self.v if self.kind == "pfer" else self.q


def _check_q(q: float) -> None:
    if not (0.0 < q < 1.0):
        raise ValidationError(f"nominal level q must lie in (0, 1), got {q}")


@dataclass(frozen=True)
class Discovery:
    group: CandidateGroup
    selection_prob: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.selection_prob <= 1.0):
            raise ValidationError(
                f"selection_prob must lie in (0, 1], got {self.selection_prob}"
            )


@dataclass
class DetectionSet:
    """Final disjoint discoveries plus the certificate fields.

    ``objective`` is the achieved expected resolution-adjusted power
    sum(pip * weight) over discoveries; ``upper_bound`` is the relaxed-LP
    optimum, so objective <= upper_bound up to float slack.
    """

    discoveries: list[Discovery]
    objective: float
    upper_bound: float
    error_budget_used: float
    error_spec: ErrorRateSpec
    info: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.discoveries)

    @property
    def groups(self) -> list[CandidateGroup]:
        return [d.group for d in self.discoveries]

    def regions_disjoint(self) -> bool:
        gs = self.groups
        for i in range(len(gs)):
            for j in range(i + 1, len(gs)):
                if gs[i].region.overlaps(gs[j].region):
                    return False
        return True

    def budget_ok(self, slack: float = BUDGET_SLACK) -> bool:
        spec = self.error_spec
        pips = np.array([d.group.pip for d in self.discoveries], dtype=float)
        if len(pips) == 0:
            return True
        total_miss = float(np.sum(1.0 - pips))
        if spec.kind == "fdr":
            return total_miss <= spec.q * len(pips) + slack
        if spec.kind == "local_fdr":
            return bool(np.all(pips >= 1.0 - spec.q - slack))
        # pfer; fwer in mode A is pfer at v = q, mode B stores the probed v
        level = self.info.get("pfer_level", spec.level)
        return total_miss <= level + slack
