"""Candidate-group generation: contiguous windows, cluster trees, lattice shapes.

The guiding principle is to throw every plausibly useful region into the
candidate set and let the solver pick; generators here only have to be
exhaustive within their family, deterministic, and cheap.
"""

from __future__ import annotations

import math
import warnings
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import (
    CENTER_QUANTUM_REL,
    CandidateGroup,
    LocationSpace,
    Region,
    make_group,
)
from .errors import ValidationError

__all__ = [
    "contiguous_groups",
    "hierarchical_groups",
    "dissimilarity_from_corr",
    "lattice_regions",
    "dedupe",
    "default_regression_groups",
    "DEFAULT_KAPPA_GRID",
    "DEFAULT_MAX_SIZE",
]

# Location-prefilter grid and maximum group size used by the default
# regression recipe.
DEFAULT_KAPPA_GRID = (0.0, 0.01, 0.02, 0.03, 0.05, 0.1, 0.2)
DEFAULT_MAX_SIZE = 25


def contiguous_groups(locations: Sequence[int], max_size: int) -> list[CandidateGroup]:
    """All windows of up to ``max_size`` consecutive entries of ``locations``.

    Contiguity is in the ordering of the (sorted, unique) input list, not in
    raw index adjacency, so a pre-filtered location list still produces
    windows over its surviving members. An empty input yields an empty list.
    """
    if max_size < 1:
        raise ValidationError(f"max_size must be >= 1, got {max_size}")
    locs = [int(x) for x in locations]
    if locs != sorted(set(locs)):
        raise ValidationError("locations must be sorted and unique")
    out = []
    n = len(locs)
    for size in range(1, max_size + 1):
        for start in range(0, n - size + 1):
            out.append(make_group(Region.index_set(locs[start : start + size])))
    return out


def dissimilarity_from_corr(corr: np.ndarray, kind: str = "abs_one_minus") -> np.ndarray:
    """Turn a correlation-like matrix into a dissimilarity matrix.

    ``abs_one_minus`` maps entry c to |1 - c| (unit diagonal required);
    ``one_plus`` maps c to 1 + c. The diagonal is zeroed in both cases.
    """
    corr = np.asarray(corr, dtype=float)
    if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
        raise ValidationError("correlation matrix must be square")
    if not np.allclose(corr, corr.T, atol=1e-8):
        raise ValidationError("correlation matrix must be symmetric")
    if kind == "abs_one_minus":
        if not np.allclose(np.diag(corr), 1.0, atol=1e-6):
            raise ValidationError("abs_one_minus requires a unit diagonal")
        d = np.abs(1.0 - corr)
    elif kind == "one_plus":
        d = 1.0 + corr
    else:
        raise ValidationError(f"unknown dissimilarity kind {kind!r}")
    np.fill_diagonal(d, 0.0)
    return d


def hierarchical_groups(
    dissimilarity: np.ndarray,
    linkage: str = "average",
    max_size: int = DEFAULT_MAX_SIZE,
    locations: Optional[Sequence[int]] = None,
) -> list[CandidateGroup]:
    """Merge-tree clusters of size <= max_size under agglomerative clustering.

    Runs the naive O(p^3) agglomeration with single / average / complete
    linkage; ties in the minimum dissimilarity break toward the lowest pair
    index so results are reproducible. Every tree node (including leaves) of
    size <= max_size becomes a candidate group; an oversized internal node
    does not suppress its small descendants.

    ``locations`` maps matrix rows to location indices (defaults to 0..p-1).
    """
    if linkage not in ("single", "average", "complete"):
        raise ValidationError(f"unknown linkage {linkage!r}")
    if max_size < 1:
        raise ValidationError(f"max_size must be >= 1, got {max_size}")
    d = np.asarray(dissimilarity, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValidationError("dissimilarity matrix must be square")
    if not np.allclose(d, d.T, atol=1e-8):
        raise ValidationError("dissimilarity matrix must be symmetric")
    if np.any(np.diag(d) != 0.0):
        raise ValidationError("dissimilarity matrix must have a zero diagonal")
    if np.any(d < 0):
        raise ValidationError("dissimilarities must be nonnegative")

    p = d.shape[0]
    locs = list(range(p)) if locations is None else [int(x) for x in locations]
    if len(locs) != p:
        raise ValidationError("locations length must match matrix size")

    clusters: dict[int, list[int]] = {i: [locs[i]] for i in range(p)}
    nodes: list[list[int]] = [list(c) for c in clusters.values()]
    # Masked matrix search: retired rows are set to inf. flat argmin scans in
    # row-major order, which is exactly the lowest-(i, j) tie break.
    dist = d.astype(float).copy()
    dist[np.tril_indices(p, 0)] = np.inf
    sizes = np.ones(p)
    alive = np.ones(p, dtype=bool)
    for _ in range(p - 1):
        flat = int(np.argmin(dist))
        i, j = divmod(flat, p)
        merged = sorted(clusters[i] + clusters[j])
        nodes.append(merged)
        # Lance-Williams update of row/column i; row j retires.
        rows_i = np.minimum(i, np.arange(p)), np.maximum(i, np.arange(p))
        di = dist[rows_i]
        rows_j = np.minimum(j, np.arange(p)), np.maximum(j, np.arange(p))
        dj = dist[rows_j]
        if linkage == "single":
            new = np.minimum(di, dj)
        elif linkage == "complete":
            new = np.maximum(di, dj)
        else:
            new = (sizes[i] * di + sizes[j] * dj) / (sizes[i] + sizes[j])
        new[~alive] = np.inf
        new[[i, j]] = np.inf
        dist[rows_i] = new
        dist[rows_j] = np.inf
        alive[j] = False
        clusters[i] = merged
        sizes[i] += sizes[j]
        del clusters[j]

    out = []
    seen = set()
    for node in nodes:
        if len(node) <= max_size:
            key = tuple(node)
            if key not in seen:
                seen.add(key)
                out.append(make_group(Region.index_set(node)))
    return out


def lattice_regions(
    space: LocationSpace,
    radii: Sequence[float],
    shape: str = "sphere",
    extra_centers: Optional[Sequence[Sequence[float]]] = None,
) -> list[CandidateGroup]:
    """Spheres/cubes of each radius centered on the radius-scaled lattice.

    For radius r the centers are the points r*z, z integer, that fall inside
    the box, plus one region of radius r around every extra center. A radius
    exceeding the box extent is skipped with a warning. Duplicate centers
    (lattice vs extra) collapse during id canonicalization.
    """
    if space.kind != "continuous":
        raise ValidationError("lattice_regions requires a continuous space")
    if shape not in ("sphere", "cube"):
        raise ValidationError(f"unknown shape {shape!r}")
    extras = [tuple(float(c) for c in pt) for pt in (extra_centers or [])]
    for pt in extras:
        if not space.contains_point(pt):
            raise ValidationError(f"extra center {pt} outside the location space")

    extent = min(hi - lo for lo, hi in space.bounds)
    quantum = CENTER_QUANTUM_REL * extent
    maker = Region.sphere if shape == "sphere" else Region.cube

    out: list[CandidateGroup] = []
    seen: set[tuple] = set()
    for r in radii:
        if not r > 0:
            raise ValidationError(f"radii must be positive, got {r}")
        if r > extent:
            warnings.warn(f"radius {r} exceeds the box extent {extent}; skipped")
            continue
        axes = [
            np.arange(math.ceil(lo / r - 1e-12), math.floor(hi / r + 1e-12) + 1)
            for lo, hi in space.bounds
        ]
        grids = np.meshgrid(*axes, indexing="ij")
        centers = np.stack([g.ravel() for g in grids], axis=-1) * r
        for c in centers:
            region = maker(c, r)
            key = region.canonical_key(quantum)
            if key not in seen:
                seen.add(key)
                out.append(make_group(region))
        for pt in extras:
            region = maker(pt, r)
            key = region.canonical_key(quantum)
            if key not in seen:
                seen.add(key)
                out.append(make_group(region))
    return out


def dedupe(groups: Iterable[CandidateGroup], quantum: Optional[float] = None) -> list[CandidateGroup]:
    """One group per canonical (region, count_interval); first-seen id wins.

    Continuous centers are quantized before hashing so centers differing by
    float noise collapse. Output is ordered by canonical key, which makes the
    result independent of input order up to the choice of surviving id.
    """
    groups_list = list(groups)
    if quantum is None:
        continuous = [g for g in groups_list if g.region.kind != "index_set"]
        if continuous:
            span = max(
                max(abs(c) + g.region.extent for c in g.region.center) for g in continuous
            )
            quantum = CENTER_QUANTUM_REL * max(span, 1.0)
        else:
            quantum = 0.0
    by_key: dict[tuple, CandidateGroup] = {}
    for g in groups_list:
        key = g.canonical_key(quantum)
        if key not in by_key:
            by_key[key] = g
    return [by_key[k] for k in sorted(by_key, key=_key_sort_token)]


def _key_sort_token(key: tuple) -> tuple:
    region_key, interval = key
    return (repr(region_key), repr(interval))


def default_regression_groups(
    sample_matrix: np.ndarray,
    design: Optional[np.ndarray] = None,
    kappa_grid: Sequence[float] = DEFAULT_KAPPA_GRID,
    max_size: int = DEFAULT_MAX_SIZE,
) -> list[CandidateGroup]:
    """Candidate groups for regression problems, built from posterior samples.

    ``sample_matrix`` is the N x p binary matrix of per-sample signal
    indicators. For every threshold kappa in the grid, locations with marginal
    PIP >= kappa are kept and then grouped two ways: all contiguous windows of
    size <= max_size, and all small clusters from single/average/complete
    linkage trees over two dissimilarities (|1 - corr(X)| when a design matrix
    is given, and 1 + corr(indicators) when the indicators vary). The union is
    deduplicated.
    """
    eps = np.asarray(sample_matrix)
    if eps.ndim != 2:
        raise ValidationError("sample_matrix must be N x p")
    eps = (eps != 0).astype(float)
    marginals = eps.mean(axis=0)
    p = eps.shape[1]

    diss_list: list[np.ndarray] = []
    if design is not None:
        design = np.asarray(design, dtype=float)
        if design.shape[1] != p:
            raise ValidationError("design matrix column count must match sample_matrix")
        corr_x = _safe_corr(design)
        diss_list.append(dissimilarity_from_corr(corr_x, "abs_one_minus"))
    corr_eps = _safe_corr(eps)
    diss_list.append(dissimilarity_from_corr(corr_eps, "one_plus"))

    out: list[CandidateGroup] = []
    for kappa in kappa_grid:
        kept = [int(j) for j in range(p) if marginals[j] >= kappa]
        if not kept:
            continue
        out.extend(contiguous_groups(kept, max_size))
        if len(kept) >= 2:
            for d in diss_list:
                sub = d[np.ix_(kept, kept)]
                for linkage in ("single", "average", "complete"):
                    out.extend(hierarchical_groups(sub, linkage, max_size, locations=kept))
    return dedupe(out)


def _safe_corr(mat: np.ndarray) -> np.ndarray:
    """Correlation matrix with zero-variance columns treated as uncorrelated."""
    mat = np.asarray(mat, dtype=float)
    centered = mat - mat.mean(axis=0)
    sd = centered.std(axis=0)
    ok = sd > 0
    scaled = np.where(ok, centered / np.where(ok, sd, 1.0), 0.0)
    corr = scaled.T @ scaled / mat.shape[0]
    np.fill_diagonal(corr, 1.0)
    return np.clip(corr, -1.0, 1.0)
