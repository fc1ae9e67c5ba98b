"""Adaptive pruning of candidate groups and locations before the LP.

All three filters are pure and idempotent; they only ever shrink their input.
For the strict error rates (local FDR, PFER, FWER) the group prefilter is an
exact validity rule; for the FDR it is a heuristic with a configurable
threshold. Pre-narrowing removes supersets that are dominated by an already
comfortably discoverable subset.
"""

from __future__ import annotations

from typing import Mapping, Optional, Sequence

from .core import CandidateGroup, ErrorRateSpec, WeightFn, resolve_weights
from .errors import UnsupportedOperation, ValidationError

__all__ = ["prefilter_groups", "prefilter_locations", "prenarrow"]

DEFAULT_KAPPA_GROUP = 0.5
DEFAULT_KAPPA_LOC = 0.001


def prefilter_groups(
    groups: Sequence[CandidateGroup],
    error_spec: ErrorRateSpec,
    kappa: float = DEFAULT_KAPPA_GROUP,
) -> list[CandidateGroup]:
    """Drop groups that cannot (or realistically will not) be discovered.

    Under local FDR / PFER / FWER a group with pip < 1 - level can never be
    selected without violating the error rate, so the cut is exact. Under the
    FDR the cut at ``kappa`` is heuristic; kappa=0 disables it.
    """
    if not 0.0 <= kappa <= 1.0:
        raise ValidationError(f"kappa must lie in [0, 1], got {kappa}")
    if error_spec.kind == "fdr":
        threshold = kappa
    else:
        threshold = 1.0 - error_spec.level
    out = []
    for g in groups:
        if g.pip is None:
            raise ValidationError(f"group {g.id} has no pip")
        if g.pip >= threshold:
            out.append(g)
    return out


def prefilter_locations(
    marginals: Mapping[int, float],
    kappa_loc: float = DEFAULT_KAPPA_LOC,
    continuous: bool = False,
) -> list[int]:
    """Locations with marginal PIP >= kappa_loc, sorted.

    Only meaningful for discrete spaces; in a continuous space every single
    point has marginal probability zero, so there is nothing to threshold.
    """
    if continuous:
        raise UnsupportedOperation(
            "location prefiltering does not apply to continuous location spaces"
        )
    return sorted(int(j) for j, m in marginals.items() if m >= kappa_loc)


def prenarrow(
    groups: Sequence[CandidateGroup],
    q: float,
    alpha: Optional[float] = None,
    weight_fn: Optional[WeightFn] = None,
) -> list[CandidateGroup]:
    """Drop supersets dominated by a comfortably discoverable subset.

    A group G2 is removed when some G1 strictly inside it has at least its
    expected power (pip * weight) and pip >= 1 - alpha, i.e. G1 alone is
    discoverable below the nominal level. Applies to FDR-flavored runs only;
    the caller gates on the error rate. Pairs where the subset does not have
    the strictly larger weight are left alone, since the dominance argument
    assumes weights decrease with region growth.
    """
    if alpha is None:
        alpha = q / 2.0
    if not alpha < q:
        raise ValidationError(f"prenarrow alpha must be < q, got alpha={alpha}, q={q}")
    weights = resolve_weights(groups, weight_fn)
    for g in groups:
        if g.pip is None:
            raise ValidationError(f"group {g.id} has no pip")
    killers = [
        (g, w) for g, w in zip(groups, weights) if g.pip >= 1.0 - alpha
    ]
    out = []
    for g, w in zip(groups, weights):
        dropped = False
        for k, kw in killers:
            if k is g or not kw > w:
                continue
            if k.pip * kw >= g.pip * w and g.region.contains_region(k.region):
                dropped = True
                break
        if not dropped:
            out.append(g)
    return out
