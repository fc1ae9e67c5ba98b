"""Line-delimited interchange formats for groups, samples, PIPs, detections.

One JSON record per line, numbers serialized via Python's shortest
round-trip repr, insertion-ordered keys: re-running a pipeline with the same
seed reproduces files byte for byte.
"""

from __future__ import annotations

import json
from typing import Iterable, Optional, TextIO

import numpy as np

from .core import CandidateGroup, DetectionSet, ErrorRateSpec, Region
from .errors import ValidationError
from .pips import PipTable, SampleSet, SusieAlphas

__all__ = [
    "region_to_dict",
    "region_from_dict",
    "write_groups",
    "read_groups",
    "write_samples",
    "read_samples",
    "write_pip_table",
    "read_pip_table",
    "write_detections",
    "read_detections",
    "read_susie_alphas",
]


def region_to_dict(region: Region) -> dict:
    if region.kind == "index_set":
        return {"kind": "index_set", "indices": list(region.indices)}
    if region.kind == "sphere":
        return {"kind": "sphere", "center": list(region.center), "radius": region.radius}
    return {"kind": "cube", "center": list(region.center), "halfwidth": region.halfwidth}


def region_from_dict(d: dict) -> Region:
    kind = d.get("kind")
    if kind == "index_set":
        return Region.index_set(d["indices"])
    if kind == "sphere":
        return Region.sphere(d["center"], d["radius"])
    if kind == "cube":
        return Region.cube(d["center"], d["halfwidth"])
    raise ValidationError(f"unknown region kind {kind!r}")


def _group_to_dict(g: CandidateGroup) -> dict:
    rec = {"id": g.id, "region": region_to_dict(g.region)}
    if g.count_interval is not None:
        rec["count_interval"] = list(g.count_interval)
    if g.weight is not None:
        rec["weight"] = g.weight
    if g.pip is not None:
        rec["pip"] = g.pip
    return rec


def _group_from_dict(rec: dict) -> CandidateGroup:
    ci = rec.get("count_interval")
    return CandidateGroup(
        id=rec["id"],
        region=region_from_dict(rec["region"]),
        count_interval=tuple(ci) if ci is not None else None,
        weight=rec.get("weight"),
        pip=rec.get("pip"),
    )


def write_groups(groups: Iterable[CandidateGroup], fh: TextIO) -> None:
    for g in groups:
        fh.write(json.dumps(_group_to_dict(g)) + "\n")


def read_groups(fh: TextIO) -> list[CandidateGroup]:
    return [_group_from_dict(json.loads(line)) for line in fh if line.strip()]


def write_samples(samples: SampleSet, fh: TextIO) -> None:
    for i, draw in enumerate(samples.draws):
        chain = int(samples.chain_ids[i]) if samples.chain_ids is not None else 0
        if samples.kind == "discrete":
            rec = {"chain": chain, "signals": [int(v) for v in draw]}
        else:
            rec = {"chain": chain, "points": [list(map(float, pt)) for pt in draw]}
        fh.write(json.dumps(rec) + "\n")


def read_samples(fh: TextIO, n_locations: Optional[int] = None) -> SampleSet:
    draws, chains, kind = [], [], None
    for line in fh:
        if not line.strip():
            continue
        rec = json.loads(line)
        if "signals" in rec:
            this_kind = "discrete"
            draws.append(rec["signals"])
        elif "points" in rec:
            this_kind = "continuous"
            draws.append(rec["points"])
        else:
            raise ValidationError("sample record needs 'signals' or 'points'")
        if kind is None:
            kind = this_kind
        elif kind != this_kind:
            raise ValidationError("cannot mix discrete and continuous sample records")
        chains.append(int(rec.get("chain", 0)))
    if kind is None:
        raise ValidationError("sample file is empty")
    if kind == "discrete":
        return SampleSet.discrete(draws, chain_ids=chains, n_locations=n_locations)
    return SampleSet.continuous(draws, chain_ids=chains)


def write_pip_table(table: PipTable, fh: TextIO) -> None:
    fh.write(json.dumps({"meta": {"n_samples": table.n_samples}}) + "\n")
    for gid in sorted(table.group_pips):
        fh.write(json.dumps({"id": gid, "pip": table.group_pips[gid]}) + "\n")
    for loc in sorted(table.marginals):
        fh.write(json.dumps({"loc": loc, "pip": table.marginals[loc]}) + "\n")


def read_pip_table(fh: TextIO) -> PipTable:
    table = PipTable()
    for line in fh:
        if not line.strip():
            continue
        rec = json.loads(line)
        if "meta" in rec:
            table.n_samples = rec["meta"].get("n_samples")
        elif "id" in rec:
            table.group_pips[rec["id"]] = float(rec["pip"])
        elif "loc" in rec:
            table.marginals[int(rec["loc"])] = float(rec["pip"])
        else:
            raise ValidationError("unrecognized pip record")
    return table


def _error_spec_to_dict(spec: ErrorRateSpec) -> dict:
    out = {"kind": spec.kind}
    if spec.q is not None:
        out["q"] = spec.q
    if spec.v is not None:
        out["v"] = spec.v
    if spec.kind == "fwer":
        out["grid_tol"] = spec.grid_tol
    return out


def _error_spec_from_dict(d: dict) -> ErrorRateSpec:
    kind = d["kind"]
    if kind == "fdr":
        return ErrorRateSpec.fdr(d["q"])
    if kind == "local_fdr":
        return ErrorRateSpec.local_fdr(d["q"])
    if kind == "pfer":
        return ErrorRateSpec.pfer(d["v"])
    if kind == "fwer":
        return ErrorRateSpec.fwer(d["q"], d.get("grid_tol", 1e-3))
    raise ValidationError(f"unknown error spec kind {kind!r}")


def write_detections(det: DetectionSet, fh: TextIO) -> None:
    doc = {
        "error_spec": _error_spec_to_dict(det.error_spec),
        "discoveries": [
            {
                "id": d.group.id,
                "region": region_to_dict(d.group.region),
                "count_interval": list(d.group.count_interval)
                if d.group.count_interval
                else None,
                "pip": d.group.pip,
                "weight": d.group.weight,
                "selection_prob": d.selection_prob,
            }
            for d in det.discoveries
        ],
        "objective": det.objective,
        "upper_bound": det.upper_bound,
        "budget_used": det.error_budget_used,
        "flags": {
            k: det.info[k]
            for k in sorted(det.info)
            if isinstance(det.info[k], (int, float, str, bool))
        },
        "relaxed": det.info.get("relaxed", {}),
    }
    json.dump(doc, fh, indent=2)
    fh.write("\n")


def read_detections(fh: TextIO) -> DetectionSet:
    from .core import Discovery

    doc = json.load(fh)
    discoveries = []
    for rec in doc["discoveries"]:
        ci = rec.get("count_interval")
        g = CandidateGroup(
            id=rec["id"],
            region=region_from_dict(rec["region"]),
            count_interval=tuple(ci) if ci else None,
            weight=rec.get("weight"),
            pip=rec.get("pip"),
        )
        discoveries.append(Discovery(group=g, selection_prob=rec.get("selection_prob", 1.0)))
    return DetectionSet(
        discoveries=discoveries,
        objective=doc["objective"],
        upper_bound=doc["upper_bound"],
        error_budget_used=doc["budget_used"],
        error_spec=_error_spec_from_dict(doc["error_spec"]),
        info=dict(doc.get("flags", {})),
    )


def read_susie_alphas(fh: TextIO) -> SusieAlphas:
    rows = []
    for line in fh:
        line = line.strip()
        if line:
            rows.append([float(x) for x in line.split(",")])
    if not rows:
        raise ValidationError("alpha CSV is empty")
    return SusieAlphas(alpha=np.asarray(rows, dtype=float))
