"""Intersection graphs and greedy edge clique covers.

With continuously located candidate regions, "the selected regions are
pairwise disjoint" is an infinite family of per-point constraints. Covering
every edge of the region-intersection graph with cliques gives a finite,
exactly equivalent family: one row sum_{G in C} x_G <= 1 per clique.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .core import CandidateGroup
from .errors import ValidationError

__all__ = [
    "IntersectionGraph",
    "build_intersection_graph",
    "edge_clique_cover",
    "clique_constraints",
]


@dataclass
class IntersectionGraph:
    """Simple undirected graph over group ids; an edge means regions overlap."""

    vertices: list[str]
    edges: list[tuple[str, str]]

    def __post_init__(self):
        order = {v: i for i, v in enumerate(self.vertices)}
        if len(order) != len(self.vertices):
            raise ValidationError("duplicate vertex ids")
        canon = set()
        for a, b in self.edges:
            if a == b:
                raise ValidationError(f"self-loop at {a}")
            key = (a, b) if order[a] < order[b] else (b, a)
            canon.add(key)
        self.edges = sorted(canon, key=lambda e: (self._order()[e[0]], self._order()[e[1]]))

    def _order(self) -> dict:
        return {v: i for i, v in enumerate(self.vertices)}

    @property
    def n_edges(self) -> int:
        return len(self.edges)


def build_intersection_graph(groups: Sequence[CandidateGroup]) -> IntersectionGraph:
    """Pairwise overlap scan: spheres/cubes by geometry, index sets by sets.

    Tangency does not create an edge; intersection means positive-measure
    overlap. Mixing discrete and continuous regions is an error.
    """
    kinds = {("index_set" if g.region.kind == "index_set" else "continuous") for g in groups}
    if len(kinds) > 1:
        raise ValidationError("cannot mix index_set and continuous regions in one graph")
    ids = [g.id for g in groups]
    if len(set(ids)) != len(ids):
        raise ValidationError("group ids must be unique")
    edges = []
    for i in range(len(groups)):
        ri = groups[i].region
        for j in range(i + 1, len(groups)):
            if ri.overlaps(groups[j].region):
                edges.append((ids[i], ids[j]))
    return IntersectionGraph(vertices=ids, edges=edges)


def edge_clique_cover(graph: IntersectionGraph) -> list[list[str]]:
    """Greedy near-minimal edge clique cover.

    Edges are visited in lexicographic (min id, max id) order of vertex
    positions, components independently. An uncovered edge seeds a clique that
    greedily absorbs the common neighbor with the largest residual degree
    (ties break toward the lowest id), then all clique edges are marked
    covered. Every edge lands in at least one clique and every returned
    clique is fully connected, so the cover has at most |E| cliques.
    """
    order = {v: i for i, v in enumerate(graph.vertices)}
    n = len(graph.vertices)
    adj: list[set[int]] = [set() for _ in range(n)]
    for a, b in graph.edges:
        ia, ib = order[a], order[b]
        adj[ia].add(ib)
        adj[ib].add(ia)

    uncovered = {(min(order[a], order[b]), max(order[a], order[b])) for a, b in graph.edges}
    degree = [len(s) for s in adj]

    cliques: list[list[str]] = []
    for component in _components(adj):
        for v1 in component:
            for v2 in sorted(adj[v1]):
                if v2 < v1 or (v1, v2) not in uncovered:
                    continue
                clique = [v1, v2]
                common = {
                    v for v in adj[v1] & adj[v2] if degree[v] > 0
                }
                while common:
                    best = max(common, key=lambda v: (degree[v], -v))
                    clique.append(best)
                    common &= adj[best]
                for a in range(len(clique)):
                    for b in range(a + 1, len(clique)):
                        e = (min(clique[a], clique[b]), max(clique[a], clique[b]))
                        if e in uncovered:
                            uncovered.remove(e)
                            degree[e[0]] -= 1
                            degree[e[1]] -= 1
                cliques.append([graph.vertices[v] for v in sorted(clique)])
    if uncovered:
        raise ValidationError("internal bookkeeping error: edges left uncovered")
    return cliques


def _components(adj: list[set[int]]) -> list[list[int]]:
    n = len(adj)
    seen = [False] * n
    comps = []
    for start in range(n):
        if seen[start]:
            continue
        stack, comp = [start], []
        seen[start] = True
        while stack:
            v = stack.pop()
            comp.append(v)
            for w in adj[v]:
                if not seen[w]:
                    seen[w] = True
                    stack.append(w)
        comps.append(sorted(comp))
    return comps


def clique_constraints(cliques: Sequence[Sequence[str]]) -> list[list[str]]:
    """One disjointness row per clique: sum of the member variables <= 1.

    Thin adapter between a clique cover and the LP assembler; isolated
    vertices appear in no clique and therefore in no row.
    """
    return [list(c) for c in cliques if len(c) >= 2]


def dump_cliques(cliques: Sequence[Sequence[str]], fh) -> None:
    """Debug dump: one clique per line, member ids space-separated."""
    for c in cliques:
        fh.write(" ".join(c) + "\n")
