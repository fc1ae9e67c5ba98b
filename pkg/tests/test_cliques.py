import itertools

import numpy as np
import pytest

from oracles import check_clique_cover, mc_regions_overlap

from resdet.cliques import (
    IntersectionGraph,
    build_intersection_graph,
    clique_constraints,
    edge_clique_cover,
)
from resdet.core import Region, make_group
from resdet.errors import ValidationError


def sphere_group(x, y, r):
    return make_group(Region.sphere((x, y), r))


class TestIntersectionGraph:
    def test_tangent_circles_no_edge(self):
        a, b = sphere_group(0, 0, 1), sphere_group(2, 0, 1)
        g = build_intersection_graph([a, b])
        assert g.n_edges == 0

    def test_concentric_edge(self):
        a, b = sphere_group(0, 0, 1), sphere_group(0, 0, 0.3)
        g = build_intersection_graph([a, b])
        assert g.edges == [(a.id, b.id)]

    def test_index_sets(self):
        a = make_group(Region.index_set([0, 1]))
        b = make_group(Region.index_set([1, 2]))
        c = make_group(Region.index_set([3]))
        g = build_intersection_graph([a, b, c])
        assert g.edges == [(a.id, b.id)]

    def test_mixed_kinds_rejected(self):
        with pytest.raises(ValidationError):
            build_intersection_graph(
                [make_group(Region.index_set([0])), sphere_group(0, 0, 1)]
            )

    def test_random_circles_match_monte_carlo_oracle(self):
        rng = np.random.default_rng(6)
        groups = [
            sphere_group(rng.random(), rng.random(), 0.05 + 0.2 * rng.random())
            for _ in range(14)
        ]
        g = build_intersection_graph(groups)
        edges = set(g.edges)
        by_id = {grp.id: grp for grp in groups}
        for a, b in itertools.combinations(groups, 2):
            # skip near-tangent pairs the point oracle cannot resolve
            d = np.hypot(a.region.center[0] - b.region.center[0],
                         a.region.center[1] - b.region.center[1])
            margin = a.region.radius + b.region.radius - d
            if abs(margin) < 1e-3:
                continue
            want = mc_regions_overlap(a.region, b.region, n_points=200_000, seed=1)
            got = (a.id, b.id) in edges or (b.id, a.id) in edges
            assert got == want, (a.id, b.id, margin)

    def test_self_loops_rejected(self):
        with pytest.raises(ValidationError):
            IntersectionGraph(vertices=["a"], edges=[("a", "a")])


class TestEdgeCliqueCover:
    def _cover_and_check(self, vertices, edges):
        g = IntersectionGraph(vertices=vertices, edges=edges)
        cover = edge_clique_cover(g)
        adjacency = {v: set() for v in vertices}
        for a, b in g.edges:
            adjacency[a].add(b)
            adjacency[b].add(a)
        ok, msg = check_clique_cover(g.edges, cover, adjacency)
        assert ok, msg
        assert len(cover) <= max(1, len(g.edges))
        return cover

    def test_triangle_is_one_clique(self):
        cover = self._cover_and_check(
            ["a", "b", "c"], [("a", "b"), ("a", "c"), ("b", "c")]
        )
        assert len(cover) == 1 and sorted(cover[0]) == ["a", "b", "c"]

    def test_edgeless_graph(self):
        g = IntersectionGraph(vertices=["a", "b"], edges=[])
        assert edge_clique_cover(g) == []

    def test_path_graph(self):
        cover = self._cover_and_check(["a", "b", "c"], [("a", "b"), ("b", "c")])
        assert len(cover) == 2

    def test_random_graphs_cover_all_edges(self):
        rng = np.random.default_rng(2)
        for trial in range(25):
            n = int(rng.integers(5, 61))
            verts = [f"v{i}" for i in range(n)]
            edges = [
                (verts[i], verts[j])
                for i in range(n)
                for j in range(i + 1, n)
                if rng.random() < 0.2
            ]
            self._cover_and_check(verts, edges)

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        n = 30
        verts = [f"v{i}" for i in range(n)]
        edges = [
            (verts[i], verts[j])
            for i in range(n)
            for j in range(i + 1, n)
            if rng.random() < 0.3
        ]
        g = IntersectionGraph(vertices=verts, edges=edges)
        assert edge_clique_cover(g) == edge_clique_cover(g)

    def test_disconnected_components(self):
        cover = self._cover_and_check(
            ["a", "b", "c", "d"], [("a", "b"), ("c", "d")]
        )
        assert len(cover) == 2

    def test_runtime_operation_bound(self):
        # cover size <= |E| and every clique <= |V|: the greedy does at most
        # O(|V|^2) work per added clique, so total work is O(|V|^2 |E|).
        rng = np.random.default_rng(1)
        n = 40
        verts = [f"v{i}" for i in range(n)]
        edges = [
            (verts[i], verts[j])
            for i in range(n)
            for j in range(i + 1, n)
            if rng.random() < 0.4
        ]
        g = IntersectionGraph(vertices=verts, edges=edges)
        cover = edge_clique_cover(g)
        assert len(cover) <= len(edges)
        assert all(len(c) <= n for c in cover)


class TestCliqueConstraints:
    def test_pair_row(self):
        rows = clique_constraints([["A", "B"]])
        assert rows == [["A", "B"]]

    def test_isolated_vertex_in_no_row(self):
        rows = clique_constraints([["A", "B"], ["C"]])
        assert rows == [["A", "B"]]

    def test_feasible_sets_equal_pairwise_enumeration(self):
        # 0/1 vectors feasible under clique rows == those with pairwise
        # disjoint selected regions, on random circle families
        rng = np.random.default_rng(5)
        for trial in range(20):
            k = int(rng.integers(3, 9))
            groups = [
                sphere_group(rng.random(), rng.random(), 0.1 + 0.25 * rng.random())
                for _ in range(k)
            ]
            graph = build_intersection_graph(groups)
            cover = edge_clique_cover(graph)
            rows = clique_constraints(cover)
            idx = {g.id: i for i, g in enumerate(groups)}
            overlap = np.zeros((k, k), dtype=bool)
            for a, b in graph.edges:
                overlap[idx[a], idx[b]] = overlap[idx[b], idx[a]] = True
            for mask in range(1 << k):
                sel = [i for i in range(k) if mask >> i & 1]
                ok_rows = all(
                    sum(1 for gid in row if idx[gid] in sel) <= 1 for row in rows
                )
                ok_pairs = all(
                    not overlap[a, b] for a, b in itertools.combinations(sel, 2)
                )
                assert ok_rows == ok_pairs


class TestDump:
    def test_clique_dump_roundtrip(self, tmp_path):
        import io

        fh = io.StringIO()
        from resdet.cliques import dump_cliques

        dump_cliques([["a", "b", "c"], ["d", "e"]], fh)
        assert fh.getvalue() == "a b c\nd e\n"
