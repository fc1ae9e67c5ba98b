import numpy as np
import pytest

from oracles import naive_continuous_pips, naive_group_pips

from resdet.core import LocationSpace, Region, make_group
from resdet.errors import InternalError, ValidationError
from resdet.groups import lattice_regions
from resdet.pips import (
    PipTable,
    RegionLocator,
    SampleSet,
    SusieAlphas,
    apply_pips,
    count_interval_pips,
    merge_chains,
    pips_continuous,
    pips_from_samples,
    pips_from_susie,
)


def singletons(p):
    return [make_group(Region.index_set([j])) for j in range(p)]


class TestSampleSet:
    def test_discrete_validation(self):
        ss = SampleSet.discrete([[0, 2], []], n_locations=3)
        assert len(ss) == 2
        with pytest.raises(ValidationError):
            SampleSet.discrete([[3]], n_locations=3)
        with pytest.raises(ValidationError):
            SampleSet.discrete([])

    def test_continuous_validation(self):
        space = LocationSpace.continuous([(0, 1), (0, 1)])
        ss = SampleSet.continuous([[[0.5, 0.5]], []], space=space)
        assert ss.dim == 2
        with pytest.raises(ValidationError):
            SampleSet.continuous([[[2.0, 0.0]]], space=space)

    def test_indicator_matrix(self):
        ss = SampleSet.discrete([[0], [1], [0, 1]], n_locations=2)
        mat = ss.indicator_matrix()
        assert mat.tolist() == [[True, False], [False, True], [True, True]]


class TestPipsFromSamples:
    def test_half_hit(self):
        ss = SampleSet.discrete([[1], []], n_locations=3)
        g = make_group(Region.index_set([1, 2]))
        table = pips_from_samples(ss, [g])
        assert table.pip(g.id) == 0.5

    def test_never_hit(self):
        ss = SampleSet.discrete([[0], [0]], n_locations=3)
        g = make_group(Region.index_set([2]))
        assert pips_from_samples(ss, [g]).pip(g.id) == 0.0

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(1)
        indicator = rng.random((50, 20)) < 0.15
        ss = SampleSet.discrete([np.flatnonzero(row) for row in indicator], n_locations=20)
        groups = []
        for _ in range(30):
            size = int(rng.integers(1, 5))
            idx = sorted(rng.choice(20, size=size, replace=False).tolist())
            groups.append(make_group(Region.index_set(idx)))
        groups = {g.id: g for g in groups}.values()
        table = pips_from_samples(ss, list(groups))
        oracle = naive_group_pips(indicator, list(groups))
        for gid, val in oracle.items():
            assert table.pip(gid) == pytest.approx(val, abs=0)

    def test_marginals_in_same_pass(self):
        ss = SampleSet.discrete([[0], [0, 1]], n_locations=3)
        table = pips_from_samples(ss, singletons(3))
        assert table.marginals == {0: 1.0, 1: 0.5, 2: 0.0}

    def test_monotone_and_subadditive(self):
        rng = np.random.default_rng(2)
        indicator = rng.random((40, 10)) < 0.3
        ss = SampleSet.discrete([np.flatnonzero(r) for r in indicator], n_locations=10)
        small = make_group(Region.index_set([2, 3]))
        big = make_group(Region.index_set([1, 2, 3, 4]))
        other = make_group(Region.index_set([1, 4]))
        t = pips_from_samples(ss, [small, big, other])
        assert t.pip(small.id) <= t.pip(big.id)
        assert t.pip(big.id) <= t.pip(small.id) + t.pip(other.id)

    def test_out_of_range_group(self):
        ss = SampleSet.discrete([[0]], n_locations=2)
        with pytest.raises(ValidationError):
            pips_from_samples(ss, [make_group(Region.index_set([5]))])


class TestContinuousPips:
    def _instance(self, seed, n_samples=100):
        rng = np.random.default_rng(seed)
        space = LocationSpace.continuous([(0, 1), (0, 1)])
        groups = lattice_regions(space, [0.5, 0.23, 0.11], "sphere")
        draws = []
        for _ in range(n_samples):
            m = int(rng.integers(0, 4))
            draws.append(rng.random((m, 2)))
        ss = SampleSet.continuous(draws, space=space)
        return ss, groups

    def test_single_point_on_lattice_center(self):
        space = LocationSpace.continuous([(0, 1), (0, 1)])
        groups = lattice_regions(space, [0.5], "sphere")
        ss = SampleSet.continuous([[[0.5, 0.5]]], space=space)
        table = pips_continuous(ss, groups)
        hit = {gid for gid, v in table.group_pips.items() if v == 1.0}
        oracle = {g.id for g in groups if g.region.contains_point((0.5, 0.5))}
        assert hit == oracle
        assert len(oracle) == 5  # center circle plus 4 neighbors at distance .5

    def test_equals_naive_scan(self):
        for seed in range(5):
            ss, groups = self._instance(seed)
            table = pips_continuous(ss, groups)
            oracle = naive_continuous_pips(ss.draws, groups)
            for g in groups:
                assert table.pip(g.id) == pytest.approx(oracle[g.id], abs=0)

    def test_locator_consistency_with_brute_force(self):
        ss, groups = self._instance(11)
        loc = RegionLocator(groups)
        rng = np.random.default_rng(0)
        for _ in range(200):
            pt = rng.random(2)
            got = sorted(g.id for g in loc(pt))
            want = sorted(g.id for g in groups if g.region.contains_point(pt))
            assert got == want

    def test_unknown_group_from_locator(self):
        ss, groups = self._instance(3)
        rogue = make_group(Region.sphere((0.5, 0.5), 0.9))

        def bad_locator(pt):
            return [rogue]

        with pytest.raises(InternalError):
            pips_continuous(ss, groups, locator=bad_locator)


class TestCountIntervalPips:
    def test_always_two_points(self):
        region = Region.sphere((0.5, 0.5), 0.4)
        draws = [[[0.5, 0.5], [0.6, 0.5]] for _ in range(20)]
        ss = SampleSet.continuous(draws)
        out = count_interval_pips(ss, [region], [(1, 2)])
        assert len(out) == 1 and out[0].pip == 1.0
        assert out[0].count_interval == (1, 2)

    def test_half_and_half(self):
        region = Region.cube((0.5, 0.5), 0.5)
        draws = [[[0.5, 0.5]], [[0.4, 0.4], [0.6, 0.6]]] * 10
        ss = SampleSet.continuous(draws)
        out = count_interval_pips(ss, [region], [(1, 1)])
        assert out[0].pip == 0.5

    def test_matches_counting_oracle(self):
        rng = np.random.default_rng(8)
        regions = [
            Region.sphere((0.3, 0.3), 0.2),
            Region.sphere((0.7, 0.7), 0.25),
            Region.cube((0.5, 0.2), 0.15),
        ]
        intervals = [(1, 1), (2, 2), (1, 2)]
        draws = [rng.random((int(rng.integers(0, 6)), 2)) for _ in range(200)]
        ss = SampleSet.continuous(draws)
        out = count_interval_pips(ss, regions, intervals)
        assert len(out) == 9
        for g in out:
            lo, hi = g.count_interval
            region = g.region
            count = 0
            for draw in draws:
                inside = sum(1 for pt in draw if region.contains_point(pt))
                count += lo <= inside <= hi
            assert g.pip == pytest.approx(count / 200, abs=0)


class TestSusie:
    def test_worked_example(self):
        alphas = SusieAlphas(np.tile([0.5, 0.5, 0.0, 0.0], (4, 1)))
        table = pips_from_susie(alphas, singletons(4))
        assert table.pip("i0") == pytest.approx(0.9375, abs=0)
        assert table.pip("i1") == pytest.approx(0.9375, abs=0)

    def test_single_effect_reduction(self):
        alphas = SusieAlphas(np.array([[0.2, 0.3, 0.5]]))
        g = make_group(Region.index_set([0, 2]))
        table = pips_from_susie(alphas, [g])
        assert table.pip(g.id) == pytest.approx(0.7)

    def test_feasibility_property(self):
        # a row putting mass >= 1-q on the group forces pip >= 1-q
        rng = np.random.default_rng(3)
        q = 0.1
        for _ in range(20):
            L, p = 5, 8
            a = rng.dirichlet(np.ones(p), size=L)
            a[2, :3] = (1 - q) / 3 + 1e-9
            a[2, 3:] = (1 - a[2, :3].sum()) / (p - 3)
            alphas = SusieAlphas(a / a.sum(axis=1, keepdims=True))
            g = make_group(Region.index_set([0, 1, 2]))
            table = pips_from_susie(alphas, [g])
            if a[2, :3].sum() >= 1 - q:
                assert table.pip(g.id) >= 1 - q - 1e-9

    def test_monotone_and_row_permutation_invariant(self):
        rng = np.random.default_rng(4)
        a = rng.dirichlet(np.ones(6), size=4)
        alphas = SusieAlphas(a)
        small = make_group(Region.index_set([1, 2]))
        big = make_group(Region.index_set([0, 1, 2, 3]))
        t1 = pips_from_susie(alphas, [small, big])
        assert t1.pip(small.id) <= t1.pip(big.id)
        perm = SusieAlphas(a[::-1].copy())
        t2 = pips_from_susie(perm, [small, big])
        assert t2.pip(small.id) == pytest.approx(t1.pip(small.id), abs=0)

    def test_clamping(self):
        a = np.array([[0.6, 0.4], [0.5, 0.5]])
        g = make_group(Region.index_set([0, 1]))
        table = pips_from_susie(SusieAlphas(a), [g])
        assert table.pip(g.id) == 1.0  # inner sums clamp to 1

    def test_row_sum_validation(self):
        with pytest.raises(ValidationError):
            SusieAlphas(np.array([[0.5, 0.6]]))


class TestMergeChains:
    def test_identical_chains_noop(self):
        ss = SampleSet.discrete([[0], [1]], n_locations=2)
        merged = merge_chains([ss, ss])
        t = pips_from_samples(merged, singletons(2))
        single = pips_from_samples(ss, singletons(2))
        assert t.group_pips == single.group_pips

    def test_split_chains_average(self):
        a = SampleSet.discrete([[0]] * 10, n_locations=2)
        b = SampleSet.discrete([[1]] * 10, n_locations=2)
        t = pips_from_samples(merge_chains([a, b]), singletons(2))
        assert t.pip("i0") == 0.5 and t.pip("i1") == 0.5

    def test_pooling_equals_concatenation(self):
        rng = np.random.default_rng(5)
        chains = []
        for c in range(10):
            rows = rng.random((200, 6)) < 0.2
            chains.append(SampleSet.discrete([np.flatnonzero(r) for r in rows], n_locations=6))
        merged = merge_chains(chains)
        assert len(merged) == 2000
        one = SampleSet.discrete(
            [d for ss in chains for d in ss.draws], n_locations=6
        )
        t1 = pips_from_samples(merged, singletons(6))
        t2 = pips_from_samples(one, singletons(6))
        assert t1.group_pips == t2.group_pips

    def test_table_pooling_weights_by_samples(self):
        t1 = PipTable(group_pips={"a": 1.0}, marginals={0: 1.0}, n_samples=100)
        t2 = PipTable(group_pips={"a": 0.0}, marginals={0: 0.0}, n_samples=300)
        merged = merge_chains([t1, t2])
        assert merged.group_pips["a"] == pytest.approx(0.25)
        assert merged.n_samples == 400
        flat = merge_chains([t1, t2], per_chain_average=True)
        assert flat.group_pips["a"] == pytest.approx(0.5)

    def test_universe_mismatch(self):
        t1 = PipTable(group_pips={"a": 1.0}, n_samples=10)
        t2 = PipTable(group_pips={"b": 1.0}, n_samples=10)
        with pytest.raises(ValidationError):
            merge_chains([t1, t2])


class TestPipTable:
    def test_apply_and_bounds(self):
        gs = singletons(3)
        table = PipTable(group_pips={"i0": 0.4, "i1": 0.9})
        out = apply_pips(gs, table)
        assert [g.pip for g in out] == [0.4, 0.9, 0.0]
        assert all(0.0 <= g.pip <= 1.0 for g in out)
