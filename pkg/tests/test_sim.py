import math

import numpy as np
import pytest

from resdet.core import (
    DetectionSet,
    Discovery,
    ErrorRateSpec,
    Region,
    WeightFn,
    make_group,
)
from resdet.sim import (
    avg_jaccard,
    changepoint_design,
    evaluate,
    gen_ark_design,
    gen_sparse_glm,
)


def detset(groups):
    return DetectionSet(
        discoveries=[Discovery(group=g) for g in groups],
        objective=0.0,
        upper_bound=0.0,
        error_budget_used=0.0,
        error_spec=ErrorRateSpec.fdr(0.1),
    )


class TestArkDesign:
    def test_k1_is_iid_standard_normal(self):
        X = gen_ark_design(50_000, 6, k=1, seed=0)
        corr = np.corrcoef(X, rowvar=False)
        off = corr[~np.eye(6, dtype=bool)]
        assert np.max(np.abs(off)) < 0.03
        assert np.max(np.abs(X.var(axis=0) - 1.0)) < 0.05

    def test_unit_population_variance(self):
        n = 100_000
        X = gen_ark_design(n, 10, k=5, seed=1)
        tol = 3.0 * math.sqrt(2.0 / n)
        assert np.max(np.abs(X.var(axis=0) - 1.0)) < tol

    def test_local_dependence_decays(self):
        # dependence is deliberately strong, but the average |corr| still
        # decays beyond the process order
        near, far = [], []
        for seed in range(100):
            X = gen_ark_design(400, 20, k=3, seed=seed)
            corr = np.abs(np.corrcoef(X, rowvar=False))
            near.append(np.mean([corr[j, j + 1] for j in range(19)]))
            far.append(np.mean([corr[j, j + 9] for j in range(11)]))
        assert np.mean(near) > np.mean(far) + 0.05

    def test_deterministic(self):
        assert np.array_equal(gen_ark_design(20, 8, 3, seed=5), gen_ark_design(20, 8, 3, seed=5))


class TestSparseGlm:
    def test_all_nonzero_when_saturated(self):
        X = np.random.default_rng(0).standard_normal((10, 7))
        data = gen_sparse_glm(X, sparsity=1.0, seed=0)
        assert np.all(data.beta != 0.0)

    def test_coefficients_clear_floor(self):
        X = np.random.default_rng(1).standard_normal((10, 50))
        for seed in range(20):
            data = gen_sparse_glm(X, sparsity=0.3, tau2=0.5, seed=seed)
            nz = data.beta[data.beta != 0]
            assert np.all(np.abs(nz) > 0.1 * math.sqrt(0.5))

    def test_signal_count_exact(self):
        rng = np.random.default_rng(2)
        for trial in range(100):
            p = int(rng.integers(2, 60))
            s = float(rng.uniform(0.01, 1.0))
            X = np.zeros((4, p))
            data = gen_sparse_glm(X, sparsity=s, seed=trial)
            assert len(data.signals) == math.ceil(s * p)
            assert np.count_nonzero(data.beta) == math.ceil(s * p)

    def test_probit_outcome(self):
        X = np.random.default_rng(3).standard_normal((40, 5))
        data = gen_sparse_glm(X, sparsity=0.4, link="probit", seed=1)
        assert set(np.unique(data.outcome)) <= {0, 1}
        assert np.array_equal(data.outcome, (data.latent >= 0).astype(int))


class TestChangepointDesign:
    def test_t3_columns(self):
        X = changepoint_design(3)
        assert X.T.tolist() == [[1, 1, 1], [0, 1, 1], [0, 0, 1]]

    def test_single_shift(self):
        X = changepoint_design(5)
        beta = np.zeros(5)
        beta[1] = 2.0
        mu = X @ beta
        assert mu.tolist() == [0.0, 2.0, 2.0, 2.0, 2.0]

    def test_cancelling_shifts(self):
        T = 100
        X = changepoint_design(T)
        beta = np.zeros(T)
        beta[49], beta[51] = 5.0, -5.0
        mu = X @ beta
        assert mu[48] == 0.0 and mu[49] == 5.0 and mu[50] == 5.0 and mu[52] == 0.0

    def test_gram_matrix_closed_form(self):
        T = 12
        X = changepoint_design(T)
        G = X.T @ X
        want = np.minimum.outer(np.arange(T, 0, -1), np.arange(T, 0, -1))
        assert np.array_equal(G, want)

    def test_columns_monotone_steps(self):
        X = changepoint_design(8)
        assert np.all(np.diff(X, axis=0) >= 0)


class TestEvaluate:
    def test_perfect_singletons(self):
        truth = [2, 5, 9]
        groups = [make_group(Region.index_set([t])) for t in truth]
        res = evaluate(detset(groups), truth, weight_fn=WeightFn.inverse_size())
        assert res.power == pytest.approx(3.0)
        assert res.normalized_power == pytest.approx(1.0)
        assert res.fdp == 0.0

    def test_half_credit_for_pairs(self):
        groups = [make_group(Region.index_set([0, 1]))]
        res = evaluate(detset(groups), [0], weight_fn=WeightFn.inverse_size())
        assert res.power == pytest.approx(0.5)

    def test_false_discovery_counted(self):
        groups = [make_group(Region.index_set([0])), make_group(Region.index_set([5]))]
        res = evaluate(detset(groups), [0], weight_fn=WeightFn.inverse_size())
        assert res.n_true == 1 and res.n_false == 1
        assert res.fdp == 0.5

    def test_matches_recount_oracle(self):
        rng = np.random.default_rng(4)
        for trial in range(30):
            truth = sorted(rng.choice(30, size=5, replace=False).tolist())
            groups = []
            for _ in range(6):
                size = int(rng.integers(1, 4))
                start = int(rng.integers(0, 30 - size))
                groups.append(make_group(Region.index_set(range(start, start + size))))
            groups = list({g.id: g for g in groups}.values())
            res = evaluate(detset(groups), truth, weight_fn=WeightFn.inverse_size())
            power = 0.0
            n_true = 0
            for g in groups:
                hit = any(t in g.region.indices for t in truth)
                n_true += hit
                power += hit / len(g.region.indices)
            assert res.power == pytest.approx(power)
            assert res.n_true == n_true
            assert res.fdp == pytest.approx((len(groups) - n_true) / len(groups))
            assert res.normalized_power <= 1.0 + 1e-12

    def test_continuous_with_slack(self):
        g = make_group(Region.sphere((0.5, 0.5), 0.1))
        det = detset([g])
        just_out = np.array([[0.5, 0.6049]])
        res0 = evaluate(det, just_out, weight_fn=WeightFn.inverse_radius(), slack=0.0)
        assert res0.n_true == 0
        res1 = evaluate(det, just_out, weight_fn=WeightFn.inverse_radius(), slack=0.005)
        assert res1.n_true == 1
        assert res1.power == pytest.approx(10.0)

    def test_count_interval_truth(self):
        region = Region.sphere((0.5, 0.5), 0.2)
        g_ok = make_group(region, count_interval=(2, 2))
        g_bad = make_group(region, count_interval=(1, 1))
        truth = np.array([[0.5, 0.5], [0.55, 0.5]])
        res = evaluate(
            detset([g_ok, g_bad]), truth, weight_fn=WeightFn.inverse_count_interval()
        )
        assert res.n_true == 1 and res.n_false == 1


class TestAvgJaccard:
    def test_identical_sets(self):
        a = detset([make_group(Region.index_set([0, 1]))])
        assert avg_jaccard(a, a) == 1.0

    def test_disjoint_supports(self):
        a = detset([make_group(Region.index_set([0]))])
        b = detset([make_group(Region.index_set([5]))])
        assert avg_jaccard(a, b) == 0.0

    def test_documented_value(self):
        a = detset([make_group(Region.index_set([1, 2]))])
        b = detset([make_group(Region.index_set([2, 3]))])
        assert avg_jaccard(a, b) == pytest.approx(1.0 / 3.0)

    def test_empty_conventions(self):
        empty = detset([])
        nonempty = detset([make_group(Region.index_set([0]))])
        assert avg_jaccard(empty, empty) == 1.0
        assert avg_jaccard(empty, nonempty) == 0.0

    def test_symmetry(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            ga = [
                make_group(Region.index_set(sorted(rng.choice(12, size=3, replace=False))))
                for _ in range(3)
            ]
            gb = [
                make_group(Region.index_set(sorted(rng.choice(12, size=2, replace=False))))
                for _ in range(2)
            ]
            ga = list({g.id: g for g in ga}.values())
            gb = list({g.id: g for g in gb}.values())
            assert avg_jaccard(detset(ga), detset(gb)) == pytest.approx(
                avg_jaccard(detset(gb), detset(ga))
            )
