import numpy as np
import pytest
from scipy.optimize import linprog

from resdet.errors import InternalError, ValidationError
from resdet.lpsolve import (
    LpProblem,
    LpRow,
    ResidualTooLarge,
    randomized_rounding,
    solve_relaxed,
    solve_residual_integer,
)


def two_group_instance():
    """max 0.8 x + 0.45 x' s.t. 0.2 x + 0.1 x' <= 0.15 and x + x' <= 1."""
    return LpProblem(
        var_ids=["fine", "coarse"],
        objective=np.array([0.8, 0.45]),
        rows=[
            LpRow(idx=(0, 1), coef=(0.2, 0.1), rhs=0.15, tag="error"),
            LpRow(idx=(0, 1), coef=(1.0, 1.0), rhs=1.0),
        ],
    )


def random_instance(rng, n=None, m=None):
    n = n or int(rng.integers(1, 13))
    m = m if m is not None else int(rng.integers(0, 8))
    c = rng.uniform(0, 1, n)
    rows = []
    for _ in range(m):
        nz = int(rng.integers(1, n + 1))
        idx = tuple(sorted(rng.choice(n, size=nz, replace=False).tolist()))
        coef = tuple(rng.normal(size=nz).tolist())
        rows.append(LpRow(idx=idx, coef=coef, rhs=float(abs(rng.normal()))))
    return LpProblem(var_ids=[f"v{j}" for j in range(n)], objective=c, rows=rows)


class TestSolveRelaxed:
    def test_worked_two_group_instance(self):
        sol = solve_relaxed(two_group_instance())
        assert sol.values == pytest.approx([0.5, 0.5], abs=1e-10)
        assert sol.objective == pytest.approx(0.625, abs=1e-10)

    def test_no_binding_constraints_all_ones(self):
        prob = LpProblem(
            var_ids=["a", "b"],
            objective=np.array([1.0, 2.0]),
            rows=[LpRow(idx=(0, 1), coef=(1.0, 1.0), rhs=100.0)],
        )
        sol = solve_relaxed(prob)
        assert sol.values == pytest.approx([1.0, 1.0])

    def test_empty_problem(self):
        prob = LpProblem(var_ids=[], objective=np.zeros(0), rows=[])
        assert solve_relaxed(prob).objective == 0.0

    def test_matches_reference_solver_on_random_instances(self):
        rng = np.random.default_rng(0)
        for trial in range(30):
            prob = random_instance(rng)
            sol = solve_relaxed(prob)
            assert np.all(sol.values >= -1e-12) and np.all(sol.values <= 1 + 1e-12)
            A = prob.row_matrix().toarray() if prob.rows else None
            b = prob.rhs_vector() if prob.rows else None
            ref = linprog(
                -prob.objective, A_ub=A, b_ub=b,
                bounds=[(0, 1)] * prob.n_vars, method="highs",
            )
            assert ref.status == 0
            rel = abs(sol.objective - (-ref.fun)) / max(1.0, abs(ref.fun))
            assert rel <= 1e-8

    def test_upper_bounds_every_binary_assignment(self):
        rng = np.random.default_rng(1)
        for trial in range(15):
            prob = random_instance(rng, n=int(rng.integers(2, 9)))
            sol = solve_relaxed(prob)
            n = prob.n_vars
            for mask in range(1 << n):
                z = np.array([(mask >> j) & 1 for j in range(n)], dtype=float)
                if prob.check_assignment(z):
                    assert prob.objective @ z <= sol.objective + 1e-8

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        prob = random_instance(rng, n=10, m=6)
        a = solve_relaxed(prob)
        b = solve_relaxed(prob)
        assert np.array_equal(a.values, b.values)

    def test_degenerate_rows(self):
        # zero coefficient row: 0 * x <= 0 never binds
        prob = LpProblem(
            var_ids=["a"],
            objective=np.array([0.9]),
            rows=[LpRow(idx=(0,), coef=(0.0,), rhs=0.0, tag="error")],
        )
        sol = solve_relaxed(prob)
        assert sol.values == pytest.approx([1.0])

    def test_negative_rhs_rejected(self):
        prob = LpProblem(
            var_ids=["a"],
            objective=np.array([1.0]),
            rows=[LpRow(idx=(0,), coef=(1.0,), rhs=-1.0)],
        )
        with pytest.raises(InternalError):
            solve_relaxed(prob)


class TestResidualInteger:
    def test_worked_instance_repair(self):
        prob = two_group_instance()
        res = solve_residual_integer(prob, fixed={})
        assert res.feasible
        assert res.values.tolist() == [0.0, 1.0]  # coarse group wins

    def test_zero_free_variables(self):
        prob = two_group_instance()
        ok = solve_residual_integer(prob, fixed={0: 0.0, 1: 1.0})
        assert ok.feasible and ok.values.tolist() == [0.0, 1.0]
        bad = solve_residual_integer(prob, fixed={0: 1.0, 1: 1.0})
        assert not bad.feasible

    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(3)
        for trial in range(40):
            prob = random_instance(rng, n=8, m=int(rng.integers(1, 6)))
            res = solve_residual_integer(prob, fixed={})
            best = -np.inf
            for mask in range(1 << 8):
                z = np.array([(mask >> j) & 1 for j in range(8)], dtype=float)
                if prob.check_assignment(z):
                    best = max(best, prob.objective @ z)
            assert res.feasible
            assert res.objective == pytest.approx(best, abs=1e-9)

    def test_backends_agree_on_medium_instance(self):
        rng = np.random.default_rng(4)
        prob = random_instance(rng, n=26, m=5)
        bb = solve_residual_integer(prob, fixed={}, max_enum=10, max_branch=40, backend="own")
        assert bb.method == "branch_and_bound"
        auto = solve_residual_integer(prob, fixed={}, max_enum=10)
        assert auto.method == "milp"
        full = solve_residual_integer(prob, fixed={}, max_enum=26)
        assert full.method == "enumeration"
        assert bb.objective == pytest.approx(full.objective, abs=1e-9)
        assert auto.objective == pytest.approx(full.objective, abs=1e-9)

    def test_too_large_raises(self):
        rng = np.random.default_rng(5)
        prob = random_instance(rng, n=12, m=2)
        with pytest.raises(ResidualTooLarge):
            solve_residual_integer(
                prob, fixed={}, max_enum=2, max_branch=5, backend="own"
            )

    def test_respects_fixed_values(self):
        prob = two_group_instance()
        res = solve_residual_integer(prob, fixed={1: 0.0})
        # with the coarse group off, the fine group alone violates the budget
        assert res.feasible and res.values.tolist() == [0.0, 0.0]

    def test_invalid_fixed_value(self):
        with pytest.raises(ValidationError):
            solve_residual_integer(two_group_instance(), fixed={0: 0.5})


class TestRandomizedRounding:
    def test_integral_relaxed_solution_returned_unchanged(self):
        prob = LpProblem(
            var_ids=["a", "b", "c"],
            objective=np.array([0.9, 0.8, 0.7]),
            rows=[
                LpRow(idx=(0, 1, 2), coef=(0.1, 0.2, 0.3), rhs=0.7, tag="error"),
                LpRow(idx=(0, 1), coef=(1.0, 1.0), rhs=1.0),
            ],
        )
        x_star = np.array([1.0, 0.0, 1.0])
        z = randomized_rounding(prob, x_star, pips=np.array([0.9, 0.8, 0.7]), seed=1)
        assert z.tolist() == [1.0, 0.0, 1.0]

    def test_two_group_instance_feasible_and_bounded(self):
        prob = two_group_instance()
        relaxed = solve_relaxed(prob)
        z = randomized_rounding(
            prob, relaxed.values, pips=np.array([0.8, 0.9]), seed=7, n_sample=64
        )
        assert prob.check_assignment(z)
        # only two integer-feasible selections exist: {} and {coarse}
        assert z.tolist() in ([0.0, 0.0], [0.0, 1.0])
        assert prob.objective @ z <= relaxed.objective + 1e-9

    def test_always_feasible_on_random_instances(self):
        rng = np.random.default_rng(6)
        for trial in range(100):
            n = int(rng.integers(2, 12))
            pips = rng.uniform(0.3, 1.0, n)
            weights = rng.uniform(0.1, 1.0, n)
            q = 0.2
            rows = [
                LpRow(idx=tuple(range(n)), coef=tuple(1 - pips - q), rhs=0.0, tag="error")
            ]
            for _ in range(int(rng.integers(0, 4))):
                nz = int(rng.integers(2, n + 1))
                idx = tuple(sorted(rng.choice(n, size=nz, replace=False).tolist()))
                rows.append(LpRow(idx=idx, coef=(1.0,) * nz, rhs=1.0))
            prob = LpProblem(
                var_ids=[f"v{j}" for j in range(n)],
                objective=pips * weights,
                rows=rows,
            )
            relaxed = solve_relaxed(prob)
            z = randomized_rounding(prob, relaxed.values, pips, seed=trial, n_sample=16)
            assert prob.check_assignment(z), trial
            assert set(np.unique(z)) <= {0.0, 1.0}

    def test_seed_determinism(self):
        prob = two_group_instance()
        relaxed = solve_relaxed(prob)
        pips = np.array([0.8, 0.9])
        a = randomized_rounding(prob, relaxed.values, pips, seed=3, n_sample=32)
        b = randomized_rounding(prob, relaxed.values, pips, seed=3, n_sample=32)
        assert np.array_equal(a, b)


class TestLpTextDump:
    def test_external_solver_cross_check(self, tmp_path):
        prob = two_group_instance()
        text = prob.to_lp_text()
        assert "Maximize" in text and "Subject To" in text and "End" in text
        # round-trip through an external reader: scipy has no LP reader, so
        # parse the bound/row counts structurally
        assert sum(1 for line in text.splitlines() if line.startswith(" r")) == len(prob.rows)
        assert text.count("0 <= x") == prob.n_vars
