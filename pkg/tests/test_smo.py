import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import loop_dual_objective, random_labels, random_psd, svm_dual_active_set, svm_dual_qp
from smkl.smo import (
    ConditioningError,
    DualSolution,
    InfeasibleError,
    SolverError,
    decision_values,
    dual_objective,
    predict,
    solve_dual,
)

Y2 = np.array([1.0, -1.0])


def test_two_points_unit_box():
    sol = solve_dual(np.eye(2), Y2, C=1.0)
    assert np.allclose(sol.alpha, [1.0, 1.0], atol=1e-9)
    assert sol.dual_objective == pytest.approx(1.0, abs=1e-12)


def test_two_points_active_box():
    sol = solve_dual(np.eye(2), Y2, C=0.25)
    assert np.allclose(sol.alpha, [0.25, 0.25])
    assert sol.dual_objective == pytest.approx(0.4375, abs=1e-12)


def test_zero_box_gives_zero():
    sol = solve_dual(np.eye(3), np.array([1.0, -1.0, 1.0]), C=0.0)
    assert not sol.alpha.any() and sol.dual_objective == 0.0


def test_errors():
    with pytest.raises(InfeasibleError):
        solve_dual(np.eye(2), np.array([1.0, 1.0]), 1.0)
    with pytest.raises(ConditioningError):
        solve_dual(np.array([[1.0, 2.0], [2.0, 1.0]]), Y2, 1.0)
    with pytest.raises(SolverError):
        solve_dual(np.eye(3), Y2, 1.0)
    with pytest.raises(SolverError):
        solve_dual(np.eye(2), np.array([1.0, 0.0]), 1.0)


def test_dual_objective_by_hand_and_loops(rng):
    assert dual_objective(np.eye(2), Y2, np.zeros(2)) == 0.0
    assert dual_objective(np.eye(2), Y2, np.ones(2)) == 1.0
    for _ in range(20):
        n = int(rng.integers(2, 12))
        K, y, a = random_psd(rng, n), random_labels(rng, n), rng.random(n)
        assert dual_objective(K, y, a) == pytest.approx(loop_dual_objective(K, y, a), abs=1e-12)


def test_decision_values():
    model = DualSolution(np.zeros(3), 0.5, 0.0, 1.0)
    assert np.array_equal(decision_values(model, np.ones((3, 4)), np.array([1.0, -1, 1])), np.full(4, 0.5))
    with pytest.raises(SolverError):
        decision_values(model, np.ones((2, 4)), np.array([1.0, -1]))


def test_training_margins_and_duplicate_point():
    sol = solve_dual(np.eye(2), Y2, C=10.0)
    f = decision_values(sol, np.eye(2), Y2)
    assert np.allclose(Y2 * f, 1.0, atol=1e-9)  # both free support vectors
    # a test point identical to training point 0 has the same kernel column
    assert decision_values(sol, np.eye(2)[:, [0]], Y2)[0] == pytest.approx(f[0])


def test_predict_ties_go_positive():
    model = DualSolution(np.zeros(2), 0.0, 0.0, 1.0)
    assert np.array_equal(predict(model, np.ones((2, 3)), Y2), np.ones(3))


@pytest.mark.parametrize("seed", range(30))
def test_matches_active_set_oracle_small(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    K, y = random_psd(rng, n, int(rng.integers(1, n + 1))), random_labels(rng, n)
    C = float(rng.choice([0.1, 1.0, 10.0]))
    oracle = svm_dual_active_set(K, y, C)
    sol = solve_dual(K, y, C, kkt_tol=1e-9)
    assert abs(sol.dual_objective - oracle) <= 1e-6 * (1 + abs(oracle))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 30), C=st.sampled_from([0.1, 1.0, 10.0]))
def test_feasibility_kkt_and_qp_oracle(seed, n, C):
    rng = np.random.default_rng(seed)
    K, y = random_psd(rng, n, int(rng.integers(1, n + 1))), random_labels(rng, n)
    sol = solve_dual(K, y, C)
    a = sol.alpha
    assert np.all(a >= 0) and np.all(a <= C)
    assert abs(y @ a) <= 1e-8 * n * C
    assert sol.converged and sol.kkt_residual <= 1e-6 + 1e-12
    margins = y * decision_values(sol, K, y)
    assert np.all(margins[a == 0] >= 1 - 1e-6 - 1e-9)
    assert np.all(margins[a == C] <= 1 + 1e-6 + 1e-9)
    oracle, _ = svm_dual_qp(K, y, C)
    assert abs(sol.dual_objective - oracle) <= 1e-6 * (1 + abs(oracle))


def test_objective_monotone_across_pair_updates(rng):
    n = 15
    K, y = random_psd(rng, n), random_labels(rng, n)
    values = [solve_dual(K, y, 1.0, max_iter=m).dual_objective for m in range(0, 60)]
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))


def test_small_cache_gives_same_answer(rng):
    n = 25
    K, y = random_psd(rng, n), random_labels(rng, n)
    a = solve_dual(K, y, 1.0, cache_rows=2)
    b = solve_dual(K, y, 1.0)
    assert np.array_equal(a.alpha, b.alpha)


@pytest.mark.parametrize("seed", range(6))
def test_nearly_singular_kernel_converges(seed):
    # a linear kernel on 3 features plus jitter: most directions are almost flat
    rng = np.random.default_rng(seed)
    n = int(rng.integers(12, 31))
    X = rng.standard_normal((n, 3))
    K = X @ X.T + 1e-6 * np.eye(n)
    y = random_labels(rng, n)
    sol = solve_dual(K, y, 10.0, kkt_tol=1e-10, max_iter=200_000)
    assert sol.converged and sol.kkt_residual <= 1e-9
    assert abs(y @ sol.alpha) <= 1e-8 * n * 10.0
    oracle, _ = svm_dual_qp(K, y, 10.0)
    assert abs(sol.dual_objective - oracle) <= 1e-6 * (1 + abs(oracle))
