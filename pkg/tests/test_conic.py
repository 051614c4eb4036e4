import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from smkl.conic import (
    PSD,
    SOC,
    CapacityError,
    ConicError,
    ConicProgram,
    Nonneg,
    RotatedSOC,
    Status,
    Zero,
    block_values,
    dump_program,
    load_program,
    psd_matrix,
    solve,
    triu_pairs,
)


def scalar_program(rows, g, cone, cost=1.0):
    p = ConicProgram()
    x = p.add_variable("x", 1)
    p.add_cost(x, cost)
    p.add_matrix_block(sp.csr_matrix(np.array(rows, dtype=float).reshape(-1, 1)), np.array(g, dtype=float), cone)
    return p


def test_nonneg():
    s = solve(scalar_program([1.0], [-1.0], Nonneg(1)))
    assert s.status is Status.OPTIMAL and s.values["x"][0] == pytest.approx(1.0, abs=1e-7)


def test_psd_two_by_two():
    # [[x, 1], [1, 2]] >= 0 in column-major upper-triangle order (x, 1, 2)
    p = scalar_program([1, 0, 0], [0, 1, 2], PSD(2))
    s = solve(p)
    assert s.primal_obj == pytest.approx(0.5, abs=1e-6)
    ev = np.linalg.eigvalsh(psd_matrix(block_values(p, s.primal)[0], 2))
    assert ev[0] >= -1e-7 * (1 + ev[-1])


def test_second_order_cone():
    s = solve(scalar_program([1, 0, 0], [0, 3, 4], SOC(3)))
    assert s.primal_obj == pytest.approx(5.0, abs=1e-6)


def test_rotated_cone():
    # (u, v, w) means u * v >= w^2 with u, v >= 0: x * 2 >= 9
    s = solve(scalar_program([1, 0, 0], [0, 2, 3], RotatedSOC(3)))
    assert s.primal_obj == pytest.approx(4.5, abs=1e-6)


def test_repeated_cones():
    p = ConicProgram()
    u = p.add_variable("u", 2)
    p.add_cost(u, 1.0)
    F = np.zeros((6, 2))
    F[0, 0] = F[3, 1] = 1.0
    p.add_matrix_block(sp.csr_matrix(F), np.array([0, 2.0, 3.0, 0, 1.0, 1.0]), RotatedSOC(3), "pair", count=2)
    s = solve(p)
    assert np.allclose(s.values["u"], [4.5, 1.0], atol=1e-6)


def test_zero_cone_and_infeasible():
    s = solve(scalar_program([1.0], [-3.0], Zero(1)))
    assert s.values["x"][0] == pytest.approx(3.0, abs=1e-7)
    p = scalar_program([1.0], [-1.0], Nonneg(1))
    p.add_matrix_block(sp.csr_matrix(np.array([[-1.0]])), np.array([0.0]), Nonneg(1))
    assert solve(p).status is Status.INFEASIBLE


def test_unbounded():
    p = scalar_program([1.0], [0.0], Nonneg(1), cost=-1.0)
    assert solve(p).status is Status.UNBOUNDED


def test_structural_errors():
    p = ConicProgram()
    p.add_variable("x", 2)
    with pytest.raises(ConicError):
        p.add_matrix_block(sp.csr_matrix(np.ones((2, 2))), np.zeros(3), Nonneg(3))
    with pytest.raises(ConicError):
        p.add_variable("x", 1)


def test_memory_guard():
    p = ConicProgram()
    x = p.add_variable("x", 1)
    p.add_cost(x, 1.0)
    side = 60
    rows = side * (side + 1) // 2
    F = sp.csr_matrix((np.ones(1), ([0], [0])), shape=(rows, 1))
    p.add_matrix_block(F, np.zeros(rows), PSD(side))
    with pytest.raises(CapacityError):
        solve(p, mem_budget_mb=0.01)


def test_triu_pairs_column_major():
    assert triu_pairs(3) == [(0, 0), (0, 1), (1, 1), (0, 2), (1, 2), (2, 2)]


def test_dump_round_trip(tmp_path):
    p = scalar_program([1, 0, 0], [0, 1, 2], PSD(2))
    path = tmp_path / "prog.txt"
    p.blocks[0].label = "label with spaces"
    dump_program(p, path)
    assert path.read_text().startswith("# smkl-conic v1")
    q = load_program(path)
    assert solve(q).primal_obj == solve(p).primal_obj
    dump_program(q, tmp_path / "again.txt")
    assert (tmp_path / "again.txt").read_text() == path.read_text()


def test_reproducible():
    p = scalar_program([1, 0, 0], [0, 1, 2], PSD(2))
    a, b = solve(p), solve(p)
    assert np.array_equal(a.primal, b.primal) and a.dual_obj == b.dual_obj


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), side=st.integers(2, 6))
def test_random_sdp_weak_duality_and_psd_feasibility(seed, side):
    # min <C, X> over X >= 0, trace(X) = 1, written in svec coordinates
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((side, side))
    Cm = A + A.T
    pairs = triu_pairs(side)
    p = ConicProgram()
    x = p.add_variable("x", len(pairs))
    cost = [Cm[i, j] * (1 if i == j else 2) for i, j in pairs]
    p.add_cost(x, np.array(cost))
    p.add_matrix_block(sp.identity(len(pairs), format="csr"), np.zeros(len(pairs)), PSD(side))
    diag = np.array([1.0 if i == j else 0.0 for i, j in pairs])
    p.add_matrix_block(sp.csr_matrix(diag.reshape(1, -1)), np.array([-1.0]), Zero(1))
    s = solve(p)
    assert s.status is Status.OPTIMAL
    assert s.dual_obj <= s.primal_obj + 1e-7 * (1 + abs(s.primal_obj))
    assert s.primal_obj == pytest.approx(np.linalg.eigvalsh(Cm)[0], abs=1e-6)
    X = psd_matrix(s.values["x"], side)
    ev = np.linalg.eigvalsh(X)
    assert ev[0] >= -1e-7 * (1 + ev[-1])
