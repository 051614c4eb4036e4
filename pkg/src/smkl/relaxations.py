"""Convex relaxations of sparse MKL, warm starts, gaps and exact enumeration.

All relaxations share the variables ``(eta, theta, sigma, gamma, beta,
omega, z)``, the objective ``C sum(sigma) + theta / 2 + lam sum(omega)`` and
the constraints

    1 - sigma_i <= y_i (eta + gamma_i),  sigma >= 0,
    beta >= 0, sum(beta) = 1,  0 <= z <= 1, sum(z) <= k0,
    beta_i^2 <= z_i omega_i                       (perspective cones)

and differ in how they enforce ``[[theta, gamma^T], [gamma, K(beta)]] >= 0``:

* ``SDP_FULL``: the full ``(n+1) x (n+1)`` PSD constraint, written on the
  common range of the kernels when they share a null space.
* ``SDP_3X3``: every 3x3 principal minor that contains the ``theta`` row.
* ``SOC_BASIS``: ``theta * K(beta)_jj >= gamma_j^2`` for every ``j``.
* ``SOC_RANDOMIZED``: the basis cones plus
  ``theta * x^T K(beta) x >= (x^T gamma)^2`` for random unit vectors ``x``.
* ``SOCP_DIAGONAL``: for simultaneously diagonalizable banks,
  ``tau_j * sum_i beta_i D_i[j] >= (u_j^T gamma)^2`` and ``theta >= sum(tau)``.

Pinning ``z`` to the indicator of a support makes the full SDP exact for that
support, which :func:`global_enumerate` uses as a ground-truth oracle.
"""

from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp

from . import conic
from .conic import PSD, CapacityError, ConicProgram, Nonneg, RotatedSOC, Status, Zero
from .kernels import KernelBank, KernelError
from .projection import KernelWeights, descending_order

DEFAULT_NUM_RANDOM = 64


class RelaxationError(RuntimeError):
    pass


class InconsistentBoundError(RelaxationError):
    """A lower bound exceeds the heuristic objective: a solver or modeling bug."""


class RelaxationLevel(str, Enum):
    SOC_BASIS = "soc-basis"
    SOC_RANDOMIZED = "soc-rand"
    SDP_3X3 = "sdp-3x3"
    SDP_FULL = "sdp-full"
    SOCP_DIAGONAL = "socp-diag"


@dataclass
class RelaxationOutcome:
    level: RelaxationLevel
    lower_bound: float
    primal_objective: float
    values: dict[str, np.ndarray]
    status: Status
    residuals: dict[str, float]
    solve_time: float = 0.0

    @property
    def beta(self) -> np.ndarray:
        return self.values["beta"]

    @property
    def z(self) -> np.ndarray:
        return self.values["z"]


@dataclass(frozen=True)
class GapReport:
    upper: float
    lower: float
    gap_over_upper: float
    gap_over_lower: float
    certified_optimal: bool


@dataclass
class GlobalSolution:
    objective: float
    beta: np.ndarray
    support: tuple[int, ...]
    by_support: dict[tuple[int, ...], float] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# program assembly


def estimate_mb(level: RelaxationLevel, n: int, q: int, num_random: int = 0) -> float:
    """Memory estimate (MB) of a relaxation before it is built."""
    level = RelaxationLevel(level)
    rows = 4 * n + 4 * q
    dense = 0.0
    if level is RelaxationLevel.SDP_FULL:
        side = (n + 1) * (n + 2) // 2
        dense = float(side) ** 2
        rows += side
    elif level is RelaxationLevel.SDP_3X3:
        pairs = n * (n - 1) // 2
        dense = 36.0 * pairs
        rows += 6 * pairs
    elif level is RelaxationLevel.SOC_RANDOMIZED:
        rows += 3 * (n + num_random)
        dense = float(num_random) * n
    else:
        rows += 3 * n
    return 8.0 * (3 * dense + 4 * rows * (q + 3) + 10 * rows) / 2**20


class _Builder:
    """Shared variables, objective and constraints of every relaxation."""

    def __init__(self, bank: KernelBank, y, C, lam, k0, support=None, fixed_beta=None):
        y = np.asarray(y, dtype=float)
        if y.shape != (bank.n,):
            raise KernelError(f"{y.size} labels for a bank over {bank.n} points")
        if C < 0 or lam < 0:
            raise RelaxationError("C and lambda must be nonnegative")
        if not 1 <= k0 <= bank.q:
            raise RelaxationError(f"k0 must satisfy 1 <= k0 <= q={bank.q}")
        self.bank, self.y, self.n, self.q = bank, y, bank.n, bank.q
        self.pinned = support is not None
        if fixed_beta is not None:
            fixed_beta = np.asarray(fixed_beta, dtype=float)
            support = tuple(np.flatnonzero(fixed_beta)) if support is None else support
            self.pinned = True
        self.active = np.arange(self.q) if support is None else np.asarray(sorted(support), dtype=int)
        if self.pinned and len(self.active) > k0:
            raise RelaxationError(f"support of size {len(self.active)} exceeds k0={k0}")
        qa = len(self.active)
        p = self.prog = ConicProgram()
        self.eta = p.add_variable("eta", 1)[0]
        self.theta = p.add_variable("theta", 1)[0]
        self.sigma = p.add_variable("sigma", self.n)
        self.gamma = p.add_variable("gamma", self.n)
        self.beta = p.add_variable("beta", qa)
        self.omega = p.add_variable("omega", qa)
        self.z = None if self.pinned else p.add_variable("z", qa)
        p.add_cost(self.sigma, C)
        p.add_cost(self.theta, 0.5)
        p.add_cost(self.omega, lam)

        n = self.n
        # hinge: y_i eta + y_i gamma_i + sigma_i - 1 >= 0
        rows = np.repeat(np.arange(n), 3)
        cols = np.column_stack([np.full(n, self.eta), self.gamma, self.sigma]).ravel()
        vals = np.column_stack([y, y, np.ones(n)]).ravel()
        self._add(rows, cols, vals, -np.ones(n), Nonneg(n), "hinge")
        self._add(np.arange(n), self.sigma, np.ones(n), np.zeros(n), Nonneg(n), "sigma>=0")
        self._add(np.arange(qa), self.beta, np.ones(qa), np.zeros(qa), Nonneg(qa), "beta>=0")
        self._add(np.zeros(qa, int), self.beta, np.ones(qa), [-1.0], Zero(1), "simplex")
        # perspective cones: (z_i, omega_i, beta_i), z_i = 1 when pinned
        r = np.arange(qa)
        if self.pinned:
            rr = np.concatenate([3 * r + 1, 3 * r + 2])
            cc = np.concatenate([self.omega, self.beta])
            g = np.zeros(3 * qa)
            g[3 * r] = 1.0
        else:
            rr = np.concatenate([3 * r, 3 * r + 1, 3 * r + 2])
            cc = np.concatenate([self.z, self.omega, self.beta])
            g = np.zeros(3 * qa)
            self._add(r, self.z, -np.ones(qa), np.ones(qa), Nonneg(qa), "z<=1")
            self._add(np.zeros(qa, int), self.z, -np.ones(qa), [float(k0)], Nonneg(1), "cardinality")
        self._add(rr, cc, np.ones(rr.size), g, RotatedSOC(3), "perspective", count=qa)
        if fixed_beta is not None:
            self._add(np.arange(qa), self.beta, np.ones(qa), -fixed_beta[self.active], Zero(qa), "fixed beta")

    def _add(self, rows, cols, vals, g, cone, label, count=1):
        g = np.asarray(g, dtype=float)
        F = sp.csr_matrix((np.asarray(vals, dtype=float), (np.asarray(rows), np.asarray(cols))),
                          shape=(g.size, self.prog.nvar))
        self.prog.add_matrix_block(F, g, cone, label, count)

    def mix_entries(self, a, b):
        """Sparse coefficients of ``K(beta)[a, b]`` on the active beta columns."""
        a, b = np.asarray(a), np.asarray(b)
        coef = self.bank.stack[self.active][:, a, b].T  # (len(a), qa)
        return coef, np.broadcast_to(self.beta, coef.shape)

    def mix_quadratic(self, X):
        """Coefficients of ``x^T K(beta) x`` for each row ``x`` of ``X``."""
        coef = np.einsum("li,qij,lj->lq", X, self.bank.stack[self.active], X)
        return coef, np.broadcast_to(self.beta, coef.shape)

    # level-specific coupling constraints

    def common_range(self, rtol=1e-12):
        """Orthonormal bases of the range and null space shared by the active kernels.

        Every mix ``K(beta)`` has its range inside the range of the summed
        active kernels, so the null directions can be removed from the PSD
        block and imposed on ``gamma`` as equalities.
        """
        S = self.bank.stack[self.active].sum(axis=0)
        w, V = np.linalg.eigh(0.5 * (S + S.T))
        keep = w > rtol * max(w[-1], 1.0)
        return V[:, keep], V[:, ~keep]

    def full_psd(self):
        Q, N = self.common_range()
        if N.shape[1]:
            r = np.repeat(np.arange(N.shape[1]), self.n)
            self._add(r, np.tile(self.gamma, N.shape[1]), N.T.ravel(), np.zeros(N.shape[1]), Zero(N.shape[1]),
                      "null space")
        reduced = N.shape[1] > 0
        side = Q.shape[1] + 1
        cc, rr = np.tril_indices(side)  # column-major upper triangle: (rr <= cc)
        R, Cc, V = [], [], []
        idx = np.arange(rr.size)
        top = rr == 0
        first = idx[top & (cc == 0)]
        R.append(first); Cc.append([self.theta]); V.append([1.0])
        edge = idx[top & (cc > 0)]
        if reduced:
            # row c of the edge is (Q^T gamma)_c
            R.append(np.repeat(edge, self.n)); Cc.append(np.tile(self.gamma, edge.size)); V.append(Q.T.ravel())
        else:
            R.append(edge); Cc.append(self.gamma[cc[edge] - 1]); V.append(np.ones(edge.size))
        inner = ~top
        if reduced:
            Kr = np.einsum("ia,qij,jb->qab", Q, self.bank.stack[self.active], Q)
            coef = Kr[:, rr[inner] - 1, cc[inner] - 1].T
            cols = np.broadcast_to(self.beta, coef.shape)
        else:
            coef, cols = self.mix_entries(rr[inner] - 1, cc[inner] - 1)
        R.append(np.repeat(idx[inner], coef.shape[1])); Cc.append(cols.ravel()); V.append(coef.ravel())
        self._add(np.concatenate(R), np.concatenate(Cc), np.concatenate(V), np.zeros(rr.size), PSD(side), "full psd")

    def minors_3x3(self):
        n = self.n
        if n < 2:
            return self.soc_basis()
        j, k = np.triu_indices(n, 1)
        P = j.size
        base = 6 * np.arange(P)
        qa = len(self.active)
        # row order: (0,0) theta, (0,1) g_j, (1,1) K_jj, (0,2) g_k, (1,2) K_jk, (2,2) K_kk
        R = [base, base + 1, base + 3]
        Cc = [np.full(P, self.theta), self.gamma[j], self.gamma[k]]
        V = [np.ones(P), np.ones(P), np.ones(P)]
        for off, (a, b) in ((2, (j, j)), (4, (j, k)), (5, (k, k))):
            coef, cols = self.mix_entries(a, b)
            R.append(np.repeat(base + off, qa)); Cc.append(cols.ravel()); V.append(coef.ravel())
        self._add(np.concatenate(R), np.concatenate(Cc), np.concatenate(V), np.zeros(6 * P), PSD(3), "3x3 minors", count=P)

    def soc_rows(self, X, label):
        """``theta * x^T K(beta) x >= (x^T gamma)^2`` for each row of ``X``."""
        L = X.shape[0]
        base = 3 * np.arange(L)
        coef, cols = self.mix_quadratic(X)
        qa = coef.shape[1]
        R = [base, np.repeat(base + 1, qa), np.repeat(base + 2, self.n)]
        Cc = [np.full(L, self.theta), cols.ravel(), np.tile(self.gamma, L)]
        V = [np.ones(L), coef.ravel(), X.ravel()]
        self._add(np.concatenate(R), np.concatenate(Cc), np.concatenate(V), np.zeros(3 * L), RotatedSOC(3), label, count=L)

    def soc_basis(self):
        n = self.n
        base = 3 * np.arange(n)
        coef, cols = self.mix_entries(np.arange(n), np.arange(n))
        qa = coef.shape[1]
        R = [base, np.repeat(base + 1, qa), base + 2]
        Cc = [np.full(n, self.theta), cols.ravel(), self.gamma]
        V = [np.ones(n), coef.ravel(), np.ones(n)]
        self._add(np.concatenate(R), np.concatenate(Cc), np.concatenate(V), np.zeros(3 * n), RotatedSOC(3), "basis cones", count=n)

    def diagonal_socp(self):
        bank = self.bank
        if not bank.simdiag:
            raise RelaxationError("the diagonal SOCP needs a simultaneously diagonalizable bank")
        n, U = self.n, bank.U
        tau = self.prog.add_variable("tau", n)
        D = bank.eigvals[self.active]  # (qa, n)
        qa = D.shape[0]
        base = 3 * np.arange(n)
        R = [base, np.repeat(base + 1, qa), np.repeat(base + 2, n)]
        Cc = [tau, np.tile(self.beta, n), np.tile(self.gamma, n)]
        V = [np.ones(n), D.T.ravel(), U.T.ravel()]
        self._add(np.concatenate(R), np.concatenate(Cc), np.concatenate(V), np.zeros(3 * n), RotatedSOC(3), "diag cones", count=n)
        rows = np.zeros(n + 1, dtype=int)
        self._add(rows, np.concatenate([[self.theta], tau]), np.concatenate([[1.0], -np.ones(n)]), [0.0], Nonneg(1), "theta>=sum tau")


def _guard(level, bank, num_random, mem_budget_mb):
    if mem_budget_mb is None:
        return
    need = estimate_mb(level, bank.n, bank.q, num_random)
    if need > mem_budget_mb:
        raise CapacityError(f"{RelaxationLevel(level).value} relaxation needs ~{need:.0f} MB, "
                            f"budget is {mem_budget_mb:.0f} MB")


def random_unit_vectors(n: int, count: int, seed=0) -> np.ndarray:
    X = np.random.default_rng(seed).standard_normal((count, n))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def build_full_sdp(bank, y, C, lam, k0, support=None, fixed_beta=None,
                   mem_budget_mb=conic.DEFAULT_MEM_BUDGET_MB) -> ConicProgram:
    """Full SDP relaxation; ``support``/``fixed_beta`` pin ``z`` (and ``beta``)."""
    _guard(RelaxationLevel.SDP_FULL, bank, 0, mem_budget_mb)
    b = _Builder(bank, y, C, lam, k0, support, fixed_beta)
    b.full_psd()
    return b.prog


def build_soc_basis(bank, y, C, lam, k0, mem_budget_mb=conic.DEFAULT_MEM_BUDGET_MB) -> ConicProgram:
    _guard(RelaxationLevel.SOC_BASIS, bank, 0, mem_budget_mb)
    b = _Builder(bank, y, C, lam, k0)
    b.soc_basis()
    return b.prog


def build_soc_randomized(bank, y, C, lam, k0, num_random=DEFAULT_NUM_RANDOM, seed=0,
                         mem_budget_mb=conic.DEFAULT_MEM_BUDGET_MB) -> ConicProgram:
    if num_random < 0:
        raise RelaxationError("num_random must be nonnegative")
    _guard(RelaxationLevel.SOC_RANDOMIZED, bank, num_random, mem_budget_mb)
    b = _Builder(bank, y, C, lam, k0)
    b.soc_basis()
    if num_random:
        b.soc_rows(random_unit_vectors(bank.n, num_random, seed), "random cones")
    return b.prog


def build_sdp_3x3(bank, y, C, lam, k0, mem_budget_mb=conic.DEFAULT_MEM_BUDGET_MB) -> ConicProgram:
    _guard(RelaxationLevel.SDP_3X3, bank, 0, mem_budget_mb)
    b = _Builder(bank, y, C, lam, k0)
    b.minors_3x3()
    return b.prog


def build_socp_diagonal(bank, y, C, lam, k0, mem_budget_mb=conic.DEFAULT_MEM_BUDGET_MB) -> ConicProgram:
    """Exact SOCP form of the full SDP for banks from ``make_simdiag_bank``."""
    _guard(RelaxationLevel.SOCP_DIAGONAL, bank, 0, mem_budget_mb)
    b = _Builder(bank, y, C, lam, k0)
    b.diagonal_socp()
    return b.prog


def build(level, bank, y, C, lam, k0, num_random=DEFAULT_NUM_RANDOM, seed=0,
          mem_budget_mb=conic.DEFAULT_MEM_BUDGET_MB) -> ConicProgram:
    level = RelaxationLevel(level)
    if level is RelaxationLevel.SOC_RANDOMIZED:
        return build_soc_randomized(bank, y, C, lam, k0, num_random, seed, mem_budget_mb)
    builder = {
        RelaxationLevel.SOC_BASIS: build_soc_basis,
        RelaxationLevel.SDP_3X3: build_sdp_3x3,
        RelaxationLevel.SDP_FULL: build_full_sdp,
        RelaxationLevel.SOCP_DIAGONAL: build_socp_diagonal,
    }[level]
    return builder(bank, y, C, lam, k0, mem_budget_mb=mem_budget_mb)


def _outcome(level, prog: ConicProgram, q: int, active=None, tol=1e-9, max_iter=400,
             mem_budget_mb=conic.DEFAULT_MEM_BUDGET_MB) -> RelaxationOutcome:
    start = time.perf_counter()
    sol = conic.solve(prog, feas_tol=tol, gap_tol=tol, max_iter=max_iter, mem_budget_mb=mem_budget_mb)
    v = dict(sol.values)
    active = np.arange(q) if active is None else np.asarray(active)
    for name in ("beta", "omega"):
        full = np.zeros(q)
        full[active] = v[name]
        v[name] = full
    z = np.zeros(q)
    z[active] = v["z"] if "z" in v else 1.0
    v["z"] = z
    return RelaxationOutcome(
        level=RelaxationLevel(level),
        lower_bound=sol.dual_obj,
        primal_objective=sol.primal_obj,
        values=v,
        status=sol.status,
        residuals=sol.residuals,
        solve_time=time.perf_counter() - start,
    )


def solve_relaxation(level, bank, y, C, lam, k0, num_random=DEFAULT_NUM_RANDOM, seed=0, tol=1e-9,
                     mem_budget_mb=conic.DEFAULT_MEM_BUDGET_MB) -> RelaxationOutcome:
    """Build and solve one relaxation; ``lower_bound`` is the dual objective."""
    prog = build(level, bank, y, C, lam, k0, num_random, seed, mem_budget_mb)
    out = _outcome(level, prog, bank.q, tol=tol, mem_budget_mb=mem_budget_mb)
    if out.status is not Status.OPTIMAL:
        raise RelaxationError(f"{RelaxationLevel(level).value} relaxation ended with status {out.status.value}")
    return out


def solve_fixed_support(bank, y, C, lam, k0, support, fixed_beta=None, tol=1e-9,
                        mem_budget_mb=conic.DEFAULT_MEM_BUDGET_MB) -> RelaxationOutcome:
    """Full SDP with ``z`` pinned to the indicator of ``support`` (exact for that support)."""
    support = tuple(sorted(int(i) for i in support))
    prog = build_full_sdp(bank, y, C, lam, k0, support=support, fixed_beta=fixed_beta, mem_budget_mb=mem_budget_mb)
    out = _outcome(RelaxationLevel.SDP_FULL, prog, bank.q, active=support, tol=tol, mem_budget_mb=mem_budget_mb)
    if out.status is not Status.OPTIMAL:
        raise RelaxationError(f"fixed-support solve {support} ended with status {out.status.value}")
    return out


def global_enumerate(bank, y, C, lam, k0, budget: int = 64, workers: int = 1, tol=1e-9) -> GlobalSolution:
    """Exact optimum by solving the pinned full SDP for every support.

    Supports of size exactly ``min(k0, q)`` suffice: each pinned problem
    still allows zero weights inside its support, so smaller supports are
    covered. Ties are resolved by (objective, support) lexicographically.
    """
    k = min(k0, bank.q)
    count = math.comb(bank.q, k)
    if count > budget:
        raise CapacityError(f"{count} supports exceed the enumeration budget {budget}")
    supports = list(itertools.combinations(range(bank.q), k))

    def run(S):
        return S, solve_fixed_support(bank, y, C, lam, k0, S, tol=tol)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, supports))
    else:
        results = [run(S) for S in supports]
    by_support = {S: out.primal_objective for S, out in results}
    S_best, best = min(results, key=lambda r: (r[1].primal_objective, r[0]))
    beta = np.clip(best.beta, 0.0, None)
    beta /= beta.sum()
    return GlobalSolution(best.primal_objective, beta, S_best, by_support)


def extract_warm_start(outcome: RelaxationOutcome, k0: int) -> KernelWeights:
    """Keep the ``k0`` largest ``z`` entries as support and rescale ``beta`` on it."""
    z = np.asarray(outcome.z, dtype=float)
    S = descending_order(z)[:k0]
    beta = np.zeros(z.size)
    beta[S] = np.clip(outcome.beta[S], 0.0, None)
    mass = beta.sum()
    if mass <= 1e-12:
        beta[S] = 1.0
        mass = float(k0)
    beta /= mass
    return KernelWeights(beta, k0)


def certify_gap(upper: float, lower: float, tol: float = 1e-6) -> GapReport:
    """Relative optimality gaps in percent.

    ``gap_over_upper`` divides by the heuristic objective (the definition);
    ``gap_over_lower`` divides by the lower bound (the convention of the
    published gap tables).
    """
    if not (np.isfinite(upper) and np.isfinite(lower)):
        raise RelaxationError("bounds must be finite")
    slack = tol * max(1.0, abs(upper))
    if lower > upper + slack:
        raise InconsistentBoundError(f"lower bound {lower:.10g} exceeds upper bound {upper:.10g}")
    diff = upper - lower
    over_upper = 100.0 * diff / upper if upper != 0 else (0.0 if diff == 0 else np.inf)
    over_lower = 100.0 * diff / lower if lower != 0 else (0.0 if diff == 0 else np.inf)
    return GapReport(upper, lower, over_upper, over_lower, bool(abs(diff) <= slack))
