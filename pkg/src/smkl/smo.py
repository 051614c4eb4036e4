"""SVM dual solver by sequential minimal optimization.

Solves

    max_a  sum(a) - 1/2 (y*a)^T K (y*a)   s.t.  0 <= a <= C,  y^T a = 0

in the equivalent minimization form ``min 1/2 a^T Q a - e^T a`` with
``Q = diag(y) K diag(y)``. Working pairs are chosen by the maximal violating
pair rule and each pair update is the exact line search clipped to the box.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .kernels import GramMatrix


class SolverError(ValueError):
    pass


class InfeasibleError(SolverError):
    """Labels admit no nontrivial feasible point (single class)."""


class ConditioningError(SolverError):
    """Kernel matrix is not positive semidefinite within tolerance."""


TAU = 1e-12
# pair updates between exact polishing passes over the free multipliers, per sample
POLISH_EVERY = 20
POLISH_MAX_FREE = 500


@dataclass
class DualSolution:
    alpha: np.ndarray
    bias: float
    dual_objective: float
    C: float
    support_indices: np.ndarray = field(default=None)
    iterations: int = 0
    kkt_residual: float = 0.0
    gap: float = 0.0
    converged: bool = True

    def __post_init__(self):
        if self.support_indices is None:
            self.support_indices = np.flatnonzero(self.alpha > 0)


def _as_array(K) -> np.ndarray:
    return K.entries if isinstance(K, GramMatrix) else np.asarray(K, dtype=float)


def check_labels(y) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if not np.all((y == 1.0) | (y == -1.0)):
        raise SolverError("labels must be +1 or -1")
    return y


def dual_objective(K, y, alpha) -> float:
    K = _as_array(K)
    v = check_labels(y) * np.asarray(alpha, dtype=float)
    if K.shape != (v.size, v.size):
        raise SolverError(f"kernel shape {K.shape} does not match {v.size} points")
    return float(np.sum(alpha) - 0.5 * v @ K @ v)


class _RowCache:
    """LRU cache of rows of ``Q = diag(y) K diag(y)``."""

    def __init__(self, K, y, capacity):
        self.K, self.y, self.capacity = K, y, capacity
        self.rows = OrderedDict()

    def __getitem__(self, i):
        row = self.rows.get(i)
        if row is None:
            row = self.y[i] * self.y * self.K[i]
            self.rows[i] = row
            if len(self.rows) > self.capacity:
                self.rows.popitem(last=False)
        else:
            self.rows.move_to_end(i)
        return row


def _violating_pair(alpha, y, G, C):
    v = -y * G
    up = np.where(y > 0, alpha < C, alpha > 0)
    low = np.where(y > 0, alpha > 0, alpha < C)
    if not up.any() or not low.any():
        return -1, -1, 0.0, 0.0
    vu = np.where(up, v, -np.inf)
    vl = np.where(low, v, np.inf)
    i = int(np.argmax(vu))
    j = int(np.argmin(vl))
    return i, j, vu[i], vl[j]


def _bias(alpha, y, G, C):
    v = -y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(np.mean(v[free]))
    up = np.where(y > 0, alpha < C, alpha > 0)
    low = np.where(y > 0, alpha > 0, alpha < C)
    if not up.any() and not low.any():
        return 0.0
    if not up.any():
        return float(np.min(v[low]))
    if not low.any():
        return float(np.max(v[up]))
    return 0.5 * float(np.max(v[up]) + np.min(v[low]))


def _free_face_step(alpha, y, G, C, K, max_free=POLISH_MAX_FREE):
    """One exact descent step on the face fixed by the at-bound multipliers.

    Minimizes the dual's quadratic over the free coordinates subject to the
    equality constraint, using a pseudo-inverse Newton step on the curved
    directions plus steepest descent on the flat ones, then cuts the step at
    the box. Returns ``True`` when the step made progress. ``alpha`` and
    ``G`` are updated in place, and the objective never gets worse.
    """
    F = np.flatnonzero((alpha > 0) & (alpha < C))
    if F.size < 2 or F.size > max_free:
        return False
    yF = y[F]
    QF = np.outer(y, yF) * K[:, F]  # columns F of diag(y) K diag(y)
    # orthonormal basis of {d : y_F . d = 0}
    basis = np.linalg.qr(np.column_stack([yF, np.eye(F.size)[:, :-1]]))[0][:, 1:]
    H = basis.T @ QF[F] @ basis
    g = basis.T @ G[F]
    lam, V = np.linalg.eigh(0.5 * (H + H.T))
    gv = V.T @ g
    curved = lam > 1e-10 * max(lam[-1], 1.0)
    coef = np.where(curved, -gv / np.where(curved, lam, 1.0), -gv)
    d = basis @ (V @ coef)
    slope = float(G[F] @ d)
    if not slope < 0:
        return False
    curv = float(d @ QF[F] @ d)
    t = -slope / curv if curv > 0 else np.inf
    with np.errstate(divide="ignore"):
        limit = np.where(d > 0, (C - alpha[F]) / d, np.where(d < 0, -alpha[F] / d, np.inf))
    block = int(np.argmin(limit))
    hit = limit[block] <= t
    t = min(t, float(limit[block]))
    if not np.isfinite(t) or t <= 0:
        return False
    alpha[F] += t * d
    if hit:
        alpha[F[block]] = C if d[block] > 0 else 0.0
    np.clip(alpha, 0.0, C, out=alpha)
    G += QF @ (t * d)
    return True


def kkt_residual(alpha, y, margins, C) -> float:
    """Largest violation of the KKT conditions given ``margins = y * f(x)``."""
    at_zero = alpha <= 0
    at_c = alpha >= C
    free = ~(at_zero | at_c)
    viol = np.zeros_like(margins)
    viol[at_zero] = np.maximum(0.0, 1.0 - margins[at_zero])
    viol[at_c] = np.maximum(0.0, margins[at_c] - 1.0)
    viol[free] = np.abs(margins[free] - 1.0)
    return float(viol.max()) if viol.size else 0.0


def solve_dual(K, y, C: float, kkt_tol: float = 1e-6, max_iter: int = 10**7,
               cache_rows: int = 4096, check_psd: bool = True, stall_limit: int = 20) -> DualSolution:
    """Solve the kernel SVM dual for a fixed Gram matrix.

    Parameters
    ----------
    K : GramMatrix or ndarray
        ``n x n`` positive semidefinite kernel matrix.
    y : array of +1/-1 labels.
    C : box constraint; ``C = 0`` gives the trivial solution.
    kkt_tol : stopping tolerance on the maximal violating pair gap.
    max_iter : cap on pair updates.
    cache_rows : number of kernel rows kept in the LRU cache.
    check_psd : verify ``lambda_min(K) >= -1e-8 * max(1, lambda_max)``.
    stall_limit : consecutive updates that leave ``alpha`` unchanged before giving up.

    Returns
    -------
    DualSolution
        ``alpha``, the bias recovered from free support vectors (midpoint of
        the feasible bias interval when none is free), the dual objective
        and solver statistics.
    """
    K = _as_array(K)
    y = check_labels(y)
    n = y.size
    if K.shape != (n, n):
        raise SolverError(f"kernel shape {K.shape} does not match {n} labels")
    if C < 0:
        raise SolverError("C must be nonnegative")
    if C > 0 and (np.all(y > 0) or np.all(y < 0)):
        raise InfeasibleError("both classes are required for the equality constraint")
    if check_psd and n:
        eig = np.linalg.eigvalsh(K)
        if eig[0] < -1e-8 * max(1.0, eig[-1]):
            raise ConditioningError(f"kernel is not PSD (lambda_min={eig[0]:.3e})")

    alpha = np.zeros(n)
    G = -np.ones(n)
    if C == 0:
        return DualSolution(alpha, 0.0, 0.0, C, iterations=0, kkt_residual=0.0)

    Q = _RowCache(K, y, max(2, cache_rows))
    polish_every = max(1000, POLISH_EVERY * n)
    it = 0
    stalled = 0
    converged = False
    gap = np.inf
    while it < max_iter:
        i, j, m, M = _violating_pair(alpha, y, G, C)
        gap = m - M if i >= 0 else 0.0
        if i < 0 or gap <= kkt_tol:
            converged = True
            break
        it += 1
        Qi, Qj = Q[i], Q[j]
        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = Qi[i] + Qj[j] + 2.0 * Qi[j]
            delta = (-G[i] - G[j]) / max(quad, TAU)
            diff = ai - aj
            new_i, new_j = ai + delta, aj + delta
            if diff > 0:
                if new_j < 0:
                    new_j, new_i = 0.0, diff
                if new_i > C:
                    new_i, new_j = C, C - diff
            else:
                if new_i < 0:
                    new_i, new_j = 0.0, -diff
                if new_j > C:
                    new_j, new_i = C, C + diff
        else:
            quad = Qi[i] + Qj[j] - 2.0 * Qi[j]
            delta = (G[i] - G[j]) / max(quad, TAU)
            total = ai + aj
            new_i, new_j = ai - delta, aj + delta
            if total > C:
                if new_i > C:
                    new_i, new_j = C, total - C
                if new_j > C:
                    new_j, new_i = C, total - C
            else:
                if new_j < 0:
                    new_j, new_i = 0.0, total
                if new_i < 0:
                    new_i, new_j = 0.0, total
        di, dj = new_i - ai, new_j - aj
        if di == 0.0 and dj == 0.0:
            stalled += 1
            if stalled >= stall_limit:
                break
            continue
        stalled = 0
        alpha[i], alpha[j] = new_i, new_j
        G += Qi * di + Qj * dj
        if it % polish_every == 0:
            # flat or nearly singular faces stall first-order pair updates
            for _ in range(n):
                if not _free_face_step(alpha, y, G, C, K):
                    break

    b = _bias(alpha, y, G, C)
    margins = G + 1.0 + y * b
    return DualSolution(
        alpha=alpha,
        bias=b,
        dual_objective=dual_objective(K, y, alpha),
        C=C,
        iterations=it,
        kkt_residual=kkt_residual(alpha, y, margins, C),
        gap=max(0.0, float(gap)),
        converged=converged,
    )


def decision_values(model: DualSolution, K_cross, y) -> np.ndarray:
    """``f(x) = sum_i alpha_i y_i K(x_i, x) + b`` for each column of ``K_cross``."""
    K_cross = np.asarray(K_cross, dtype=float)
    y = check_labels(y)
    if K_cross.ndim != 2 or K_cross.shape[0] != y.size or model.alpha.size != y.size:
        raise SolverError("cross kernel must be n_train x n_test matching the model")
    return (y * model.alpha) @ K_cross + model.bias


def predict(model: DualSolution, K_cross, y) -> np.ndarray:
    f = decision_values(model, K_cross, y)
    return np.where(f >= 0, 1.0, -1.0)
