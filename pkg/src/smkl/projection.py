"""Exact kernel-weight update: projection onto sparse simplex vectors.

For fixed dual variables the weight subproblem

    min_beta  sum_i (-1/2 beta_i d_i + lam beta_i^2)
    s.t.      beta >= 0, sum(beta) = 1, ||beta||_0 <= k0

has the same minimizer as the Euclidean projection of ``w = d / (4 lam)``
onto ``{||beta||_0 <= k0} & simplex``, which the greedy selector and simplex
projector (GSSP) computes exactly: keep the ``k0`` largest entries, project
them onto the simplex, zero the rest.

Ties are broken by (value descending, index ascending) everywhere, so equal
entries keep the lowest indices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import KernelBank

SUM_TOL = 1e-10


class ProjectionError(ValueError):
    pass


@dataclass(frozen=True)
class KernelWeights:
    beta: np.ndarray
    k0: int

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float).ravel()
        if self.k0 < 1:
            raise ProjectionError("k0 must be at least 1")
        if np.any(beta < 0):
            raise ProjectionError("kernel weights must be nonnegative")
        if abs(beta.sum() - 1.0) > SUM_TOL:
            raise ProjectionError(f"kernel weights sum to {beta.sum():.12g}, expected 1")
        if np.count_nonzero(beta) > self.k0:
            raise ProjectionError(f"{np.count_nonzero(beta)} nonzero weights exceed k0={self.k0}")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

    @property
    def q(self) -> int:
        return self.beta.size

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.beta)


def descending_order(w: np.ndarray) -> np.ndarray:
    """Indices sorted by value descending, ties by index ascending."""
    return np.argsort(-np.asarray(w, dtype=float), kind="stable")


def margin_vector(bank: KernelBank, y, alpha) -> np.ndarray:
    """``d_i = (y*alpha)^T K_i (y*alpha)`` for every kernel in the bank."""
    v = np.asarray(y, dtype=float) * np.asarray(alpha, dtype=float)
    if v.shape != (bank.n,):
        raise ProjectionError(f"dual vector has length {v.size}, bank has n={bank.n}")
    return np.einsum("qij,i,j->q", bank.stack, v, v)


def simplex_threshold(sorted_desc: np.ndarray) -> tuple[float, int]:
    """Threshold ``tau`` and active count ``rho`` for a descending vector."""
    css = np.cumsum(sorted_desc)
    j = np.arange(1, sorted_desc.size + 1)
    rho = int(np.flatnonzero(sorted_desc > (css - 1.0) / j)[-1]) + 1
    tau = (css[rho - 1] - 1.0) / rho
    return float(tau), rho


def gssp_project(w, k0: int) -> KernelWeights:
    w = np.asarray(w, dtype=float).ravel()
    q = w.size
    if not np.all(np.isfinite(w)):
        raise ProjectionError("w must be finite")
    if not 1 <= k0 <= q:
        raise ProjectionError(f"k0 must satisfy 1 <= k0 <= q={q}, got {k0}")
    S = descending_order(w)[:k0]
    tau, _ = simplex_threshold(w[S])
    beta = np.zeros(q)
    beta[S] = np.maximum(w[S] - tau, 0.0)
    beta /= beta.sum()
    return KernelWeights(beta, k0)


def beta_objective(d, beta, lam: float) -> float:
    """Weight-subproblem objective ``sum(-1/2 beta_i d_i + lam beta_i^2)``."""
    beta = np.asarray(beta, dtype=float)
    return float(np.sum(-0.5 * beta * np.asarray(d, dtype=float) + lam * beta**2))


def beta_best_response(bank: KernelBank, y, alpha, lam: float, k0: int) -> KernelWeights:
    if not lam > 0:
        raise ProjectionError(f"lambda must be positive, got {lam}")
    d = margin_vector(bank, y, alpha)
    return gssp_project(d / (4.0 * lam), k0)
