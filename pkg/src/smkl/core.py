"""Alternating best response for sparse multiple kernel learning.

Each sweep solves the SVM dual for the current kernel mix, then replaces the
weights by their exact best response (a GSSP projection). Progress is tracked
with the regularized dual objective

    J = sum(alpha) - 1/2 (y*alpha)^T K(beta) (y*alpha) + lam ||beta||^2

and the loop stops after ``max_iter`` sweeps or once ``patience`` consecutive
sweeps fail to improve the best value by at least ``eps``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .kernels import KernelBank, KernelError, mix
from .projection import KernelWeights, beta_best_response
from .smo import DualSolution, dual_objective, solve_dual

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class KSparseRandom:
    seed: int = 0


@dataclass(frozen=True)
class WarmStart:
    weights: KernelWeights


@dataclass
class SmklConfig:
    C: float = 10.0
    lam: float = 0.1
    k0: int = 1
    eps: float = 1e-6
    patience: int = 3
    max_iter: int = 100
    init: KSparseRandom | WarmStart = field(default_factory=KSparseRandom)
    kkt_tol: float = 1e-6

    def __post_init__(self):
        if not self.C > 0:
            raise ConfigError(f"C must be positive, got {self.C}")
        if not self.lam > 0:
            raise ConfigError(f"lambda must be positive, got {self.lam}")
        if int(self.k0) != self.k0 or self.k0 < 1:
            raise ConfigError(f"k0 must be a positive integer, got {self.k0}")
        if not self.eps > 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        if self.patience < 1:
            raise ConfigError(f"patience must be a positive integer, got {self.patience}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be a positive integer, got {self.max_iter}")
        self.k0 = int(self.k0)


class StopReason(str, Enum):
    MAX_ITER = "max_iter"
    STALLED = "stalled"


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    objective: float
    non_decrease: int
    improved: bool


@dataclass
class SmklResult:
    """Fitted sparse MKL model.

    ``alpha`` and ``beta`` are the last strictly improving pair and
    ``best_objective`` its ``J`` value. Because ``beta`` is a best response
    to ``alpha``, ``J`` never exceeds the optimal value of the min-max
    problem; ``upper_bound`` is the objective actually attained by the
    returned weights, ``max_alpha J(alpha, beta)``, computed by ``model``,
    the SVM re-solved on ``K(beta)``. The two agree at a mutual best response.
    """

    alpha: DualSolution
    beta: KernelWeights
    objective_trace: list[float]
    best_objective: float
    iterations_run: int
    stop_reason: StopReason
    trace: list[TraceRecord]
    beta_trace: list[np.ndarray]
    alpha_trace: list[np.ndarray]
    model: DualSolution
    upper_bound: float

    @property
    def saved_best_trace(self) -> list[float]:
        """``obj_best`` after every sweep."""
        out, best = [], np.inf
        for rec in self.trace:
            if rec.improved:
                best = rec.objective
            out.append(best)
        return out


@dataclass(frozen=True)
class ConvergenceCheck:
    holds: bool
    lhs: float
    rhs: float
    rate: float


def objective_J(bank: KernelBank, y, alpha, beta, lam: float) -> float:
    beta = np.asarray(getattr(beta, "beta", beta), dtype=float)
    return dual_objective(mix(bank, beta), y, alpha) + lam * float(beta @ beta)


def weights_value(bank: KernelBank, y, beta, C: float, lam: float, kkt_tol: float = 1e-6):
    """``max_alpha J(alpha, beta)`` for fixed weights, with the SVM solution."""
    beta = np.asarray(getattr(beta, "beta", beta), dtype=float)
    sol = solve_dual(mix(bank, beta), y, C, kkt_tol=kkt_tol, check_psd=False)
    return sol.dual_objective + lam * float(beta @ beta), sol


def init_ksparse_random(q: int, k0: int, seed) -> KernelWeights:
    if not 1 <= k0 <= q:
        raise ConfigError(f"k0 must satisfy 1 <= k0 <= q={q}, got {k0}")
    rng = np.random.default_rng(seed)
    S = rng.choice(q, size=k0, replace=False)
    beta = np.zeros(q)
    beta[S] = 1.0 / k0
    beta /= beta.sum()
    return KernelWeights(beta, k0)


def _initial_weights(q: int, config: SmklConfig) -> KernelWeights:
    init = config.init
    if isinstance(init, KSparseRandom):
        return init_ksparse_random(q, config.k0, init.seed)
    if isinstance(init, WarmStart):
        w = init.weights
        beta = np.asarray(getattr(w, "beta", w), dtype=float)
        if beta.size != q:
            raise ConfigError(f"warm start has {beta.size} weights, bank has {q} kernels")
        return KernelWeights(beta, config.k0)
    raise ConfigError(f"unknown initialization {init!r}")


def fit(bank: KernelBank, y, config: SmklConfig) -> SmklResult:
    y = np.asarray(y, dtype=float)
    if y.shape != (bank.n,):
        raise KernelError(f"{y.size} labels for a bank over {bank.n} points")
    if config.k0 > bank.q:
        raise ConfigError(f"k0={config.k0} exceeds the number of kernels q={bank.q}")

    beta_prev = _initial_weights(bank.q, config)
    non_decrease = 0
    obj_best = np.inf
    saved = None
    trace, objectives, betas, alphas = [], [], [], []
    stop = StopReason.MAX_ITER
    for t in range(1, config.max_iter + 1):
        K = mix(bank, beta_prev.beta)
        sol = solve_dual(K, y, config.C, kkt_tol=config.kkt_tol, check_psd=False)
        beta = beta_best_response(bank, y, sol.alpha, config.lam, config.k0)
        J = objective_J(bank, y, sol.alpha, beta, config.lam)
        improved = not (obj_best - J < config.eps)
        if improved:
            non_decrease = 0
            obj_best = J
            saved = (sol, beta)
        else:
            non_decrease += 1
        trace.append(TraceRecord(t, J, non_decrease, improved))
        objectives.append(J)
        betas.append(beta.beta)
        alphas.append(sol.alpha)
        log.debug("iter %d J=%.10g non_decrease=%d support=%s", t, J, non_decrease, beta.support)
        beta_prev = beta
        if non_decrease >= config.patience:
            stop = StopReason.STALLED
            break

    sol, beta = saved
    upper, model = weights_value(bank, y, beta, config.C, config.lam, config.kkt_tol)
    return SmklResult(
        alpha=sol,
        beta=beta,
        objective_trace=objectives,
        best_objective=obj_best,
        iterations_run=len(trace),
        stop_reason=stop,
        trace=trace,
        beta_trace=betas,
        alpha_trace=alphas,
        model=model,
        upper_bound=upper,
    )


def check_linear_convergence_condition(bank: KernelBank, C: float, lam: float, k0: int) -> ConvergenceCheck:
    """Evaluate the sufficient condition for linear convergence.

    ``lhs = C^2 n k0 (max_j lambda_max(K_j))^2`` and
    ``rhs = 2 lam min_j lambda_min(K_j)``; the condition holds when
    ``lhs < rhs`` and ``lhs / rhs`` is the contraction rate.
    """
    eig = np.array([np.linalg.eigvalsh(K) for K in bank.stack])
    lo, hi = eig[:, 0].min(), eig[:, -1].max()
    if lo <= 0:
        raise KernelError(f"all kernels must be positive definite (min eigenvalue {lo:.3e})")
    lhs = C**2 * bank.n * k0 * hi**2
    rhs = 2.0 * lam * lo
    return ConvergenceCheck(bool(lhs < rhs), float(lhs), float(rhs), float(lhs / rhs))
