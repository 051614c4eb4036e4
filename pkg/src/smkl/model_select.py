"""Cross-validated choice of (C, lambda, k0) and held-out evaluation.

Kernel parameters stay fixed; only the three hyperparameters are searched.
Folds are drawn once from the seed and reused for every grid point, and
fold kernels are principal submatrices of the full training bank.
"""

from __future__ import annotations

import csv
import itertools
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import KSparseRandom, SmklConfig, SmklResult, WarmStart, fit, weights_value
from .data_io import SplitDataset, TrainingSet
from .kernels import KernelBank, KernelSpec, build_bank, cross_gram
from .projection import KernelWeights
from .smo import DualSolution, predict

log = logging.getLogger(__name__)

NNZ_THRESHOLD = 1e-3


class SelectionError(ValueError):
    pass


@dataclass
class CvGrid:
    C_values: list[float] = field(default_factory=lambda: [5.0, 10.0, 50.0, 100.0])
    lambda_values: list[float] = field(default_factory=lambda: [0.01, 0.1, 1.0, 10.0, 100.0])
    k0_values: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    folds: int = 10

    def __post_init__(self):
        if not (self.C_values and self.lambda_values and self.k0_values):
            raise SelectionError("every grid axis needs at least one value")
        if self.folds < 2:
            raise SelectionError("at least 2 folds are required")

    @classmethod
    def single(cls, C, lam, k0, folds=10) -> "CvGrid":
        return cls([C], [lam], [k0], folds)

    def points(self) -> list[tuple[float, float, int]]:
        return list(itertools.product(self.C_values, self.lambda_values, self.k0_values))


@dataclass(frozen=True)
class GridScore:
    index: int
    C: float
    lam: float
    k0: int
    fold_accuracies: tuple[float, ...]

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_accuracies))


@dataclass
class CvResult:
    best: SmklConfig
    scores: list[GridScore]
    folds: list[np.ndarray]
    warnings: list[str]


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    nnz_beta: int
    train_time: float
    config: SmklConfig


def fold_partition(n: int, folds: int, seed) -> list[np.ndarray]:
    """Seeded partition of ``range(n)`` into ``folds`` nearly equal parts."""
    if n < folds:
        raise SelectionError(f"{n} training points cannot fill {folds} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def accuracy(model: DualSolution, K_cross, y_train, y_test) -> float:
    pred = predict(model, K_cross, y_train)
    return 100.0 * float(np.mean(pred == np.asarray(y_test)))


def nnz(beta, threshold: float = NNZ_THRESHOLD) -> int:
    return int(np.count_nonzero(np.abs(np.asarray(beta)) > threshold))


def mixed_cross(bank_or_stack, beta) -> np.ndarray:
    """``sum_i beta_i K_i`` over a ``(q, a, b)`` stack of cross blocks."""
    stack = bank_or_stack.stack if isinstance(bank_or_stack, KernelBank) else bank_or_stack
    beta = np.asarray(getattr(beta, "beta", beta), dtype=float)
    S = np.flatnonzero(beta)
    return np.tensordot(beta[S], stack[S], axes=1)


def _score(bank, y, folds, C, lam, k0, seed, warnings):
    accs = []
    for f, va in enumerate(folds):
        tr = np.setdiff1d(np.arange(y.size), va, assume_unique=True)
        if np.unique(y[tr]).size < 2:
            warnings.append(f"fold {f}: training part has one class; predicting that class")
            accs.append(100.0 * float(np.mean(y[va] == y[tr][0])))
            continue
        if np.unique(y[va]).size < 2:
            warnings.append(f"fold {f}: validation part has one class")
        res = fit(bank.subset(tr), y[tr], SmklConfig(C=C, lam=lam, k0=k0, init=KSparseRandom(seed)))
        K_cross = mixed_cross(bank.stack[:, tr][:, :, va], res.beta)
        accs.append(accuracy(res.model, K_cross, y[tr], y[va]))
    return tuple(accs)


def cross_validate(train: TrainingSet, bank: KernelBank | list[KernelSpec], grid: CvGrid, seed: int = 0,
                   log_path: str | Path | None = None, workers: int = 1) -> CvResult:
    """Grid search by k-fold cross-validation.

    The winner maximizes mean validation accuracy; ties go to smaller
    ``k0``, then smaller ``C``, then larger ``lambda``, then grid order.
    ``log_path`` receives one CSV row per grid point.
    """
    if not isinstance(bank, KernelBank):
        bank = build_bank(bank, train.X)
    y = train.y
    q = bank.q
    folds = fold_partition(y.size, grid.folds, seed)
    points = [(i, C, lam, k0) for i, (C, lam, k0) in enumerate(grid.points()) if k0 <= q]
    if not points:
        raise SelectionError(f"every k0 in the grid exceeds the {q} available kernels")
    warnings: list[str] = []

    def run(p):
        i, C, lam, k0 = p
        w: list[str] = []
        return GridScore(i, C, lam, k0, _score(bank, y, folds, C, lam, k0, seed, w)), w

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            out = list(pool.map(run, points))
    else:
        out = [run(p) for p in points]
    scores = [s for s, _ in out]
    for _, w in out:
        warnings.extend(w)
    best = min(scores, key=lambda s: (-s.mean, s.k0, s.C, -s.lam, s.index))
    if log_path is not None:
        with open(log_path, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(["index", "C", "lambda", "k0"] + [f"fold{j}" for j in range(grid.folds)] + ["mean"])
            for s in scores:
                wr.writerow([s.index, repr(s.C), repr(s.lam), s.k0] + [repr(a) for a in s.fold_accuracies] + [repr(s.mean)])
    for w in sorted(set(warnings)):
        log.warning(w)
    return CvResult(SmklConfig(C=best.C, lam=best.lam, k0=best.k0, init=KSparseRandom(seed)), scores, folds, warnings)


def evaluate(model: SmklResult, specs: list[KernelSpec], split: SplitDataset, train_time: float = 0.0,
             config: SmklConfig | None = None) -> EvalReport:
    """Test accuracy of a fitted model using cross kernels against the training points."""
    beta = model.beta.beta
    if beta.size != len(specs):
        raise SelectionError(f"model has {beta.size} weights but {len(specs)} kernel specs were given")
    K_cross = np.zeros((split.train.n, split.test.n))
    for b, spec in zip(beta, specs):
        if b != 0:
            K_cross += b * cross_gram(spec, split.train.X, split.test.X)
    acc = accuracy(model.model, K_cross, split.train.y, split.test.y)
    return EvalReport(acc, nnz(beta), train_time, config)


def timed_fit(bank, y, config: SmklConfig) -> tuple[SmklResult, float]:
    start = time.perf_counter()
    res = fit(bank, y, config)
    return res, time.perf_counter() - start


def multi_restart_fit(bank: KernelBank, y, C: float, lam: float, k0: int,
                      warm: list[KernelWeights] = (), max_supports: int = 64, **kwargs) -> SmklResult:
    """Best of several fits, ranked by the objective attained by the returned weights.

    Starts from every size-``k0`` support with uniform weights (when there
    are at most ``max_supports`` of them, otherwise from seeded random
    supports) plus any given warm starts.
    """
    supports = list(itertools.combinations(range(bank.q), k0))
    inits = []
    if len(supports) <= max_supports:
        for S in supports:
            b = np.zeros(bank.q)
            b[list(S)] = 1.0 / k0
            inits.append(WarmStart(KernelWeights(b, k0)))
    else:
        inits = [KSparseRandom(s) for s in range(max_supports)]
    inits += [WarmStart(w) for w in warm]
    results = [fit(bank, y, SmklConfig(C=C, lam=lam, k0=k0, init=init, **kwargs)) for init in inits]
    return min(results, key=lambda r: r.upper_bound)


def uniform_reference(bank: KernelBank, y, C: float, lam: float = 0.0) -> tuple[float, DualSolution]:
    """Objective and SVM of the uniform mix ``beta = 1/q`` (the average-kernel baseline)."""
    beta = np.full(bank.q, 1.0 / bank.q)
    return weights_value(bank, y, beta, C, lam)
