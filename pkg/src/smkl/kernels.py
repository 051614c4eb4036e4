"""Kernel families, Gram matrix construction and kernel banks.

Every training Gram matrix goes through the same conditioning pipeline:
raw kernel evaluation, symmetrization ``K <- (K + K.T) / 2`` and a small
diagonal jitter. Families that are not positive semidefinite in general
(sigmoid) receive an additional diagonal shift when the jittered matrix is
still indefinite; the shift is recorded on the resulting ``GramMatrix``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

DEFAULT_JITTER = 1e-6
EXP_CLAMP = 700.0
INDEFINITE_THRESHOLD = -1e-8
EIG_RTOL = 1e-10


class KernelError(ValueError):
    """Invalid kernel parameters, inputs or bank composition."""


class Family(str, Enum):
    LINEAR = "linear"
    POLYNOMIAL = "polynomial"
    RBF = "rbf"
    SIGMOID = "sigmoid"
    LAPLACIAN = "laplacian"


_REQUIRED = {
    Family.LINEAR: set(),
    Family.POLYNOMIAL: {"degree", "scale", "offset"},
    Family.RBF: {"gamma"},
    Family.SIGMOID: {"gamma", "offset"},
    Family.LAPLACIAN: {"gamma"},
}
_PARAMS = ("degree", "scale", "offset", "gamma")


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family together with its parameters.

    ``scale`` is the polynomial multiplier on the inner product, ``offset``
    the additive constant (polynomial ``c0``, sigmoid ``r``) and ``gamma``
    the bandwidth/slope of the RBF, sigmoid and Laplacian families.
    """

    family: Family
    degree: int | None = None
    scale: float | None = None
    offset: float | None = None
    gamma: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        need = _REQUIRED[self.family]
        for p in _PARAMS:
            value = getattr(self, p)
            if p in need and value is None:
                raise KernelError(f"{self.family.value} kernel requires '{p}'")
            if p not in need and value is not None:
                raise KernelError(f"{self.family.value} kernel does not take '{p}'")
        if self.degree is not None:
            if int(self.degree) != self.degree or self.degree < 1:
                raise KernelError(f"degree must be a positive integer, got {self.degree}")
            object.__setattr__(self, "degree", int(self.degree))
        if self.gamma is not None and not self.gamma > 0:
            raise KernelError(f"gamma must be positive, got {self.gamma}")
        if self.scale is not None and not self.scale > 0:
            raise KernelError(f"scale must be positive, got {self.scale}")

    @property
    def name(self) -> str:
        args = ",".join(f"{p}={getattr(self, p):g}" for p in _PARAMS if getattr(self, p) is not None)
        return f"{self.family.value}({args})"

    def to_record(self) -> dict:
        params = {p: getattr(self, p) for p in _PARAMS if getattr(self, p) is not None}
        return {"family": self.family.value, "params": params}

    @classmethod
    def from_record(cls, record: dict) -> "KernelSpec":
        try:
            family = Family(record["family"])
        except (KeyError, ValueError) as exc:
            raise KernelError(f"bad kernel record {record!r}") from exc
        params = dict(record.get("params", {}))
        unknown = set(params) - set(_PARAMS)
        if unknown:
            raise KernelError(f"unknown kernel parameters {sorted(unknown)}")
        return cls(family, **params)

    def evaluate(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        """Raw kernel block ``K[i, j] = k(A[i], B[j])`` with no conditioning."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        if A.shape[1] != B.shape[1]:
            raise KernelError(f"feature dimension mismatch {A.shape[1]} vs {B.shape[1]}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise KernelError("non-finite feature values")
        f = self.family
        if f is Family.LINEAR:
            return A @ B.T
        if f is Family.POLYNOMIAL:
            return (self.scale * (A @ B.T) + self.offset) ** self.degree
        if f is Family.SIGMOID:
            arg = np.clip(self.gamma * (A @ B.T) + self.offset, -EXP_CLAMP, EXP_CLAMP)
            return np.tanh(arg)
        metric = "sqeuclidean" if f is Family.RBF else "cityblock"
        arg = np.clip(-self.gamma * cdist(A, B, metric=metric), -EXP_CLAMP, EXP_CLAMP)
        return np.exp(arg)


@dataclass(frozen=True)
class GramMatrix:
    """Symmetric, jittered ``n x n`` kernel matrix (read-only).

    ``shift`` is the extra diagonal amount added on top of ``jitter`` when the
    matrix was found indefinite; ``degenerate`` flags an all-zero matrix.
    """

    entries: np.ndarray
    jitter: float = DEFAULT_JITTER
    source: str = "precomputed"
    shift: float = 0.0
    degenerate: bool = False

    def __post_init__(self):
        K = np.array(self.entries, dtype=float)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise KernelError(f"Gram matrix must be square, got shape {K.shape}")
        if not np.array_equal(K, K.T):
            raise KernelError("Gram matrix is not exactly symmetric")
        K.setflags(write=False)
        object.__setattr__(self, "entries", K)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries)[0])


def symmetrize(K: np.ndarray) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    return 0.5 * (K + K.T)


def condition(K: np.ndarray, jitter: float = DEFAULT_JITTER, source: str = "precomputed") -> GramMatrix:
    """Symmetrize, add ``jitter * I`` and repair indefiniteness if needed."""
    if jitter < 0:
        raise KernelError("jitter must be nonnegative")
    K = symmetrize(K)
    if not np.all(np.isfinite(K)):
        raise KernelError(f"non-finite kernel entries for {source}")
    n = K.shape[0]
    K = K + jitter * np.eye(n)
    shift = 0.0
    if n:
        lmin = float(np.linalg.eigvalsh(K)[0])
        if lmin < INDEFINITE_THRESHOLD:
            shift = abs(lmin) + 1e-6
            K = K + shift * np.eye(n)
    return GramMatrix(K, jitter=jitter, source=source, shift=shift, degenerate=not np.any(K))


def compute_gram(spec: KernelSpec, X: np.ndarray, jitter: float = DEFAULT_JITTER) -> GramMatrix:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise KernelError("features must be a 2-d array")
    return condition(spec.evaluate(X, X), jitter=jitter, source=spec.name)


@dataclass(frozen=True)
class KernelBank:
    """Ordered collection of ``q`` Gram matrices over the same ``n`` points.

    Banks built by :func:`make_simdiag_bank` also carry their shared
    eigenbasis ``U`` and the per-kernel eigenvalues ``eigvals`` (``q x n``).
    """

    kernels: tuple[GramMatrix, ...]
    specs: tuple[KernelSpec, ...] | None = None
    U: np.ndarray | None = None
    eigvals: np.ndarray | None = None
    stack: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        kernels = tuple(self.kernels)
        if not kernels:
            raise KernelError("a kernel bank needs at least one kernel")
        n = kernels[0].n
        if any(k.n != n for k in kernels):
            raise KernelError("all kernels in a bank must share the same dimension")
        if self.specs is not None and len(self.specs) != len(kernels):
            raise KernelError("specs and kernels differ in length")
        object.__setattr__(self, "kernels", kernels)
        stack = np.stack([k.entries for k in kernels])
        stack.setflags(write=False)
        object.__setattr__(self, "stack", stack)

    @property
    def q(self) -> int:
        return len(self.kernels)

    @property
    def n(self) -> int:
        return self.kernels[0].n

    @property
    def simdiag(self) -> bool:
        return self.U is not None

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray], source: str = "precomputed") -> "KernelBank":
        """Wrap precomputed matrices; they are symmetrized but not jittered."""
        return cls(tuple(GramMatrix(symmetrize(K), jitter=0.0, source=f"{source}[{i}]")
                         for i, K in enumerate(arrays)))

    def subset(self, rows: np.ndarray) -> "KernelBank":
        """Principal submatrices on ``rows`` (fold-local banks for CV)."""
        rows = np.asarray(rows)
        sub = tuple(GramMatrix(k.entries[np.ix_(rows, rows)], jitter=k.jitter, source=k.source, shift=k.shift)
                    for k in self.kernels)
        return KernelBank(sub, specs=self.specs)


def check_weights(beta: np.ndarray, q: int, tol: float = 1e-8) -> np.ndarray:
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.shape != (q,):
        raise KernelError(f"weight vector has length {beta.size}, bank has {q} kernels")
    if np.any(beta < -tol) or abs(beta.sum() - 1.0) > tol:
        raise KernelError("kernel weights must lie on the unit simplex")
    return beta


def mix(bank: KernelBank, beta: np.ndarray) -> np.ndarray:
    """``sum_i beta_i K_i`` as a plain array, skipping zero weights."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (bank.q,):
        raise KernelError(f"weight vector has length {beta.size}, bank has {bank.q} kernels")
    nz = np.flatnonzero(beta)
    if nz.size == 0:
        return np.zeros((bank.n, bank.n))
    if nz.size == 1 and beta[nz[0]] == 1.0:
        return np.array(bank.stack[nz[0]])
    return np.tensordot(beta[nz], bank.stack[nz], axes=1)


def combine(bank: KernelBank, beta) -> GramMatrix:
    """Convex combination of the bank's kernels."""
    beta = check_weights(getattr(beta, "beta", beta), bank.q)
    K = symmetrize(mix(bank, beta))
    return GramMatrix(K, jitter=0.0, source="combined")


def make_simdiag_bank(U: np.ndarray, D_list: Sequence, tol: float = 1e-10) -> KernelBank:
    """Bank of kernels ``K_i = U diag(D_i) U^T`` sharing the eigenbasis ``U``.

    ``D_list`` entries may be diagonal matrices or vectors of eigenvalues.
    """
    U = np.asarray(U, dtype=float)
    n = U.shape[0]
    if U.shape != (n, n) or np.max(np.abs(U.T @ U - np.eye(n))) > tol:
        raise KernelError("U must be square orthogonal")
    diags = []
    for D in D_list:
        D = np.asarray(D, dtype=float)
        d = np.diag(D) if D.ndim == 2 else D
        if d.shape != (n,):
            raise KernelError("each D_i must have n diagonal entries")
        if np.any(d < 0):
            raise KernelError("diagonal entries must be nonnegative")
        diags.append(d)
    kernels = []
    for i, d in enumerate(diags):
        K = symmetrize((U * d) @ U.T)
        kernels.append(GramMatrix(K, jitter=0.0, source=f"simdiag[{i}]", degenerate=not np.any(d)))
    U = U.copy()
    U.setflags(write=False)
    eig = np.array(diags)
    eig.setflags(write=False)
    return KernelBank(tuple(kernels), U=U, eigvals=eig)


def load_kernel_specs(path: str | Path) -> list[KernelSpec]:
    """Read a kernel bank config: a JSON list of ``{family, params}`` records.

    The special name ``default`` (or ``default10``) selects the bundled
    ten-kernel bank.
    """
    if str(path) in ("default", "default10"):
        text = resources.files("smkl").joinpath("data/default10.json").read_text()
    else:
        text = Path(path).read_text()
    records = json.loads(text)
    if not isinstance(records, list) or not records:
        raise KernelError("kernel config must be a nonempty list of records")
    return [KernelSpec.from_record(r) for r in records]


def default_kernel_specs() -> list[KernelSpec]:
    return load_kernel_specs("default")


def build_bank(specs: Sequence[KernelSpec], X: np.ndarray, jitter: float = DEFAULT_JITTER) -> KernelBank:
    return KernelBank(tuple(compute_gram(s, X, jitter) for s in specs), specs=tuple(specs))


def cross_gram(spec: KernelSpec, X_train: np.ndarray, X_test: np.ndarray) -> np.ndarray:
    """``n_train x n_test`` kernel block used at prediction time."""
    return spec.evaluate(X_train, X_test)
