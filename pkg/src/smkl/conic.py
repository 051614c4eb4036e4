"""Small dense conic programs and their interior-point solution.

A :class:`ConicProgram` is ``min c^T x + c0`` subject to blocks
``F_k x + g_k in K_k`` where each ``K_k`` is a zero, nonnegative, second-order,
rotated second-order or PSD cone. Programs are solved with the Clarabel
interior-point solver (homogeneous embedding); rotated cones are mapped to
standard second-order cones and PSD blocks to scaled upper triangles here.

Row conventions
---------------
* ``SOC(d)``: rows ``(t, x_1..x_{d-1})`` with ``t >= ||x||``.
* ``RotatedSOC(d)``: rows ``(u, v, w_1..w_{d-2})`` with ``u v >= ||w||^2``,
  ``u, v >= 0``.
* ``PSD(s)``: one row per upper-triangle entry ``M[i, j]`` (``i <= j``),
  ordered column by column, holding the plain (unscaled) entry value.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import clarabel
import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

FORMAT_HEADER = "# smkl-conic v1"
DEFAULT_MEM_BUDGET_MB = 2048.0


class ConicError(ValueError):
    """Structurally inconsistent program."""


class CapacityError(MemoryError):
    """Program exceeds the configured memory budget."""


class ConeKind(str, Enum):
    ZERO = "zero"
    NONNEG = "nonneg"
    SOC = "soc"
    RSOC = "rsoc"
    PSD = "psd"


@dataclass(frozen=True)
class Cone:
    kind: ConeKind
    size: int

    @property
    def rows(self) -> int:
        if self.kind is ConeKind.PSD:
            return self.size * (self.size + 1) // 2
        return self.size


def Zero(dim): return Cone(ConeKind.ZERO, dim)
def Nonneg(dim): return Cone(ConeKind.NONNEG, dim)
def SOC(dim): return Cone(ConeKind.SOC, dim)
def RotatedSOC(dim): return Cone(ConeKind.RSOC, dim)
def PSD(side): return Cone(ConeKind.PSD, side)


def triu_pairs(side: int) -> list[tuple[int, int]]:
    """Upper-triangle ``(i, j)`` pairs in PSD row order (column-major)."""
    return [(i, j) for j in range(side) for i in range(j + 1)]


@dataclass
class Block:
    """``count`` consecutive copies of ``cone`` stacked in one affine map."""

    F: sp.csr_matrix
    g: np.ndarray
    cone: Cone
    label: str = ""
    count: int = 1

    @property
    def rows(self) -> int:
        return self.count * self.cone.rows


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITER = "max_iter"


@dataclass
class ConicProgram:
    """Variables are registered by name; constraints are affine blocks in cones."""

    nvar: int = 0
    variables: dict[str, slice] = field(default_factory=dict)
    blocks: list[Block] = field(default_factory=list)
    cost: dict[int, float] = field(default_factory=dict)
    offset: float = 0.0

    def add_variable(self, name: str, size: int) -> np.ndarray:
        if name in self.variables:
            raise ConicError(f"duplicate variable {name!r}")
        sl = slice(self.nvar, self.nvar + size)
        self.variables[name] = sl
        self.nvar += size
        return np.arange(sl.start, sl.stop)

    def var(self, name: str) -> np.ndarray:
        sl = self.variables[name]
        return np.arange(sl.start, sl.stop)

    def add_cost(self, index, coef) -> None:
        for i, c in zip(np.atleast_1d(index), np.broadcast_to(coef, np.shape(np.atleast_1d(index)))):
            self.cost[int(i)] = self.cost.get(int(i), 0.0) + float(c)

    def add_block(self, rows, g, cone: Cone, label: str = "") -> None:
        """Add ``F x + g in cone``; ``rows`` is a list of ``{var_index: coef}``."""
        g = np.asarray(g, dtype=float).ravel()
        if len(rows) != g.size or g.size != cone.rows:
            raise ConicError(f"block {label!r}: {len(rows)} rows, {g.size} constants, cone needs {cone.rows}")
        ri, ci, vals = [], [], []
        for r, row in enumerate(rows):
            for c, v in row.items():
                if not 0 <= c < self.nvar:
                    raise ConicError(f"block {label!r} references unknown variable index {c}")
                ri.append(r)
                ci.append(c)
                vals.append(v)
        F = sp.csr_matrix((vals, (ri, ci)), shape=(g.size, self.nvar))
        self.blocks.append(Block(F, g, cone, label))

    def add_matrix_block(self, F, g, cone: Cone, label: str = "", count: int = 1) -> None:
        """Add ``count`` cones at once from a sparse map ``F`` (rows stacked per cone)."""
        F = sp.csr_matrix(F)
        g = np.asarray(g, dtype=float).ravel()
        if F.shape[0] != g.size or g.size != count * cone.rows:
            raise ConicError(f"block {label!r}: shape {F.shape} does not fit {count} cones of {cone.rows} rows")
        if F.shape[1] < self.nvar:
            F = sp.hstack([F, sp.csr_matrix((F.shape[0], self.nvar - F.shape[1]))]).tocsr()
        if F.shape[1] != self.nvar:
            raise ConicError(f"block {label!r} has {F.shape[1]} columns for {self.nvar} variables")
        self.blocks.append(Block(F, g, cone, label, count))

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.nvar)
        for i, v in self.cost.items():
            c[i] = v
        return c

    def constraint_matrix(self) -> tuple[sp.csr_matrix, np.ndarray]:
        Fs = []
        for b in self.blocks:
            F = b.F
            if F.shape[1] < self.nvar:
                F = sp.hstack([F, sp.csr_matrix((F.shape[0], self.nvar - F.shape[1]))]).tocsr()
            Fs.append(F)
        F = sp.vstack(Fs).tocsr() if Fs else sp.csr_matrix((0, self.nvar))
        g = np.concatenate([b.g for b in self.blocks]) if self.blocks else np.zeros(0)
        return F, g

    def estimated_bytes(self) -> float:
        """Rough memory footprint of the interior-point KKT system."""
        F, _ = self.constraint_matrix()
        dense = sum(b.count * b.cone.rows ** 2 for b in self.blocks if b.cone.kind is ConeKind.PSD)
        return 8.0 * (3 * dense + 4 * F.nnz + 10 * (self.nvar + F.shape[0]))

    def unpack(self, x: np.ndarray) -> dict[str, np.ndarray]:
        return {name: np.array(x[sl]) for name, sl in self.variables.items()}


@dataclass
class ConicSolution:
    primal: np.ndarray
    dual: list[np.ndarray]
    status: Status
    primal_obj: float
    dual_obj: float
    residuals: dict[str, float]
    iterations: int = 0
    solve_time: float = 0.0
    values: dict[str, np.ndarray] = field(default_factory=dict)


def check_memory(prog: ConicProgram, mem_budget_mb: float | None) -> None:
    if mem_budget_mb is None:
        return
    need = prog.estimated_bytes() / 2**20
    if need > mem_budget_mb:
        raise CapacityError(f"program needs ~{need:.0f} MB, budget is {mem_budget_mb:.0f} MB")


def _to_clarabel(prog: ConicProgram):
    F, g = prog.constraint_matrix()
    m_total = F.shape[0]
    scale = np.ones(m_total)
    # rotated cones: (u, v, w) -> (u + v, u - v, 2 w)
    diag = np.ones(m_total)
    ri, ci = [], []
    cones = []
    row = 0
    for b in prog.blocks:
        k, m = b.cone.kind, b.cone.rows
        starts = row + m * np.arange(b.count)
        if k is ConeKind.ZERO:
            cones.append(clarabel.ZeroConeT(b.rows))
        elif k is ConeKind.NONNEG:
            cones.append(clarabel.NonnegativeConeT(b.rows))
        elif k is ConeKind.SOC:
            cones.extend(clarabel.SecondOrderConeT(m) for _ in range(b.count))
        elif k is ConeKind.RSOC:
            cones.extend(clarabel.SecondOrderConeT(m) for _ in range(b.count))
            diag[starts + 1] = -1.0
            for r in range(2, m):
                diag[starts + r] = 2.0
            ri.extend([starts, starts + 1])
            ci.extend([starts + 1, starts])
        elif k is ConeKind.PSD:
            cones.extend(clarabel.PSDTriangleConeT(b.cone.size) for _ in range(b.count))
            offdiag = np.flatnonzero([i != j for i, j in triu_pairs(b.cone.size)])
            scale[(starts[:, None] + offdiag[None, :]).ravel()] = np.sqrt(2.0)
        row += b.rows
    off_r = np.concatenate(ri) if ri else np.zeros(0, dtype=int)
    off_c = np.concatenate(ci) if ci else np.zeros(0, dtype=int)
    T = sp.csr_matrix(
        (np.concatenate([diag, np.ones(off_r.size)]),
         (np.concatenate([np.arange(m_total), off_r]), np.concatenate([np.arange(m_total), off_c]))),
        shape=(m_total, m_total))
    TS = T @ sp.diags(scale)
    return sp.csc_matrix(-(TS @ F)), np.asarray(TS @ g, dtype=float), cones, TS


_STATUS = {
    "Solved": Status.OPTIMAL,
    "PrimalInfeasible": Status.INFEASIBLE,
    "AlmostPrimalInfeasible": Status.INFEASIBLE,
    "DualInfeasible": Status.UNBOUNDED,
    "AlmostDualInfeasible": Status.UNBOUNDED,
}


def solve(prog: ConicProgram, feas_tol: float = 1e-7, gap_tol: float = 1e-7, max_iter: int = 200,
          mem_budget_mb: float | None = DEFAULT_MEM_BUDGET_MB) -> ConicSolution:
    """Solve ``prog`` to the given feasibility and relative gap tolerances."""
    if prog.nvar == 0:
        raise ConicError("program has no variables")
    for b in prog.blocks:
        if b.cone.kind is ConeKind.RSOC and b.cone.size < 2:
            raise ConicError("rotated cones need at least two rows")
        if b.cone.kind is ConeKind.SOC and b.cone.size < 1:
            raise ConicError("second-order cones need at least one row")
    check_memory(prog, mem_budget_mb)
    A, b, cones, TS = _to_clarabel(prog)
    c = prog.objective_vector()
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_feas = feas_tol
    settings.tol_gap_abs = gap_tol
    settings.tol_gap_rel = gap_tol
    settings.max_iter = max_iter
    settings.max_threads = 1
    settings.presolve_enable = False
    settings.chordal_decomposition_enable = False
    P = sp.csc_matrix((prog.nvar, prog.nvar))
    sol = clarabel.DefaultSolver(P, c, A, b, cones, settings).solve()
    status = _STATUS.get(str(sol.status).split(".")[-1], Status.MAX_ITER)
    if str(sol.status).endswith("AlmostSolved"):
        status = Status.OPTIMAL if max(sol.r_prim, sol.r_dual) <= np.sqrt(feas_tol) else Status.MAX_ITER
    x = np.array(sol.x)
    z = np.array(sol.z)
    # multipliers in the original (unscaled, unrotated) block coordinates
    zy = TS.T @ z
    duals, row = [], 0
    for blk in prog.blocks:
        duals.append(zy[row:row + blk.rows])
        row += blk.rows
    primal_obj = float(c @ x) + prog.offset
    dual_obj = float(sol.obj_val_dual) + prog.offset
    if not np.isfinite(dual_obj):
        dual_obj = -np.inf
    elif status is not Status.OPTIMAL:
        dual_obj = min(dual_obj, primal_obj)
    gap = abs(primal_obj - dual_obj)
    log.debug("conic solve: %s in %d iterations, obj %.10g / %.10g", status.value, sol.iterations,
              primal_obj, dual_obj)
    return ConicSolution(
        primal=x,
        dual=duals,
        status=status,
        primal_obj=primal_obj,
        dual_obj=dual_obj,
        residuals={"primal": float(sol.r_prim), "dual": float(sol.r_dual), "gap": gap},
        iterations=int(sol.iterations),
        solve_time=float(sol.solve_time),
        values=prog.unpack(x),
    )


def block_values(prog: ConicProgram, x: np.ndarray) -> list[np.ndarray]:
    """``F_k x + g_k`` for every block."""
    return [b.F @ x[: b.F.shape[1]] + b.g for b in prog.blocks]


def psd_matrix(values: np.ndarray, side: int) -> np.ndarray:
    """Rebuild a symmetric matrix from PSD block rows."""
    M = np.zeros((side, side))
    for v, (i, j) in zip(values, triu_pairs(side)):
        M[i, j] = M[j, i] = v
    return M


def dump_program(prog: ConicProgram, path: str | Path) -> None:
    """Write ``prog`` in the plain-text interchange format (row-major, sparse rows)."""
    fmt = "{:.17g}".format
    lines = [FORMAT_HEADER, f"nvar {prog.nvar}", f"offset {fmt(prog.offset)}"]
    for name, sl in prog.variables.items():
        lines.append(f"var {name} {sl.start} {sl.stop}")
    c = prog.objective_vector()
    lines.append("cost " + " ".join(f"{i}:{fmt(c[i])}" for i in np.flatnonzero(c)))
    for b in prog.blocks:
        lines.append(f"block {b.cone.kind.value} {b.cone.size} {b.count} {b.label or '-'}")
        F = b.F.tocsr()
        for r in range(F.shape[0]):
            lo, hi = F.indptr[r], F.indptr[r + 1]
            terms = " ".join(f"{F.indices[k]}:{fmt(F.data[k])}" for k in range(lo, hi))
            lines.append(f"{fmt(b.g[r])} {terms}".rstrip())
    Path(path).write_text("\n".join(lines) + "\n")


def load_program(path: str | Path) -> ConicProgram:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != FORMAT_HEADER:
        raise ConicError(f"{path}: missing header {FORMAT_HEADER!r}")
    prog = ConicProgram()
    it = iter(lines[1:])
    nvar = 0
    for line in it:
        head, *rest = line.split()
        if head == "nvar":
            nvar = int(rest[0])
        elif head == "offset":
            prog.offset = float(rest[0])
        elif head == "var":
            prog.variables[rest[0]] = slice(int(rest[1]), int(rest[2]))
        elif head == "cost":
            prog.nvar = nvar
            for term in rest:
                i, v = term.split(":")
                prog.cost[int(i)] = float(v)
        elif head == "block":
            cone, count, label = Cone(ConeKind(rest[0]), int(rest[1])), int(rest[2]), " ".join(rest[3:])
            ri, ci, vals, g = [], [], [], []
            for r in range(count * cone.rows):
                g_val, *terms = next(it).split()
                g.append(float(g_val))
                for t in terms:
                    c, v = t.split(":")
                    ri.append(r)
                    ci.append(int(c))
                    vals.append(float(v))
            F = sp.csr_matrix((vals, (ri, ci)), shape=(len(g), nvar))
            prog.nvar = nvar
            prog.add_matrix_block(F, g, cone, "" if label == "-" else label, count)
        else:
            raise ConicError(f"{path}: unexpected line {line!r}")
    prog.nvar = nvar
    return prog
