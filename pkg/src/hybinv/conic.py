"""Backend-neutral conic program builder and solver adapter.

Programs collect scalar and symmetric-matrix variables, linear constraint
blocks tagged with a cone (zero, nonnegative, or positive semidefinite),
and a linear objective.  Matrix variables are scalarized over their upper
triangle; PSD blocks are given as the upper triangle of a symmetric
expression in row-major order.  The reference adapter targets the
Clarabel interior-point solver.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

Number = Union[int, float]


class LinExpr:
    """Sparse affine expression over registered scalar variables."""

    __slots__ = ("terms", "const")

    def __init__(self, terms: Optional[Dict[int, float]] = None, const: float = 0.0):
        self.terms = terms or {}
        self.const = float(const)

    @staticmethod
    def of(value: Union["LinExpr", Number]) -> "LinExpr":
        if isinstance(value, LinExpr):
            return value
        return LinExpr({}, float(value))

    @staticmethod
    def term(var: int, coeff: float = 1.0, const: float = 0.0) -> "LinExpr":
        return LinExpr({int(var): float(coeff)}, const)

    def copy(self) -> "LinExpr":
        return LinExpr(dict(self.terms), self.const)

    def __add__(self, other):
        other = LinExpr.of(other)
        terms = dict(self.terms)
        for v, c in other.terms.items():
            terms[v] = terms.get(v, 0.0) + c
        return LinExpr(terms, self.const + other.const)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-LinExpr.of(other))

    def __rsub__(self, other):
        return LinExpr.of(other) + (-self)

    def __neg__(self):
        return LinExpr({v: -c for v, c in self.terms.items()}, -self.const)

    def __mul__(self, scalar: Number):
        s = float(scalar)
        return LinExpr({v: c * s for v, c in self.terms.items()}, self.const * s)

    __rmul__ = __mul__

    def is_zero(self, tol: float = 0.0) -> bool:
        return abs(self.const) <= tol and all(abs(c) <= tol for c in self.terms.values())

    def __repr__(self):
        parts = [f"{c:+g}*x{v}" for v, c in sorted(self.terms.items())]
        if self.const or not parts:
            parts.append(f"{self.const:+g}")
        return " ".join(parts)


@dataclass(frozen=True)
class ScalarVar:
    index: int
    name: str

    @property
    def expr(self) -> LinExpr:
        return LinExpr.term(self.index)


@dataclass(frozen=True)
class MatrixVar:
    """Symmetric matrix variable scalarized over its upper triangle."""

    name: str
    dim: int
    slots: Tuple[int, ...]  # upper triangle, row-major

    def slot(self, i: int, j: int) -> int:
        if i > j:
            i, j = j, i
        n = self.dim
        return self.slots[i * n - i * (i - 1) // 2 + (j - i)]

    def entry(self, i: int, j: int) -> LinExpr:
        return LinExpr.term(self.slot(i, j))

    def expr(self) -> List[List[LinExpr]]:
        return [[self.entry(i, j) for j in range(self.dim)] for i in range(self.dim)]


CONE_ZERO = "zero"
CONE_NONNEG = "nonneg"
CONE_PSD = "psd"


@dataclass
class Solution:
    """Solver outcome; primal values are present only when optimal."""

    status: str
    values: Optional[np.ndarray]
    objective: Optional[float]
    stats: Dict[str, object] = field(default_factory=dict)

    def scalar(self, var: ScalarVar) -> float:
        return float(self.values[var.index])

    def matrix(self, var: MatrixVar) -> np.ndarray:
        out = np.zeros((var.dim, var.dim))
        for i in range(var.dim):
            for j in range(i, var.dim):
                out[i, j] = out[j, i] = self.values[var.slot(i, j)]
        return out


class ConicProgram:
    """Single-writer builder; freeze before solving or serializing."""

    def __init__(self):
        self._nvars = 0
        self._scalars: List[ScalarVar] = []
        self._matrices: List[MatrixVar] = []
        self._blocks: List[Tuple[str, List[LinExpr], int]] = []  # (cone, rows, psd dim)
        self._objective: Optional[LinExpr] = None
        self._maximize = True
        self._frozen = False

    # -- construction ---------------------------------------------------
    def _check_open(self):
        if self._frozen:
            raise RuntimeError("program already finalized")

    def add_scalar(self, name: Optional[str] = None) -> ScalarVar:
        self._check_open()
        var = ScalarVar(self._nvars, name or f"s{self._nvars}")
        self._nvars += 1
        self._scalars.append(var)
        return var

    def add_symmetric_matrix(self, dim: int, name: Optional[str] = None) -> MatrixVar:
        """Symmetric matrix variable without any cone constraint."""
        self._check_open()
        if dim < 1:
            raise ValueError("matrix dimension must be positive")
        count = dim * (dim + 1) // 2
        slots = tuple(range(self._nvars, self._nvars + count))
        self._nvars += count
        var = MatrixVar(name or f"M{len(self._matrices)}", dim, slots)
        self._matrices.append(var)
        return var

    def add_psd_matrix(self, dim: int, name: Optional[str] = None) -> MatrixVar:
        """Symmetric matrix variable constrained to the PSD cone."""
        var = self.add_symmetric_matrix(dim, name)
        self.add_psd_block(var.expr())
        return var

    def add_linear(self, rows: Sequence[Union[LinExpr, Number]], cone: str, psd_dim: int = 0):
        """Add a constraint block: rows = 0, rows >= 0, or mat(rows) PSD.

        PSD rows are the upper triangle of the symmetric matrix expression
        in row-major order; ``psd_dim`` gives the matrix dimension.
        """
        self._check_open()
        rows = [LinExpr.of(r) for r in rows]
        if cone not in (CONE_ZERO, CONE_NONNEG, CONE_PSD):
            raise ValueError(f"unknown cone {cone!r}")
        if cone == CONE_PSD:
            if psd_dim * (psd_dim + 1) // 2 != len(rows):
                raise ValueError("PSD block row count does not match dimension")
        for r in rows:
            for v in r.terms:
                if v >= self._nvars:
                    raise ValueError("constraint references unregistered variable")
        self._blocks.append((cone, rows, psd_dim))

    def add_psd_block(self, mat: Sequence[Sequence[Union[LinExpr, Number]]]):
        """Constrain a symmetric matrix expression to be PSD."""
        d = len(mat)
        rows = [LinExpr.of(mat[i][j]) for i in range(d) for j in range(i, d)]
        self.add_linear(rows, CONE_PSD, psd_dim=d)

    def set_objective(self, expr: Union[LinExpr, Number], maximize: bool = True):
        self._check_open()
        self._objective = LinExpr.of(expr)
        self._maximize = maximize

    def finalize(self) -> "ConicProgram":
        if self._objective is None:
            self._objective = LinExpr()
        self._frozen = True
        return self

    # -- introspection ---------------------------------------------------
    @property
    def num_variables(self) -> int:
        return self._nvars

    @property
    def num_blocks(self) -> int:
        return len(self._blocks)

    def serialize(self) -> str:
        """Deterministic sparse text dump for golden-file diffing."""
        out = ["conic-program v1", f"vars {self._nvars}"]
        for m in self._matrices:
            out.append(f"symmat {m.name} dim {m.dim} slots {m.slots[0]}..{m.slots[-1]}")
        sense = "max" if self._maximize else "min"
        obj = self._objective or LinExpr()
        terms = " ".join(f"{v}:{c:.17g}" for v, c in sorted(obj.terms.items()))
        out.append(f"objective {sense} const {obj.const:.17g} {terms}".rstrip())
        for cone, rows, psd_dim in self._blocks:
            head = f"block {cone}" + (f" dim {psd_dim}" if cone == CONE_PSD else f" rows {len(rows)}")
            out.append(head)
            for r in rows:
                terms = " ".join(f"{v}:{c:.17g}" for v, c in sorted(r.terms.items()))
                out.append(f"  row const {r.const:.17g} {terms}".rstrip())
        return "\n".join(out) + "\n"

    def fingerprint(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()


DEFAULT_OPTIONS = {
    "max_iters": 20000,
    "feas_tol": 1e-8,
    "gap_tol": 1e-8,
    "reduced_tol": 1e-6,
    "verbose": False,
    "time_limit": 0.0,  # seconds; 0 disables
}


def _to_clarabel(program: ConicProgram):
    import scipy.sparse as sp

    n = program.num_variables
    rows_A: List[int] = []
    cols_A: List[int] = []
    vals_A: List[float] = []
    b: List[float] = []
    cones = []
    import clarabel

    def emit(expr: LinExpr, scale: float):
        """Append row: s = b - A x with s = scale * expr(x)."""
        r = len(b)
        for v, c in expr.terms.items():
            rows_A.append(r)
            cols_A.append(v)
            vals_A.append(-scale * c)
        b.append(scale * expr.const)

    zero_rows = [r for cone, rows, _ in program._blocks if cone == CONE_ZERO for r in rows]
    nonneg_rows = [r for cone, rows, _ in program._blocks if cone == CONE_NONNEG for r in rows]
    for r in zero_rows:
        emit(r, 1.0)
    if zero_rows:
        cones.append(clarabel.ZeroConeT(len(zero_rows)))
    for r in nonneg_rows:
        emit(r, 1.0)
    if nonneg_rows:
        cones.append(clarabel.NonnegativeConeT(len(nonneg_rows)))
    sqrt2 = float(np.sqrt(2.0))
    for cone, rows, d in program._blocks:
        if cone != CONE_PSD:
            continue
        # blocks store the upper triangle row-major; Clarabel's svec walks
        # the upper triangle column by column with off-diagonals scaled by
        # sqrt(2)
        for j in range(d):
            for i in range(j + 1):
                idx = i * d - i * (i - 1) // 2 + (j - i)
                emit(rows[idx], 1.0 if i == j else sqrt2)
        cones.append(clarabel.PSDTriangleConeT(d))

    A = sp.csc_matrix(
        (np.array(vals_A), (np.array(rows_A, dtype=int), np.array(cols_A, dtype=int))),
        shape=(len(b), n),
    )
    P = sp.csc_matrix((n, n))
    q = np.zeros(n)
    obj = program._objective or LinExpr()
    sign = -1.0 if program._maximize else 1.0
    for v, c in obj.terms.items():
        q[v] = sign * c
    return P, q, A, np.array(b), cones


def solve(program: ConicProgram, options: Optional[dict] = None) -> Solution:
    """Solve a finalized program with the Clarabel adapter.

    Status is one of ``optimal``, ``infeasible``, ``unbounded``, or
    ``numerical-failure``.  On ``optimal`` the stats record iterations,
    solve time, and achieved residuals.
    """
    try:
        import clarabel
    except ImportError as exc:  # pragma: no cover - environment guard
        raise RuntimeError("no conic solver available: clarabel not installed") from exc

    if not program._frozen:
        raise RuntimeError("finalize the program before solving")
    opts = dict(DEFAULT_OPTIONS)
    for key, value in (options or {}).items():
        if key not in DEFAULT_OPTIONS:
            raise ValueError(f"unknown solver option {key!r}")
        opts[key] = value

    P, q, A, b, cones = _to_clarabel(program)
    settings = clarabel.DefaultSettings()
    settings.verbose = bool(opts["verbose"])
    settings.max_iter = int(opts["max_iters"])
    settings.tol_feas = float(opts["feas_tol"])
    settings.tol_gap_abs = float(opts["gap_tol"])
    settings.tol_gap_rel = float(opts["gap_tol"])
    settings.reduced_tol_feas = float(opts["reduced_tol"])
    settings.reduced_tol_gap_abs = float(opts["reduced_tol"])
    settings.reduced_tol_gap_rel = float(opts["reduced_tol"])
    if opts["time_limit"]:
        settings.time_limit = float(opts["time_limit"])
    solver = clarabel.DefaultSolver(P, q, A, b, cones, settings)
    result = solver.solve()

    name = str(result.status)
    stats = {
        "iterations": int(result.iterations),
        "solve_time": float(result.solve_time),
        "solver_status": name,
        "r_prim": float(result.r_prim),
        "r_dual": float(result.r_dual),
    }
    sign = -1.0 if program._maximize else 1.0
    obj_const = (program._objective.const if program._objective else 0.0)
    if name in ("SolverStatus.Solved", "Solved"):
        return Solution("optimal", np.array(result.x), sign * result.obj_val + obj_const, stats)
    if name.endswith("AlmostSolved"):
        stats["accuracy"] = "reduced"
        return Solution("optimal", np.array(result.x), sign * result.obj_val + obj_const, stats)
    if "PrimalInfeasible" in name:
        return Solution("infeasible", None, None, stats)
    if "DualInfeasible" in name:
        return Solution("unbounded", None, None, stats)
    return Solution("numerical-failure", None, None, stats)


def congruence(A: np.ndarray, M: MatrixVar, B: Optional[np.ndarray] = None) -> List[List[LinExpr]]:
    """Matrix expression A @ M @ B.T with M a symmetric matrix variable."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = A if B is None else np.atleast_2d(np.asarray(B, dtype=float))
    n = M.dim
    out: List[List[LinExpr]] = []
    for k in range(A.shape[0]):
        row: List[LinExpr] = []
        for l in range(B.shape[0]):
            W = np.outer(A[k], B[l])
            terms: Dict[int, float] = {}
            for i in range(n):
                wii = W[i, i]
                if wii:
                    slot = M.slot(i, i)
                    terms[slot] = terms.get(slot, 0.0) + wii
                for j in range(i + 1, n):
                    w = W[i, j] + W[j, i]
                    if w:
                        slot = M.slot(i, j)
                        terms[slot] = terms.get(slot, 0.0) + w
            row.append(LinExpr(terms))
        out.append(row)
    return out


def mat_sum(*mats) -> List[List[LinExpr]]:
    """Entrywise sum of matrix expressions (lists of lists of LinExpr)."""
    out = None
    for m in mats:
        if out is None:
            out = [[LinExpr.of(e) for e in row] for row in m]
        else:
            out = [[out[i][j] + m[i][j] for j in range(len(row))] for i, row in enumerate(out)]
    return out


def mat_neg(m) -> List[List[LinExpr]]:
    return [[-LinExpr.of(e) for e in row] for row in m]


def mat_scale(m, s: float) -> List[List[LinExpr]]:
    return [[LinExpr.of(e) * s for e in row] for row in m]
