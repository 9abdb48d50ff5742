"""Homogeneous polynomial arithmetic and conic certificate emission.

Polynomials are sparse maps from exponent tuples to coefficients; the
coefficients may be numbers or affine expressions over conic-program
variables, which is what lets invariance conditions stay linear in the
template parameters.  Monomial bases are full graded-lexicographic bases;
at the dimensions this library targets (n <= 3, degree <= 8) Newton
polytope reductions would buy nothing.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from hybinv.conic import CONE_NONNEG, CONE_ZERO, ConicProgram, LinExpr, MatrixVar
from hybinv.geometry import PolyhedralCone, generator_columns

Coeff = Union[float, LinExpr]
Exponent = Tuple[int, ...]


def monomials(nvars: int, degree: int) -> List[Exponent]:
    """All exponent tuples of the given total degree, graded-lex order."""
    out = []
    for combo in itertools.combinations_with_replacement(range(nvars), degree):
        e = [0] * nvars
        for i in combo:
            e[i] += 1
        out.append(tuple(e))
    return sorted(out, reverse=True)


def _is_number(c: Coeff) -> bool:
    return not isinstance(c, LinExpr)


@dataclass(frozen=True)
class HomogeneousPoly:
    """Homogeneous polynomial with sparse (possibly symbolic) coefficients."""

    nvars: int
    degree: int
    coeffs: Dict[Exponent, Coeff]

    def __post_init__(self):
        pruned = {}
        for e, c in self.coeffs.items():
            if len(e) != self.nvars or sum(e) != self.degree:
                raise ValueError(f"exponent {e} inconsistent with n={self.nvars}, d={self.degree}")
            if _is_number(c):
                if c != 0.0:
                    pruned[tuple(int(k) for k in e)] = float(c)
            else:
                pruned[tuple(int(k) for k in e)] = c
        object.__setattr__(self, "coeffs", pruned)

    # -- constructors ----------------------------------------------------
    @staticmethod
    def zero(nvars: int, degree: int) -> "HomogeneousPoly":
        return HomogeneousPoly(nvars, degree, {})

    @staticmethod
    def variable_coefficients(program: ConicProgram, nvars: int, degree: int,
                              name: str = "p") -> "HomogeneousPoly":
        """Fresh scalar decision variable per monomial."""
        coeffs: Dict[Exponent, Coeff] = {}
        for e in monomials(nvars, degree):
            tag = "".join(str(k) for k in e)
            coeffs[e] = program.add_scalar(f"{name}[{tag}]").expr
        return HomogeneousPoly(nvars, degree, coeffs)

    @staticmethod
    def from_quadratic_form(P: np.ndarray) -> "HomogeneousPoly":
        P = np.asarray(P, dtype=float)
        n = P.shape[0]
        coeffs: Dict[Exponent, Coeff] = {}
        for i in range(n):
            for j in range(i, n):
                e = [0] * n
                e[i] += 1
                e[j] += 1
                val = P[i, i] if i == j else P[i, j] + P[j, i]
                if val:
                    coeffs[tuple(e)] = float(val)
        return HomogeneousPoly(n, 2, coeffs)

    @staticmethod
    def linear_form(v: Sequence[float]) -> "HomogeneousPoly":
        v = np.asarray(v, dtype=float)
        coeffs = {}
        for i, c in enumerate(v):
            if c:
                e = [0] * len(v)
                e[i] = 1
                coeffs[tuple(e)] = float(c)
        return HomogeneousPoly(len(v), 1, coeffs)

    # -- algebra ----------------------------------------------------------
    def __add__(self, other: "HomogeneousPoly") -> "HomogeneousPoly":
        if (other.nvars, other.degree) != (self.nvars, self.degree):
            raise ValueError("degree/variable mismatch")
        coeffs = dict(self.coeffs)
        for e, c in other.coeffs.items():
            coeffs[e] = coeffs[e] + c if e in coeffs else c
        return HomogeneousPoly(self.nvars, self.degree, coeffs)

    def __sub__(self, other: "HomogeneousPoly") -> "HomogeneousPoly":
        return self + other.scale(-1.0)

    def scale(self, s: Union[float, LinExpr]) -> "HomogeneousPoly":
        if isinstance(s, LinExpr):
            if any(not _is_number(c) for c in self.coeffs.values()):
                raise ValueError("cannot multiply symbolic coefficients by an expression")
            return HomogeneousPoly(self.nvars, self.degree,
                                   {e: s * float(c) for e, c in self.coeffs.items()})
        return HomogeneousPoly(self.nvars, self.degree,
                               {e: c * float(s) for e, c in self.coeffs.items()})

    def mul_numeric(self, other: "HomogeneousPoly") -> "HomogeneousPoly":
        """Product with a numeric-coefficient polynomial."""
        if other.nvars != self.nvars:
            raise ValueError("variable count mismatch")
        if any(not _is_number(c) for c in other.coeffs.values()):
            raise ValueError("right factor must have numeric coefficients")
        coeffs: Dict[Exponent, Coeff] = {}
        for e1, c1 in self.coeffs.items():
            for e2, c2 in other.coeffs.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                add = c1 * float(c2)
                coeffs[e] = coeffs[e] + add if e in coeffs else add
        return HomogeneousPoly(self.nvars, self.degree + other.degree, coeffs)

    def power_numeric(self, k: int) -> "HomogeneousPoly":
        out = HomogeneousPoly(self.nvars, 0, {tuple([0] * self.nvars): 1.0})
        for _ in range(k):
            out = out.mul_numeric(self)
        return out

    def is_numeric(self) -> bool:
        return all(_is_number(c) for c in self.coeffs.values())

    # -- evaluation --------------------------------------------------------
    def evaluate(self, Y: np.ndarray) -> np.ndarray:
        """Numeric evaluation at one point (shape n) or many (shape n x K)."""
        if not self.is_numeric():
            raise ValueError("polynomial has symbolic coefficients")
        Y = np.asarray(Y, dtype=float)
        single = Y.ndim == 1
        pts = Y.reshape(self.nvars, -1)
        if not self.coeffs:
            vals = np.zeros(pts.shape[1])
        else:
            exps = np.array(list(self.coeffs.keys()))
            cs = np.array([self.coeffs[tuple(e)] for e in exps])
            mono = np.prod(pts[None, :, :] ** exps[:, :, None], axis=1)
            vals = cs @ mono
        return float(vals[0]) if single else vals

    def evaluate_affine(self, y: Sequence[float]) -> LinExpr:
        """Evaluation at a numeric point, yielding an affine expression."""
        y = np.asarray(y, dtype=float)
        out = LinExpr()
        for e, c in self.coeffs.items():
            m = float(np.prod(y ** np.array(e)))
            if m == 0.0:
                continue
            out = out + (LinExpr.of(c) * m)
        return out

    def resolve(self, values: np.ndarray) -> "HomogeneousPoly":
        """Substitute solved variable values into symbolic coefficients."""
        coeffs: Dict[Exponent, Coeff] = {}
        for e, c in self.coeffs.items():
            if _is_number(c):
                coeffs[e] = float(c)
            else:
                coeffs[e] = float(sum(values[v] * w for v, w in c.terms.items()) + c.const)
        return HomogeneousPoly(self.nvars, self.degree, coeffs)

    def to_dict(self) -> dict:
        if not self.is_numeric():
            raise ValueError("cannot serialize symbolic coefficients")
        return {
            "nvars": self.nvars,
            "degree": self.degree,
            "coeffs": {",".join(map(str, e)): c for e, c in sorted(self.coeffs.items(), reverse=True)},
        }

    @staticmethod
    def from_dict(data: dict) -> "HomogeneousPoly":
        coeffs = {tuple(int(k) for k in key.split(",")): float(v)
                  for key, v in data["coeffs"].items()}
        return HomogeneousPoly(int(data["nvars"]), int(data["degree"]), coeffs)


def compose_linear(p: HomogeneousPoly, S: np.ndarray) -> HomogeneousPoly:
    """Substitute x = S y, returning the polynomial y -> p(S y).

    ``S`` has shape (p.nvars, r): each original variable x_i becomes the
    linear form sum_j S[i, j] y_j, so the result lives in r variables with
    the same degree.  Passing ``S = M.T`` realizes the preimage
    composition p(M^T y).
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[0] != p.nvars:
        raise ValueError(f"substitution matrix has {S.shape[0]} rows, polynomial has {p.nvars} vars")
    r = S.shape[1]
    unit = HomogeneousPoly(r, 0, {tuple([0] * r): 1.0})
    lin_rows = [HomogeneousPoly.linear_form(S[i]) for i in range(p.nvars)]
    out = HomogeneousPoly.zero(r, p.degree)
    for e, c in p.coeffs.items():
        term = unit
        for i, power in enumerate(e):
            for _ in range(power):
                term = term.mul_numeric(lin_rows[i])
        coeffs = {ee: (LinExpr.of(c) * float(cc) if isinstance(c, LinExpr) else float(c) * float(cc))
                  for ee, cc in term.coeffs.items()}
        out = out + HomogeneousPoly(r, p.degree, coeffs)
    return out


def gradient(p: HomogeneousPoly) -> List[HomogeneousPoly]:
    """Exact partial derivatives; Euler's identity holds by construction."""
    if p.degree < 1:
        raise ValueError("gradient needs degree >= 1")
    out = []
    for i in range(p.nvars):
        coeffs: Dict[Exponent, Coeff] = {}
        for e, c in p.coeffs.items():
            if e[i] == 0:
                continue
            ee = list(e)
            ee[i] -= 1
            add = (c * float(e[i])) if not _is_number(c) else float(c) * e[i]
            key = tuple(ee)
            coeffs[key] = coeffs[key] + add if key in coeffs else add
        out.append(HomogeneousPoly(p.nvars, p.degree - 1, coeffs))
    return out


def lie_polynomial(p: HomogeneousPoly, C: np.ndarray, E: np.ndarray) -> HomogeneousPoly:
    """The flow pairing q(z) = z^T C grad p(E^T z), homogeneous in z.

    ``C`` and ``E`` both have shape (n_p, n_x) with p in n_x variables;
    the result lives in n_p variables with degree equal to p's.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    E = np.atleast_2d(np.asarray(E, dtype=float))
    if C.shape != E.shape:
        raise ValueError("C and E must have identical shapes")
    if C.shape[1] != p.nvars:
        raise ValueError("column count must match the polynomial's variables")
    n_p = C.shape[0]
    grads = gradient(p)
    out = HomogeneousPoly.zero(n_p, p.degree)
    if n_p == 0:
        return out
    # E^T z substitution: matrix with shape (n_x, n_p)
    subs = E.T
    for k in range(n_p):
        row = C[k]
        acc = HomogeneousPoly.zero(n_p, p.degree - 1)
        for i in range(p.nvars):
            if row[i] == 0.0:
                continue
            acc = acc + compose_linear(grads[i], subs).scale(float(row[i]))
        zk = [0.0] * n_p
        zk[k] = 1.0
        out = out + acc.mul_numeric(HomogeneousPoly.linear_form(zk))
    return out


@dataclass
class GramConstraint:
    """Gram-matrix certificate tying a polynomial to a PSD matrix variable."""

    basis: List[Exponent]
    gram: MatrixVar
    equalities: int
    doubled: bool = False  # True for Hessian certificates over (y, v)


def _gram_products(basis: List[Exponent]) -> Dict[Exponent, List[Tuple[int, int]]]:
    prods: Dict[Exponent, List[Tuple[int, int]]] = {}
    for i in range(len(basis)):
        for j in range(i, len(basis)):
            e = tuple(a + b for a, b in zip(basis[i], basis[j]))
            prods.setdefault(e, []).append((i, j))
    return prods


def emit_sos(program: ConicProgram, p: HomogeneousPoly, name: str = "gram") -> GramConstraint:
    """Constrain p to be a sum of squares.

    Introduces a PSD Gram matrix over the full degree-d basis in p's
    variables and matches coefficients exactly; raises on odd degree.
    """
    if p.degree % 2 != 0:
        raise ValueError("sum-of-squares needs even degree")
    basis = monomials(p.nvars, p.degree // 2)
    gram = program.add_psd_matrix(len(basis), name)
    prods = _gram_products(basis)
    rows: List[LinExpr] = []
    for e in monomials(p.nvars, p.degree):
        target = LinExpr.of(p.coeffs.get(e, 0.0))
        acc = LinExpr()
        for (i, j) in prods.get(e, []):
            acc = acc + (gram.entry(i, j) * (1.0 if i == j else 2.0))
        rows.append(acc - target)
    program.add_linear(rows, CONE_ZERO)
    return GramConstraint(basis, gram, len(rows))


def emit_sos_convexity(program: ConicProgram, p: HomogeneousPoly,
                       name: str = "hess") -> GramConstraint:
    """Constrain p to be SOS-convex: v' Hess p(y) v is SOS in (y, v).

    The Gram basis is {v_i * m(y) : deg m = d - 1}, the exact support of a
    polynomial quadratic in v.
    """
    if p.degree % 2 != 0 or p.degree < 2:
        raise ValueError("SOS-convexity needs even degree >= 2")
    n = p.nvars
    grads = gradient(p)
    hess: List[List[HomogeneousPoly]] = []
    for i in range(n):
        hess.append(gradient(grads[i]))
    # polynomial in (y, v): key (e_y, e_v)
    target: Dict[Tuple[Exponent, Exponent], Coeff] = {}
    for i in range(n):
        for j in range(n):
            for e, c in hess[i][j].coeffs.items():
                ev = [0] * n
                ev[i] += 1
                ev[j] += 1
                key = (e, tuple(ev))
                target[key] = target[key] + c if key in target else c
    ybasis = monomials(n, p.degree // 2 - 1)
    basis: List[Tuple[Exponent, Exponent]] = []
    for i in range(n):
        ev = [0] * n
        ev[i] = 1
        for m in ybasis:
            basis.append((m, tuple(ev)))
    gram = program.add_psd_matrix(len(basis), name)
    prods: Dict[Tuple[Exponent, Exponent], List[Tuple[int, int]]] = {}
    for i in range(len(basis)):
        for j in range(i, len(basis)):
            ey = tuple(a + b for a, b in zip(basis[i][0], basis[j][0]))
            ev = tuple(a + b for a, b in zip(basis[i][1], basis[j][1]))
            prods.setdefault((ey, ev), []).append((i, j))
    rows: List[LinExpr] = []
    for key in sorted(set(target) | set(prods)):
        tgt = LinExpr.of(target.get(key, 0.0))
        acc = LinExpr()
        for (i, j) in prods.get(key, []):
            acc = acc + (gram.entry(i, j) * (1.0 if i == j else 2.0))
        rows.append(acc - tgt)
    program.add_linear(rows, CONE_ZERO)
    gram_basis = [tuple(a + b for a, b in zip(ey, ev)) for (ey, ev) in basis]
    return GramConstraint(gram_basis, gram, len(rows), doubled=True)


@dataclass
class ConeQuadraticCertificate:
    """S-procedure certificate that z' M z <= 0 on a polyhedral cone."""

    multiplier: Optional[MatrixVar]
    G: np.ndarray
    form: str


def emit_cone_quadratic(program: ConicProgram, M_expr, cone: PolyhedralCone,
                        name: str = "lam", form: str = "hrep") -> ConeQuadraticCertificate:
    """Emit a sufficient certificate for z' M z <= 0 on {z : G z <= 0}.

    H-rep form: M + G' Lam G is negative semidefinite with Lam symmetric
    and entrywise nonnegative; soundness follows from z' G' Lam G z >= 0
    on the cone.  Generator form (requires a V-rep): -R' M R decomposes as
    PSD plus entrywise nonnegative.  An empty G constrains M globally.
    """
    d = len(M_expr)
    if form == "hrep":
        if cone.G is None:
            raise ValueError("cone has no H-representation")
        G = np.atleast_2d(np.asarray(cone.G, dtype=float))
        if G.size and G.shape[1] != d:
            raise ValueError("cone dimension does not match the quadratic form")
        k = 0 if not G.size else G.shape[0]
        if k == 0:
            program.add_psd_block([[-LinExpr.of(M_expr[i][j]) for j in range(d)] for i in range(d)])
            return ConeQuadraticCertificate(None, np.zeros((0, d)), form)
        lam = program.add_symmetric_matrix(k, name)
        nn = [lam.entry(i, j) for i in range(k) for j in range(i, k)]
        program.add_linear(nn, CONE_NONNEG)
        block: List[List[LinExpr]] = []
        for a in range(d):
            row = []
            for b in range(d):
                acc = -LinExpr.of(M_expr[a][b])
                for i in range(k):
                    for j in range(k):
                        coeff = G[i, a] * G[j, b]
                        if coeff:
                            acc = acc - lam.entry(i, j) * coeff
                row.append(acc)
            block.append(row)
        program.add_psd_block(block)
        return ConeQuadraticCertificate(lam, G, form)
    if form == "vrep":
        R = generator_columns(cone)
        if R.size == 0:
            raise ValueError("cone has no generators")
        k = R.shape[1]
        # -R' M R = S + N with S PSD and N entrywise nonnegative
        S = program.add_psd_matrix(k, f"{name}:psd")
        N = program.add_symmetric_matrix(k, f"{name}:nn")
        program.add_linear([N.entry(i, j) for i in range(k) for j in range(i, k)], CONE_NONNEG)
        rows: List[LinExpr] = []
        for i in range(k):
            for j in range(i, k):
                acc = LinExpr()
                for a in range(len(M_expr)):
                    for b in range(len(M_expr)):
                        coeff = R[a, i] * R[b, j]
                        if coeff:
                            acc = acc + LinExpr.of(M_expr[a][b]) * coeff
                rows.append(acc + S.entry(i, j) + N.entry(i, j))
        program.add_linear(rows, CONE_ZERO)
        return ConeQuadraticCertificate(N, R, form)
    raise ValueError(f"unknown certificate form {form!r}")
