"""Compilation of invariance synthesis problems into conic programs.

Decision variables live on the polar side (the quadratic form of an
ellipsoid's support function, the coefficients of a polyset's defining
polynomial, one form per partition piece for piecewise templates), which
keeps every invariance condition linear.  The objective maximizes the
scale at which a fixed polytope fits inside the projection of the
synthesized set, encoded through polar-side vertex membership.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from hybinv import verify as verify_mod
from hybinv.conic import (
    CONE_NONNEG,
    CONE_ZERO,
    ConicProgram,
    LinExpr,
    MatrixVar,
    Solution,
    congruence,
    solve,
)
from hybinv.geometry import ConicPartition, PolyhedralCone, _clean_rows, cone_has_nonzero, reduce_cone_2d
from hybinv.model import Box, HybridAlgebraicSystem, validate_has
from hybinv.polysos import (
    HomogeneousPoly,
    compose_linear,
    emit_cone_quadratic,
    emit_sos,
    emit_sos_convexity,
    lie_polynomial,
)


@dataclass(frozen=True)
class EllipsoidTemplate:
    """One positive semidefinite form per node; h(y) = sqrt(y' P y)."""

    kind: str = "ellipsoid"


@dataclass(frozen=True)
class PolysetTemplate:
    """One homogeneous polynomial per node; h(y) = p(y)^(1/degree)."""

    degree: int
    kind: str = "polyset"

    def __post_init__(self):
        if self.degree < 2 or self.degree % 2 != 0:
            raise ValueError("polyset degree must be even and >= 2")


@dataclass(frozen=True)
class PiecewiseTemplate:
    """One form per partition piece per node; h(y) = sqrt(y' P_i y) on piece i.

    ``partitions`` maps node names to partitions; a node missing from the
    map uses ``default`` (required to match that node's dimension).
    ``tie_pieces`` forces all pieces of a node equal, which collapses the
    template to a single ellipsoid (a cross-checking device).
    """

    default: Optional[ConicPartition] = None
    partitions: Dict[str, ConicPartition] = field(default_factory=dict)
    tie_pieces: bool = False
    kind: str = "piecewise"

    def partition_for(self, node: str, dim: int) -> ConicPartition:
        part = self.partitions.get(node, self.default)
        if part is None:
            raise ValueError(f"no partition supplied for node {node!r}")
        if part.dim != dim:
            raise ValueError(
                f"partition dimension {part.dim} does not match node {node!r} dimension {dim}")
        return part


Template = Union[EllipsoidTemplate, PolysetTemplate, PiecewiseTemplate]


@dataclass
class SynthesisProblem:
    """A system, a template, and the objective polytope to maximize into."""

    has: HybridAlgebraicSystem
    template: Template
    objective_node: str
    proj_coords: Tuple[int, ...]
    vertices: Tuple[Tuple[float, ...], ...]

    def __post_init__(self):
        if self.objective_node not in self.has.nodes:
            raise ValueError(f"objective node {self.objective_node!r} not in system")
        self.proj_coords = tuple(int(c) for c in self.proj_coords)
        self.vertices = tuple(tuple(float(x) for x in v) for v in self.vertices)
        if not self.vertices:
            raise ValueError("objective polytope needs at least one vertex")
        k = len(self.proj_coords)
        if any(len(v) != k for v in self.vertices):
            raise ValueError("vertex dimension must equal the number of projection coordinates")


@dataclass
class SynthesisSolution:
    """Solved template parameters plus verification outcome."""

    status: str  # verified | solved-unverified | infeasible | unbounded | numerical-failure
    gamma: Optional[float]
    models: Dict[str, object]
    objective_value: Optional[float]
    solver_stats: Dict[str, object]
    fingerprint: str
    template_kind: str
    verification: Dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        # wall time is the one nondeterministic stat; keep files byte-stable
        stats = {k: v for k, v in self.solver_stats.items() if k != "solve_time"}
        return {
            "status": self.status,
            "gamma": self.gamma,
            "objective_value": self.objective_value,
            "template": self.template_kind,
            "models": {q: m.to_dict() for q, m in self.models.items()},
            "solver_stats": stats,
            "program_fingerprint": self.fingerprint,
            "verification": self.verification,
        }


def _sym_radius(box: Box, i: int) -> float:
    return min(box.upper[i], -box.lower[i])


def _directional_radius(box: Box, i: int, sign: float) -> float:
    return box.upper[i] if sign > 0 else -box.lower[i]


def _bilinear(u: np.ndarray, M: MatrixVar, w: np.ndarray) -> LinExpr:
    """Affine expression u' M w for a symmetric matrix variable M."""
    n = M.dim
    out = LinExpr()
    for i in range(n):
        if u[i] and w[i]:
            out = out + M.entry(i, i) * float(u[i] * w[i])
        for j in range(i + 1, n):
            coeff = float(u[i] * w[j] + u[j] * w[i])
            if coeff:
                out = out + M.entry(i, j) * coeff
    return out


def _mat_diff(a: List[List[LinExpr]], b: List[List[LinExpr]]) -> List[List[LinExpr]]:
    return [[a[i][j] - b[i][j] for j in range(len(a[i]))] for i in range(len(a))]


def _mat_add(a: List[List[LinExpr]], b: List[List[LinExpr]]) -> List[List[LinExpr]]:
    return [[a[i][j] + b[i][j] for j in range(len(a[i]))] for i in range(len(a))]


def _psd_upper_rows(mat: List[List[LinExpr]]) -> List[LinExpr]:
    d = len(mat)
    return [mat[i][j] for i in range(d) for j in range(i, d)]


def _restriction(G: np.ndarray, dim: int) -> Tuple[np.ndarray, bool]:
    """Canonical restriction cone rows and whether the cone is nonzero."""
    G = _clean_rows(G.reshape(-1, dim))
    if dim == 2:
        return reduce_cone_2d(G)
    if len(G) and not cone_has_nonzero(G):
        return G, False
    return G, True


def _box_rows_symmetric(program: ConicProgram, P: MatrixVar, box: Box):
    rows = []
    zero_rows = []
    for i in range(box.dim):
        u = _sym_radius(box, i)
        if u < 0:
            rows.append(LinExpr.of(-1.0))  # empty box for a symmetric set
            continue
        if u == 0.0:
            # PSD with a zero diagonal forces the whole row to vanish;
            # stating that exactly keeps the program well-posed
            zero_rows.extend(P.entry(i, j) for j in range(P.dim))
            continue
        rows.append(LinExpr.of(u * u) - P.entry(i, i))
    if rows:
        program.add_linear(rows, CONE_NONNEG)
    if zero_rows:
        program.add_linear(zero_rows, CONE_ZERO)


# ---------------------------------------------------------------------------
# ellipsoid template
# ---------------------------------------------------------------------------

def compile_ellipsoid(problem: SynthesisProblem) -> Tuple[ConicProgram, dict]:
    """LMI program for the ellipsoidal template.

    Per transition: E P_dst E' - C P_src C' is PSD.  Per node:
    -(C P E' + E P C') is PSD.  Box inclusion bounds the diagonal, and
    each objective vertex v contributes P_proj - s v v' PSD with the
    scale s maximized; gamma = sqrt(s).
    """
    has = problem.has
    program = ConicProgram()
    P: Dict[str, MatrixVar] = {}
    for q in has.automaton.nodes:
        P[q] = program.add_psd_matrix(has.state_dim(q), f"P[{q}]")
    s = program.add_scalar("scale")
    program.add_linear([s.expr], CONE_NONNEG)

    for (src, sig, dst) in has.automaton.transitions:
        rel = has.signals[sig]
        if rel.C.shape[0] == 0 or rel.C.size == 0:
            continue
        lhs = congruence(rel.C, P[src])
        rhs = congruence(rel.E, P[dst])
        program.add_psd_block(_mat_diff(rhs, lhs))

    for q in has.automaton.nodes:
        rel = has.nodes[q]
        if rel.C.shape[0] == 0 or rel.C.size == 0:
            continue
        cpe = congruence(rel.C, P[q], rel.E)
        epc = congruence(rel.E, P[q], rel.C)
        neg = [[-(cpe[i][j] + epc[i][j]) for j in range(len(cpe))] for i in range(len(cpe))]
        program.add_psd_block(neg)

    for q in has.automaton.nodes:
        _box_rows_symmetric(program, P[q], has.nodes[q].safe)

    coords = problem.proj_coords
    root = P[problem.objective_node]
    for v in problem.vertices:
        v = np.asarray(v, dtype=float)
        block = []
        for a in range(len(coords)):
            row = []
            for b in range(len(coords)):
                row.append(root.entry(coords[a], coords[b]) - s.expr * float(v[a] * v[b]))
            block.append(row)
        program.add_psd_block(block)

    program.set_objective(s.expr, maximize=True)
    program.finalize()
    return program, {"P": P, "scale": s}


# ---------------------------------------------------------------------------
# polyset template
# ---------------------------------------------------------------------------

def compile_polyset(problem: SynthesisProblem) -> Tuple[ConicProgram, dict]:
    """Sum-of-squares program for the polyset template.

    Each node gets a homogeneous polynomial constrained SOS and
    SOS-convex.  Jump conditions compare compositions, flow conditions
    negate the Lie pairing, box inclusion evaluates at facet normals, and
    each objective vertex yields p(lift(w)) - t <v, w>^2d SOS;
    gamma = t^(1/2d).
    """
    template: PolysetTemplate = problem.template
    two_d = template.degree
    has = problem.has
    program = ConicProgram()
    polys: Dict[str, HomogeneousPoly] = {}
    for q in has.automaton.nodes:
        polys[q] = HomogeneousPoly.variable_coefficients(
            program, has.state_dim(q), two_d, name=f"p[{q}]")
    t = program.add_scalar("scale")
    program.add_linear([t.expr], CONE_NONNEG)

    for (src, sig, dst) in has.automaton.transitions:
        rel = has.signals[sig]
        if rel.C.shape[0] == 0 or rel.C.size == 0:
            continue
        lhs = compose_linear(polys[src], rel.C.T)
        rhs = compose_linear(polys[dst], rel.E.T)
        emit_sos(program, rhs - lhs, name=f"jump[{src}-{sig}->{dst}]")

    for q in has.automaton.nodes:
        rel = has.nodes[q]
        if rel.C.shape[0] == 0 or rel.C.size == 0:
            continue
        lie = lie_polynomial(polys[q], rel.C, rel.E)
        emit_sos(program, lie.scale(-1.0), name=f"flow[{q}]")

    for q in has.automaton.nodes:
        emit_sos(program, polys[q], name=f"nonneg[{q}]")
        emit_sos_convexity(program, polys[q], name=f"convex[{q}]")
        box = has.nodes[q].safe
        rows = []
        for i in range(box.dim):
            u = _sym_radius(box, i)
            if u < 0:
                rows.append(LinExpr.of(-1.0))
                continue
            e = np.zeros(box.dim)
            e[i] = 1.0
            rows.append(LinExpr.of(u ** two_d) - polys[q].evaluate_affine(e))
            rows.append(LinExpr.of(u ** two_d) - polys[q].evaluate_affine(-e))
        program.add_linear(rows, CONE_NONNEG)

    coords = problem.proj_coords
    n_root = has.state_dim(problem.objective_node)
    lift = np.zeros((n_root, len(coords)))
    for a, c in enumerate(coords):
        lift[c, a] = 1.0
    restricted = compose_linear(polys[problem.objective_node], lift)
    for v in problem.vertices:
        vpow = HomogeneousPoly.linear_form(v).power_numeric(two_d)
        emit_sos(program, restricted - vpow.scale(t.expr), name="objective")

    program.set_objective(t.expr, maximize=True)
    program.finalize()
    return program, {"polys": polys, "scale": t, "degree": two_d}


# ---------------------------------------------------------------------------
# piecewise semi-ellipsoidal template
# ---------------------------------------------------------------------------

def compile_piecewise(problem: SynthesisProblem) -> Tuple[ConicProgram, dict]:
    """Cone-restricted LMI program for the piecewise template.

    Jump and flow inequalities are required piece by piece on the
    preimages of the partition cones, certified by the sufficient
    relaxation M + G' Lam G PSD-negative with entrywise nonnegative
    multipliers.  Continuity ties adjacent forms on shared ridges exactly;
    convexity across each ridge is the monotone-gradient inequality
    n' (P_j - P_i) r >= 0 at the shared extreme rays.  Pairs whose
    restriction cone is the origin are skipped.
    """
    template: PiecewiseTemplate = problem.template
    has = problem.has
    program = ConicProgram()
    parts: Dict[str, ConicPartition] = {}
    P: Dict[str, List[MatrixVar]] = {}
    for q in has.automaton.nodes:
        n_q = has.state_dim(q)
        part = template.partition_for(q, n_q)
        parts[q] = part
        P[q] = [program.add_psd_matrix(n_q, f"P[{q}][{i}]") for i in range(len(part))]
    s = program.add_scalar("scale")
    program.add_linear([s.expr], CONE_NONNEG)

    if template.tie_pieces:
        for q in has.automaton.nodes:
            first = P[q][0]
            for other in P[q][1:]:
                rows = [first.entry(i, j) - other.entry(i, j)
                        for i in range(first.dim) for j in range(i, first.dim)]
                program.add_linear(rows, CONE_ZERO)

    # continuity and ridge convexity
    for q in has.automaton.nodes:
        part = parts[q]
        for adj in part.adjacency:
            Pi, Pj = P[q][adj.i], P[q][adj.j]
            W = adj.basis
            diff = _mat_diff(congruence(W.T, Pi), congruence(W.T, Pj))
            program.add_linear(_psd_upper_rows(diff), CONE_ZERO)
            for k in range(adj.shared_rays.shape[1]):
                r = adj.shared_rays[:, k]
                grow = _bilinear(adj.normal, Pj, r) - _bilinear(adj.normal, Pi, r)
                program.add_linear([grow], CONE_NONNEG)

    certificates = 0
    cert_list: List[Tuple[str, List[List[LinExpr]], np.ndarray]] = []
    # jump conditions on intersected preimage cones
    for (src, sig, dst) in has.automaton.transitions:
        rel = has.signals[sig]
        n_p = rel.C.shape[0]
        if n_p == 0 or rel.C.size == 0:
            continue
        pre_src = [_restriction(c.G @ rel.C.T, n_p) for c in parts[src].cones]
        pre_dst = [_restriction(c.G @ rel.E.T, n_p) for c in parts[dst].cones]
        for i, (gi, ok_i) in enumerate(pre_src):
            if not ok_i:
                continue
            for j, (gj, ok_j) in enumerate(pre_dst):
                if not ok_j:
                    continue
                K, ok = _restriction(np.vstack([gi.reshape(-1, n_p), gj.reshape(-1, n_p)]), n_p)
                if not ok:
                    continue
                M = _mat_diff(congruence(rel.C, P[src][i]), congruence(rel.E, P[dst][j]))
                emit_cone_quadratic(program, M, PolyhedralCone(K.reshape(-1, n_p)),
                                    name=f"jump[{sig}][{i},{j}]")
                cert_list.append((f"jump[{sig}][{i},{j}]", M, K.reshape(-1, n_p)))
                certificates += 1

    # flow conditions on preimage cones
    for q in has.automaton.nodes:
        rel = has.nodes[q]
        n_p = rel.C.shape[0]
        if n_p == 0 or rel.C.size == 0:
            continue
        for i, cone in enumerate(parts[q].cones):
            K, ok = _restriction(cone.G @ rel.E.T, n_p)
            if not ok:
                continue
            M = _mat_add(congruence(rel.C, P[q][i], rel.E), congruence(rel.E, P[q][i], rel.C))
            emit_cone_quadratic(program, M, PolyhedralCone(K.reshape(-1, n_p)),
                                name=f"flow[{q}][{i}]")
            cert_list.append((f"flow[{q}][{i}]", M, K.reshape(-1, n_p)))
            certificates += 1

    # box inclusion piece by piece, separate bounds per sign
    for q in has.automaton.nodes:
        box = has.nodes[q].safe
        rows = []
        for k in range(box.dim):
            for sign in (1.0, -1.0):
                u = _directional_radius(box, k, sign)
                e = np.zeros(box.dim)
                e[k] = sign
                for i, cone in enumerate(parts[q].cones):
                    if cone.contains(e, 1e-9):
                        if u < 0:
                            rows.append(LinExpr.of(-1.0))
                        else:
                            rows.append(LinExpr.of(u * u) - P[q][i].entry(k, k))
        program.add_linear(rows, CONE_NONNEG)

    # objective: vertex membership restricted to pieces meeting the
    # lifted projection plane, intersected with the vertex's halfspace
    coords = problem.proj_coords
    k = len(coords)
    root = problem.objective_node
    n_root = has.state_dim(root)
    lift = np.zeros((n_root, k))
    for a, c in enumerate(coords):
        lift[c, a] = 1.0
    for i, cone in enumerate(parts[root].cones):
        Ki, ok = _restriction(cone.G @ lift, k)
        if not ok:
            continue
        sub = [[P[root][i].entry(coords[a], coords[b]) for b in range(k)] for a in range(k)]
        for v in problem.vertices:
            varr = np.asarray(v, dtype=float)
            K, ok = _restriction(np.vstack([Ki.reshape(-1, k), -varr.reshape(1, k)]), k)
            if not ok:
                continue
            M = [[s.expr * float(varr[a] * varr[b]) - sub[a][b] for b in range(k)]
                 for a in range(k)]
            emit_cone_quadratic(program, M, PolyhedralCone(K), name=f"obj[{i}]")
            cert_list.append((f"obj[{i}]", M, K))
            certificates += 1

    program.set_objective(s.expr, maximize=True)
    program.finalize()
    return program, {"P": P, "scale": s, "partitions": parts,
                     "certificates": certificates, "cert_list": cert_list}


# ---------------------------------------------------------------------------
# end-to-end solve
# ---------------------------------------------------------------------------

def compile_problem(problem: SynthesisProblem) -> Tuple[ConicProgram, dict]:
    kind = problem.template.kind
    if kind == "ellipsoid":
        return compile_ellipsoid(problem)
    if kind == "polyset":
        return compile_polyset(problem)
    if kind == "piecewise":
        return compile_piecewise(problem)
    raise ValueError(f"unknown template kind {kind!r}")


def extract_models(problem: SynthesisProblem, handles: dict, sol: Solution) -> Dict[str, object]:
    kind = problem.template.kind
    models: Dict[str, object] = {}
    if kind == "ellipsoid":
        for q, var in handles["P"].items():
            models[q] = verify_mod.EllipsoidModel(sol.matrix(var))
    elif kind == "polyset":
        for q, poly in handles["polys"].items():
            models[q] = verify_mod.PolysetModel(poly.resolve(sol.values))
    else:
        for q, vars_q in handles["P"].items():
            mats = [sol.matrix(v) for v in vars_q]
            models[q] = verify_mod.PiecewiseModel(handles["partitions"][q], mats)
    return models


def gamma_from_objective(problem: SynthesisProblem, value: float) -> float:
    if problem.template.kind == "polyset":
        return max(value, 0.0) ** (1.0 / problem.template.degree)
    return math.sqrt(max(value, 0.0))


def solve_synthesis(problem: SynthesisProblem, solver_options: Optional[dict] = None,
                    verify_dirs: int = verify_mod.DEFAULT_DIRS,
                    verify_tol: float = 1e-6,
                    seed: int = verify_mod.DEFAULT_SEED) -> SynthesisSolution:
    """Compile, solve, extract, and verify one synthesis problem.

    A solved program whose solution fails any verification check is
    downgraded to ``solved-unverified``; solver failures propagate as
    their own statuses.
    """
    report = validate_has(problem.has)
    if not report.ok:
        raise ValueError(f"invalid system: {report}")
    program, handles = compile_problem(problem)
    sol = solve(program, solver_options)
    fingerprint = program.fingerprint()
    kind = problem.template.kind
    if sol.status != "optimal":
        return SynthesisSolution(sol.status, None, {}, None, sol.stats, fingerprint, kind)

    objective = float(sol.objective)
    feas_tol = (solver_options or {}).get("feas_tol", 1e-8)
    if objective <= 10.0 * feas_tol:
        # below solver accuracy the root extraction would amplify noise
        objective = 0.0
    gamma = gamma_from_objective(problem, objective)
    models = extract_models(problem, handles, sol)

    verification: Dict[str, dict] = {}
    inv = verify_mod.check_invariance(problem.has, models, n_dirs=verify_dirs,
                                      tol=verify_tol, seed=seed)
    verification["invariance"] = inv.to_dict()
    ok = inv.passed
    for q, model in models.items():
        is_root = q == problem.objective_node
        incl = verify_mod.check_inclusion(
            model, problem.has.nodes[q].safe,
            gamma=gamma if is_root else 0.0,
            vertices=problem.vertices if is_root else None,
            proj_coords=problem.proj_coords if is_root else None,
            n_dirs=verify_dirs, tol=verify_tol, seed=seed)
        verification[f"inclusion[{q}]"] = incl.to_dict()
        ok = ok and incl.passed
        if isinstance(model, verify_mod.PiecewiseModel):
            conv = verify_mod.audit_convexity(model, seed=seed)
            cont = verify_mod.audit_continuity(model, seed=seed)
            verification[f"convexity[{q}]"] = conv.to_dict()
            verification[f"continuity[{q}]"] = cont.to_dict()
            ok = ok and conv.passed and cont.passed

    status = "verified" if ok else "solved-unverified"
    return SynthesisSolution(status, gamma, models, objective, sol.stats,
                             fingerprint, kind, verification)
