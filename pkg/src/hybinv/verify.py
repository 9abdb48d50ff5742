"""Post-solve numerical verification of synthesized sets.

Verification works purely on the algebraic side: support-function models
of the solved sets are sampled over dense direction sets and checked
against the weak-invariance inequalities, safe-set inclusion, and the
objective-polytope inclusion.  Sampling seeds are fixed so reports are
reproducible; all checks report their worst violation rather than
raising.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from hybinv.geometry import ConicPartition
from hybinv.model import Box, HybridAlgebraicSystem
from hybinv.polysos import HomogeneousPoly, gradient

DEFAULT_SEED = 1729
DEFAULT_DIRS = 10_000
BOUNDARY_TOL = 1e-9


def sample_directions(dim: int, count: int, seed: int) -> np.ndarray:
    """Deterministic uniform unit directions, stacked as columns."""
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(dim, count))
    norms = np.linalg.norm(dirs, axis=0)
    norms[norms == 0] = 1.0
    return dirs / norms


class EllipsoidModel:
    """Support function sqrt(y' P y) of an ellipsoid given by its polar form."""

    kind = "ellipsoid"

    def __init__(self, P: np.ndarray):
        self.P = np.asarray(P, dtype=float)
        self.dim = self.P.shape[0]

    def value(self, y: np.ndarray) -> float:
        y = np.asarray(y, dtype=float)
        return float(np.sqrt(max(y @ self.P @ y, 0.0)))

    def value_many(self, Y: np.ndarray) -> np.ndarray:
        return np.sqrt(np.maximum(np.einsum("ik,ij,jk->k", Y, self.P, Y), 0.0))

    def gradients(self, y: np.ndarray) -> List[np.ndarray]:
        h = self.value(y)
        if h <= 0:
            raise ZeroDivisionError("support function vanishes; gradient undefined")
        return [self.P @ y / h]

    def gradient(self, y: np.ndarray) -> np.ndarray:
        return self.gradients(y)[0]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "P": self.P.tolist()}


class PolysetModel:
    """Support function p(y)^(1/2d) of a polyset."""

    kind = "polyset"

    def __init__(self, poly: HomogeneousPoly):
        if poly.degree % 2 != 0:
            raise ValueError("polyset degree must be even")
        self.poly = poly
        self.grad = gradient(poly)
        self.dim = poly.nvars
        self.two_d = poly.degree

    def value(self, y: np.ndarray) -> float:
        return float(max(self.poly.evaluate(np.asarray(y, dtype=float)), 0.0) ** (1.0 / self.two_d))

    def value_many(self, Y: np.ndarray) -> np.ndarray:
        return np.maximum(self.poly.evaluate(Y), 0.0) ** (1.0 / self.two_d)

    def gradients(self, y: np.ndarray) -> List[np.ndarray]:
        y = np.asarray(y, dtype=float)
        p = float(self.poly.evaluate(y))
        if p <= 0:
            raise ZeroDivisionError("polyset support vanishes; gradient undefined")
        g = np.array([gi.evaluate(y) for gi in self.grad])
        return [(1.0 / self.two_d) * p ** (1.0 / self.two_d - 1.0) * g]

    def gradient(self, y: np.ndarray) -> np.ndarray:
        return self.gradients(y)[0]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "poly": self.poly.to_dict()}


class PiecewiseModel:
    """Piecewise sqrt(y' P_i y) over a polyhedral conic partition."""

    kind = "piecewise"

    def __init__(self, partition: ConicPartition, mats: Sequence[np.ndarray]):
        if len(partition) != len(mats):
            raise ValueError("one matrix per partition piece required")
        self.partition = partition
        self.mats = [np.asarray(m, dtype=float) for m in mats]
        self.dim = partition.dim

    def pieces(self, y: np.ndarray, tol: float = BOUNDARY_TOL) -> List[int]:
        found = self.partition.pieces_containing(y, tol)
        if not found:
            # partition defect or numerical grazing: fall back to the piece
            # violated least
            margins = [float(np.max(c.G @ y)) if c.G.size else 0.0
                       for c in self.partition.cones]
            best = int(np.argmin(margins))
            if margins[best] > 1e-6 * max(1.0, float(np.linalg.norm(y))):
                raise ValueError("direction lies in no partition piece")
            return [best]
        return found

    def value(self, y: np.ndarray, check_agreement: bool = True) -> float:
        y = np.asarray(y, dtype=float)
        ids = self.pieces(y)
        vals = [float(np.sqrt(max(y @ self.mats[i] @ y, 0.0))) for i in ids]
        if check_agreement and len(vals) > 1:
            spread = max(vals) - min(vals)
            if spread > 1e-8 * max(1.0, max(vals)):
                raise ValueError(f"support values disagree across pieces by {spread:.2e}")
        return vals[0]

    def value_many(self, Y: np.ndarray) -> np.ndarray:
        out = np.full(Y.shape[1], np.nan)
        margins = np.full(Y.shape[1], np.inf)
        for cone, P in zip(self.partition.cones, self.mats):
            if cone.G.size:
                m = np.max(cone.G @ Y, axis=0)
            else:
                m = np.zeros(Y.shape[1])
            better = m < margins
            if np.any(better):
                vals = np.sqrt(np.maximum(np.einsum("ik,ij,jk->k", Y[:, better], P, Y[:, better]), 0.0))
                out[better] = vals
                margins[better] = m[better]
        return out

    def gradients(self, y: np.ndarray) -> List[np.ndarray]:
        """Exposed points from every piece whose cone contains y.

        On a shared boundary the subdifferential is the convex hull of the
        per-piece gradients, so checks quantify over all of them.
        """
        y = np.asarray(y, dtype=float)
        out = []
        for i in self.pieces(y):
            h = float(np.sqrt(max(y @ self.mats[i] @ y, 0.0)))
            if h <= 0:
                raise ZeroDivisionError("support function vanishes; gradient undefined")
            out.append(self.mats[i] @ y / h)
        return out

    def gradient(self, y: np.ndarray, piece: Optional[int] = None) -> np.ndarray:
        if piece is not None:
            h = float(np.sqrt(max(y @ self.mats[piece] @ y, 0.0)))
            return self.mats[piece] @ y / h
        grads = self.gradients(y)
        if len(grads) > 1:
            raise ValueError("direction lies on a piece boundary; pass an explicit piece")
        return grads[0]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "partition": self.partition.to_dict(),
            "mats": [m.tolist() for m in self.mats],
        }


def model_from_dict(data: dict):
    kind = data["kind"]
    if kind == "ellipsoid":
        return EllipsoidModel(np.array(data["P"], dtype=float))
    if kind == "polyset":
        return PolysetModel(HomogeneousPoly.from_dict(data["poly"]))
    if kind == "piecewise":
        part = ConicPartition.from_dict(data["partition"])
        return PiecewiseModel(part, [np.array(m, dtype=float) for m in data["mats"]])
    raise ValueError(f"unknown model kind {kind!r}")


@dataclass
class CheckResult:
    name: str
    max_violation: float
    samples: int
    passed: bool

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "max_violation": self.max_violation,
            "samples": self.samples,
            "passed": self.passed,
        }


@dataclass
class Report:
    checks: List[CheckResult] = field(default_factory=list)
    seed: int = DEFAULT_SEED
    tol: float = 1e-6

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def max_violation(self) -> float:
        return max((c.max_violation for c in self.checks), default=0.0)

    def add(self, name: str, violation: float, samples: int):
        self.checks.append(CheckResult(name, float(violation), samples, violation <= self.tol))

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "seed": self.seed,
            "tol": self.tol,
            "checks": [c.to_dict() for c in self.checks],
        }


def check_invariance(has: HybridAlgebraicSystem, models: Dict[str, object],
                     n_dirs: int = DEFAULT_DIRS, tol: float = 1e-6,
                     seed: int = DEFAULT_SEED) -> Report:
    """Sampled check of the weak-invariance support-function inequalities.

    Per transition the jump inequality h(C' y | S_src) <= h(E' y | S_dst)
    is sampled over unit directions; per node the flow pairing
    <z, C grad h(E' z)> <= 0 is evaluated for every piece containing the
    direction, which covers piece boundaries without perturbation.
    """
    report = Report(seed=seed, tol=tol)
    for k, (src, sig, dst) in enumerate(has.automaton.transitions):
        rel = has.signals[sig]
        n_p = rel.C.shape[0]
        if n_p == 0 or rel.C.size == 0:
            report.add(f"jump[{src}-{sig}->{dst}]", 0.0, 0)
            continue
        Y = sample_directions(n_p, n_dirs, seed + 17 * k)
        lhs = models[src].value_many(rel.C.T @ Y)
        rhs = models[dst].value_many(rel.E.T @ Y)
        report.add(f"jump[{src}-{sig}->{dst}]", float(np.max(lhs - rhs)), n_dirs)
    for q in has.automaton.nodes:
        rel = has.nodes[q]
        n_p = rel.C.shape[0]
        if n_p == 0 or rel.C.size == 0:
            report.add(f"flow[{q}]", 0.0, 0)
            continue
        Z = sample_directions(n_p, n_dirs, seed + 1009 * (1 + has.automaton.nodes.index(q)))
        model = models[q]
        worst = -np.inf
        for col in range(Z.shape[1]):
            z = Z[:, col]
            x_dir = rel.E.T @ z
            if np.linalg.norm(x_dir) < 1e-14:
                continue
            for g in model.gradients(x_dir):
                worst = max(worst, float(z @ (rel.C @ g)))
        report.add(f"flow[{q}]", worst if np.isfinite(worst) else 0.0, n_dirs)
    return report


def check_inclusion(model, box: Box, gamma: float = 0.0,
                    vertices: Optional[Sequence[Sequence[float]]] = None,
                    proj_coords: Optional[Sequence[int]] = None,
                    n_dirs: int = DEFAULT_DIRS, tol: float = 1e-6,
                    seed: int = DEFAULT_SEED) -> Report:
    """Safe-box inclusion (exact at facet normals) and objective inclusion.

    The box check evaluates the support function at +-e_i.  The objective
    check samples directions w in the projection space and verifies
    <gamma v, w> <= h(lift(w)) for every vertex v.
    """
    report = Report(seed=seed, tol=tol)
    worst = -np.inf
    for i in range(box.dim):
        e = np.zeros(box.dim)
        e[i] = 1.0
        worst = max(worst, model.value(e) - box.upper[i])
        worst = max(worst, model.value(-e) + box.lower[i])
    report.add("safe-box", worst, 2 * box.dim)
    if vertices is not None and gamma > 0:
        coords = list(proj_coords) if proj_coords is not None else list(range(model.dim))
        W = sample_directions(len(coords), n_dirs, seed + 23)
        lift = np.zeros((model.dim, W.shape[1]))
        lift[coords, :] = W
        h = model.value_many(lift)
        worst = -np.inf
        for v in vertices:
            v = np.asarray(v, dtype=float)
            worst = max(worst, float(np.max(gamma * (v @ W) - h)))
        report.add("objective-polytope", worst, n_dirs * len(vertices))
    return report


def audit_homogeneity(model, scales=(0.5, 2.0, 10.0), n: int = 100,
                      seed: int = DEFAULT_SEED, tol: float = 1e-9) -> Report:
    """Relative check of h(s y) = s h(y) for positive scalings."""
    report = Report(seed=seed, tol=tol)
    Y = sample_directions(model.dim, n, seed + 5)
    base = model.value_many(Y)
    worst = 0.0
    for s in scales:
        vals = model.value_many(s * Y)
        denom = np.maximum(np.abs(s * base), 1e-12)
        worst = max(worst, float(np.max(np.abs(vals - s * base) / denom)))
    report.add("homogeneity", worst, n * len(scales))
    return report


def audit_convexity(model, n: int = 10_000, seed: int = DEFAULT_SEED,
                    tol: float = 1e-8) -> Report:
    """Sampled midpoint-style convexity audit of the support function.

    This is the soundness gate for piecewise models: a support function
    that fails it does not describe a convex set and the solution is
    reported as unverified.
    """
    report = Report(seed=seed, tol=tol)
    rng = np.random.default_rng(seed + 99)
    Y1 = sample_directions(model.dim, n, seed + 7)
    Y2 = sample_directions(model.dim, n, seed + 8)
    alpha = rng.uniform(size=n)
    mix = alpha * Y1 + (1 - alpha) * Y2
    lhs = model.value_many(mix)
    rhs = alpha * model.value_many(Y1) + (1 - alpha) * model.value_many(Y2)
    report.add("convexity", float(np.max(lhs - rhs)), n)
    return report


def audit_continuity(model: PiecewiseModel, samples_per_ridge: int = 50,
                     seed: int = DEFAULT_SEED, tol: float = 1e-8) -> Report:
    """Cross-piece agreement of the support function on shared ridges."""
    report = Report(seed=seed, tol=tol)
    rng = np.random.default_rng(seed + 31)
    worst = 0.0
    count = 0
    for adj in model.partition.adjacency:
        S = adj.shared_rays
        for _ in range(samples_per_ridge):
            w = rng.uniform(0.1, 1.0, size=S.shape[1])
            y = S @ w
            ny = np.linalg.norm(y)
            if ny < 1e-12:
                continue
            y = y / ny
            hi = float(np.sqrt(max(y @ model.mats[adj.i] @ y, 0.0)))
            hj = float(np.sqrt(max(y @ model.mats[adj.j] @ y, 0.0)))
            worst = max(worst, abs(hi - hj))
            count += 1
    report.add("continuity", worst, count)
    return report
