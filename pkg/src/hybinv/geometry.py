"""Polyhedral cone algebra and conic partitions of direction space.

Cones are stored in H-representation ``{y : G y <= 0}`` with optional
generators.  Lineality (arising when intersections collapse onto a
subspace) is kept separate from the pointed rays; emitters that need
generators treat lineality directions as ray pairs of both signs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull

RAY_TOL = 1e-9
MAX_DD_DIM = 6


@dataclass(frozen=True)
class PolyhedralCone:
    """Cone {y : G y <= 0}; optional V-rep as rays plus lineality basis."""

    G: np.ndarray
    rays: Optional[np.ndarray] = None        # columns are generator rays
    lineality: Optional[np.ndarray] = None   # columns span the lineality space
    empty_interior: bool = False

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.G, dtype=float)).copy()
        G.setflags(write=False)
        object.__setattr__(self, "G", G)
        for name in ("rays", "lineality"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=float).copy()
                v.setflags(write=False)
                object.__setattr__(self, name, v)

    @property
    def dim(self) -> int:
        return self.G.shape[1]

    def contains(self, y: np.ndarray, tol: float = 1e-9) -> bool:
        y = np.asarray(y, dtype=float)
        if self.G.size == 0:
            return True
        return bool(np.all(self.G @ y <= tol * max(1.0, float(np.linalg.norm(y)))))

    def contains_many(self, Y: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        """Vectorized membership for directions stacked as columns of Y."""
        if self.G.size == 0:
            return np.ones(Y.shape[1], dtype=bool)
        scale = np.maximum(1.0, np.linalg.norm(Y, axis=0))
        return np.all(self.G @ Y <= tol * scale, axis=0)


def _clean_rows(G: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Drop zero rows, normalize the rest, dedupe near-identical rows."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    if G.size == 0:
        return G.reshape(0, G.shape[1] if G.ndim == 2 else 0)
    norms = np.linalg.norm(G, axis=1)
    G = G[norms > tol]
    if not len(G):
        return G
    G = G / np.linalg.norm(G, axis=1, keepdims=True)
    kept: List[np.ndarray] = []
    for row in G:
        if not any(np.linalg.norm(row - r) < 1e-12 for r in kept):
            kept.append(row)
    return np.array(kept)


def cone_has_nonzero(G: np.ndarray) -> bool:
    """Whether {y : G y <= 0} contains a nonzero point.

    Low dimensions go through double description; otherwise scale
    invariance lets the search be confined to the unit box, where the cone
    is nontrivial iff some +-coordinate objective has positive optimum.
    """
    G = _clean_rows(G)
    if G.size == 0:
        return True
    n = G.shape[1]
    if n <= MAX_DD_DIM:
        rays, lin = cone_generators(PolyhedralCone(G))
        return bool(rays.size or lin.size)
    bounds = [(-1.0, 1.0)] * n
    zeros = np.zeros(len(G))
    for j in range(n):
        for sgn in (1.0, -1.0):
            c = np.zeros(n)
            c[j] = -sgn
            res = linprog(c, A_ub=G, b_ub=zeros, bounds=bounds, method="highs")
            if res.status == 0 and -res.fun > 1e-9:
                return True
    return False


def reduce_cone_2d(G: np.ndarray) -> Tuple[np.ndarray, bool]:
    """Minimal H-representation of a planar cone.

    Returns ``(rows, nonzero)`` where rows is the canonical H-rep (empty
    for the full plane) and nonzero reports whether the cone contains a
    nonzero point.  Keeping multiplier blocks at their minimal size helps
    the interior-point solver considerably.
    """
    G = _clean_rows(G)
    if G.size == 0:
        return np.zeros((0, 2)), True
    rays, lin = cone_generators(PolyhedralCone(G))
    n_l = lin.shape[1] if lin.size else 0
    n_r = rays.shape[1] if rays.size else 0
    if n_l == 2:
        return np.zeros((0, 2)), True
    if n_l == 1:
        d = lin[:, 0]
        normal = np.array([-d[1], d[0]])
        if n_r == 0:
            return np.array([normal, -normal]), True
        r = rays[:, 0]
        if normal @ r > 0:
            normal = -normal
        return np.array([normal]), True
    if n_r == 0:
        return G, False
    if n_r == 1:
        r = rays[:, 0]
        p = np.array([-r[1], r[0]])
        return np.array([p, -p, -r]), True
    if n_r > 2:  # numerically blurred extremes; keep the original rows
        return G, True
    # pointed sector: one outward normal per extreme ray
    r1, r2 = rays[:, 0], rays[:, 1]
    n1 = np.array([-r1[1], r1[0]])
    if n1 @ r2 > 0:
        n1 = -n1
    n2 = np.array([-r2[1], r2[0]])
    if n2 @ r1 > 0:
        n2 = -n2
    return np.array([n1, n2]), True


def cone_has_interior(G: np.ndarray) -> bool:
    """Whether {y : G y <= 0} has nonempty interior (strictly feasible point)."""
    G = _clean_rows(G)
    if G.size == 0:
        return True
    n = G.shape[1]
    # max t  s.t.  G y + t <= 0,  y in [-1,1]^n,  t <= 1
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A = np.hstack([G, np.ones((len(G), 1))])
    bounds = [(-1.0, 1.0)] * n + [(None, 1.0)]
    res = linprog(c, A_ub=A, b_ub=np.zeros(len(G)), bounds=bounds, method="highs")
    return bool(res.status == 0 and -res.fun > 1e-9)


def preimage_cone(cone: PolyhedralCone, M: np.ndarray) -> PolyhedralCone:
    """Pull a cone back through a transposed linear map.

    Returns ``{z : M^T z in cone}``; with ``cone`` in R^k the matrix maps
    ``M: r x k`` and the result lives in R^r with H-rep ``G @ M.T``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] != cone.dim:
        raise ValueError(f"map has {M.shape[1]} columns, cone lives in R^{cone.dim}")
    G = cone.G @ M.T if cone.G.size else np.zeros((0, M.shape[0]))
    return PolyhedralCone(_clean_rows(G) if G.size else G.reshape(0, M.shape[0]))


def intersect_cones(a: PolyhedralCone, b: PolyhedralCone) -> PolyhedralCone:
    """Intersection by stacking H-reps; flags empty interior."""
    if a.dim != b.dim:
        raise ValueError("ambient dimensions differ")
    G = np.vstack([a.G.reshape(-1, a.dim), b.G.reshape(-1, b.dim)])
    G = _clean_rows(G)
    return PolyhedralCone(G, empty_interior=not cone_has_interior(G))


def cone_generators(cone: PolyhedralCone, tol: float = RAY_TOL) -> Tuple[np.ndarray, np.ndarray]:
    """Generators of an H-rep cone by incremental double description.

    Returns ``(rays, lineality)`` with rays as unit columns of the pointed
    part and an orthonormal lineality basis.  Supported up to ambient
    dimension 6, which covers every cone this library constructs.
    """
    n = cone.dim
    if n > MAX_DD_DIM:
        raise ValueError(f"double description unsupported above R^{MAX_DD_DIM}")
    G = _clean_rows(cone.G)
    lin = [np.eye(n)[:, j] for j in range(n)]
    rays: List[np.ndarray] = []
    tight: List[set] = []          # per ray: indices of inserted rows tight at it
    inserted: List[np.ndarray] = []

    for row_idx in range(len(G)):
        g = G[row_idx]
        # reduce lineality if g does not vanish on it
        piv = None
        for l in lin:
            if abs(g @ l) > tol:
                piv = l
                break
        if piv is not None:
            if g @ piv > 0:
                piv = -piv
            lin = [l - (g @ l) / (g @ piv) * piv for l in lin if l is not piv]
            lin = [l for l in lin if np.linalg.norm(l) > tol]
            new_rays = []
            new_tight = []
            for r, t in zip(rays, tight):
                r2 = r - (g @ r) / (g @ piv) * piv
                if np.linalg.norm(r2) > tol:
                    new_rays.append(r2 / np.linalg.norm(r2))
                    new_tight.append(t | {row_idx})
            # the pivot leaves the lineality space and becomes a ray; every
            # previously inserted row vanished on the lineality, so all are
            # tight at it
            rays = new_rays + [piv / np.linalg.norm(piv)]
            tight = new_tight + [set(range(row_idx))]
            inserted.append(g)
            continue
        inserted.append(g)
        if not rays:
            # cone currently equals its lineality space; g vanishes on it
            continue
        vals = [g @ r for r in rays]
        keep_idx = [i for i, v in enumerate(vals) if v <= tol]
        pos_idx = [i for i, v in enumerate(vals) if v > tol]
        neg_idx = [i for i, v in enumerate(vals) if v < -tol]
        combos: List[np.ndarray] = []
        combo_tight: List[set] = []
        for ip, im in itertools.product(pos_idx, neg_idx):
            r = vals[ip] * rays[im] - vals[im] * rays[ip]
            nr = np.linalg.norm(r)
            if nr < tol:
                continue
            combos.append(r / nr)
            combo_tight.append((tight[ip] & tight[im]) | {row_idx})
        new_rays = [rays[i] for i in keep_idx] + combos
        new_tight = [tight[i] | ({row_idx} if abs(vals[i]) <= tol else set())
                     for i in keep_idx] + combo_tight
        # prune non-extreme rays: r is redundant if another ray's tight set
        # strictly contains its own
        keep = []
        for i in range(len(new_rays)):
            redundant = False
            for j in range(len(new_rays)):
                if i == j:
                    continue
                if new_tight[i] < new_tight[j] or (
                    new_tight[i] == new_tight[j] and j < i
                    and np.linalg.norm(new_rays[i] - new_rays[j]) < 1e-9
                ):
                    redundant = True
                    break
            if not redundant:
                keep.append(i)
        rays = [new_rays[i] for i in keep]
        tight = [new_tight[i] for i in keep]

    # dedupe parallel rays
    final: List[np.ndarray] = []
    for r in rays:
        if not any(np.linalg.norm(r - f) < 1e-9 for f in final):
            final.append(r)
    R = np.array(final).T if final else np.zeros((n, 0))
    Lb = np.array(lin).T if lin else np.zeros((n, 0))
    if Lb.size:
        Lb, _ = np.linalg.qr(Lb)
    if G.size and R.size:
        worst = float(np.max(G @ R))
        if worst > 1e-7:
            raise ValueError(f"double description produced an invalid ray (violation {worst:.2e})")
    return R, Lb


def generator_columns(cone: PolyhedralCone) -> np.ndarray:
    """Rays plus both signs of lineality directions, as columns."""
    if cone.rays is not None:
        R = cone.rays
        L = cone.lineality if cone.lineality is not None else np.zeros((cone.dim, 0))
    else:
        R, L = cone_generators(cone)
    cols = [R] if R.size else []
    if L.size:
        cols += [L, -L]
    if not cols:
        return np.zeros((cone.dim, 0))
    return np.hstack(cols)


@dataclass(frozen=True)
class Adjacency:
    """Shared ridge between partition pieces i and j.

    ``basis`` spans the ridge (dimension n-1); ``normal`` is orthogonal to
    it, oriented to point out of piece ``i`` and into piece ``j``.
    ``shared_rays`` are the extreme rays of the ridge cone.
    """

    i: int
    j: int
    basis: np.ndarray
    normal: np.ndarray
    shared_rays: np.ndarray


@dataclass(frozen=True)
class ConicPartition:
    """Full-dimensional polyhedral cones tiling direction space."""

    cones: Tuple[PolyhedralCone, ...]
    adjacency: Tuple[Adjacency, ...] = field(default_factory=tuple)

    @property
    def dim(self) -> int:
        return self.cones[0].dim

    def __len__(self) -> int:
        return len(self.cones)

    def pieces_containing(self, y: np.ndarray, tol: float = 1e-9) -> List[int]:
        return [i for i, c in enumerate(self.cones) if c.contains(y, tol)]

    def to_dict(self) -> dict:
        return {
            "cones": [
                {"G": c.G.tolist(), "rays": None if c.rays is None else c.rays.tolist()}
                for c in self.cones
            ]
        }

    @staticmethod
    def from_dict(data: dict) -> "ConicPartition":
        cones = []
        for c in data["cones"]:
            rays = None if c.get("rays") is None else np.array(c["rays"], dtype=float)
            cones.append(PolyhedralCone(np.array(c["G"], dtype=float), rays=rays))
        return build_partition(cones)


def build_partition(cones: Sequence[PolyhedralCone]) -> ConicPartition:
    """Assemble a partition, deriving the adjacency structure.

    Two pieces are adjacent when the generators common to both span a
    hyperplane; the shared basis and oriented normal feed the continuity
    and convexity constraints of the piecewise template.
    """
    n = cones[0].dim
    adj: List[Adjacency] = []
    gens = [generator_columns(c) for c in cones]
    for i, j in itertools.combinations(range(len(cones)), 2):
        shared: List[np.ndarray] = []
        for g in np.hstack([gens[i], gens[j]]).T:
            if cones[i].contains(g, 1e-9) and cones[j].contains(g, 1e-9) and not any(
                np.linalg.norm(g - s) < 1e-9 for s in shared
            ):
                shared.append(g)
        if not shared:
            continue
        S = np.array(shared).T
        if np.linalg.matrix_rank(S, tol=1e-9) != n - 1:
            continue
        q, _ = np.linalg.qr(S)
        basis = q[:, : n - 1]
        normal = _null_direction(basis)
        interior = _interior_point(gens[i])
        if interior is not None and normal @ interior > 0:
            normal = -normal
        adj.append(Adjacency(i=i, j=j, basis=basis, normal=normal, shared_rays=S))
    return ConicPartition(tuple(cones), tuple(adj))


def _null_direction(basis: np.ndarray) -> np.ndarray:
    """Unit vector orthogonal to the columns of ``basis``."""
    u, _, _ = np.linalg.svd(basis, full_matrices=True)
    return u[:, -1]


def _interior_point(gen_cols: np.ndarray) -> Optional[np.ndarray]:
    if gen_cols.size == 0:
        return None
    p = gen_cols.mean(axis=1)
    if np.linalg.norm(p) < 1e-12:
        return None
    return p / np.linalg.norm(p)


def sphere_grid_points(m1: int, m2: int) -> np.ndarray:
    """Longitude/latitude samples of the unit sphere with deduplicated poles.

    Longitudes take m1 even steps around the equator; latitudes take m2
    evenly spaced values from -pi/2 to pi/2 inclusive, which requires m2
    odd so the equator itself is sampled.
    """
    if m1 < 3:
        raise ValueError("need m1 >= 3 longitudes")
    if m2 < 3 or m2 % 2 == 0:
        raise ValueError("latitude count m2 must be odd and >= 3")
    alphas = [2.0 * np.pi * k / m1 for k in range(m1)]
    betas = [-np.pi / 2 + np.pi * k / (m2 - 1) for k in range(m2)]
    pts: List[Tuple[float, float, float]] = []
    for b in betas:
        if abs(abs(b) - np.pi / 2) < 1e-14:
            pts.append((0.0, 0.0, float(np.sign(b))))
            continue
        for a in alphas:
            pts.append((np.cos(a) * np.cos(b), np.sin(a) * np.cos(b), np.sin(b)))
    return np.array(pts)


def face_fan(m1: int, m2: int) -> ConicPartition:
    """Simplicial fan over the convex hull of a sphere grid.

    Each hull facet spawns the conic hull of its vertices; coplanar facets
    are triangulated, so every cone is simplicial with the grid points as
    rays.  The result tiles R^3.
    """
    pts = sphere_grid_points(m1, m2)
    try:
        hull = ConvexHull(pts)
    except Exception as exc:  # qhull signals degeneracy with its own error type
        raise ValueError(f"degenerate hull: {exc}") from exc
    if hull.volume < 1e-9:
        raise ValueError("degenerate hull: sample points are coplanar")
    cones = []
    for simplex in hull.simplices:
        R = pts[np.sort(simplex)].T  # 3 x 3, rays
        G = []
        for a, b in itertools.combinations(range(3), 2):
            nrm = np.cross(R[:, a], R[:, b])
            c = [k for k in range(3) if k not in (a, b)][0]
            sgn = np.sign(nrm @ R[:, c])
            if abs(sgn) < 0.5:
                raise ValueError("degenerate hull facet")
            G.append(-sgn * nrm / np.linalg.norm(nrm))
        cones.append(PolyhedralCone(np.array(G), rays=R))
    return build_partition(cones)
