"""Reduction of control systems to algebraic form.

A node or reset with unconstrained input ``x' = A x + B u`` constrains the
state only through ``Pi x' = Pi A x`` where the rows of ``Pi`` span the
orthogonal complement of the image of ``B``.  Box-constrained inputs are
first lifted into extra state coordinates so the same projection applies.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from hybinv.model import (
    Automaton,
    Box,
    HybridAlgebraicSystem,
    HybridControlSystem,
    NodeDynamics,
    NodeRelation,
    SignalRelation,
    SignalReset,
)

DEFAULT_RANK_TOL = 1e-9


@dataclass(frozen=True)
class Projector:
    """Orthonormal-row basis of the orthogonal complement of an image space.

    ``matrix`` has shape (n - rank(B), n) with ``matrix @ matrix.T = I`` and
    ``matrix @ B = 0``.  ``image_basis`` holds an orthonormal basis of
    Image(B) as columns, i.e. the kernel of ``matrix``.
    """

    matrix: np.ndarray
    image_basis: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float).copy()
        k = np.asarray(self.image_basis, dtype=float).copy()
        m.setflags(write=False)
        k.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "image_basis", k)

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]


def orth_complement_projector(B: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> Projector:
    """Orthonormal rows spanning Image(B)^perp = ker(B^T).

    Singular values below ``rank_tol`` times the largest are treated as
    zero.  A surjective ``B`` yields a projector with zero rows; an all-zero
    or zero-column ``B`` yields the identity.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if not np.all(np.isfinite(B)):
        raise ValueError("input matrix has non-finite entries")
    n = B.shape[0]
    if B.shape[1] == 0 or not B.size:
        return Projector(np.eye(n), np.zeros((n, 0)))
    U, s, _ = np.linalg.svd(B, full_matrices=True)
    if s.size and s[0] > 0:
        rank = int(np.sum(s > rank_tol * s[0]))
    else:
        rank = 0
    return Projector(U[:, rank:].T.copy(), U[:, :rank].copy())


def hcs_to_has(sys: HybridControlSystem, rank_tol: float = DEFAULT_RANK_TOL) -> HybridAlgebraicSystem:
    """Project unconstrained inputs out of a control system.

    Every node and reset input set must be unconstrained; box-constrained
    inputs have to be lifted with :func:`lift_box_inputs` first.  The
    automaton is carried over unchanged; per node the relation is
    ``(C, E) = (Pi A, Pi)`` with ``Pi`` built from that node's ``B``, and
    likewise per signal.
    """
    for q, nd in sys.nodes.items():
        if nd.inputs is not None:
            raise ValueError(f"node {q!r} has a constrained input; lift it first")
    for s, sr in sys.signals.items():
        if sr.inputs is not None:
            raise ValueError(f"signal {s!r} has a constrained input; lift it first")
    nodes = {}
    for q, nd in sys.nodes.items():
        pi = orth_complement_projector(nd.B, rank_tol).matrix
        nodes[q] = NodeRelation(C=pi @ nd.A, E=pi, safe=nd.safe)
    signals = {}
    for s, sr in sys.signals.items():
        pi = orth_complement_projector(sr.B, rank_tol).matrix
        signals[s] = SignalRelation(C=pi @ sr.A, E=pi)
    return HybridAlgebraicSystem(sys.automaton, nodes, signals)


@dataclass
class LiftingMap:
    """Records how lifted coordinates relate to the original system.

    ``node_coords`` maps each original node to the indices of its original
    state coordinates inside the lifted state.  ``temp_nodes`` lists nodes
    introduced for constrained transition inputs.
    """

    node_coords: Dict[str, List[int]] = field(default_factory=dict)
    temp_nodes: List[str] = field(default_factory=list)
    lifted: bool = False

    def to_dict(self) -> dict:
        return {
            "node_coords": {q: list(v) for q, v in sorted(self.node_coords.items())},
            "temp_nodes": list(self.temp_nodes),
            "lifted": self.lifted,
        }

    @staticmethod
    def from_dict(data: dict) -> "LiftingMap":
        return LiftingMap(
            node_coords={q: list(v) for q, v in data["node_coords"].items()},
            temp_nodes=list(data["temp_nodes"]),
            lifted=bool(data["lifted"]),
        )


def _box_product(a: Box, b: Optional[Box]) -> Box:
    if b is None:
        return a
    return Box(a.lower + b.lower, a.upper + b.upper)


def lift_box_inputs(sys: HybridControlSystem) -> Tuple[HybridControlSystem, LiftingMap]:
    """Turn box-constrained inputs into state coordinates.

    Continuous inputs become appended integrator states ``x_new' = v`` with
    the box absorbed into the safe set.  A constrained reset input is staged
    through a temporary node: a first transition copies the source state and
    stores the chosen input in appended coordinates, a second applies the
    original reset reading them back.  Temporary nodes have trivial
    dynamics (full-image ``B``), so they contribute no continuous
    condition after reduction.
    """
    lift_dims = {}
    for q, nd in sys.nodes.items():
        if nd.inputs is not None:
            lift_dims[q] = nd.inputs.dim
        else:
            lift_dims[q] = 0
    any_node_lift = any(m > 0 for m in lift_dims.values())
    any_sig_lift = any(sr.inputs is not None for sr in sys.signals.values())
    lmap = LiftingMap(
        node_coords={q: list(range(sys.state_dim(q))) for q in sys.automaton.nodes},
        lifted=any_node_lift or any_sig_lift,
    )
    if not lmap.lifted:
        return sys, lmap

    new_nodes: Dict[str, NodeDynamics] = {}
    orig_dim = {q: sys.state_dim(q) for q in sys.automaton.nodes}
    for q, nd in sys.nodes.items():
        m = lift_dims[q]
        n = orig_dim[q]
        if m == 0:
            new_nodes[q] = NodeDynamics(nd.A, nd.B, nd.safe, None)
            continue
        A = np.zeros((n + m, n + m))
        A[:n, :n] = nd.A
        A[:n, n:] = nd.B
        B = np.zeros((n + m, m))
        B[n:, :] = np.eye(m)
        new_nodes[q] = NodeDynamics(A, B, _box_product(nd.safe, nd.inputs), None)

    new_signals: Dict[str, SignalReset] = {}
    new_transitions: List[Tuple[str, str, str]] = []

    for idx, (src, sig, dst) in enumerate(sys.automaton.transitions):
        sr = sys.signals[sig]
        n_src, n_dst = orig_dim[src], orig_dim[dst]
        m_src, m_dst = lift_dims[src], lift_dims[dst]
        m_sig = sr.B.shape[1] if sr.B.size else 0
        if sr.inputs is None:
            # single lifted transition: original reset on original coords,
            # appended target coords set by a fresh unconstrained input
            A = np.zeros((n_dst + m_dst, n_src + m_src))
            A[:n_dst, :n_src] = sr.A
            B = np.zeros((n_dst + m_dst, m_sig + m_dst))
            if m_sig:
                B[:n_dst, :m_sig] = sr.B
            if m_dst:
                B[n_dst:, m_sig:] = np.eye(m_dst)
            name = sig if sig not in new_signals else f"{sig}#{idx}"
            new_signals[name] = SignalReset(A, B, None)
            new_transitions.append((src, name, dst))
            continue

        # constrained reset input: stage through a dedicated temporary node
        tmp = f"tmp:{src}:{sig}:{dst}"
        tmp_dim = n_src + m_sig
        new_nodes[tmp] = NodeDynamics(
            A=np.zeros((tmp_dim, tmp_dim)),
            B=np.eye(tmp_dim),
            safe=_box_product(sys.nodes[src].safe, sr.inputs),
            inputs=None,
        )
        lmap.temp_nodes.append(tmp)

        # first hop: copy source originals, store the reset input
        A1 = np.zeros((tmp_dim, n_src + m_src))
        A1[:n_src, :n_src] = np.eye(n_src)
        B1 = np.zeros((tmp_dim, m_sig))
        B1[n_src:, :] = np.eye(m_sig)
        set_name = f"{sig}:set:{idx}"
        new_signals[set_name] = SignalReset(A1, B1, None)
        new_transitions.append((src, set_name, tmp))

        # second hop: apply the original reset reading the stored input
        A2 = np.zeros((n_dst + m_dst, tmp_dim))
        A2[:n_dst, :n_src] = sr.A
        if m_sig:
            A2[:n_dst, n_src:] = sr.B
        B2 = np.zeros((n_dst + m_dst, m_dst))
        if m_dst:
            B2[n_dst:, :] = np.eye(m_dst)
        apply_name = f"{sig}:apply:{idx}"
        new_signals[apply_name] = SignalReset(A2, B2, None)
        new_transitions.append((tmp, apply_name, dst))

    automaton = Automaton(
        nodes=tuple(new_nodes.keys()),
        signals=tuple(new_signals.keys()),
        transitions=tuple(new_transitions),
    )
    return HybridControlSystem(automaton, new_nodes, new_signals), lmap
