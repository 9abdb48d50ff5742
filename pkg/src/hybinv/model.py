"""Data model for linear hybrid control and algebraic systems.

A hybrid control system couples continuous-time dynamics per node with
discrete reset maps per signal over a finite automaton.  The algebraic
variant replaces both with matrix relations ``E x' = C x`` obtained by
projecting unconstrained inputs out.  Constraint sets are restricted to
axis-aligned boxes (or unconstrained), which is all the synthesis layer
needs: a box's support function evaluates in closed form at facet
normals.

All types are immutable after construction and safe to share between
threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np

Transition = Tuple[str, str, str]  # (source node, signal, target node)


def _freeze(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    if out.ndim == 1:
        out = out.reshape(1, -1) if out.size else out.reshape(0, 0)
    out.setflags(write=False)
    return out


def _matrix(a, rows: Optional[int] = None, cols: Optional[int] = None) -> np.ndarray:
    out = np.asarray(a, dtype=float)
    if out.ndim != 2:
        out = np.atleast_2d(out)
    if rows is not None and cols is not None and out.size == 0:
        out = out.reshape(rows, cols)
    out = out.copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by per-dimension lower and upper bounds."""

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise ValueError("lower and upper must have equal length")
        if len(self.lower) < 1:
            raise ValueError("box dimension must be >= 1")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))

    @property
    def dim(self) -> int:
        return len(self.lower)

    def support(self, y: np.ndarray) -> float:
        """Support function: sup over box of <y, x>."""
        y = np.asarray(y, dtype=float)
        hi = np.asarray(self.upper)
        lo = np.asarray(self.lower)
        return float(np.sum(np.where(y >= 0, y * hi, y * lo)))

    def contains(self, x: np.ndarray, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= np.asarray(self.lower) - tol)
                    and np.all(x <= np.asarray(self.upper) + tol))

    def to_lists(self):
        return [list(self.lower), list(self.upper)]

    @staticmethod
    def from_lists(data) -> "Box":
        return Box(tuple(data[0]), tuple(data[1]))

    @staticmethod
    def symmetric(radii: Sequence[float]) -> "Box":
        return Box(tuple(-float(r) for r in radii), tuple(float(r) for r in radii))

    @staticmethod
    def cube(dim: int, radius: float = 1.0) -> "Box":
        return Box.symmetric([radius] * dim)


@dataclass(frozen=True)
class Automaton:
    """Finite transition structure: nodes, signals, labelled transitions."""

    nodes: Tuple[str, ...]
    signals: Tuple[str, ...]
    transitions: Tuple[Transition, ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "signals", tuple(self.signals))
        object.__setattr__(self, "transitions",
                           tuple((str(a), str(s), str(b)) for a, s, b in self.transitions))
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError("duplicate node identifier")
        if len(set(self.signals)) != len(self.signals):
            raise ValueError("duplicate signal identifier")
        for (src, sig, dst) in self.transitions:
            if src not in self.nodes or dst not in self.nodes:
                raise ValueError(f"transition {src}->{dst} references unknown node")
            if sig not in self.signals:
                raise ValueError(f"transition uses unknown signal {sig!r}")

    def transitions_with_signal(self, signal: str) -> Tuple[Transition, ...]:
        return tuple(t for t in self.transitions if t[1] == signal)

    def __eq__(self, other):
        # nodes, signals, and transitions are sets; storage order is not part
        # of the automaton's identity
        return (isinstance(other, Automaton)
                and set(self.nodes) == set(other.nodes)
                and set(self.signals) == set(other.signals)
                and set(self.transitions) == set(other.transitions))

    def __hash__(self):
        return hash((frozenset(self.nodes), frozenset(self.signals),
                     frozenset(self.transitions)))


@dataclass(frozen=True)
class NodeDynamics:
    """Per-node data of a control system: x' = A x + B u, x in safe, u in inputs."""

    A: np.ndarray
    B: np.ndarray
    safe: Box
    inputs: Optional[Box]  # None means unconstrained input

    def __post_init__(self):
        object.__setattr__(self, "A", _matrix(self.A))
        object.__setattr__(self, "B", _matrix(self.B))

    def __eq__(self, other):
        return (isinstance(other, NodeDynamics)
                and np.array_equal(self.A, other.A)
                and np.array_equal(self.B, other.B)
                and self.safe == other.safe and self.inputs == other.inputs)


@dataclass(frozen=True)
class SignalReset:
    """Per-signal reset map: x+ = A x + B u with u in inputs."""

    A: np.ndarray
    B: np.ndarray
    inputs: Optional[Box]

    def __post_init__(self):
        object.__setattr__(self, "A", _matrix(self.A))
        object.__setattr__(self, "B", _matrix(self.B))

    def __eq__(self, other):
        return (isinstance(other, SignalReset)
                and np.array_equal(self.A, other.A)
                and np.array_equal(self.B, other.B)
                and self.inputs == other.inputs)


@dataclass(frozen=True)
class HybridControlSystem:
    """Automaton plus per-node dynamics and per-signal resets."""

    automaton: Automaton
    nodes: Mapping[str, NodeDynamics]
    signals: Mapping[str, SignalReset]

    def __post_init__(self):
        object.__setattr__(self, "nodes", dict(self.nodes))
        object.__setattr__(self, "signals", dict(self.signals))

    def state_dim(self, node: str) -> int:
        return self.nodes[node].A.shape[0]

    def __eq__(self, other):
        return (isinstance(other, HybridControlSystem)
                and self.automaton == other.automaton
                and self.nodes == other.nodes
                and self.signals == other.signals)

    def to_dict(self) -> dict:
        return {
            "kind": "hcs",
            "nodes": {
                q: {
                    "A": nd.A.tolist(),
                    "B": nd.B.tolist(),
                    "safe": nd.safe.to_lists(),
                    "input": "unconstrained" if nd.inputs is None else nd.inputs.to_lists(),
                }
                for q, nd in sorted(self.nodes.items())
            },
            "signals": {
                s: {
                    "A": sr.A.tolist(),
                    "B": sr.B.tolist(),
                    "input": "unconstrained" if sr.inputs is None else sr.inputs.to_lists(),
                }
                for s, sr in sorted(self.signals.items())
            },
            "transitions": [
                {"from": a, "signal": s, "to": b} for (a, s, b) in self.automaton.transitions
            ],
        }

    @staticmethod
    def from_dict(data: dict) -> "HybridControlSystem":
        if data.get("kind") != "hcs":
            raise ValueError("not a hybrid control system description")
        nodes = {}
        for q, nd in data["nodes"].items():
            inp = nd.get("input", "unconstrained")
            nodes[q] = NodeDynamics(
                A=np.array(nd["A"], dtype=float),
                B=np.array(nd["B"], dtype=float),
                safe=Box.from_lists(nd["safe"]),
                inputs=None if inp == "unconstrained" else Box.from_lists(inp),
            )
        signals = {}
        for s, sr in data.get("signals", {}).items():
            inp = sr.get("input", "unconstrained")
            signals[s] = SignalReset(
                A=np.array(sr["A"], dtype=float),
                B=np.array(sr["B"], dtype=float),
                inputs=None if inp == "unconstrained" else Box.from_lists(inp),
            )
        automaton = Automaton(
            nodes=tuple(data["nodes"].keys()),
            signals=tuple(data.get("signals", {}).keys()),
            transitions=tuple((t["from"], t["signal"], t["to"]) for t in data["transitions"]),
        )
        return HybridControlSystem(automaton, nodes, signals)


@dataclass(frozen=True)
class NodeRelation:
    """Per-node algebraic relation: E x' = C x, state constrained to safe."""

    C: np.ndarray
    E: np.ndarray
    safe: Box

    def __post_init__(self):
        nx = self.safe.dim
        object.__setattr__(self, "C", _matrix(self.C, 0, nx))
        object.__setattr__(self, "E", _matrix(self.E, 0, nx))

    def __eq__(self, other):
        return (isinstance(other, NodeRelation)
                and np.array_equal(self.C, other.C)
                and np.array_equal(self.E, other.E)
                and self.safe == other.safe)


@dataclass(frozen=True)
class SignalRelation:
    """Per-signal algebraic relation: E x_new = C x_old at the jump."""

    C: np.ndarray
    E: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "C", _matrix(self.C))
        object.__setattr__(self, "E", _matrix(self.E))

    def __eq__(self, other):
        return (isinstance(other, SignalRelation)
                and np.array_equal(self.C, other.C)
                and np.array_equal(self.E, other.E))


@dataclass(frozen=True)
class HybridAlgebraicSystem:
    """Automaton plus per-node and per-signal matrix relations."""

    automaton: Automaton
    nodes: Mapping[str, NodeRelation]
    signals: Mapping[str, SignalRelation]

    def __post_init__(self):
        object.__setattr__(self, "nodes", dict(self.nodes))
        object.__setattr__(self, "signals", dict(self.signals))

    def state_dim(self, node: str) -> int:
        return self.nodes[node].safe.dim

    def __eq__(self, other):
        return (isinstance(other, HybridAlgebraicSystem)
                and self.automaton == other.automaton
                and self.nodes == other.nodes
                and self.signals == other.signals)

    def to_dict(self) -> dict:
        return {
            "kind": "has",
            "nodes": {
                q: {"C": nr.C.tolist(), "E": nr.E.tolist(), "safe": nr.safe.to_lists()}
                for q, nr in sorted(self.nodes.items())
            },
            "signals": {
                s: {"C": sr.C.tolist(), "E": sr.E.tolist()}
                for s, sr in sorted(self.signals.items())
            },
            "transitions": [
                {"from": a, "signal": s, "to": b} for (a, s, b) in self.automaton.transitions
            ],
        }

    @staticmethod
    def from_dict(data: dict) -> "HybridAlgebraicSystem":
        if data.get("kind") != "has":
            raise ValueError("not a hybrid algebraic system description")
        nodes = {
            q: NodeRelation(
                C=np.array(nr["C"], dtype=float),
                E=np.array(nr["E"], dtype=float),
                safe=Box.from_lists(nr["safe"]),
            )
            for q, nr in data["nodes"].items()
        }
        signals = {
            s: SignalRelation(C=np.array(sr["C"], dtype=float), E=np.array(sr["E"], dtype=float))
            for s, sr in data.get("signals", {}).items()
        }
        automaton = Automaton(
            nodes=tuple(data["nodes"].keys()),
            signals=tuple(data.get("signals", {}).keys()),
            transitions=tuple((t["from"], t["signal"], t["to"]) for t in data["transitions"]),
        )
        return HybridAlgebraicSystem(automaton, nodes, signals)


@dataclass
class ValidationReport:
    """Outcome of a structural validation pass; violations are data, not errors."""

    issues: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def add(self, message: str):
        self.issues.append(message)

    def __str__(self):
        return "ok" if self.ok else "\n".join(self.issues)


def validate_hcs(sys: HybridControlSystem) -> ValidationReport:
    """Check dimension consistency of a hybrid control system."""
    report = ValidationReport()
    for q in sys.automaton.nodes:
        if q not in sys.nodes:
            report.add(f"node {q!r}: missing dynamics")
            continue
        nd = sys.nodes[q]
        n = nd.A.shape[0]
        if nd.A.shape[0] != nd.A.shape[1]:
            report.add(f"node {q!r}: drift matrix not square {nd.A.shape}")
        if nd.B.size and nd.B.shape[0] != n:
            report.add(f"node {q!r}: input matrix row count {nd.B.shape[0]} != state dim {n}")
        if nd.safe.dim != n:
            report.add(f"node {q!r}: safe-set dimension mismatch ({nd.safe.dim} != {n})")
        if nd.inputs is not None and nd.B.size and nd.inputs.dim != nd.B.shape[1]:
            report.add(f"node {q!r}: input box dimension {nd.inputs.dim} != {nd.B.shape[1]}")
        if not (np.all(np.isfinite(nd.A)) and np.all(np.isfinite(nd.B))):
            report.add(f"node {q!r}: non-finite matrix entry")
    for (src, sig, dst) in sys.automaton.transitions:
        if sig not in sys.signals:
            report.add(f"signal {sig!r}: missing reset map")
            continue
        sr = sys.signals[sig]
        n_src = sys.state_dim(src) if src in sys.nodes else None
        n_dst = sys.state_dim(dst) if dst in sys.nodes else None
        if n_src is not None and sr.A.shape[1] != n_src:
            report.add(f"signal {sig!r}: reset column count {sr.A.shape[1]} != source dim {n_src}")
        if n_dst is not None and sr.A.shape[0] != n_dst:
            report.add(f"signal {sig!r}: reset row count {sr.A.shape[0]} != target dim {n_dst}")
        if sr.B.size and sr.B.shape[0] != sr.A.shape[0]:
            report.add(f"signal {sig!r}: input matrix row count {sr.B.shape[0]} != {sr.A.shape[0]}")
        if sr.inputs is not None and sr.B.size and sr.inputs.dim != sr.B.shape[1]:
            report.add(f"signal {sig!r}: input box dimension {sr.inputs.dim} != {sr.B.shape[1]}")
    return report


def validate_has(sys: HybridAlgebraicSystem) -> ValidationReport:
    """Check dimension consistency of a hybrid algebraic system."""
    report = ValidationReport()
    for q in sys.automaton.nodes:
        if q not in sys.nodes:
            report.add(f"node {q!r}: missing relation")
            continue
        nr = sys.nodes[q]
        n = nr.safe.dim
        if nr.C.shape[0] != nr.E.shape[0]:
            report.add(f"node {q!r}: row count mismatch C {nr.C.shape[0]} vs E {nr.E.shape[0]}")
        if nr.C.size and nr.C.shape[1] != n:
            report.add(f"node {q!r}: C column count {nr.C.shape[1]} != state dim {n}")
        if nr.E.size and nr.E.shape[1] != n:
            report.add(f"node {q!r}: E column count {nr.E.shape[1]} != state dim {n}")
    for (src, sig, dst) in sys.automaton.transitions:
        if sig not in sys.signals:
            report.add(f"signal {sig!r}: missing relation")
            continue
        sr = sys.signals[sig]
        if sr.C.shape[0] != sr.E.shape[0]:
            report.add(f"signal {sig!r}: row count mismatch C {sr.C.shape[0]} vs E {sr.E.shape[0]}")
        if src in sys.nodes and sr.C.size and sr.C.shape[1] != sys.state_dim(src):
            report.add(f"signal {sig!r}: C column count {sr.C.shape[1]} != source dim {sys.state_dim(src)}")
        if dst in sys.nodes and sr.E.size and sr.E.shape[1] != sys.state_dim(dst):
            report.add(f"signal {sig!r}: E column count {sr.E.shape[1]} != target dim {sys.state_dim(dst)}")
    return report


def load_system(path_or_dict):
    """Load a system description from a JSON file path or a parsed dict."""
    if isinstance(path_or_dict, (str,)):
        with open(path_or_dict) as fh:
            data = json.load(fh)
    else:
        data = path_or_dict
    kind = data.get("kind")
    if kind == "hcs":
        return HybridControlSystem.from_dict(data)
    if kind == "has":
        return HybridAlgebraicSystem.from_dict(data)
    raise ValueError(f"unknown system kind {kind!r}")


def dump_system(sys, path: str):
    """Write a system description as canonical JSON."""
    with open(path, "w") as fh:
        json.dump(sys.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
