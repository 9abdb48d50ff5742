"""Controlled invariant set synthesis for linear hybrid systems.

The library models linear hybrid control systems, reduces them to
algebraic form by projecting out unconstrained inputs, compiles
support-function invariance conditions for ellipsoidal, polynomial and
piecewise semi-ellipsoidal templates into conic programs, solves them,
and verifies the resulting sets numerically.
"""

from hybinv.model import (
    Automaton,
    Box,
    HybridAlgebraicSystem,
    HybridControlSystem,
    NodeDynamics,
    NodeRelation,
    SignalRelation,
    SignalReset,
    ValidationReport,
    validate_has,
    validate_hcs,
)
from hybinv.reduction import Projector, hcs_to_has, lift_box_inputs, orth_complement_projector
from hybinv.geometry import ConicPartition, PolyhedralCone, cone_generators, face_fan, intersect_cones, preimage_cone
from hybinv.polysos import HomogeneousPoly
from hybinv.conic import ConicProgram, Solution, solve
from hybinv.synthesis import (
    EllipsoidTemplate,
    PiecewiseTemplate,
    PolysetTemplate,
    SynthesisProblem,
    SynthesisSolution,
    solve_synthesis,
)
from hybinv import verify

__all__ = [
    "Automaton",
    "Box",
    "HybridAlgebraicSystem",
    "HybridControlSystem",
    "NodeDynamics",
    "NodeRelation",
    "SignalRelation",
    "SignalReset",
    "ValidationReport",
    "validate_has",
    "validate_hcs",
    "Projector",
    "hcs_to_has",
    "lift_box_inputs",
    "orth_complement_projector",
    "ConicPartition",
    "PolyhedralCone",
    "cone_generators",
    "face_fan",
    "intersect_cones",
    "preimage_cone",
    "HomogeneousPoly",
    "ConicProgram",
    "Solution",
    "solve",
    "EllipsoidTemplate",
    "PolysetTemplate",
    "PiecewiseTemplate",
    "SynthesisProblem",
    "SynthesisSolution",
    "solve_synthesis",
    "verify",
]

__version__ = "0.1.0"
