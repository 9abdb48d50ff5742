import math

import pytest

from hybinv.cli import PAPER_RUNS, bundled_path, build_template
from hybinv.model import HybridControlSystem, load_system
from hybinv.reduction import hcs_to_has, lift_box_inputs
from hybinv.synthesis import SynthesisProblem, compile_problem, solve_synthesis

SQRT3 = math.sqrt(3.0)
D_VERTICES = (
    (SQRT3 - 1.0, SQRT3 - 1.0),
    (-0.5, 1.0),
    (-1.0, 0.5),
    (1.0 - SQRT3, 1.0 - SQRT3),
    (0.5, -1.0),
    (1.0, -0.5),
)


@pytest.fixture(scope="session")
def paper_hcs() -> HybridControlSystem:
    return load_system(bundled_path("double_integrator.json"))


@pytest.fixture(scope="session")
def paper_has(paper_hcs):
    lifted, _ = lift_box_inputs(paper_hcs)
    return hcs_to_has(lifted)


def paper_problem(has, template):
    return SynthesisProblem(has, template, "main", (0, 1), D_VERTICES)


@pytest.fixture(scope="session")
def paper_solutions(paper_has):
    """All seven reference runs, solved once and shared across tests."""
    out = {}
    for name, template_spec, target, tol in PAPER_RUNS:
        template = build_template(template_spec)
        problem = paper_problem(paper_has, template)
        out[name] = {
            "problem": problem,
            "solution": solve_synthesis(problem),
            "target": target,
            "tol": tol,
        }
    return out


@pytest.fixture(scope="session")
def piecewise_certificates(paper_has):
    """Compiled piecewise program handles for the (4,3) run, plus solution."""
    from hybinv.conic import solve

    template = build_template({"kind": "piecewise", "partition": [4, 3]})
    problem = paper_problem(paper_has, template)
    program, handles = compile_problem(problem)
    sol = solve(program)
    return problem, handles, sol
