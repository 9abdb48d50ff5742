"""Command-line front end: solve, verify, plot, reproduce-paper.

The pipeline is: load a system description, lift box-constrained inputs
into states, project unconstrained inputs out, compile and solve the
requested template, verify the solution by sampling, then write solution
and plot artifacts.  Exit codes: 0 success, 2 bad input, 3 infeasible,
4 solver failure, 5 solved but unverified.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from typing import List, Optional, Sequence, Tuple

import numpy as np

from hybinv import verify as verify_mod
from hybinv.geometry import ConicPartition, face_fan, reduce_cone_2d, _clean_rows
from hybinv.model import HybridControlSystem, load_system, validate_has, validate_hcs
from hybinv.reduction import LiftingMap, hcs_to_has, lift_box_inputs
from hybinv.synthesis import (
    EllipsoidTemplate,
    PiecewiseTemplate,
    PolysetTemplate,
    SynthesisProblem,
    compile_problem,
    solve_synthesis,
)

SOLVER_OPTS_ENV = "HYBINV_SOLVER_OPTS"

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER = 4
EXIT_UNVERIFIED = 5

PAPER_RUNS = [
    ("ellipsoid", {"kind": "ellipsoid"}, 0.894, 0.005),
    ("polyset-4", {"kind": "polyset", "degree": 4}, 0.896, 0.005),
    ("polyset-6", {"kind": "polyset", "degree": 6}, 0.93, 0.01),
    ("polyset-8", {"kind": "polyset", "degree": 8}, 0.96, 0.01),
    ("piecewise-4-3", {"kind": "piecewise", "partition": [4, 3]}, 0.894, 0.005),
    ("piecewise-8-5", {"kind": "piecewise", "partition": [8, 5]}, 0.92, 0.01),
    ("piecewise-16-7", {"kind": "piecewise", "partition": [16, 7]}, 0.94, 0.01),
]


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    system_path: str
    template: dict
    objective: dict
    solver: dict
    verify: dict
    plot: dict

    @staticmethod
    def load(path: str) -> "RunConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        base = os.path.dirname(os.path.abspath(path))
        return RunConfig.from_dict(data, base)

    @staticmethod
    def from_dict(data: dict, base: str = ".") -> "RunConfig":
        for key in ("system", "template", "objective"):
            if key not in data:
                raise ConfigError(f"config missing required field {key!r}")
        template = data["template"]
        kind = template.get("kind")
        if kind not in ("ellipsoid", "polyset", "piecewise"):
            raise ConfigError(f"unknown template kind {kind!r}")
        if kind == "polyset" and "degree" not in template:
            raise ConfigError("polyset template requires field 'degree'")
        if kind == "piecewise" and not ("partition" in template or "partition_file" in template):
            raise ConfigError("piecewise template requires 'partition' or 'partition_file'")
        objective = data["objective"]
        for key in ("node", "coords", "vertices"):
            if key not in objective:
                raise ConfigError(f"objective missing required field {key!r}")
        if not objective["vertices"]:
            raise ConfigError("objective polytope needs at least one vertex")
        system = data["system"]
        if isinstance(system, str) and not os.path.isabs(system):
            system = os.path.join(base, system)
        pf = template.get("partition_file")
        if pf and not os.path.isabs(pf):
            template = dict(template)
            template["partition_file"] = os.path.join(base, pf)
        return RunConfig(
            system_path=system,
            template=template,
            objective=objective,
            solver=dict(data.get("solver", {})),
            verify=dict(data.get("verify", {})),
            plot=dict(data.get("plot", {})),
        )


def build_template(spec: dict):
    kind = spec["kind"]
    if kind == "ellipsoid":
        return EllipsoidTemplate()
    if kind == "polyset":
        return PolysetTemplate(int(spec["degree"]))
    if "partition_file" in spec:
        with open(spec["partition_file"]) as fh:
            part = ConicPartition.from_dict(json.load(fh))
    else:
        m1, m2 = spec["partition"]
        part = face_fan(int(m1), int(m2))
    return PiecewiseTemplate(default=part)


def prepare_problem(config: RunConfig):
    """Load, validate, lift, and reduce; returns (problem, lifting map)."""
    system = load_system(config.system_path)
    if isinstance(system, HybridControlSystem):
        report = validate_hcs(system)
        if not report.ok:
            raise ConfigError(f"invalid system:\n{report}")
        lifted, lmap = lift_box_inputs(system)
        has = hcs_to_has(lifted)
    else:
        report = validate_has(system)
        if not report.ok:
            raise ConfigError(f"invalid system:\n{report}")
        has, lmap = system, LiftingMap(
            node_coords={q: list(range(system.state_dim(q))) for q in system.automaton.nodes})
    obj = config.objective
    problem = SynthesisProblem(
        has=has,
        template=build_template(config.template),
        objective_node=str(obj["node"]),
        proj_coords=tuple(int(c) for c in obj["coords"]),
        vertices=tuple(tuple(float(x) for x in v) for v in obj["vertices"]),
    )
    return problem, lmap


def run_solve(config: RunConfig, outdir: str, dump_program: bool = False) -> Tuple[int, dict]:
    problem, lmap = prepare_problem(config)
    verify_opts = config.verify
    solver_opts = dict(config.solver)
    env_opts = os.environ.get(SOLVER_OPTS_ENV)
    if env_opts:
        try:
            solver_opts.update(json.loads(env_opts))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad {SOLVER_OPTS_ENV} value: {exc}") from exc
    solution = solve_synthesis(
        problem,
        solver_options=solver_opts or None,
        verify_dirs=int(verify_opts.get("dirs", verify_mod.DEFAULT_DIRS)),
        verify_tol=float(verify_opts.get("tol", 1e-6)),
        seed=int(verify_opts.get("seed", verify_mod.DEFAULT_SEED)),
    )
    os.makedirs(outdir, exist_ok=True)
    payload = solution.to_dict()
    payload["lifting_map"] = lmap.to_dict()
    payload["objective_spec"] = config.objective
    with open(os.path.join(outdir, "solution.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(outdir, "verification.json"), "w") as fh:
        json.dump(solution.verification, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if dump_program:
        program, _ = compile_problem(problem)
        with open(os.path.join(outdir, "program.txt"), "w") as fh:
            fh.write(program.serialize())
    status_code = {
        "verified": EXIT_OK,
        "solved-unverified": EXIT_UNVERIFIED,
        "infeasible": EXIT_INFEASIBLE,
        "unbounded": EXIT_SOLVER,
        "numerical-failure": EXIT_SOLVER,
    }[solution.status]
    if solution.gamma is not None and solution.gamma <= 1e-9:
        # only the degenerate zero set fits: report as infeasible
        status_code = EXIT_INFEASIBLE
    return status_code, payload


# ---------------------------------------------------------------------------
# plotting
# ---------------------------------------------------------------------------

def _model_from_solution(payload: dict) -> Tuple[object, dict]:
    node = payload["objective_spec"]["node"]
    model = verify_mod.model_from_dict(payload["models"][node])
    return model, payload["objective_spec"]


def _boundary_angles(model, coords: Sequence[int]) -> List[float]:
    """Exact angles where the lifted direction crosses piece boundaries."""
    if not isinstance(model, verify_mod.PiecewiseModel):
        return []
    lift = np.zeros((model.dim, len(coords)))
    for a, c in enumerate(coords):
        lift[c, a] = 1.0
    angles = set()
    from hybinv.geometry import PolyhedralCone, cone_generators
    for cone in model.partition.cones:
        rows, ok = reduce_cone_2d(_clean_rows(cone.G @ lift))
        if not ok or rows.size == 0:
            continue
        R, L = cone_generators(PolyhedralCone(rows))
        for k in range(R.shape[1]):
            angles.add(math.atan2(R[1, k], R[0, k]) % (2 * math.pi))
        for k in range(L.shape[1]):
            angles.add(math.atan2(L[1, k], L[0, k]) % (2 * math.pi))
            angles.add(math.atan2(-L[1, k], -L[0, k]) % (2 * math.pi))
    return sorted(angles)


def plot_curves(payload: dict, n_dirs: int = 720) -> List[Tuple[str, float, float, float]]:
    """Rows (curve_id, theta, x, y) for the primal and polar boundaries.

    Primal points are exposed points of the support function (one row per
    containing piece at kinks); polar points are direction / value.
    Overlays for the safe box and the scaled objective polytope are
    appended as closed polygons parameterized by vertex index.
    """
    model, obj = _model_from_solution(payload)
    coords = [int(c) for c in obj["coords"]]
    gamma = payload["gamma"]
    thetas = sorted(set(np.linspace(0.0, 2 * math.pi, n_dirs, endpoint=False))
                    | set(_boundary_angles(model, coords)))
    rows: List[Tuple[str, float, float, float]] = []
    for th in thetas:
        w = np.array([math.cos(th), math.sin(th)])
        y = np.zeros(model.dim)
        y[coords] = w
        h = model.value(y) if not isinstance(model, verify_mod.PiecewiseModel) \
            else model.value(y, check_agreement=False)
        if h <= 1e-12:
            continue  # degenerate direction; curve break
        rows.append(("polar", th, w[0] / h, w[1] / h))
        try:
            grads = model.gradients(y)
        except ZeroDivisionError:
            continue
        for g in grads:
            rows.append(("primal", th, g[coords[0]], g[coords[1]]))
    if gamma:
        verts = [tuple(map(float, v)) for v in obj["vertices"]]
        verts = verts + [verts[0]]
        for k, v in enumerate(verts):
            rows.append(("objective", float(k), gamma * v[0], gamma * v[1]))
    return rows


def write_plot_csv(rows, path: str):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["curve_id", "theta", "x", "y"])
        for cid, th, x, y in rows:
            writer.writerow([cid, f"{th:.12g}", f"{x:.12g}", f"{y:.12g}"])


def write_plot_svg(rows, path: str, box: Optional[Sequence[Sequence[float]]] = None,
                   reference: Optional[Sequence[Sequence[float]]] = None):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return False
    fig, axes = plt.subplots(1, 2, figsize=(9, 4.5))
    for ax, curve, title in ((axes[0], "primal", "primal space"),
                             (axes[1], "polar", "polar space")):
        if box is not None and curve == "primal":
            lo, hi = box
            xs = [lo[0], hi[0], hi[0], lo[0], lo[0]]
            ys = [lo[1], lo[1], hi[1], hi[1], lo[1]]
            ax.plot(xs, ys, color="tab:green", lw=1.2, label="safe set")
        if reference is not None and curve == "primal":
            ref = list(reference) + [reference[0]]
            ax.plot([p[0] for p in ref], [p[1] for p in ref],
                    color="gold", lw=1.2, label="maximal set")
        pts = [(x, y) for cid, _, x, y in rows if cid == curve]
        if pts:
            ax.plot([p[0] for p in pts], [p[1] for p in pts],
                    ".", ms=1.5, color="tab:blue", label="solution")
        obj = [(x, y) for cid, _, x, y in rows if cid == "objective"]
        if obj and curve == "primal":
            ax.plot([p[0] for p in obj], [p[1] for p in obj],
                    color="tab:red", lw=1.2, label="scaled objective")
        ax.set_title(title)
        ax.set_aspect("equal")
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return True


def run_plot(solution_path: str, outdir: str, n_dirs: int = 720,
             reference_path: Optional[str] = None,
             system_path: Optional[str] = None) -> int:
    with open(solution_path) as fh:
        payload = json.load(fh)
    if payload.get("gamma") is None:
        print("solution has no solved model to plot", file=sys.stderr)
        return EXIT_PARSE
    rows = plot_curves(payload, n_dirs)
    os.makedirs(outdir, exist_ok=True)
    write_plot_csv(rows, os.path.join(outdir, "curves.csv"))
    box = None
    if system_path:
        system = load_system(system_path)
        node = payload["objective_spec"]["node"]
        coords = [int(c) for c in payload["objective_spec"]["coords"]]
        safe = system.nodes[node].safe
        box = ([safe.lower[c] for c in coords], [safe.upper[c] for c in coords])
    reference = None
    if reference_path:
        with open(reference_path) as fh:
            reference = json.load(fh)["vertices"]
    write_plot_svg(rows, os.path.join(outdir, "curves.svg"), box=box, reference=reference)
    return EXIT_OK


def run_verify(solution_path: str, config: RunConfig) -> int:
    with open(solution_path) as fh:
        payload = json.load(fh)
    problem, _ = prepare_problem(config)
    models = {q: verify_mod.model_from_dict(m) for q, m in payload["models"].items()}
    gamma = payload.get("gamma") or 0.0
    vo = config.verify
    dirs = int(vo.get("dirs", verify_mod.DEFAULT_DIRS))
    tol = float(vo.get("tol", 1e-6))
    seed = int(vo.get("seed", verify_mod.DEFAULT_SEED))
    inv = verify_mod.check_invariance(problem.has, models, n_dirs=dirs, tol=tol, seed=seed)
    ok = inv.passed
    print(f"invariance: {'pass' if inv.passed else 'FAIL'} (max violation {inv.max_violation:.3e})")
    for q, model in models.items():
        is_root = q == problem.objective_node
        rep = verify_mod.check_inclusion(
            model, problem.has.nodes[q].safe,
            gamma=gamma if is_root else 0.0,
            vertices=problem.vertices if is_root else None,
            proj_coords=problem.proj_coords if is_root else None,
            n_dirs=dirs, tol=tol, seed=seed)
        ok = ok and rep.passed
        print(f"inclusion[{q}]: {'pass' if rep.passed else 'FAIL'} "
              f"(max violation {rep.max_violation:.3e})")
    return EXIT_OK if ok else EXIT_UNVERIFIED


# ---------------------------------------------------------------------------
# bundled example reproduction
# ---------------------------------------------------------------------------

def bundled_path(name: str) -> str:
    return str(resources.files("hybinv").joinpath("data", name))


def reproduce_paper(outdir: str, only: Optional[List[str]] = None,
                    jobs: int = 4, solver_opts: Optional[dict] = None,
                    plot: bool = True) -> int:
    """Run the bundled double-integrator study across all templates.

    Prints one row per run with its reference value and the deviation;
    artifacts land in one directory per run.
    """
    runs = [r for r in PAPER_RUNS if not only or r[0] in only]
    if not runs:
        print("no matching runs", file=sys.stderr)
        return EXIT_PARSE
    base_cfg = {
        "system": bundled_path("double_integrator.json"),
        "objective": json.load(open(bundled_path("objective.json"))),
        "solver": solver_opts or {},
    }

    def one(run):
        name, template, target, tol = run
        cfg = RunConfig.from_dict({**base_cfg, "template": template})
        code, payload = run_solve(cfg, os.path.join(outdir, name))
        if plot and payload.get("gamma") is not None:
            run_plot(os.path.join(outdir, name, "solution.json"),
                     os.path.join(outdir, name),
                     reference_path=bundled_path("maximal_set.json"),
                     system_path=bundled_path("double_integrator.json"))
        return name, code, payload, target, tol

    results = []
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        for res in pool.map(one, runs):
            results.append(res)

    print(f"{'run':<16} {'status':<18} {'gamma':>10} {'target':>8} {'delta':>9}  within")
    worst = EXIT_OK
    for name, code, payload, target, tol in results:
        gamma = payload.get("gamma")
        status = payload.get("status")
        if gamma is None:
            print(f"{name:<16} {status:<18} {'-':>10} {target:>8} {'-':>9}  -")
            worst = max(worst, code)
            continue
        delta = gamma - target
        inside = "yes" if abs(delta) <= tol else "NO"
        print(f"{name:<16} {status:<18} {gamma:>10.6f} {target:>8} {delta:>+9.4f}  {inside}")
        worst = max(worst, code)
    return worst


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _parse_solver_opts(pairs: Optional[List[str]]) -> dict:
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--solver-opt expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="hybinv",
                                     description="controlled invariant set synthesis")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve a synthesis problem")
    p_solve.add_argument("--config", required=True)
    p_solve.add_argument("--output-dir", default="out")
    p_solve.add_argument("--dump-program", action="store_true")
    p_solve.add_argument("--solver-opt", action="append", metavar="KEY=VAL")
    p_solve.add_argument("--seed", type=int)
    p_solve.add_argument("--dirs", type=int)

    p_verify = sub.add_parser("verify", help="re-verify a solution file")
    p_verify.add_argument("--config", required=True)
    p_verify.add_argument("--solution", required=True)
    p_verify.add_argument("--seed", type=int)
    p_verify.add_argument("--dirs", type=int)

    p_plot = sub.add_parser("plot", help="emit plot CSV/SVG for a solution")
    p_plot.add_argument("--solution", required=True)
    p_plot.add_argument("--output-dir", default="plots")
    p_plot.add_argument("--dirs", type=int, default=720)
    p_plot.add_argument("--reference")
    p_plot.add_argument("--system")

    p_rep = sub.add_parser("reproduce-paper", help="run the bundled example study")
    p_rep.add_argument("--output-dir", default="paper-out")
    p_rep.add_argument("--only", action="append")
    p_rep.add_argument("--jobs", type=int, default=4)
    p_rep.add_argument("--no-plots", action="store_true")
    p_rep.add_argument("--solver-opt", action="append", metavar="KEY=VAL")

    args = parser.parse_args(argv)
    try:
        if args.command == "solve":
            config = RunConfig.load(args.config)
            if args.solver_opt:
                config.solver.update(_parse_solver_opts(args.solver_opt))
            if args.seed is not None:
                config.verify["seed"] = args.seed
            if args.dirs is not None:
                config.verify["dirs"] = args.dirs
            code, payload = run_solve(config, args.output_dir, args.dump_program)
            print(f"status: {payload['status']}  gamma: {payload.get('gamma')}")
            return code
        if args.command == "verify":
            config = RunConfig.load(args.config)
            if args.seed is not None:
                config.verify["seed"] = args.seed
            if args.dirs is not None:
                config.verify["dirs"] = args.dirs
            return run_verify(args.solution, config)
        if args.command == "plot":
            return run_plot(args.solution, args.output_dir, args.dirs,
                            args.reference, args.system)
        if args.command == "reproduce-paper":
            return reproduce_paper(args.output_dir, args.only, args.jobs,
                                   _parse_solver_opts(args.solver_opt),
                                   plot=not args.no_plots)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
