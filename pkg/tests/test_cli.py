import csv
import json
import math

import numpy as np
import pytest

from hybinv import verify as verify_mod
from hybinv.cli import RunConfig, bundled_path, main, reproduce_paper


def write_config(tmp_path, template, name="config.json", system=None, objective=None):
    cfg = {
        "system": system or bundled_path("double_integrator.json"),
        "template": template,
        "objective": objective or json.load(open(bundled_path("objective.json"))),
    }
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


class TestSolveCommand:
    def test_paper_ellipsoid_run(self, tmp_path):
        cfg = write_config(tmp_path, {"kind": "ellipsoid"})
        out = tmp_path / "out"
        code = main(["solve", "--config", cfg, "--output-dir", str(out)])
        assert code == 0
        payload = json.loads((out / "solution.json").read_text())
        assert payload["status"] == "verified"
        assert payload["gamma"] == pytest.approx(0.894427, abs=5e-4)
        assert (out / "verification.json").exists()

    def test_missing_template_degree(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"kind": "polyset"})
        code = main(["solve", "--config", cfg, "--output-dir", str(tmp_path / "o")])
        assert code == 2
        assert "degree" in capsys.readouterr().err

    def test_degenerate_box_exits_infeasible(self, tmp_path):
        system = {
            "kind": "hcs",
            "nodes": {"q": {"A": [[0.0, 1.0], [0.0, 0.0]], "B": [[0.0], [1.0]],
                             "safe": [[0.0, 0.0], [0.0, 0.0]], "input": "unconstrained"}},
            "signals": {},
            "transitions": [],
        }
        spath = tmp_path / "sys.json"
        spath.write_text(json.dumps(system))
        cfg = write_config(tmp_path, {"kind": "ellipsoid"}, system=str(spath),
                           objective={"node": "q", "coords": [0, 1],
                                      "vertices": [[1.0, 0.0]]})
        code = main(["solve", "--config", cfg, "--output-dir", str(tmp_path / "o")])
        assert code == 3

    def test_dump_program(self, tmp_path):
        cfg = write_config(tmp_path, {"kind": "ellipsoid"})
        out = tmp_path / "out"
        code = main(["solve", "--config", cfg, "--output-dir", str(out),
                     "--dump-program"])
        assert code == 0
        text = (out / "program.txt").read_text()
        assert text.startswith("conic-program v1")

    def test_deterministic_artifacts(self, tmp_path):
        cfg = write_config(tmp_path, {"kind": "ellipsoid"})
        solutions, curves = [], []
        for sub in ("a", "b"):
            out = tmp_path / sub
            assert main(["solve", "--config", cfg, "--output-dir", str(out)]) == 0
            assert main(["plot", "--solution", str(out / "solution.json"),
                         "--output-dir", str(out)]) == 0
            solutions.append((out / "solution.json").read_text())
            curves.append((out / "curves.csv").read_text())
        assert solutions[0] == solutions[1]
        assert curves[0] == curves[1]

    def test_loosened_tolerance_stays_close(self, tmp_path):
        cfg = write_config(tmp_path, {"kind": "ellipsoid"})
        out_default = tmp_path / "d"
        out_loose = tmp_path / "l"
        assert main(["solve", "--config", cfg, "--output-dir", str(out_default)]) == 0
        assert main(["solve", "--config", cfg, "--output-dir", str(out_loose),
                     "--solver-opt", "feas_tol=1e-3", "--solver-opt", "gap_tol=1e-3",
                     "--solver-opt", "reduced_tol=1e-3"]) in (0, 5)
        g0 = json.loads((out_default / "solution.json").read_text())["gamma"]
        g1 = json.loads((out_loose / "solution.json").read_text())["gamma"]
        assert abs(g0 - g1) <= 5e-3

    def test_partition_file_template(self, tmp_path):
        from hybinv.geometry import face_fan
        part = face_fan(4, 3)
        ppath = tmp_path / "partition.json"
        ppath.write_text(json.dumps(part.to_dict()))
        cfg = write_config(tmp_path, {"kind": "piecewise",
                                      "partition_file": str(ppath)})
        out = tmp_path / "out"
        assert main(["solve", "--config", cfg, "--output-dir", str(out)]) == 0
        payload = json.loads((out / "solution.json").read_text())
        assert payload["gamma"] == pytest.approx(0.894427, abs=5e-4)


class TestVerifyCommand:
    def test_round_trip(self, tmp_path):
        cfg = write_config(tmp_path, {"kind": "ellipsoid"})
        out = tmp_path / "out"
        assert main(["solve", "--config", cfg, "--output-dir", str(out)]) == 0
        code = main(["verify", "--config", cfg,
                     "--solution", str(out / "solution.json"), "--dirs", "2000"])
        assert code == 0


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("plots")
    cfg = write_config(tmp, {"kind": "ellipsoid"})
    out = tmp / "out"
    assert main(["solve", "--config", cfg, "--output-dir", str(out)]) == 0
    assert main(["plot", "--solution", str(out / "solution.json"),
                 "--output-dir", str(out), "--system",
                 bundled_path("double_integrator.json"),
                 "--reference", bundled_path("maximal_set.json")]) == 0
    return out


class TestPlotCommand:

    def load_rows(self, out):
        rows = []
        with open(out / "curves.csv") as fh:
            for rec in csv.DictReader(fh):
                rows.append((rec["curve_id"], float(rec["theta"]),
                             float(rec["x"]), float(rec["y"])))
        return rows

    def test_polar_points_have_unit_support(self, solved):
        payload = json.loads((solved / "solution.json").read_text())
        model = verify_mod.model_from_dict(payload["models"]["main"])
        rows = self.load_rows(solved)
        polar = [(x, y) for cid, _, x, y in rows if cid == "polar"]
        assert len(polar) >= 700
        for x, y in polar[::7]:
            h = model.value(np.array([x, y, 0.0]))
            assert h == pytest.approx(1.0, abs=1e-8)

    def test_primal_curve_in_box_and_contains_objective(self, solved):
        rows = self.load_rows(solved)
        primal = np.array([(x, y) for cid, _, x, y in rows if cid == "primal"])
        assert np.all(np.abs(primal) <= 1.0 + 1e-6)
        payload = json.loads((solved / "solution.json").read_text())
        gamma = payload["gamma"]
        verts = np.array(payload["objective_spec"]["vertices"], dtype=float)
        from scipy.spatial import Delaunay
        tri = Delaunay(primal)
        # the sampled boundary polygon sags below the true curve by up to
        # r * (2 pi / 720)^2 / 8 ~ 1e-5 between samples
        assert np.all(tri.find_simplex(gamma * verts * (1 - 1e-4)) >= 0)

    def test_svg_written(self, solved):
        assert (solved / "curves.svg").stat().st_size > 0

    def test_piecewise_polar_continuity(self, tmp_path):
        cfg = write_config(tmp_path, {"kind": "piecewise", "partition": [4, 3]})
        out = tmp_path / "out"
        assert main(["solve", "--config", cfg, "--output-dir", str(out)]) == 0
        assert main(["plot", "--solution", str(out / "solution.json"),
                     "--output-dir", str(out)]) == 0
        payload = json.loads((out / "solution.json").read_text())
        model = verify_mod.model_from_dict(payload["models"]["main"])
        from hybinv.cli import _boundary_angles
        for th in _boundary_angles(model, [0, 1]):
            left = th - 1e-9
            right = th + 1e-9
            h = []
            for ang in (left, right):
                y = np.array([math.cos(ang), math.sin(ang), 0.0])
                h.append(model.value(y, check_agreement=False))
            assert abs(h[0] - h[1]) <= 1e-6


class TestReproducePaper:
    def test_only_ellipsoid_row(self, tmp_path, capsys):
        code = reproduce_paper(str(tmp_path / "rep"), only=["ellipsoid"],
                               jobs=1, plot=False)
        out = capsys.readouterr().out
        data_rows = [l for l in out.splitlines() if l.startswith("ellipsoid")]
        assert code == 0
        assert len(data_rows) == 1
        assert "verified" in data_rows[0]

    def test_unknown_run_rejected(self, tmp_path, capsys):
        code = reproduce_paper(str(tmp_path / "rep"), only=["nonsense"], jobs=1)
        assert code == 2


class TestConfigValidation:
    def test_unknown_template_kind(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({
            "system": "x.json",
            "template": {"kind": "wavelet"},
            "objective": {"node": "q", "coords": [0], "vertices": [[1.0]]},
        }))
        with pytest.raises(Exception):
            RunConfig.load(str(path))

    def test_empty_objective_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({
            "system": "x.json",
            "template": {"kind": "ellipsoid"},
            "objective": {"node": "q", "coords": [0], "vertices": []},
        }))
        with pytest.raises(Exception):
            RunConfig.load(str(path))

    def test_bad_config_file_exit_code(self, tmp_path, capsys):
        path = tmp_path / "c.json"
        path.write_text("{not json")
        assert main(["solve", "--config", str(path)]) == 2
