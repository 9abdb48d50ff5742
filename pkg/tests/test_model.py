import json
import os

import numpy as np
import pytest

from hybinv.model import (
    Automaton,
    Box,
    HybridAlgebraicSystem,
    HybridControlSystem,
    NodeDynamics,
    NodeRelation,
    SignalRelation,
    SignalReset,
    load_system,
    validate_has,
    validate_hcs,
)

GOLDEN = os.path.join(os.path.dirname(__file__), "golden", "double_integrator.json")


def lifted_paper_hcs():
    """The lifted double-integrator system written out by hand."""
    aut = Automaton(("main", "tmp"), ("store", "apply"),
                    (("main", "store", "tmp"), ("tmp", "apply", "main")))
    cube = Box.cube(3)
    nodes = {
        "main": NodeDynamics(
            A=[[0, 1, 0], [0, 0, 1], [0, 0, 0]], B=[[0], [0], [1]], safe=cube, inputs=None),
        "tmp": NodeDynamics(A=np.zeros((3, 3)), B=np.eye(3), safe=cube, inputs=None),
    }
    signals = {
        "store": SignalReset(
            A=[[1, 0, 0], [0, 1, 0], [0, 0, 0]], B=[[0], [0], [1]], inputs=None),
        "apply": SignalReset(
            A=[[-1, 0, 0.125], [0, 1, -0.125], [0, 0, 0]], B=[[0], [0], [1]], inputs=None),
    }
    return HybridControlSystem(aut, nodes, signals)


class TestValidateHcs:
    def test_lifted_paper_system_is_valid(self):
        report = validate_hcs(lifted_paper_hcs())
        assert report.ok, str(report)

    def test_safe_set_dimension_mismatch(self):
        aut = Automaton(("q",), (), ())
        sys = HybridControlSystem(aut, {
            "q": NodeDynamics(A=[[0, 1], [0, 0]], B=[[0], [1]], safe=Box.cube(3), inputs=None)
        }, {})
        report = validate_hcs(sys)
        assert not report.ok
        assert any("safe-set dimension mismatch" in msg for msg in report.issues)

    def test_reset_column_mismatch(self):
        aut = Automaton(("q",), ("s",), (("q", "s", "q"),))
        sys = HybridControlSystem(aut, {
            "q": NodeDynamics(A=np.zeros((2, 2)), B=np.zeros((2, 1)), safe=Box.cube(2), inputs=None)
        }, {
            "s": SignalReset(A=np.zeros((2, 3)), B=np.zeros((2, 1)), inputs=None)
        })
        report = validate_hcs(sys)
        assert not report.ok
        assert any("column count" in msg for msg in report.issues)

    def test_validation_is_pure(self):
        sys = lifted_paper_hcs()
        assert validate_hcs(sys).ok == validate_hcs(sys).ok
        assert validate_hcs(sys).issues == []


class TestValidateHas:
    def paper_has(self):
        aut = Automaton(("main", "tmp"), ("store", "apply"),
                        (("main", "store", "tmp"), ("tmp", "apply", "main")))
        cube = Box.cube(3)
        return HybridAlgebraicSystem(aut, {
            "main": NodeRelation(C=[[0, 1, 0], [0, 0, 1]], E=[[1, 0, 0], [0, 1, 0]], safe=cube),
            "tmp": NodeRelation(C=np.zeros((0, 3)), E=np.zeros((0, 3)), safe=cube),
        }, {
            "store": SignalRelation(C=[[1, 0, 0], [0, 1, 0]], E=[[1, 0, 0], [0, 1, 0]]),
            "apply": SignalRelation(C=[[-1, 0, 0.125], [0, 1, -0.125]], E=[[1, 0, 0], [0, 1, 0]]),
        })

    def test_paper_algebraic_system_is_valid(self):
        assert validate_has(self.paper_has()).ok

    def test_row_count_mismatch(self):
        aut = Automaton(("q",), (), ())
        sys = HybridAlgebraicSystem(aut, {
            "q": NodeRelation(C=np.zeros((2, 3)), E=np.zeros((1, 3)), safe=Box.cube(3))
        }, {})
        report = validate_has(sys)
        assert not report.ok
        assert any("row count mismatch" in msg for msg in report.issues)

    def test_empty_relations_are_valid(self):
        aut = Automaton(("q",), (), ())
        sys = HybridAlgebraicSystem(aut, {
            "q": NodeRelation(C=np.zeros((0, 2)), E=np.zeros((0, 2)), safe=Box.cube(2))
        }, {})
        assert validate_has(sys).ok


class TestSerialization:
    def test_hcs_round_trip(self):
        sys = lifted_paper_hcs()
        again = HybridControlSystem.from_dict(sys.to_dict())
        assert again == sys

    def test_has_round_trip(self):
        sys = TestValidateHas().paper_has()
        again = HybridAlgebraicSystem.from_dict(sys.to_dict())
        assert again == sys

    def test_golden_schema(self):
        """The documented file schema is normative."""
        with open(GOLDEN) as fh:
            golden_text = fh.read()
        sys = load_system(GOLDEN)
        rendered = json.dumps(sys.to_dict(), indent=2, sort_keys=True) + "\n"
        assert rendered == golden_text

    def test_box_input_round_trip(self):
        data = load_system(GOLDEN)
        assert data.nodes["main"].inputs == Box((-1.0,), (1.0,))


class TestBox:
    def test_bounds_validation(self):
        with pytest.raises(ValueError):
            Box((1.0,), (0.0,))
        with pytest.raises(ValueError):
            Box((), ())

    def test_support(self):
        box = Box.cube(2)
        assert box.support(np.array([1.0, 2.0])) == pytest.approx(3.0)
        assert box.support(np.array([-1.0, 0.5])) == pytest.approx(1.5)


class TestAutomaton:
    def test_unknown_node_rejected(self):
        with pytest.raises(ValueError):
            Automaton(("a",), ("s",), (("a", "s", "b"),))

    def test_duplicate_node_rejected(self):
        with pytest.raises(ValueError):
            Automaton(("a", "a"), (), ())
