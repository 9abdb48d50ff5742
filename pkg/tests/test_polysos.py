import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybinv.conic import ConicProgram, LinExpr, solve
from hybinv.geometry import PolyhedralCone
from hybinv.polysos import (
    HomogeneousPoly,
    compose_linear,
    emit_cone_quadratic,
    emit_sos,
    emit_sos_convexity,
    gradient,
    lie_polynomial,
    monomials,
)


def random_poly(nvars, degree, rng):
    coeffs = {e: float(rng.normal()) for e in monomials(nvars, degree)}
    return HomogeneousPoly(nvars, degree, coeffs)


def feasibility(program: ConicProgram) -> str:
    program.set_objective(0.0)
    program.finalize()
    return solve(program).status


MOTZKIN = HomogeneousPoly(3, 6, {
    (4, 2, 0): 1.0, (2, 4, 0): 1.0, (2, 2, 2): -3.0, (0, 0, 6): 1.0})


class TestCompose:
    def test_permutation_fixes_symmetric_poly(self):
        p = HomogeneousPoly(2, 4, {(4, 0): 1.0, (0, 4): 1.0})
        swapped = compose_linear(p, np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert swapped.coeffs == p.coeffs

    def test_binomial_expansion(self):
        p = HomogeneousPoly(1, 2, {(2,): 1.0})
        out = compose_linear(p, np.array([[1.0, 1.0]]))
        assert out.coeffs == {(2, 0): 1.0, (1, 1): 2.0, (0, 2): 1.0}

    def test_pointwise_oracle(self):
        rng = np.random.default_rng(41)
        p = random_poly(3, 4, rng)
        M = rng.normal(size=(3, 2))
        q = compose_linear(p, M)
        for _ in range(100):
            y = rng.normal(size=2)
            assert q.evaluate(y) == pytest.approx(p.evaluate(M @ y), abs=1e-10, rel=1e-10)

    def test_symbolic_coefficients_pass_through(self):
        prog = ConicProgram()
        p = HomogeneousPoly.variable_coefficients(prog, 2, 2)
        q = compose_linear(p, np.array([[2.0, 0.0], [0.0, 1.0]]))
        c = q.coeffs[(2, 0)]
        assert isinstance(c, LinExpr)
        (var, coeff), = c.terms.items()
        assert coeff == pytest.approx(4.0)


class TestGradient:
    def test_quartic_sum(self):
        p = HomogeneousPoly(2, 4, {(4, 0): 1.0, (0, 4): 1.0})
        g = gradient(p)
        assert g[0].coeffs == {(3, 0): 4.0}
        assert g[1].coeffs == {(0, 3): 4.0}

    def test_mixed_term(self):
        p = HomogeneousPoly(2, 4, {(2, 2): 1.0})
        g = gradient(p)
        assert g[0].coeffs == {(1, 2): 2.0}
        assert g[1].coeffs == {(2, 1): 2.0}

    def test_finite_difference_oracle(self):
        rng = np.random.default_rng(8)
        for _ in range(4):
            n = int(rng.integers(2, 4))
            d = int(rng.choice([2, 4, 6]))
            p = random_poly(n, d, rng)
            g = gradient(p)
            h = 1e-6
            for _ in range(20):
                y = rng.normal(size=n)
                for i in range(n):
                    e = np.zeros(n)
                    e[i] = h
                    fd = (p.evaluate(y + e) - p.evaluate(y - e)) / (2 * h)
                    ref = g[i].evaluate(y)
                    assert fd == pytest.approx(ref, rel=1e-6, abs=1e-6)

    @given(st.integers(1, 3), st.sampled_from([2, 4, 6]), st.integers(0, 10 ** 6))
    @settings(max_examples=40, deadline=None)
    def test_euler_identity_symbolic(self, n, d, seed):
        """sum_i y_i dp/dy_i equals d * p as polynomials."""
        p = random_poly(n, d, np.random.default_rng(seed))
        g = gradient(p)
        acc = HomogeneousPoly.zero(n, d)
        for i in range(n):
            e = [0.0] * n
            e[i] = 1.0
            acc = acc + g[i].mul_numeric(HomogeneousPoly.linear_form(e))
        want = p.scale(float(d))
        keys = set(acc.coeffs) | set(want.coeffs)
        for k in keys:
            assert acc.coeffs.get(k, 0.0) == pytest.approx(want.coeffs.get(k, 0.0), abs=1e-12)


class TestLiePolynomial:
    def test_stable_isotropic_flow(self):
        p = HomogeneousPoly(2, 2, {(2, 0): 1.0, (0, 2): 1.0})
        q = lie_polynomial(p, -np.eye(2), np.eye(2))
        assert q.coeffs == {(2, 0): -2.0, (0, 2): -2.0}

    def test_paper_node_data(self):
        p = HomogeneousPoly(3, 2, {(2, 0, 0): 1.0, (0, 2, 0): 1.0, (0, 0, 2): 1.0})
        C = np.array([[0, 1, 0], [0, 0, 1.0]])
        E = np.array([[1, 0, 0], [0, 1, 0.0]])
        q = lie_polynomial(p, C, E)
        assert q.coeffs == {(1, 1): 2.0}
        # cross-check by evaluation
        rng = np.random.default_rng(1)
        for _ in range(20):
            z = rng.normal(size=2)
            grad_at = np.array([g.evaluate(E.T @ z) for g in gradient(p)])
            assert q.evaluate(z) == pytest.approx(float(z @ C @ grad_at), abs=1e-12)

    def test_zero_dynamics(self):
        p = random_poly(3, 4, np.random.default_rng(3))
        q = lie_polynomial(p, np.zeros((2, 3)), np.eye(3)[:2])
        assert q.coeffs == {}


class TestEmitSos:
    def test_square_monomial_feasible(self):
        prog = ConicProgram()
        emit_sos(prog, HomogeneousPoly(2, 4, {(2, 2): 1.0}))
        assert feasibility(prog) == "optimal"

    def test_rank_one_square_feasible(self):
        prog = ConicProgram()
        p = HomogeneousPoly(2, 2, {(2, 0): 1.0, (1, 1): 2.0, (0, 2): 1.0})
        gram = emit_sos(prog, p)
        prog.set_objective(0.0)
        prog.finalize()
        sol = solve(prog)
        assert sol.status == "optimal"
        G = sol.matrix(gram.gram)
        assert np.linalg.matrix_rank(G, tol=1e-6) == 1

    def test_motzkin_infeasible(self):
        prog = ConicProgram()
        emit_sos(prog, MOTZKIN)
        assert feasibility(prog) == "infeasible"

    def test_odd_degree_rejected(self):
        prog = ConicProgram()
        with pytest.raises(ValueError):
            emit_sos(prog, HomogeneousPoly(2, 3, {(2, 1): 1.0}))

    def test_feasible_gram_means_pointwise_nonneg(self):
        """Solve an SOS feasibility program with free coefficients pulled
        toward the (non-SOS-able) Motzkin form; whatever comes back must be
        nonnegative everywhere."""
        prog = ConicProgram()
        p = HomogeneousPoly.variable_coefficients(prog, 3, 6)
        emit_sos(prog, p)
        objective = LinExpr()
        for e, target in MOTZKIN.coeffs.items():
            objective = objective + (p.coeffs[e] * target)
        # keep it bounded
        norm_rows = []
        for e, c in p.coeffs.items():
            norm_rows.append(1.0 - c)
            norm_rows.append(c + 1.0)
        prog.add_linear(norm_rows, "nonneg")
        prog.set_objective(objective)
        prog.finalize()
        sol = solve(prog)
        assert sol.status == "optimal"
        solved = p.resolve(sol.values)
        rng = np.random.default_rng(12)
        Y = rng.normal(size=(3, 1000))
        assert float(np.min(solved.evaluate(Y))) >= -1e-7


class TestSosConvexity:
    def test_squared_norm_feasible(self):
        prog = ConicProgram()
        p = HomogeneousPoly(2, 4, {(4, 0): 1.0, (2, 2): 2.0, (0, 4): 1.0})
        emit_sos_convexity(prog, p)
        assert feasibility(prog) == "optimal"
        # oracle: Hessian eigenvalues nonnegative over samples
        assert min_hessian_eig(p) > -1e-9

    def test_separable_quartic_feasible(self):
        prog = ConicProgram()
        emit_sos_convexity(prog, HomogeneousPoly(2, 4, {(4, 0): 1.0, (0, 4): 1.0}))
        assert feasibility(prog) == "optimal"

    def test_indefinite_hessian_infeasible(self):
        p = HomogeneousPoly(2, 4, {(4, 0): 1.0, (2, 2): -6.0, (0, 4): 1.0})
        assert min_hessian_eig(p) < -1e-6  # the sampling oracle sees the defect
        prog = ConicProgram()
        emit_sos_convexity(prog, p)
        assert feasibility(prog) == "infeasible"


def min_hessian_eig(p, samples=200, seed=0):
    rng = np.random.default_rng(seed)
    grads = gradient(p)
    hess = [gradient(g) for g in grads]
    worst = np.inf
    for _ in range(samples):
        y = rng.normal(size=p.nvars)
        H = np.array([[hess[i][j].evaluate(y) for j in range(p.nvars)]
                      for i in range(p.nvars)])
        worst = min(worst, float(np.min(np.linalg.eigvalsh(H))))
    return worst


class TestConeQuadratic:
    def test_offdiagonal_on_negative_orthant(self):
        prog = ConicProgram()
        M = [[0.0, -1.0], [-1.0, 0.0]]
        emit_cone_quadratic(prog, M, PolyhedralCone(np.eye(2)))
        assert feasibility(prog) == "optimal"

    def test_negative_definite_anywhere(self):
        prog = ConicProgram()
        M = [[-1.0, 0.0], [0.0, -1.0]]
        emit_cone_quadratic(prog, M, PolyhedralCone(np.array([[1.0, 1.0]])))
        assert feasibility(prog) == "optimal"

    def test_identity_on_full_space_infeasible(self):
        prog = ConicProgram()
        M = [[1.0, 0.0], [0.0, 1.0]]
        emit_cone_quadratic(prog, M, PolyhedralCone(np.zeros((0, 2))))
        assert feasibility(prog) == "infeasible"

    def test_vrep_form_matches(self):
        for M, expect in [([[0.0, -1.0], [-1.0, 0.0]], "optimal"),
                          ([[1.0, 0.0], [0.0, 1.0]], "infeasible")]:
            prog = ConicProgram()
            emit_cone_quadratic(prog, M, PolyhedralCone(np.eye(2)), form="vrep")
            assert feasibility(prog) == expect

    def test_certificate_soundness_sampled(self):
        """A feasible certificate bounds the form on the cone it covers."""
        rng = np.random.default_rng(6)
        G = np.array([[1.0, 0.2], [-0.3, 1.0]])
        cone = PolyhedralCone(G)
        prog = ConicProgram()
        a = prog.add_scalar("a")
        M = [[a.expr, -1.0], [-1.0, -1.0]]
        emit_cone_quadratic(prog, M, cone)
        prog.set_objective(a.expr)
        prog.finalize()
        sol = solve(prog)
        assert sol.status == "optimal"
        a_val = sol.scalar(a)
        Msol = np.array([[a_val, -1.0], [-1.0, -1.0]])
        from hybinv.geometry import generator_columns
        R = generator_columns(cone)
        for _ in range(1000):
            lam = rng.uniform(size=R.shape[1])
            z = R @ lam
            assert z @ Msol @ z <= 1e-7 * max(1.0, z @ z)
