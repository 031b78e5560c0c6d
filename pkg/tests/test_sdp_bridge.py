"""Tests for program compilation, the solver adapters and the solution re-check."""

import numpy as np
import pytest

from gaincert.errors import CompileError
from gaincert.lmi.affine import AffineExpr, AffineMatrix
from gaincert.lmi.assembly import LinearConstraint, MatrixConstraint
from gaincert.sdp.bridge import (CvxpyAdapter, ReferenceAdapter, SolverAdapter, SolverResult,
                                 compile_program, recheck, smat, solve, svec)


def _hyperbola_program():
    """minimize x0 + x1 subject to [[-x0, 1], [1, -x1]] <= 0; optimum 2 at (1, 1)."""
    mat = AffineMatrix(2)
    mat[0, 0] = AffineExpr.var(0, -1.0)
    mat[1, 0] = 1.0
    mat[1, 1] = AffineExpr.var(1, -1.0)
    constraints = [MatrixConstraint("hyperbola", mat)]
    return compile_program(constraints, 2, objective=AffineExpr.combination([1.0, 1.0], [0, 1]))


def _infeasible_program():
    constraints = [
        LinearConstraint("at_least_one", AffineExpr.var(0) - 1.0),
        LinearConstraint("non_positive", AffineExpr.var(0, -1.0)),
    ]
    return compile_program(constraints, 1)


def test_svec_preserves_inner_products():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(4, 4)), rng.normal(size=(4, 4))
    x, y = a + a.T, b + b.T

    assert svec(x) @ svec(y) == pytest.approx(np.trace(x @ y))
    assert np.allclose(smat(svec(x)), x)
    assert svec(np.array([[1.0, 2.0], [2.0, 3.0]])) == pytest.approx([1.0, 2.0 * np.sqrt(2.0), 3.0])


def test_cone_stores_negated_matrix():
    program = _hyperbola_program()
    cone = program.cones[0]
    x = np.array([2.0, 3.0])

    assert cone.dim == 2
    assert np.allclose(cone.matrix(x), [[2.0, -1.0], [-1.0, 3.0]])
    assert program.objective.tolist() == [1.0, 1.0]


def test_compile_rejects_unknown_variables():
    with pytest.raises(CompileError):
        compile_program([LinearConstraint("bad", AffineExpr.var(4))], 2)
    with pytest.raises(CompileError):
        compile_program([], 0)


def test_compile_is_deterministic():
    assert _hyperbola_program().to_dict() == _hyperbola_program().to_dict()


def test_reference_adapter_statuses():
    adapter = ReferenceAdapter()
    optimal = solve(_hyperbola_program(), adapter, tol=1e-8)

    assert optimal.status == 'optimal'
    assert optimal.values == pytest.approx([1.0, 1.0], abs=1e-4)
    assert optimal.objective == pytest.approx(2.0, abs=1e-4)
    assert solve(_infeasible_program(), adapter).status == 'infeasible'

    unbounded = compile_program([LinearConstraint("x1", AffineExpr.var(1))], 2)
    assert solve(unbounded, adapter).status == 'unbounded'


def test_reference_adapter_refuses_large_cones():
    program = compile_program([MatrixConstraint("big", AffineMatrix.from_constant(-np.eye(3)))], 1)

    assert ReferenceAdapter().solve(program, 1e-8, 100).status == 'numerical_failure'


def test_cvxpy_adapter_agrees_with_reference():
    result = solve(_hyperbola_program(), CvxpyAdapter('CLARABEL'), tol=1e-8)

    assert result.status == 'optimal'
    assert result.objective == pytest.approx(2.0, abs=1e-6)
    assert result.values == pytest.approx([1.0, 1.0], abs=1e-5)
    assert result.diagnostics['recheck']['max_matrix_label'] == 'hyperbola'
    assert solve(_infeasible_program(), CvxpyAdapter('CLARABEL')).status == 'infeasible'


def test_cvxpy_adapter_rejects_unknown_solver():
    with pytest.raises(ValueError):
        CvxpyAdapter('MOSEK')


def test_solve_reports_adapter_crash():
    class Broken(SolverAdapter):
        name = 'broken'

        def solve(self, program, tol, max_iters):
            raise RuntimeError("boom")

    result = solve(_hyperbola_program(), Broken())

    assert result.status == 'numerical_failure'
    assert result.values is None
    assert 'boom' in result.diagnostics['message']


def test_solver_result_values_follow_status():
    with pytest.raises(ValueError):
        SolverResult('infeasible', values=np.zeros(1))
    with pytest.raises(ValueError):
        SolverResult('optimal')
    with pytest.raises(ValueError):
        SolverResult('solved', values=np.zeros(1))


def test_recheck_names_worst_constraints():
    mat = AffineMatrix(1)
    mat[0, 0] = AffineExpr.var(0) - 1.0
    program = compile_program([LinearConstraint("pos", AffineExpr.var(0)), MatrixConstraint("le_one", mat)], 1)
    report = recheck(program.sources, np.array([1.5]))

    assert report['max_matrix_eigenvalue'] == pytest.approx(0.5)
    assert report['max_matrix_label'] == 'le_one'
    assert report['max_linear_violation'] == pytest.approx(-1.5)
    assert report['max_linear_label'] == 'pos'


class FixedPoint(SolverAdapter):
    """Adapter that reports a given point as optimal without solving."""

    name = 'fixed'

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)

    def solve(self, program, tol, max_iters):
        return SolverResult('optimal', values=self.values, objective=float(self.values.sum()))


def test_solution_is_verified_only_after_passing_recheck():
    inside = solve(_hyperbola_program(), FixedPoint([2.0, 2.0]))
    tampered = solve(_hyperbola_program(), FixedPoint([0.5, 0.5]))

    assert inside.verified
    assert inside.diagnostics['recheck']['passed']
    assert not tampered.verified
    assert tampered.has_solution
    assert tampered.diagnostics['recheck']['max_matrix_eigenvalue'] == pytest.approx(0.5)
    assert not SolverResult('infeasible').verified
