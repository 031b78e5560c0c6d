"""Conic programs built from assembled constraints, and the solver adapters that solve them.

A compiled program minimizes c^T x subject to G x + h >= 0 and, for every cone,
svec(-M(x)) = A x + b in the PSD cone. svec stacks the lower triangle column by
column and scales off-diagonal entries by sqrt(2), so svec(X) . svec(Y) = trace(XY).
"""

import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from scipy import optimize, sparse

from ..errors import CompileError
from ..lmi.affine import AffineExpr
from ..lmi.assembly import ConstraintSet, DecisionLayout, MatrixConstraint

SQRT2 = math.sqrt(2.0)
STATUSES = ('optimal', 'infeasible', 'unbounded', 'numerical_failure', 'max_iters')
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITERS = 200_000
RECHECK_FACTOR = 10.0


def svec(matrix: np.ndarray) -> np.ndarray:
    """Scaled lower-triangle vectorization of a symmetric matrix."""
    matrix = np.asarray(matrix, dtype=float)
    rows, cols = _lower_indices(matrix.shape[0])
    scale = np.where(rows == cols, 1.0, SQRT2)
    return matrix[rows, cols] * scale


def smat(vector: np.ndarray) -> np.ndarray:
    """Inverse of svec."""
    vector = np.asarray(vector, dtype=float)
    dim = int(round((math.sqrt(8 * vector.size + 1) - 1) / 2))
    rows, cols = _lower_indices(dim)
    values = vector / np.where(rows == cols, 1.0, SQRT2)
    out = np.zeros((dim, dim))
    out[rows, cols] = values
    out[cols, rows] = values
    return out


def _lower_indices(dim: int):
    cols, rows = np.triu_indices(dim)
    return rows, cols


def _svec_position(row: int, col: int, dim: int) -> int:
    # column-major lower triangle: columns 0..col-1 hold dim, dim-1, ... entries
    return col * dim - col * (col - 1) // 2 + (row - col)


@dataclass
class PsdCone:
    """svec(-M(x)) = A x + b must lie in the PSD cone of size dim."""

    label: str
    dim: int
    A: sparse.csr_matrix
    b: np.ndarray

    def matrix(self, x: np.ndarray) -> np.ndarray:
        return smat(self.A @ x + self.b)


@dataclass
class ConicProgram:  # pylint: disable=too-many-instance-attributes
    """
    Standard-form program: minimize objective . x subject to linear rows and PSD cones.

    Attributes:
        num_vars (int): Number of decision variables.
        objective (np.ndarray): Cost vector.
        G (sparse.csr_matrix), h (np.ndarray): Linear rows, G x + h >= 0.
        linear_labels (List[str]): One label per linear row.
        cones (List[PsdCone]): PSD cones in constraint order.
        sources (ConstraintSet): The constraints the program was compiled from.
    """

    num_vars: int
    objective: np.ndarray
    G: sparse.csr_matrix
    h: np.ndarray
    linear_labels: List[str]
    cones: List[PsdCone]
    sources: Optional[ConstraintSet] = None

    def to_dict(self) -> Dict:
        """JSON interchange form with sparse (row, var, coef) triplets."""
        def triplets(mat):
            coo = mat.tocoo()
            return [[int(r), int(c), float(v)] for r, c, v in zip(coo.row, coo.col, coo.data)]

        return {
            'num_vars': self.num_vars,
            'objective': {str(i): float(v) for i, v in enumerate(self.objective) if v != 0.0},
            'linear': {'labels': self.linear_labels, 'G': triplets(self.G), 'h': self.h.tolist()},
            'cones': [{'label': c.label, 'dim': c.dim, 'A': triplets(c.A), 'b': c.b.tolist()}
                      for c in self.cones],
        }


@dataclass
class SolverResult:
    """
    Outcome of one solve.

    Attributes:
        status (str): One of optimal, infeasible, unbounded, numerical_failure, max_iters.
        values (Optional[np.ndarray]): Primal point, present iff status is optimal or max_iters.
        objective (Optional[float]): Objective at the primal point.
        iterations (Optional[int]): Solver iterations, when reported.
        seconds (float): Wall-clock solve time.
        diagnostics (Dict): Adapter messages, the solver name and the re-check result.
    """

    status: str
    values: Optional[np.ndarray] = None
    objective: Optional[float] = None
    iterations: Optional[int] = None
    seconds: float = 0.0
    diagnostics: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"Unknown solver status: {self.status}")
        if (self.values is not None) != (self.status in ('optimal', 'max_iters')):
            raise ValueError(f"Primal values must be present exactly for optimal/max_iters, got {self.status}")

    @property
    def has_solution(self) -> bool:
        return self.values is not None

    @property
    def verified(self) -> bool:
        """A primal point that passed the re-check against the source constraints."""
        return self.has_solution and bool(self.diagnostics.get('recheck', {}).get('passed', False))


def _expr_row(expr: AffineExpr, num_vars: int, label: str):
    for var in expr.terms:
        if not 0 <= var < num_vars:
            raise CompileError(f"Constraint {label} references variable {var} outside 0..{num_vars - 1}")
    return list(expr.terms), list(expr.terms.values()), expr.constant


def _compile_matrix(item: MatrixConstraint, num_vars: int) -> PsdCone:
    dim = item.matrix.dim
    size = dim * (dim + 1) // 2
    rows, cols, data = [], [], []
    b = np.zeros(size)
    for row, col, expr in item.matrix.lower_entries():
        pos = _svec_position(row, col, dim)
        scale = -1.0 if row == col else -SQRT2
        var_ids, coefs, constant = _expr_row(expr, num_vars, item.label)
        rows.extend([pos] * len(var_ids))
        cols.extend(var_ids)
        data.extend(scale * c for c in coefs)
        b[pos] = scale * constant
    A = sparse.csr_matrix((data, (rows, cols)), shape=(size, num_vars))
    return PsdCone(item.label, dim, A, b)


def compile_program(constraints: Union[ConstraintSet, Sequence], layout: Union[DecisionLayout, int],
                    objective: Optional[AffineExpr] = None) -> ConicProgram:
    """Compile constraints into a ConicProgram minimizing alpha (or the given objective).

    Linear rows come first in list order, then one cone per matrix constraint in
    list order, so compiling twice gives identical programs.
    """
    if not isinstance(constraints, ConstraintSet):
        collected = ConstraintSet()
        collected.extend(constraints)
        constraints = collected
    if isinstance(layout, DecisionLayout):
        num_vars, alpha = layout.num_vars, layout.alpha
    else:
        num_vars, alpha = int(layout), 0
    if num_vars < 1:
        raise CompileError(f"Layout has no decision variables: {num_vars}")
    objective = objective if objective is not None else AffineExpr.var(alpha)
    _expr_row(objective, num_vars, 'objective')
    cost = np.zeros(num_vars)
    for var, coef in objective.terms.items():
        cost[var] = coef

    rows, cols, data = [], [], []
    h = np.zeros(len(constraints.linear))
    for i, item in enumerate(constraints.linear):
        var_ids, coefs, constant = _expr_row(item.expr, num_vars, item.label)
        rows.extend([i] * len(var_ids))
        cols.extend(var_ids)
        data.extend(coefs)
        h[i] = constant
    G = sparse.csr_matrix((data, (rows, cols)), shape=(len(constraints.linear), num_vars))
    cones = [_compile_matrix(item, num_vars) for item in constraints.matrices]
    return ConicProgram(num_vars, cost, G, h, [c.label for c in constraints.linear], cones, constraints)


class SolverAdapter:
    """Contract: solve(program, tol, max_iters) returns a SolverResult without raising."""

    name = 'abstract'

    def solve(self, program: ConicProgram, tol: float, max_iters: int) -> SolverResult:
        raise NotImplementedError


def _full_from_svec(dim: int) -> sparse.csr_matrix:
    """Matrix T with vec_F(smat(s)) = T s."""
    rows, cols = _lower_indices(dim)
    out_rows, out_cols, data = [], [], []
    for pos, (r, c) in enumerate(zip(rows, cols)):
        value = 1.0 if r == c else 1.0 / SQRT2
        out_rows.append(r + c * dim)
        out_cols.append(pos)
        data.append(value)
        if r != c:
            out_rows.append(c + r * dim)
            out_cols.append(pos)
            data.append(value)
    return sparse.csr_matrix((data, (out_rows, out_cols)), shape=(dim * dim, len(rows)))


class CvxpyAdapter(SolverAdapter):
    """Production adapter driving cvxpy with CLARABEL (default) or SCS."""

    SOLVERS = ('CLARABEL', 'SCS')

    def __init__(self, solver: str = 'CLARABEL', verbose: bool = False):
        if solver.upper() not in self.SOLVERS:
            raise ValueError(f"Unsupported solver: {solver}. Expected one of {self.SOLVERS}")
        self.solver = solver.upper()
        self.name = f"cvxpy/{self.solver}"
        self.verbose = verbose

    def _options(self, tol: float, max_iters: int) -> Dict:
        if self.solver == 'SCS':
            return {'max_iters': max_iters, 'eps_abs': tol, 'eps_rel': tol}
        return {'max_iter': max_iters, 'tol_gap_abs': tol, 'tol_gap_rel': tol, 'tol_feas': tol}

    def _problem(self, program: ConicProgram):
        import cvxpy as cp  # pylint: disable=import-outside-toplevel

        x = cp.Variable(program.num_vars)
        constraints = []
        if program.G.shape[0]:
            constraints.append(cp.Constant(program.G) @ x + program.h >= 0)
        if program.cones:
            transforms: Dict[int, sparse.csr_matrix] = {}
            blocks_a, blocks_b, dims = [], [], []
            for cone in program.cones:
                if cone.dim not in transforms:
                    transforms[cone.dim] = _full_from_svec(cone.dim)
                T = transforms[cone.dim]
                blocks_a.append(T @ cone.A)
                blocks_b.append(T @ cone.b)
                dims.append(cone.dim)
            stacked = cp.Constant(sparse.vstack(blocks_a).tocsr()) @ x + np.concatenate(blocks_b)
            start = 0
            for dim in dims:
                block = cp.reshape(stacked[start:start + dim * dim], (dim, dim), order='F')
                constraints.append(cp.PSD(block))
                start += dim * dim
        return x, cp.Problem(cp.Minimize(x @ program.objective), constraints)

    def solve(self, program: ConicProgram, tol: float, max_iters: int) -> SolverResult:
        import cvxpy as cp  # pylint: disable=import-outside-toplevel

        start = time.perf_counter()
        try:
            x, problem = self._problem(program)
            problem.solve(solver=getattr(cp, self.solver), verbose=self.verbose,
                          **self._options(tol, max_iters))
        except cp.error.SolverError as err:
            return SolverResult('numerical_failure', seconds=time.perf_counter() - start,
                                diagnostics={'solver': self.name, 'message': str(err)})
        seconds = time.perf_counter() - start

        status = {
            cp.OPTIMAL: 'optimal',
            cp.OPTIMAL_INACCURATE: 'max_iters',
            cp.USER_LIMIT: 'max_iters',
            cp.INFEASIBLE: 'infeasible',
            cp.INFEASIBLE_INACCURATE: 'infeasible',
            cp.UNBOUNDED: 'unbounded',
            cp.UNBOUNDED_INACCURATE: 'unbounded',
        }.get(problem.status, 'numerical_failure')
        values = None if x.value is None else np.asarray(x.value, dtype=float)
        if status in ('optimal', 'max_iters') and values is None:
            status = 'numerical_failure'
        if status not in ('optimal', 'max_iters'):
            values = None

        stats = problem.solver_stats
        return SolverResult(
            status,
            values=values,
            objective=float(program.objective @ values) if values is not None else None,
            iterations=getattr(stats, 'num_iters', None),
            seconds=seconds,
            diagnostics={'solver': self.name, 'raw_status': str(problem.status)},
        )


class ReferenceAdapter(SolverAdapter):
    """Brute-force adapter for tiny programs with 1x1 and 2x2 cones only.

    Each cone becomes smooth scalar inequalities (diagonal entries and the
    determinant) handed to SLSQP inside a large box; a solution that stays on
    the box boundary is reported unbounded.
    """

    name = 'reference'
    BOX = 1e6
    MAX_VARS = 20

    def solve(self, program: ConicProgram, tol: float, max_iters: int) -> SolverResult:
        if program.num_vars > self.MAX_VARS or any(cone.dim > 2 for cone in program.cones):
            return SolverResult('numerical_failure', diagnostics={
                'solver': self.name, 'message': 'reference adapter handles <= 20 variables and cones up to 2x2'})
        start = time.perf_counter()
        G = program.G.toarray()
        constraints = []
        if G.shape[0]:
            constraints.append({'type': 'ineq', 'fun': lambda x: G @ x + program.h, 'jac': lambda x: G})
        for cone in program.cones:
            A = cone.A.toarray()
            constraints.append({'type': 'ineq', 'fun': lambda x, A=A, b=cone.b: _cone_margins(A @ x + b)})

        result = optimize.minimize(
            lambda x: program.objective @ x, np.zeros(program.num_vars),
            jac=lambda x: program.objective, method='SLSQP', constraints=constraints,
            bounds=[(-self.BOX, self.BOX)] * program.num_vars,
            options={'ftol': tol * 1e-2, 'maxiter': min(max_iters, 10_000)},
        )
        seconds = time.perf_counter() - start
        x = result.x
        violation = _max_violation(program, x)
        if violation > math.sqrt(tol):
            status, x = 'infeasible', None
        elif np.any(np.abs(x) >= self.BOX * (1.0 - 1e-9)):
            status, x = 'unbounded', None
        else:
            status = 'optimal' if result.success else 'max_iters'
        return SolverResult(status, values=x,
                            objective=float(program.objective @ x) if x is not None else None,
                            iterations=int(result.nit), seconds=seconds,
                            diagnostics={'solver': self.name, 'message': str(result.message)})


def _cone_margins(s: np.ndarray) -> np.ndarray:
    if s.size == 1:
        return s
    a, b, c = s[0], s[1] / SQRT2, s[2]
    return np.array([a, c, a * c - b * b])


def _max_violation(program: ConicProgram, x: np.ndarray) -> float:
    worst = 0.0
    if program.G.shape[0]:
        worst = max(worst, float(np.max(-(program.G @ x + program.h))))
    for cone in program.cones:
        worst = max(worst, float(-np.linalg.eigvalsh(cone.matrix(x))[0]))
    return worst


def recheck(constraints: ConstraintSet, x: np.ndarray) -> Dict:
    """Re-evaluate the original constraints at x.

    Returns the largest max-eigenvalue over matrix constraints, the largest
    negative slack over linear rows, and the worst labels.
    """
    worst_matrix, worst_matrix_label = -math.inf, None
    for item in constraints.matrices:
        value = item.matrix.max_eigenvalue(x)
        if value > worst_matrix:
            worst_matrix, worst_matrix_label = value, item.label
    worst_linear, worst_linear_label = -math.inf, None
    for item in constraints.linear:
        value = -item.expr.evaluate(x)
        if value > worst_linear:
            worst_linear, worst_linear_label = value, item.label
    return {
        'max_matrix_eigenvalue': worst_matrix,
        'max_matrix_label': worst_matrix_label,
        'max_linear_violation': worst_linear,
        'max_linear_label': worst_linear_label,
    }


def solve(program: ConicProgram, adapter: Optional[SolverAdapter] = None, tol: float = DEFAULT_TOL,
          max_iters: int = DEFAULT_MAX_ITERS) -> SolverResult:
    """Solve with the adapter (CLARABEL through cvxpy by default) and re-check the solution."""
    adapter = adapter or CvxpyAdapter()
    try:
        result = adapter.solve(program, tol, max_iters)
    except Exception as err:  # pylint: disable=broad-except
        return SolverResult('numerical_failure', diagnostics={'solver': adapter.name, 'message': repr(err)})

    if result.has_solution and program.sources is not None:
        check = recheck(program.sources, result.values)
        result.diagnostics['recheck'] = check
        limit = RECHECK_FACTOR * tol
        worst = max(check['max_matrix_eigenvalue'], check['max_linear_violation'])
        check['tolerance'] = limit
        check['passed'] = bool(worst <= limit)
        if not check['passed']:
            label = check['max_matrix_label'] if worst == check['max_matrix_eigenvalue'] else check['max_linear_label']
            print(f"Warning: solution violates {label} by {worst:.3g} (tolerance {limit:.1g})")
    if result.status == 'max_iters':
        print(f"Warning: {adapter.name} stopped before reaching tolerance {tol:g}")
    return result

