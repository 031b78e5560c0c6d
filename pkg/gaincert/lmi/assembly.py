"""Constraint assembly for the CPA and hybrid gain programs.

Every matrix constraint is stored as "AffineMatrix <= 0" (negative semidefinite)
and every linear constraint as "AffineExpr >= 0".
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, TextIO, Tuple

import numpy as np
from tqdm import tqdm

from ..errors import InvalidBoundError, ModeMismatchError
from ..geometry.simplex_geometry import Triangulation
from ..model.system_model import BoundSet, SystemModel
from ..storage.cpa_function import gradient_operator
from .affine import AffineExpr, AffineMatrix

MODES = ('cpa', 'hybrid')
ALPHA_MIN = 1e-8
DELTA = 1e-8
G_SPLIT_OFFSET = 1.5


class DecisionLayout:
    """
    Contiguous decision-variable ids of one gain program.

    Order: alpha, one V per vertex, n entries of l per simplex, then in hybrid
    mode the lower triangle of P (row-major) and l_p.

    Attributes:
        n (int): State dimension.
        num_vertices, num_simplexes (int): Mesh sizes.
        hybrid (bool): Whether P and l_p are present.
        num_vars (int): Total number of decision variables.
    """

    def __init__(self, n: int, num_vertices: int, num_simplexes: int, hybrid: bool = False):
        self.n = n
        self.num_vertices = num_vertices
        self.num_simplexes = num_simplexes
        self.hybrid = hybrid
        self.alpha = 0
        self._v_start = 1
        self._l_start = self._v_start + num_vertices
        self._p_start = self._l_start + num_simplexes * n
        self._p_pairs = [(r, c) for r in range(n) for c in range(r + 1)] if hybrid else []
        self.l_p = self._p_start + len(self._p_pairs) if hybrid else None
        self.num_vars = self._p_start + (len(self._p_pairs) + 1 if hybrid else 0)

    @classmethod
    def for_mesh(cls, tri: Triangulation, hybrid: bool = False) -> 'DecisionLayout':
        return cls(tri.n, tri.num_vertices, tri.num_simplexes, hybrid)

    def v(self, vertex_id: int) -> int:
        return self._v_start + int(vertex_id)

    def v_ids(self, vertex_ids: Sequence[int]) -> List[int]:
        return [self._v_start + int(v) for v in vertex_ids]

    def l(self, simplex_id: int) -> List[int]:
        start = self._l_start + simplex_id * self.n
        return list(range(start, start + self.n))

    def p(self, row: int, col: int) -> int:
        """Id of P[row, col]; P is symmetric so both orders map to one id."""
        if not self.hybrid:
            raise ModeMismatchError("P is only part of the hybrid layout")
        row, col = max(row, col), min(row, col)
        return self._p_start + row * (row + 1) // 2 + col

    @property
    def p_entries(self) -> List[int]:
        return [self.p(r, c) for r, c in self._p_pairs]

    def alpha_value(self, x: np.ndarray) -> float:
        return float(x[self.alpha])

    def vertex_values(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x[self._v_start:self._l_start], dtype=float)

    def p_matrix(self, x: np.ndarray) -> np.ndarray:
        P = np.zeros((self.n, self.n))
        for r, c in self._p_pairs:
            P[r, c] = P[c, r] = x[self.p(r, c)]
        return P

    def describe(self) -> Dict:
        return {
            'num_vars': self.num_vars,
            'alpha': self.alpha,
            'v': [self._v_start, self._l_start],
            'l': [self._l_start, self._p_start],
            'p': [self._p_start, self.l_p] if self.hybrid else None,
            'l_p': self.l_p,
        }


@dataclass
class LinearConstraint:
    """expr >= 0."""

    label: str
    expr: AffineExpr


@dataclass
class MatrixConstraint:
    """matrix <= 0 in the semidefinite order."""

    label: str
    matrix: AffineMatrix


@dataclass
class ConstraintSet:
    linear: List[LinearConstraint] = field(default_factory=list)
    matrices: List[MatrixConstraint] = field(default_factory=list)

    def extend(self, constraints):
        for constraint in constraints:
            if isinstance(constraint, MatrixConstraint):
                self.matrices.append(constraint)
            else:
                self.linear.append(constraint)


def error_bound_matrix(beta: float, mus: Sequence[float], c_j: float) -> Tuple[float, int]:
    """Scalar entry 1/2 (beta c_j + sum_k mu_k^2 c_j^2) and the size m of the 1/2 I block."""
    if beta < 0.0 or c_j < 0.0 or any(mu < 0.0 for mu in mus):
        raise InvalidBoundError(f"Bounds must be non-negative: beta={beta}, mus={list(mus)}, c={c_j}")
    return 0.5 * (beta * c_j + sum(mu * mu for mu in mus) * c_j * c_j), len(mus)


def _gradient_exprs(tri: Triangulation, simplex_id: int, layout: DecisionLayout) -> List[AffineExpr]:
    op = gradient_operator(tri, simplex_id)
    var_ids = layout.v_ids(tri.cells[simplex_id])
    return [AffineExpr.combination(op[k], var_ids) for k in range(tri.n)]


def gain_lmi_block(model: SystemModel, tri: Triangulation, bounds: BoundSet, simplex_id: int,
                   j: int, layout: DecisionLayout, mode: str = 'cpa') -> AffineMatrix:
    """Vertex LMI at vertex j of a simplex, of size 1 + 2m + p.

    Rows: the HJI scalar, the m input-coupling rows, the p output rows and the
    m rows carrying the g-remainder through a Schur complement.
    """
    if mode == 'cpa' and model.has_constant_input:
        raise ModeMismatchError(f"{model.name} has a nonzero constant input matrix; use hybrid mode")
    n, m, p = model.n, model.m, model.p
    c_j = float(tri.shape_constants(simplex_id)[j])
    x_j = tri.simplex_coords(simplex_id)[j]
    grad = _gradient_exprs(tri, simplex_id, layout)
    sum_l = AffineExpr.combination(np.ones(n), layout.l(simplex_id))
    beta = float(bounds.beta[simplex_id])
    rho_term, _ = error_bound_matrix(0.0, bounds.rho[simplex_id], c_j)

    fx = model.f(x_j)
    G = model.input_matrix(x_j)
    hx = model.h(x_j)

    block = AffineMatrix(1 + 2 * m + p)
    block[0, 0] = sum((grad[q] * fx[q] for q in range(n)), AffineExpr()) + sum_l * (0.5 * beta * c_j) + rho_term
    alpha_diag = AffineExpr.var(layout.alpha, -2.0) + 0.5
    for k in range(m):
        block[1 + k, 0] = sum((grad[q] * G[q, k] for q in range(n)), AffineExpr())
        block[1 + k, 1 + k] = alpha_diag
    for a in range(p):
        block[1 + m + a, 0] = float(hx[a])
        block[1 + m + a, 1 + m + a] = -1.5
    for k in range(m):
        row = 1 + m + p + k
        block[row, 0] = sum_l * (c_j * float(bounds.mu[simplex_id][k]))
        block[row, row] = -2.0
    return block


def default_origin_offset(model: SystemModel, bounds: BoundSet) -> float:
    """Input-block offset of the ball LMI: 3/2 when g is non-trivial near 0, else 0."""
    if np.any(model.jac_g0_norms() > 0.0) or (bounds.mu_eps or 0.0) > 0.0:
        return G_SPLIT_OFFSET
    return 0.0


def origin_lmi_block(model: SystemModel, epsilon: float, bounds: BoundSet, layout: DecisionLayout,
                     offset: Optional[float] = None) -> AffineMatrix:
    """Ball LMI of size 3n + m + p for the quadratic part x^T P x on the epsilon-ball."""
    n, m, p = model.n, model.m, model.p
    if offset is None:
        offset = default_origin_offset(model, bounds)
    J = model.jac_f0
    B = model.B
    beta_eps = bounds.beta_eps or 0.0
    rho_eps = bounds.rho_eps or 0.0
    mu_eps = bounds.mu_eps or 0.0
    l_p = layout.l_p

    block = AffineMatrix(3 * n + m + p)
    diag_lp = epsilon * n ** 1.5 * beta_eps
    diag_const = 0.5 * epsilon ** 2 * n ** 2 * p * rho_eps ** 2
    for r in range(n):
        for c in range(r + 1):
            # (P J + J^T P)[r, c] = sum_k P[r, k] J[k, c] + J[k, r] P[k, c]
            coefs: Dict[int, float] = {}
            for k in range(n):
                for var, coef in ((layout.p(r, k), J[k, c]), (layout.p(k, c), J[k, r])):
                    coefs[var] = coefs.get(var, 0.0) + coef
            expr = AffineExpr(0.0, coefs)
            if r == c:
                expr = expr + AffineExpr.var(l_p, diag_lp) + diag_const
            block[r, c] = expr

    for k in range(m):
        row = n + k
        for r in range(n):
            block[row, r] = AffineExpr.combination(B[:, k], [layout.p(r, q) for q in range(n)])
        block[row, row] = AffineExpr.var(layout.alpha, -0.5) + offset

    for a in range(p):
        row = n + m + a
        for r in range(n):
            block[row, r] = float(model.jac_h0[a, r])
        block[row, row] = -1.5

    g_lin = epsilon * float(np.sum(model.jac_g0_norms()))
    g_quad = n ** 1.5 * m ** 0.5 * mu_eps * epsilon ** 2
    for r in range(n):
        row4 = n + m + p + r
        row5 = 2 * n + m + p + r
        block[row4, r] = AffineExpr.var(l_p, g_lin)
        block[row4, row4] = -1.0
        block[row5, r] = AffineExpr.var(l_p, g_quad)
        block[row5, row5] = -2.0
    return block


def gradient_bound_constraints(simplex_id: int, layout: DecisionLayout,
                               tri: Triangulation) -> List[LinearConstraint]:
    """l_i^(k) - grad_k >= 0 and l_i^(k) + grad_k >= 0 for every axis k."""
    grad = _gradient_exprs(tri, simplex_id, layout)
    out = []
    for k, l_var in enumerate(layout.l(simplex_id)):
        l_expr = AffineExpr.var(l_var)
        out.append(LinearConstraint(f"grad[{simplex_id}][{k}]+", l_expr - grad[k]))
        out.append(LinearConstraint(f"grad[{simplex_id}][{k}]-", l_expr + grad[k]))
    return out


def side_constraints(layout: DecisionLayout, mode: str, alpha_min: float = ALPHA_MIN,
                     delta: float = DELTA) -> list:
    """alpha >= alpha_min, V >= 0 and, in hybrid mode, delta I <= P <= l_p I."""
    if mode not in MODES:
        raise ModeMismatchError(f"Unknown mode: {mode}. Expected one of {MODES}")
    out: list = [LinearConstraint("alpha_min", AffineExpr.var(layout.alpha) - alpha_min)]
    out.extend(LinearConstraint(f"v[{vid}]", AffineExpr.var(layout.v(vid)))
               for vid in range(layout.num_vertices))
    if mode == 'cpa':
        return out

    n = layout.n
    if n == 1:
        p11 = AffineExpr.var(layout.p(0, 0))
        out.append(LinearConstraint("P_lower", p11 - delta))
        out.append(LinearConstraint("P_upper", AffineExpr.var(layout.l_p) - p11))
        return out

    lower, upper = AffineMatrix(n), AffineMatrix(n)
    for r in range(n):
        for c in range(r + 1):
            entry = AffineExpr.var(layout.p(r, c))
            lower[r, c] = (-entry + delta) if r == c else -entry
            upper[r, c] = (entry - AffineExpr.var(layout.l_p)) if r == c else entry
    out.append(MatrixConstraint("P_lower", lower))
    out.append(MatrixConstraint("P_upper", upper))
    return out


def _simplex_constraints(model, tri, bounds, layout, mode, simplex_id) -> list:
    out: list = gradient_bound_constraints(simplex_id, layout, tri)
    skip_origin = mode == 'cpa' and tri.simplexes[simplex_id].contains_origin
    for j in range(tri.n + 1):
        if skip_origin and j == 0:
            continue
        out.append(MatrixConstraint(f"M[{simplex_id}][{j}]",
                                    gain_lmi_block(model, tri, bounds, simplex_id, j, layout, mode)))
    return out


def assemble(model: SystemModel, tri: Triangulation, bounds: BoundSet, layout: DecisionLayout,
             mode: str, epsilon: Optional[float] = None, alpha_min: float = ALPHA_MIN,
             delta: float = DELTA, origin_offset: Optional[float] = None, threads: int = 1,
             progress_bar: bool = False) -> ConstraintSet:
    """Every constraint of one gain program, in deterministic simplex order."""
    if mode == 'cpa' and model.has_constant_input:
        raise ModeMismatchError(f"{model.name} has a nonzero constant input matrix; use hybrid mode")
    constraints = ConstraintSet()
    constraints.extend(side_constraints(layout, mode, alpha_min, delta))
    if mode == 'hybrid':
        constraints.extend([MatrixConstraint(
            "M_eps", origin_lmi_block(model, epsilon, bounds, layout, origin_offset))])

    # prime the per-simplex caches before fanning out
    for sid in range(tri.num_simplexes):
        tri.vertex_matrix(sid)

    def build(simplex_id):
        return _simplex_constraints(model, tri, bounds, layout, mode, simplex_id)

    ids = range(tri.num_simplexes)
    bar = dict(total=tri.num_simplexes, desc="Assembling LMIs", unit="simplex", disable=not progress_bar)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            for block in tqdm(executor.map(build, ids), **bar):
                constraints.extend(block)
    else:
        for block in tqdm(map(build, ids), **bar):
            constraints.extend(block)
    return constraints


def dump_sparse(constraints: ConstraintSet, stream: TextIO):
    """Write one line per entry: constraint id, row, col, variable id or 'const', coefficient.

    Linear constraints use row = col = 0 and are numbered before the matrices.
    """
    stream.write("# constraint row col var coef\n")
    for cid, item in enumerate(constraints.linear):
        _dump_expr(stream, cid, 0, 0, item.expr)
    offset = len(constraints.linear)
    for k, item in enumerate(constraints.matrices):
        for row, col, expr in item.matrix.lower_entries():
            _dump_expr(stream, offset + k, row, col, expr)


def _dump_expr(stream: TextIO, cid: int, row: int, col: int, expr: AffineExpr):
    if expr.constant != 0.0:
        stream.write(f"{cid} {row} {col} const {expr.constant!r}\n")
    for var in expr.variables():
        stream.write(f"{cid} {row} {col} {var} {expr.terms[var]!r}\n")
