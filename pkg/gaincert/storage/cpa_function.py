"""CPA storage functions on a triangulation and the hybrid quadratic + CPA storage."""

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
from scipy import linalg

from ..errors import GainCertError
from ..geometry.simplex_geometry import Triangulation

SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class SimplexGradient:
    simplex_id: int
    grad: np.ndarray


def gradient_operator(tri: Triangulation, simplex_id: int) -> np.ndarray:
    """Matrix C of shape (n, n+1) with grad V_i = C @ (V at the simplex vertices).

    Column j >= 1 is column j-1 of X^-1; column 0 is minus their sum, since the
    differences V_{x_j} - V_{x_0} enter the gradient.
    """
    _, x_inv = tri.vertex_matrix(simplex_id)
    return np.column_stack([-x_inv.sum(axis=1), x_inv])


class CpaFunction:
    """
    Continuous piecewise-affine function given by its values at the mesh vertices.

    Attributes:
        tri (Triangulation): The mesh the function lives on.
        values (np.ndarray): One value per vertex id.
    """

    def __init__(self, tri: Triangulation, values):
        values = np.array(values, dtype=float).reshape(-1)
        if values.size != tri.num_vertices:
            raise GainCertError(f"Expected {tri.num_vertices} vertex values, got {values.size}")
        if not np.all(np.isfinite(values)):
            raise GainCertError("CPA vertex values must be finite")
        values.setflags(write=False)
        self.tri = tri
        self.values = values
        self._lu_cache: Dict[int, tuple] = {}
        self._gradients: Dict[int, np.ndarray] = {}

    def _lu(self, simplex_id: int):
        if simplex_id not in self._lu_cache:
            x_mat, _ = self.tri.vertex_matrix(simplex_id)
            self._lu_cache[simplex_id] = linalg.lu_factor(x_mat)
        return self._lu_cache[simplex_id]

    def gradient(self, simplex_id: int) -> SimplexGradient:
        """Constant gradient on one simplex, solving X grad = W_bar."""
        if simplex_id not in self._gradients:
            ids = self.tri.cells[simplex_id]
            w_bar = self.values[ids[1:]] - self.values[ids[0]]
            grad = linalg.lu_solve(self._lu(simplex_id), w_bar)
            grad.setflags(write=False)
            self._gradients[simplex_id] = grad
        return SimplexGradient(simplex_id, self._gradients[simplex_id])

    def gradients(self) -> np.ndarray:
        """Gradients of every simplex, shape (num_simplexes, n)."""
        return np.array([self.gradient(sid).grad for sid in range(self.tri.num_simplexes)])

    def evaluate(self, x: np.ndarray) -> float:
        """Barycentric interpolation of the vertex values at x."""
        bary = self.tri.locate(x)
        return float(bary.lambdas @ self.values[self.tri.cells[bary.simplex_id]])

    def evaluate_affine(self, simplex_id: int, x: np.ndarray) -> float:
        """V(x_0) + grad^T (x - x_0) using the affine form of one simplex."""
        ids = self.tri.cells[simplex_id]
        offset = np.asarray(x, dtype=float) - self.tri.points[ids[0]]
        return float(self.values[ids[0]] + self.gradient(simplex_id).grad @ offset)

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        """Vectorized evaluate; NaN where a point is outside the mesh."""
        ids, lambdas = self.tri.locate_many(points)
        out = np.full(ids.shape, np.nan)
        inside = ids >= 0
        out[inside] = np.einsum('pj,pj->p', lambdas[inside], self.values[self.tri.cells[ids[inside]]])
        return out

    def to_dict(self) -> Dict:
        return {
            'kind': 'cpa',
            'values': {str(vid): float(v) for vid, v in enumerate(self.values)},
        }

    @classmethod
    def from_dict(cls, tri: Triangulation, doc: Dict) -> 'CpaFunction':
        if len(doc['values']) != tri.num_vertices:
            raise GainCertError(f"Storage has {len(doc['values'])} values for {tri.num_vertices} vertices")
        values = np.full(tri.num_vertices, np.nan)
        for vid, value in doc['values'].items():
            if not 0 <= int(vid) < tri.num_vertices:
                raise GainCertError(f"Storage value for unknown vertex {vid}")
            values[int(vid)] = float(value)
        return cls(tri, values)


class HybridStorage:
    """
    Quadratic x^T P x on the closed epsilon-ball, CPA on the annulus outside it.

    The two pieces need not agree on the sphere.

    Attributes:
        P (np.ndarray): Symmetric n x n matrix of the quadratic part.
        epsilon (float): Radius of the ball.
        cpa (CpaFunction): CPA part on the annulus mesh.
    """

    def __init__(self, P, epsilon: float, cpa: CpaFunction):
        P = np.array(P, dtype=float)
        n = cpa.tri.n
        if P.shape != (n, n):
            raise GainCertError(f"P must have shape {(n, n)}, got {P.shape}")
        if np.max(np.abs(P - P.T)) > SYMMETRY_TOL:
            raise GainCertError("P must be symmetric")
        smallest = linalg.eigvalsh(P)[0]
        if smallest <= 0.0:
            raise GainCertError(f"P must be positive definite, smallest eigenvalue {smallest:.3g}")
        if not epsilon > 0.0:
            raise GainCertError(f"Ball radius must be positive, got {epsilon}")
        P.setflags(write=False)
        self.P = P
        self.epsilon = float(epsilon)
        self.cpa = cpa

    @property
    def tri(self) -> Triangulation:
        return self.cpa.tri

    def in_ball(self, x: np.ndarray) -> bool:
        return bool(np.linalg.norm(x) <= self.epsilon)

    def evaluate(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        if self.in_ball(x):
            return float(x @ self.P @ x)
        return self.cpa.evaluate(x)

    def to_dict(self) -> Dict:
        doc = self.cpa.to_dict()
        doc.update({'kind': 'hybrid', 'P': self.P.ravel().tolist(), 'epsilon': self.epsilon})
        return doc

    @classmethod
    def from_dict(cls, tri: Triangulation, doc: Dict) -> 'HybridStorage':
        P = np.asarray(doc['P'], dtype=float).reshape(tri.n, tri.n)
        return cls(P, float(doc['epsilon']), CpaFunction.from_dict(tri, doc))


def evaluate_hybrid(storage: HybridStorage, x: np.ndarray) -> float:
    return storage.evaluate(x)


def storage_from_dict(tri: Triangulation, doc: Dict, epsilon: Optional[float] = None):
    """Rebuild a CpaFunction or HybridStorage from its exported document."""
    if doc.get('kind') == 'hybrid':
        storage = HybridStorage.from_dict(tri, doc)
        if epsilon is not None and abs(storage.epsilon - epsilon) > 1e-12:
            raise GainCertError(f"Storage radius {storage.epsilon} does not match {epsilon}")
        return storage
    return CpaFunction.from_dict(tri, doc)
