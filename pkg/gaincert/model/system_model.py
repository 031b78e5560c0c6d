"""Input-affine systems dx/dt = f(x) + (B + g(x)) u, y = h(x), with Hessian-bound oracles."""

from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from tqdm import tqdm

from ..errors import InvalidOracleError, ModelError
from ..geometry.simplex_geometry import Box, Triangulation
from .intervals import abs_sin_max

ORIGIN_TOL = 1e-12
K_MODES = ('constant_one', 'x2_affine')

VectorField = Callable[[np.ndarray], np.ndarray]
BoxOracle = Callable[[Box], float]
IndexedOracle = Callable[[Box, int], float]


@dataclass(frozen=True)
class SystemModel:  # pylint: disable=too-many-instance-attributes
    """
    An input-affine system together with its derivative-bound oracles.

    Attributes:
        name (str): Model name used in reports.
        n, m, p (int): State, input and output dimensions.
        eval_f, eval_g, eval_h: Evaluators of f (R^n), g (n x m) and h (R^p).
        B (np.ndarray): Constant n x m input matrix.
        jac_f0, jac_h0 (np.ndarray): Jacobians of f and h at the origin.
        jac_g0 (Tuple[np.ndarray, ...]): Jacobians of the columns of g at the origin.
        beta_oracle: box -> bound on |second partials| of every component of f.
        rho_oracle: (box, a) -> bound on |second partials| of output a.
        mu_oracle: (box, k) -> bound on |second partials| of every component of column k of g.
    """

    name: str
    n: int
    m: int
    p: int
    eval_f: VectorField
    B: np.ndarray
    eval_g: Callable[[np.ndarray], np.ndarray]
    eval_h: VectorField
    jac_f0: np.ndarray
    jac_h0: np.ndarray
    jac_g0: Tuple[np.ndarray, ...]
    beta_oracle: BoxOracle
    rho_oracle: IndexedOracle
    mu_oracle: IndexedOracle

    def __post_init__(self):
        expected = {
            'B': (self.n, self.m), 'jac_f0': (self.n, self.n), 'jac_h0': (self.p, self.n),
        }
        for attr, shape in expected.items():
            if np.shape(getattr(self, attr)) != shape:
                raise ModelError(f"{self.name}: {attr} has shape {np.shape(getattr(self, attr))}, expected {shape}")
        if len(self.jac_g0) != self.m or any(np.shape(j) != (self.n, self.n) for j in self.jac_g0):
            raise ModelError(f"{self.name}: expected {self.m} column Jacobians of shape {(self.n, self.n)}")

        zero = np.zeros(self.n)
        residuals = {
            'f(0)': np.linalg.norm(self.f(zero)),
            'g(0)': np.linalg.norm(self.g(zero)),
            'h(0)': np.linalg.norm(self.h(zero)),
        }
        for label, value in residuals.items():
            if not value <= ORIGIN_TOL:
                raise ModelError(f"{self.name}: {label} must vanish, got norm {value:.3g}")

    def f(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.eval_f(np.asarray(x, dtype=float)), dtype=float).reshape(self.n)

    def g(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.eval_g(np.asarray(x, dtype=float)), dtype=float).reshape(self.n, self.m)

    def h(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.eval_h(np.asarray(x, dtype=float)), dtype=float).reshape(self.p)

    def input_matrix(self, x: np.ndarray) -> np.ndarray:
        """The full input matrix B + g(x)."""
        return self.B + self.g(x)

    def rhs(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Right-hand side f(x) + (B + g(x)) u."""
        return self.f(x) + self.input_matrix(x) @ np.asarray(u, dtype=float).reshape(self.m)

    @property
    def has_constant_input(self) -> bool:
        return bool(np.any(self.B != 0.0))

    def jac_g0_norms(self) -> np.ndarray:
        """Largest singular value of each column Jacobian of g at 0."""
        return np.array([np.linalg.norm(j, 2) for j in self.jac_g0])


@dataclass(frozen=True)
class BoundSet:
    """
    Hessian-magnitude bounds per simplex, plus origin-ball bounds in hybrid mode.

    Attributes:
        beta (np.ndarray): Shape (S,), bound for f on each simplex.
        rho (np.ndarray): Shape (S, p), bound per output on each simplex.
        mu (np.ndarray): Shape (S, m), bound per column of g on each simplex.
        beta_eps, rho_eps, mu_eps (Optional[float]): Bounds on [-eps, eps]^n, maxima over outputs/columns.
    """

    beta: np.ndarray
    rho: np.ndarray
    mu: np.ndarray
    beta_eps: Optional[float] = None
    rho_eps: Optional[float] = None
    mu_eps: Optional[float] = None

    @property
    def has_origin_ball(self) -> bool:
        return self.beta_eps is not None


def _checked(value: float, label: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value < 0.0:
        raise InvalidOracleError(f"Oracle {label} returned {value}; bounds must be finite and non-negative")
    return value


def box_bounds(model: SystemModel, box: Box) -> Tuple[float, np.ndarray, np.ndarray]:
    """Call every oracle on one box and validate the results."""
    beta = _checked(model.beta_oracle(box), f"beta{box.flat()}")
    rho = np.array([_checked(model.rho_oracle(box, a), f"rho[{a}]{box.flat()}") for a in range(model.p)])
    mu = np.array([_checked(model.mu_oracle(box, k), f"mu[{k}]{box.flat()}") for k in range(model.m)])
    return beta, rho, mu


def bounds_for(model: SystemModel, tri: Triangulation, epsilon: Optional[float] = None,
               progress_bar: bool = False) -> BoundSet:
    """Per-simplex Hessian bounds from the oracles on each simplex's bounding box.

    With epsilon, the origin-ball bounds are taken on the box [-epsilon, epsilon]^n.
    """
    if tri.n != model.n:
        raise ModelError(f"{model.name} has n = {model.n} but the mesh has n = {tri.n}")
    count = tri.num_simplexes
    beta, rho, mu = np.zeros(count), np.zeros((count, model.p)), np.zeros((count, model.m))
    for sid in tqdm(range(count), desc="Bounding Hessians", unit="simplex", disable=not progress_bar):
        beta[sid], rho[sid], mu[sid] = box_bounds(model, tri.simplex_box(sid))

    if epsilon is None:
        return BoundSet(beta, rho, mu)
    ball_beta, ball_rho, ball_mu = box_bounds(model, Box.symmetric(epsilon, model.n))
    return BoundSet(beta, rho, mu, ball_beta,
                    float(ball_rho.max(initial=0.0)), float(ball_mu.max(initial=0.0)))


def central_jacobian(fn: VectorField, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of a vector function, shape (out, n)."""
    x = np.asarray(x, dtype=float)
    columns = []
    for k in range(x.size):
        shift = np.zeros_like(x)
        shift[k] = step
        columns.append((np.ravel(fn(x + shift)) - np.ravel(fn(x - shift))) / (2.0 * step))
    return np.column_stack(columns)


def central_hessian(fn: VectorField, x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Central-difference Hessians of every output component, shape (out, n, n)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    center = np.ravel(fn(x))
    hess = np.zeros((center.size, n, n))
    for q in range(n):
        for r in range(q, n):
            eq, er = np.zeros(n), np.zeros(n)
            eq[q], er[r] = step, step
            if q == r:
                value = (np.ravel(fn(x + eq)) - 2.0 * center + np.ravel(fn(x - eq))) / step ** 2
            else:
                value = (np.ravel(fn(x + eq + er)) - np.ravel(fn(x + eq - er))
                         - np.ravel(fn(x - eq + er)) + np.ravel(fn(x - eq - er))) / (4.0 * step ** 2)
            hess[:, q, r] = hess[:, r, q] = value
    return hess


def jacobian_mismatch(model: SystemModel, step: float = 1e-6) -> Dict[str, float]:
    """Relative error between supplied Jacobians at 0 and finite differences."""
    zero = np.zeros(model.n)

    def rel(supplied, numeric):
        return float(np.linalg.norm(supplied - numeric) / max(1.0, np.linalg.norm(numeric)))

    report = {
        'jac_f0': rel(model.jac_f0, central_jacobian(model.f, zero, step)),
        'jac_h0': rel(model.jac_h0, central_jacobian(model.h, zero, step)),
    }
    for k in range(model.m):
        numeric = central_jacobian(lambda x, k=k: model.g(x)[:, k], zero, step)
        report[f'jac_g0[{k}]'] = rel(model.jac_g0[k], numeric)
    return report


def oracle_excess(model: SystemModel, tri: Triangulation, num_points: int = 1000,
                  seed: int = 0, step: float = 1e-4) -> float:
    """Largest amount by which a sampled |second partial| exceeds its oracle value.

    Points are drawn uniformly in each simplex; a non-positive result means the
    oracles were not caught under-estimating.
    """
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for sid in range(tri.num_simplexes):
        coords = tri.simplex_coords(sid)
        beta, rho, mu = box_bounds(model, tri.simplex_box(sid))
        weights = rng.dirichlet(np.ones(tri.n + 1), size=num_points)
        for x in weights @ coords:
            worst = max(worst, np.abs(central_hessian(model.f, x, step)).max() - beta)
            h_hess = np.abs(central_hessian(model.h, x, step)).reshape(model.p, -1).max(axis=1)
            worst = max(worst, float(np.max(h_hess - rho)))
            g_hess = central_hessian(lambda z: model.g(z).T.ravel(), x, step)
            g_cols = np.abs(g_hess).reshape(model.m, -1).max(axis=1)
            worst = max(worst, float(np.max(g_cols - mu)))
    return float(worst)


def _zero_oracle(*_args) -> float:
    return 0.0


def pendulum(k_mode: str = 'constant_one') -> SystemModel:
    """Damped pendulum dx1 = x2, dx2 = -sin x1 - x2 + k(x) u with output y = x2.

    k_mode 'constant_one' puts k = 1 into B; 'x2_affine' uses g(x) = [0; x2] with B = 0.
    """
    if k_mode not in K_MODES:
        raise ModelError(f"Unknown pendulum k_mode: {k_mode}. Expected one of {K_MODES}")

    def eval_f(x):
        return np.array([x[1], -np.sin(x[0]) - x[1]])

    def eval_h(x):
        return np.array([x[1]])

    if k_mode == 'constant_one':
        B = np.array([[0.0], [1.0]])
        jac_g0 = (np.zeros((2, 2)),)

        def eval_g(_x):
            return np.zeros((2, 1))
    else:
        B = np.zeros((2, 1))
        jac_g0 = (np.array([[0.0, 0.0], [0.0, 1.0]]),)

        def eval_g(x):
            return np.array([[0.0], [x[1]]])

    return SystemModel(
        name=f"pendulum[{k_mode}]", n=2, m=1, p=1,
        eval_f=eval_f, B=B, eval_g=eval_g, eval_h=eval_h,
        jac_f0=np.array([[0.0, 1.0], [-1.0, -1.0]]),
        jac_h0=np.array([[0.0, 1.0]]),
        jac_g0=jac_g0,
        beta_oracle=lambda box: abs_sin_max(box.lo[0], box.hi[0]),
        rho_oracle=_zero_oracle,
        mu_oracle=_zero_oracle,
    )


def linear_test() -> SystemModel:
    """dx = -x + u, y = x; its L2-gain is exactly 1."""
    return SystemModel(
        name="linear_test", n=1, m=1, p=1,
        eval_f=lambda x: -np.asarray(x, dtype=float),
        B=np.array([[1.0]]),
        eval_g=lambda _x: np.zeros((1, 1)),
        eval_h=lambda x: np.asarray(x, dtype=float),
        jac_f0=np.array([[-1.0]]),
        jac_h0=np.array([[1.0]]),
        jac_g0=(np.zeros((1, 1)),),
        beta_oracle=_zero_oracle,
        rho_oracle=_zero_oracle,
        mu_oracle=_zero_oracle,
    )


BUILTIN_MODELS = {
    'pendulum': pendulum,
    'linear_test': linear_test,
}


def model_by_name(name: str, params: Optional[Dict] = None) -> SystemModel:
    """Instantiate a built-in model by name with keyword parameters."""
    if name not in BUILTIN_MODELS:
        raise ModelError(f"Unknown system: {name}. Available systems: {sorted(BUILTIN_MODELS)}")
    return BUILTIN_MODELS[name](**(params or {}))
