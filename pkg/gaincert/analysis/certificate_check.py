"""Independent checks of gain certificates and of the error-bound machinery.

Nothing here is used to build a certificate: the sampled HJI check, the
brute-force oracles for the simplex and ball error bounds, and the simulation
sandwich only try to falsify one.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate
from tqdm import tqdm

from ..errors import ConfigError, InvalidBoundError, PreconditionError
from ..geometry.simplex_geometry import Box, shape_constant, shape_constant_origin
from ..lmi.assembly import error_bound_matrix
from ..model.system_model import SystemModel
from ..storage.cpa_function import CpaFunction, HybridStorage

BOUNDARY_TOL = 1e-9
SIGNAL_KINDS = ('zero', 'step', 'sine', 'band_limited')

ScalarFn = Callable[[np.ndarray], float]
VectorFn = Callable[[np.ndarray], np.ndarray]


@dataclass
class CheckReport:
    """
    Largest max-eigenvalue of the nominal HJI matrix over sampled states.

    Attributes:
        max_violation (float): Worst max-eigenvalue, -inf when nothing was sampled.
        num_samples (int): Samples evaluated.
        worst_point (Optional[List[float]]): Where the worst value occurred.
        passed (bool): max_violation <= tol.
        tol (float): Acceptance tolerance.
        skipped (int): Samples dropped near simplex boundaries or outside the mesh.
    """

    max_violation: float
    num_samples: int
    worst_point: Optional[List[float]]
    passed: bool
    tol: float
    skipped: int = 0

    def to_dict(self) -> Dict:
        return {
            'max_violation': self.max_violation if math.isfinite(self.max_violation) else '-inf',
            'num_samples': self.num_samples,
            'worst_point': self.worst_point,
            'passed': self.passed,
            'tol': self.tol,
            'skipped': self.skipped,
        }


def nominal_hji_matrix(model: SystemModel, x: np.ndarray, grad: np.ndarray, gamma: float) -> np.ndarray:
    """[[grad^T f, grad^T G, h^T], [G^T grad, -2 gamma^2 I, 0], [h, 0, -2 I]] with G = B + g(x)."""
    m, p = model.m, model.p
    G = model.input_matrix(x)
    h = model.h(x)
    out = np.zeros((1 + m + p, 1 + m + p))
    out[0, 0] = grad @ model.f(x)
    out[1:1 + m, 0] = out[0, 1:1 + m] = G.T @ grad
    out[1 + m:, 0] = out[0, 1 + m:] = h
    out[1:1 + m, 1:1 + m] = -2.0 * gamma ** 2 * np.eye(m)
    out[1 + m:, 1 + m:] = -2.0 * np.eye(p)
    return out


def check_hji_samples(model: SystemModel, storage: Union[CpaFunction, HybridStorage], gamma: float,
                      region: Optional[Box] = None, num_samples: int = 10_000, tol: float = 1e-6,
                      seed: int = 0, progress_bar: bool = False) -> CheckReport:
    """Sample the nominal HJI matrix with the storage gradient and gamma.

    In the closed epsilon-ball of a hybrid storage the gradient is 2 P x;
    elsewhere it is the constant gradient of the simplex holding the sample.
    """
    if num_samples <= 0:
        return CheckReport(-math.inf, 0, None, True, tol)
    hybrid = isinstance(storage, HybridStorage)
    cpa = storage.cpa if hybrid else storage
    region = region or cpa.tri.bounding_box
    points = region.sample(np.random.default_rng(seed), num_samples)

    in_ball = np.linalg.norm(points, axis=1) <= storage.epsilon if hybrid else np.zeros(num_samples, bool)
    ids, lambdas = cpa.tri.locate_many(points)
    worst, worst_point, evaluated, skipped = -math.inf, None, 0, 0
    for k in tqdm(range(num_samples), desc="Sampling HJI", unit="sample", disable=not progress_bar):
        x = points[k]
        if in_ball[k]:
            grad = 2.0 * storage.P @ x
        elif ids[k] < 0 or lambdas[k].min() < BOUNDARY_TOL:
            skipped += 1
            continue
        else:
            grad = cpa.gradient(int(ids[k])).grad
        value = float(np.linalg.eigvalsh(nominal_hji_matrix(model, x, grad, gamma))[-1])
        evaluated += 1
        if value > worst:
            worst, worst_point = value, x.tolist()
    return CheckReport(worst, evaluated, worst_point, worst <= tol, tol, skipped)


def _lmi_matrix(phi_value: float, zeta_value: np.ndarray) -> np.ndarray:
    m = zeta_value.size
    out = np.zeros((1 + m, 1 + m))
    out[0, 0] = phi_value
    out[1:, 0] = out[0, 1:] = zeta_value
    out[1:, 1:] = -np.eye(m)
    return out


def _error_matrices(beta: float, mus: Sequence[float], consts: np.ndarray) -> List[np.ndarray]:
    out = []
    for c_j in consts:
        scalar, m = error_bound_matrix(beta, mus, float(c_j))
        out.append(np.diag([scalar] + [0.5] * m))
    return out


def _shape_constants(coords: np.ndarray, origin_rule: bool) -> np.ndarray:
    const = shape_constant_origin if origin_rule else shape_constant
    return np.array([const(coords, j) for j in range(coords.shape[0])])


def oracle_simplex_bound(phi: ScalarFn, zeta: VectorFn, hessian_bounds: Tuple[float, Sequence[float]],
                         coords: np.ndarray, num_draws: int = 1000, seed: int = 0,
                         origin_rule: bool = False) -> float:
    """Smallest eigenvalue of E(x) - (M(x) - sum_j lambda_j M(x_j)) over random points of a simplex.

    M(x) = [[phi, zeta^T], [zeta, -I]] and E is the vertex error matrix. The
    error bound holds on the draws when the result is >= -1e-9.
    """
    beta, mus = hessian_bounds
    coords = np.asarray(coords, dtype=float)
    if beta < 0.0 or any(mu < 0.0 for mu in mus):
        raise InvalidBoundError(f"Hessian bounds must be non-negative: {beta}, {list(mus)}")
    vertex_m = [_lmi_matrix(phi(x), np.atleast_1d(zeta(x))) for x in coords]
    vertex_e = _error_matrices(beta, mus, _shape_constants(coords, origin_rule))
    rng = np.random.default_rng(seed)
    worst = math.inf
    for lam in rng.dirichlet(np.ones(coords.shape[0]), size=num_draws):
        x = lam @ coords
        interp = sum(l * mat for l, mat in zip(lam, vertex_m))
        err = sum(l * mat for l, mat in zip(lam, vertex_e))
        slack = err - (_lmi_matrix(phi(x), np.atleast_1d(zeta(x))) - interp)
        worst = min(worst, float(np.linalg.eigvalsh(slack)[0]))
    return worst


def oracle_vertex_implication(phi: ScalarFn, zeta: VectorFn, hessian_bounds: Tuple[float, Sequence[float]],
                              coords: np.ndarray, num_draws: int = 1000, seed: int = 0,
                              origin_rule: bool = False) -> float:
    """Shift phi so M(x_j) + E(x_j) <= 0 at every vertex, then return max eigenvalue of M(x) over draws.

    The vertex conditions imply M(x) <= 0 on the whole simplex, so the result
    should be <= 1e-9.
    """
    beta, mus = hessian_bounds
    coords = np.asarray(coords, dtype=float)
    vertex_e = _error_matrices(beta, mus, _shape_constants(coords, origin_rule))
    # [[a, z^T], [z, -I/2]] <= 0 iff a + 2 |z|^2 <= 0
    shift = max(phi(x) + e[0, 0] + 2.0 * float(np.sum(np.atleast_1d(zeta(x)) ** 2))
                for x, e in zip(coords, vertex_e))

    def shifted(x):
        return phi(x) - shift

    rng = np.random.default_rng(seed)
    worst = -math.inf
    for lam in rng.dirichlet(np.ones(coords.shape[0]), size=num_draws):
        x = lam @ coords
        value = float(np.linalg.eigvalsh(_lmi_matrix(shifted(x), np.atleast_1d(zeta(x))))[-1])
        worst = max(worst, value)
    return worst


def origin_bound_matrix(jac_theta: np.ndarray, jac_zeta: np.ndarray, beta: float, mu: float,
                        epsilon: float) -> np.ndarray:
    """[[1/2 (J_theta^T + J_theta + (eps n^1.5 beta + eps^2 n^2 m mu^2) I), J_zeta^T], [J_zeta, -I/2]]."""
    jac_theta = np.atleast_2d(np.asarray(jac_theta, dtype=float))
    jac_zeta = np.atleast_2d(np.asarray(jac_zeta, dtype=float))
    n, m = jac_theta.shape[0], jac_zeta.shape[0]
    spread = epsilon * n ** 1.5 * beta + epsilon ** 2 * n ** 2 * m * mu ** 2
    out = np.zeros((n + m, n + m))
    out[:n, :n] = 0.5 * (jac_theta.T + jac_theta + spread * np.eye(n))
    out[n:, :n] = jac_zeta
    out[:n, n:] = jac_zeta.T
    out[n:, n:] = -0.5 * np.eye(m)
    return out


def sample_ball(rng: np.random.Generator, n: int, radius: float, count: int) -> np.ndarray:
    """Uniform samples from the closed n-ball."""
    directions = rng.normal(size=(count, n))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = radius * rng.uniform(size=count) ** (1.0 / n)
    return directions * radii[:, None]


def oracle_origin_bound(theta: VectorFn, zeta: VectorFn, jacobians: Tuple[np.ndarray, np.ndarray],
                        hessian_bounds: Tuple[float, float], epsilon: float, num_draws: int = 1000,
                        seed: int = 0) -> float:
    """Largest zeta^T zeta + x^T theta(x) over random points of the epsilon-ball.

    Raises PreconditionError unless the ball LMI built from the Jacobians and
    Hessian bounds is negative semidefinite; when it is, the result should be <= 1e-9.
    """
    jac_theta, jac_zeta = jacobians
    beta, mu = hessian_bounds
    if beta < 0.0 or mu < 0.0:
        raise InvalidBoundError(f"Hessian bounds must be non-negative: {beta}, {mu}")
    lmi = origin_bound_matrix(jac_theta, jac_zeta, beta, mu, epsilon)
    top = float(np.linalg.eigvalsh(lmi)[-1])
    if top > 0.0:
        raise PreconditionError(f"Ball LMI is not negative semidefinite (max eigenvalue {top:.3g})")
    n = np.atleast_2d(jac_theta).shape[0]
    rng = np.random.default_rng(seed)
    worst = -math.inf
    for x in sample_ball(rng, n, epsilon, num_draws):
        th = np.atleast_1d(theta(x))
        ze = np.atleast_1d(zeta(x))
        worst = max(worst, float(ze @ ze + x @ th))
    return worst


@dataclass(frozen=True)
class InputSignal:
    """
    Scalar-per-channel input u(t) with |u_k(t)| <= amplitude.

    Attributes:
        kind (str): zero, step, sine or band_limited.
        amplitude (float): Peak magnitude per channel.
        m (int): Number of input channels.
        frequencies (Tuple[float, ...]): Tone frequencies in rad/s (sine, band_limited).
        weights (Tuple[Tuple[float, ...], ...]): Per-channel tone weights, l1-normalised.
        phases (Tuple[Tuple[float, ...], ...]): Per-channel tone phases.
    """

    kind: str
    amplitude: float = 0.0
    m: int = 1
    frequencies: Tuple[float, ...] = ()
    weights: Tuple[Tuple[float, ...], ...] = ()
    phases: Tuple[Tuple[float, ...], ...] = ()

    def __post_init__(self):
        if self.kind not in SIGNAL_KINDS:
            raise ConfigError(f"Unknown input kind: {self.kind}. Expected one of {SIGNAL_KINDS}")

    @classmethod
    def sine(cls, amplitude: float, frequency: float, m: int = 1) -> 'InputSignal':
        return cls('sine', amplitude, m, (frequency,), ((1.0,),) * m, ((0.0,),) * m)

    def __call__(self, t: float) -> np.ndarray:
        if self.kind == 'zero':
            return np.zeros(self.m)
        if self.kind == 'step':
            return np.full(self.m, self.amplitude)
        freqs = np.asarray(self.frequencies)
        return np.array([self.amplitude * np.dot(w, np.sin(freqs * t + ph))
                         for w, ph in zip(self.weights, self.phases)])

    def describe(self) -> Dict:
        return {
            'kind': self.kind, 'amplitude': self.amplitude, 'm': self.m,
            'frequencies': list(self.frequencies),
            'weights': [list(w) for w in self.weights],
            'phases': [list(p) for p in self.phases],
        }


def random_band_limited_inputs(count: int, r_u: float, m: int = 1, seed: int = 0, num_tones: int = 5,
                               max_frequency: float = 2.0) -> List[InputSignal]:
    """Seeded sums of sinusoids below max_frequency with peak magnitude at most r_u."""
    rng = np.random.default_rng(seed)
    signals = []
    for _ in range(count):
        freqs = tuple(float(f) for f in rng.uniform(0.0, max_frequency, size=num_tones))
        weights, phases = [], []
        for _ in range(m):
            raw = rng.uniform(0.0, 1.0, size=num_tones)
            weights.append(tuple(float(w) for w in raw / raw.sum()))
            phases.append(tuple(float(p) for p in rng.uniform(0.0, 2.0 * math.pi, size=num_tones)))
        signals.append(InputSignal('band_limited', r_u, m, freqs, tuple(weights), tuple(phases)))
    return signals


@dataclass
class SimulationResult:
    """
    One zero-initial-state simulation.

    Attributes:
        input (Dict): Description of the input signal.
        horizon (float): Simulated time.
        dt (float): RK4 step.
        l2_ratio (float): |y|_2 / |u|_2, 0 when both vanish.
        state_stayed_in_region (bool): Whether every RK4 state stayed in the region.
        u_norm, y_norm (float): Trapezoid-rule L2 norms.
    """

    input: Dict
    horizon: float
    dt: float
    l2_ratio: float
    state_stayed_in_region: bool
    u_norm: float = 0.0
    y_norm: float = 0.0

    def to_dict(self) -> Dict:
        return {
            'input': self.input, 'horizon': self.horizon, 'dt': self.dt,
            'l2_ratio': self.l2_ratio, 'state_stayed_in_region': self.state_stayed_in_region,
            'u_norm': self.u_norm, 'y_norm': self.y_norm,
        }


def simulate(model: SystemModel, signal: InputSignal, horizon: float, dt: float,
             region: Optional[Box] = None) -> SimulationResult:
    """Classical fixed-step RK4 from x(0) = 0."""
    if not dt > 0.0:
        raise ConfigError(f"Time step must be positive, got {dt}")
    if not horizon > 0.0:
        raise ConfigError(f"Horizon must be positive, got {horizon}")
    steps = int(round(horizon / dt))
    times = dt * np.arange(steps + 1)
    x = np.zeros(model.n)
    us = np.zeros((steps + 1, model.m))
    ys = np.zeros((steps + 1, model.p))
    inside = True
    for k in range(steps + 1):
        t = times[k]
        us[k] = signal(t)
        ys[k] = model.h(x)
        if region is not None and not region.contains(x):
            inside = False
        if k == steps:
            break
        k1 = model.rhs(x, us[k])
        u_mid = signal(t + 0.5 * dt)
        k2 = model.rhs(x + 0.5 * dt * k1, u_mid)
        k3 = model.rhs(x + 0.5 * dt * k2, u_mid)
        k4 = model.rhs(x + dt * k3, signal(t + dt))
        x = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            inside = False
            break

    u_norm = math.sqrt(float(integrate.trapezoid(np.sum(us ** 2, axis=1), times)))
    y_norm = math.sqrt(float(integrate.trapezoid(np.sum(ys ** 2, axis=1), times)))
    if u_norm == 0.0:
        ratio = 0.0 if y_norm == 0.0 else math.inf
    else:
        ratio = y_norm / u_norm
    return SimulationResult(signal.describe(), horizon, dt, ratio, inside, u_norm, y_norm)


def empirical_gain_lower_bound(model: SystemModel, inputs: Sequence[InputSignal], horizon: float, dt: float,
                               region: Optional[Box] = None, progress_bar: bool = False) -> List[SimulationResult]:
    """Simulate every input from rest and record the output-to-input L2 ratio."""
    if not dt > 0.0:
        raise ConfigError(f"Time step must be positive, got {dt}")
    return [simulate(model, signal, horizon, dt, region)
            for signal in tqdm(inputs, desc="Simulating inputs", unit="input", disable=not progress_bar)]


@dataclass
class SandwichReport:
    """In-region simulation ratios against a certified gamma."""

    gamma_star: float
    max_in_region_ratio: float
    num_in_region: int
    num_excluded: int
    passed: bool
    results: List[SimulationResult] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            'gamma_star': self.gamma_star,
            'max_in_region_ratio': self.max_in_region_ratio,
            'num_in_region': self.num_in_region,
            'num_excluded': self.num_excluded,
            'passed': self.passed,
        }


def empirical_sandwich(results: Sequence[SimulationResult], gamma_star: float, tol: float = 1e-9) -> SandwichReport:
    """Every in-region ratio must stay below gamma_star."""
    kept = [r.l2_ratio for r in results if r.state_stayed_in_region]
    excluded = len(results) - len(kept)
    if excluded:
        print(f"Warning: {excluded} simulated trajectories left the region and were excluded")
    worst = max(kept, default=0.0)
    return SandwichReport(gamma_star, worst, len(kept), excluded, worst <= gamma_star + tol, list(results))
