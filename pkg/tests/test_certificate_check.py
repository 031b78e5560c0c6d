"""Tests for the error-bound oracles, the sampled HJI check and the simulation harness."""

import math

import numpy as np
import pytest

from gaincert.errors import ConfigError, InvalidBoundError, PreconditionError
from gaincert.analysis.certificate_check import (InputSignal, SimulationResult, check_hji_samples,
                                                 empirical_gain_lower_bound, empirical_sandwich,
                                                 nominal_hji_matrix, oracle_origin_bound,
                                                 oracle_simplex_bound, oracle_vertex_implication,
                                                 origin_bound_matrix, random_band_limited_inputs,
                                                 simulate)
from gaincert.geometry.simplex_geometry import Box, build_kuhn_grid
from gaincert.model.intervals import abs_cos_max, abs_monomial_max, abs_sin_max
from gaincert.model.system_model import linear_test, pendulum
from gaincert.storage.cpa_function import CpaFunction

FAMILY_SEEDS = range(24)


def _random_simplex(rng, n):
    while True:
        coords = rng.uniform(-1.0, 1.0, size=(n + 1, n))
        if abs(np.linalg.det(coords[1:] - coords[0])) > 0.05:
            return coords


def _scalar_family(rng, coords, kind):
    """A C2 function with a bound on its second partials over the simplex."""
    n = coords.shape[1]
    w = rng.normal(size=n)
    a = rng.uniform(0.5, 2.0)
    lo, hi = float(np.min(coords @ w)), float(np.max(coords @ w))
    if kind == 'sin':
        return (lambda x: a * math.sin(w @ x)), a * np.max(np.abs(w)) ** 2 * abs_sin_max(lo, hi)
    if kind == 'cos':
        return (lambda x: a * math.cos(w @ x)), a * np.max(np.abs(w)) ** 2 * abs_cos_max(lo, hi)
    if kind == 'cubic':
        bound = 6.0 * a * np.max(np.abs(w)) ** 2 * abs_monomial_max(lo, hi, 1)
        return (lambda x: a * (w @ x) ** 3), bound
    q = rng.normal(size=(n, n))
    q = q + q.T
    return (lambda x: x @ q @ x + a * (w @ x)), 2.0 * np.max(np.abs(q))


KINDS = ('sin', 'cos', 'cubic', 'quadratic')


def _family(seed):
    rng = np.random.default_rng(seed)
    n = 1 + seed % 3
    m = 1 + seed % 2
    coords = _random_simplex(rng, n)
    phi, beta = _scalar_family(rng, coords, KINDS[seed % 4])
    parts = [_scalar_family(rng, coords, KINDS[(seed + 1 + k) % 4]) for k in range(m)]

    def zeta(x):
        return np.array([fn(x) for fn, _ in parts])

    return phi, zeta, (beta, [mu for _, mu in parts]), coords


@pytest.mark.parametrize("seed", FAMILY_SEEDS)
@pytest.mark.parametrize("origin_rule", [False, True])
def test_simplex_error_bound_holds(seed, origin_rule):
    phi, zeta, bounds, coords = _family(seed)

    assert oracle_simplex_bound(phi, zeta, bounds, coords, num_draws=1000, seed=seed,
                                origin_rule=origin_rule) >= -1e-9


@pytest.mark.parametrize("seed", FAMILY_SEEDS)
def test_vertex_conditions_imply_simplex_condition(seed):
    phi, zeta, bounds, coords = _family(seed)

    assert oracle_vertex_implication(phi, zeta, bounds, coords, num_draws=1000, seed=seed) <= 1e-9


def test_simplex_oracle_rejects_negative_bounds():
    phi, zeta, _, coords = _family(0)
    with pytest.raises(InvalidBoundError):
        oracle_simplex_bound(phi, zeta, (-1.0, [0.0]), coords)


def _origin_family(seed):
    """theta = -a x + s u sin(w . x) and zeta = C x + t v (1 - cos(r . x)), scaled until the ball LMI holds."""
    rng = np.random.default_rng(100 + seed)
    n = 1 + seed % 3
    m = 1 + seed % 2
    epsilon = rng.uniform(0.05, 0.5)
    u, w, s = rng.normal(size=n), rng.normal(size=n), rng.uniform(0.1, 1.0)
    C, v, r, t = rng.normal(size=(m, n)), rng.normal(size=m), rng.normal(size=n), rng.uniform(0.1, 1.0)
    beta = s * np.max(np.abs(u)) * np.max(np.abs(w)) ** 2
    mu = t * np.max(np.abs(v)) * np.max(np.abs(r)) ** 2
    jac_zeta = C
    a = 1.0
    while np.linalg.eigvalsh(origin_bound_matrix(-a * np.eye(n) + s * np.outer(u, w), jac_zeta,
                                                 beta, mu, epsilon))[-1] > 0.0:
        a *= 2.0

    def theta(x):
        return -a * x + s * u * math.sin(w @ x)

    def zeta(x):
        return C @ x + t * v * (1.0 - math.cos(r @ x))

    jac_theta = -a * np.eye(n) + s * np.outer(u, w)
    return theta, zeta, (jac_theta, jac_zeta), (beta, mu), epsilon


@pytest.mark.parametrize("seed", FAMILY_SEEDS)
def test_origin_ball_bound_holds(seed):
    theta, zeta, jacobians, bounds, epsilon = _origin_family(seed)

    assert oracle_origin_bound(theta, zeta, jacobians, bounds, epsilon, num_draws=1000, seed=seed) <= 1e-9


def test_origin_oracle_requires_feasible_lmi():
    with pytest.raises(PreconditionError):
        oracle_origin_bound(lambda x: x, lambda x: 0.0 * x, (np.eye(1), np.zeros((1, 1))), (0.0, 0.0), 0.1)
    with pytest.raises(InvalidBoundError):
        oracle_origin_bound(lambda x: -x, lambda x: 0.0 * x, (-np.eye(1), np.zeros((1, 1))), (-1.0, 0.0), 0.1)


def test_nominal_hji_matrix_layout():
    model = pendulum('constant_one')
    x, grad = np.array([0.2, -0.1]), np.array([1.0, 2.0])
    mat = nominal_hji_matrix(model, x, grad, gamma=1.5)

    assert mat.shape == (3, 3)
    assert mat[0, 0] == pytest.approx(grad @ model.f(x))
    assert mat[1, 0] == pytest.approx(2.0)
    assert mat[2, 0] == pytest.approx(-0.1)
    assert mat[1, 1] == pytest.approx(-2.0 * 1.5 ** 2)
    assert mat[2, 2] == -2.0
    assert np.array_equal(mat, mat.T)


def test_hji_check_flags_flat_storage():
    """With grad V = 0 the output row alone makes the HJI matrix indefinite."""
    tri = build_kuhn_grid(Box.from_flat([-1.0, 1.0]), 8)
    report = check_hji_samples(linear_test(), CpaFunction(tri, np.zeros(tri.num_vertices)), 1.0,
                               num_samples=500, seed=0)

    assert not report.passed
    assert report.max_violation > 0.1
    assert report.num_samples + report.skipped == 500


def test_hji_check_accepts_exact_storage():
    """The interpolant of x^2 certifies gamma = 2 for dx = -x + u, y = x on [0.5, 1]."""
    tri = build_kuhn_grid(Box.from_flat([-1.0, 1.0]), 8)
    cpa = CpaFunction(tri, tri.points[:, 0] ** 2)
    report = check_hji_samples(linear_test(), cpa, 2.0, region=Box.from_flat([0.5, 1.0]),
                               num_samples=500, seed=1)

    assert report.passed
    assert check_hji_samples(linear_test(), cpa, 2.0, num_samples=0).to_dict()['max_violation'] == '-inf'


def test_zero_input_gives_zero_ratio():
    result = simulate(linear_test(), InputSignal('zero'), horizon=5.0, dt=0.01, region=Box.symmetric(0.8, 1))

    assert result.l2_ratio == 0.0
    assert result.state_stayed_in_region


def test_linear_sine_response_matches_frequency_response():
    """The ratio approaches |1 / (1 + i w)| = 1/sqrt(2) at w = 1."""
    signal = InputSignal.sine(0.05, 1.0)
    result = simulate(linear_test(), signal, horizon=60.0, dt=0.01, region=Box.symmetric(0.8, 1))

    assert result.state_stayed_in_region
    assert result.l2_ratio == pytest.approx(1.0 / math.sqrt(2.0), abs=0.01)


def test_trajectory_leaving_region_is_flagged():
    result = simulate(pendulum('constant_one'), InputSignal('step', 2.0), horizon=10.0, dt=0.01,
                      region=Box.symmetric(0.8, 2))

    assert not result.state_stayed_in_region


def test_simulation_rejects_bad_steps():
    with pytest.raises(ConfigError):
        simulate(linear_test(), InputSignal('zero'), horizon=1.0, dt=0.0)
    with pytest.raises(ConfigError):
        simulate(linear_test(), InputSignal('zero'), horizon=0.0, dt=0.01)
    with pytest.raises(ConfigError):
        InputSignal('chirp')


def test_random_inputs_are_seeded_and_bounded():
    first = random_band_limited_inputs(5, 0.05, m=2, seed=7)
    second = random_band_limited_inputs(5, 0.05, m=2, seed=7)
    times = np.linspace(0.0, 30.0, 301)

    assert [s.describe() for s in first] == [s.describe() for s in second]
    for signal in first:
        assert max(np.abs(signal(t)).max() for t in times) <= 0.05 + 1e-15


def test_empirical_sandwich():
    inputs = random_band_limited_inputs(4, 0.05, seed=3)
    results = empirical_gain_lower_bound(linear_test(), inputs, horizon=10.0, dt=0.02,
                                         region=Box.symmetric(0.8, 1))
    outside = SimulationResult({'kind': 'step'}, 10.0, 0.02, 5.0, False)

    report = empirical_sandwich(results + [outside], gamma_star=1.0)
    assert report.passed
    assert report.num_in_region == 4 and report.num_excluded == 1
    assert report.max_in_region_ratio <= 1.0
    assert not empirical_sandwich(results, gamma_star=0.01).passed
