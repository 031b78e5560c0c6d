"""End-to-end gain analyses on the linear test system and the pendulum examples."""

import math
import os
import tempfile

import numpy as np
import pytest

from gaincert.analysis.certificate_check import (check_hji_samples, empirical_gain_lower_bound,
                                                 empirical_sandwich, random_band_limited_inputs)
from gaincert.analysis.gain_analysis import (SWEEP_HEADER, GainCertificate, GainOptions, SweepRow,
                                             analyze, bound_gain_cpa, bound_gain_hybrid, build_mesh,
                                             default_epsilon, is_non_increasing, refinement_sweep,
                                             sweep_to_csv)
from gaincert.errors import ConfigError, ModeMismatchError, PreconditionError
from gaincert.geometry.simplex_geometry import Box, build_annulus, build_kuhn_grid, refine
from gaincert.model.system_model import linear_test, pendulum
from gaincert.sdp.bridge import CvxpyAdapter, ReferenceAdapter, SolverAdapter, SolverResult
from gaincert.storage.cpa_function import HybridStorage
from gaincert.utils import load_csv_file

LINEAR_BOX = Box.from_flat([-0.8, 0.8])
PENDULUM_BOX = Box.symmetric(0.8, 2)
PRIOR_BOUND = 3.85


@pytest.fixture(scope="module")
def linear_certificate():
    tri = build_annulus(LINEAR_BOX, 64, 0.1)
    return bound_gain_hybrid(linear_test(), tri, 0.1)


def test_linear_hybrid_bound_brackets_true_gain(linear_certificate):
    """dx = -x + u, y = x has L2-gain 1."""
    cert = linear_certificate

    assert cert.status == 'optimal'
    assert cert.certified
    assert isinstance(cert.storage, HybridStorage)
    assert 1.0 <= cert.gamma_star <= 1.3
    assert cert.alpha_star == pytest.approx(cert.gamma_star ** 2)


def test_linear_certificate_is_sound(linear_certificate):
    cert = linear_certificate
    report = check_hji_samples(linear_test(), cert.storage, cert.gamma_star, LINEAR_BOX, num_samples=10_000)
    inputs = random_band_limited_inputs(20, 0.05, seed=0)
    results = empirical_gain_lower_bound(linear_test(), inputs, horizon=20.0, dt=0.01, region=LINEAR_BOX)

    assert report.max_violation <= 1e-6
    assert empirical_sandwich(results, cert.gamma_star).passed


def test_certificate_document(linear_certificate):
    cert = linear_certificate
    doc = cert.to_dict()
    restored = GainCertificate.from_dict(doc)

    assert 'seconds' not in doc['solver_stats']
    assert 'seconds' in cert.to_dict(report_timings=True)['solver_stats']
    assert doc['mesh_stats']['num_simplexes'] == cert.tri.num_simplexes
    assert restored.gamma_star == cert.gamma_star
    assert restored.storage.epsilon == 0.1
    assert (restored.storage.cpa.values == cert.storage.cpa.values).all()
    assert restored.to_dict() == doc


def test_uncertified_document_round_trip():
    tri = build_annulus(LINEAR_BOX, 8, 0.1)
    cert = GainCertificate('infeasible', 'hybrid', 'linear_test', math.inf, math.inf, None, tri, 0.1)
    doc = cert.to_dict()

    assert doc['gamma_star'] == 'inf' and doc['storage'] is None
    assert not GainCertificate.from_dict(doc).certified


def test_mode_preconditions():
    with pytest.raises(ModeMismatchError):
        bound_gain_cpa(linear_test(), build_kuhn_grid(LINEAR_BOX, 8))
    with pytest.raises(PreconditionError):
        bound_gain_cpa(pendulum('x2_affine'), build_annulus(PENDULUM_BOX, 8, 0.1))
    with pytest.raises(PreconditionError):
        bound_gain_hybrid(linear_test(), build_annulus(LINEAR_BOX, 8, 0.1), 0.05)
    with pytest.raises(ConfigError):
        build_mesh(LINEAR_BOX, 'quadratic', 8)
    with pytest.raises(ConfigError):
        refinement_sweep(linear_test(), LINEAR_BOX, 0, 'hybrid', 0.1)


def test_default_epsilon():
    assert default_epsilon(PENDULUM_BOX) == pytest.approx(0.08)
    assert default_epsilon(Box.from_flat([-0.5, 1.0])) == pytest.approx(0.05)


def test_linear_sweep_does_not_increase():
    rows = refinement_sweep(linear_test(), LINEAR_BOX, 2, 'hybrid', 0.1, divisions=32)

    assert [row.num_simplexes for row in rows][1] == 2 * rows[0].num_simplexes
    assert all(math.isfinite(row.gamma_star) for row in rows)
    assert is_non_increasing(rows)


def test_sweep_csv_leaves_timings_out():
    rows = [SweepRow(100, 1.25, 3.5), SweepRow(400, math.inf, 7.0)]
    with tempfile.TemporaryDirectory() as tmpdir:
        path = os.path.join(tmpdir, "sweep.csv")
        sweep_to_csv(rows, path)
        plain = load_csv_file(path)
        with open(path, 'r', encoding='utf-8') as file:
            header = file.readline().strip()
        sweep_to_csv(rows, path, report_timings=True)
        timed = load_csv_file(path)

    assert header == ','.join(SWEEP_HEADER)
    assert plain == [{'num_simplexes': '100', 'gamma_star': '1.25', 'solve_seconds': ''},
                     {'num_simplexes': '400', 'gamma_star': 'inf', 'solve_seconds': ''}]
    assert timed[0]['solve_seconds'] == '3.500'
    assert not is_non_increasing(rows)


def _sweep_certificates(model, mode, levels, **mesh_options):
    """Certificates of the level-0 mesh and its successive refinements."""
    epsilon = mesh_options.get('epsilon')
    tri = build_mesh(PENDULUM_BOX, mode, **mesh_options)
    certs = []
    for level in range(levels):
        if level:
            tri = refine(tri)
        certs.append(analyze(model, tri, mode, epsilon, GainOptions(threads=4, r_u=0.05)))
    return certs


def _assert_pendulum_certificate_is_sound(model, cert):
    report = check_hji_samples(model, cert.storage, cert.gamma_star, PENDULUM_BOX, num_samples=10_000)
    inputs = random_band_limited_inputs(100, 0.05, m=1, seed=0)
    results = empirical_gain_lower_bound(model, inputs, horizon=20.0, dt=0.01, region=PENDULUM_BOX)

    assert report.max_violation <= 1e-6
    assert empirical_sandwich(results, cert.gamma_star).passed


@pytest.fixture(scope="module")
def control_affine_certificates():
    return _sweep_certificates(pendulum('x2_affine'), 'cpa', 3, divisions=16, boundary_segments=32,
                               fan_radius=0.05)


@pytest.fixture(scope="module")
def constant_input_certificates():
    return _sweep_certificates(pendulum('constant_one'), 'hybrid', 3, divisions=16, epsilon=0.1,
                               boundary_segments=32)


@pytest.mark.slow
def test_pendulum_control_affine_sweep(control_affine_certificates):
    """CPA storage for k(x) = x2 reaches gamma* <= 1 once the mesh has thousands of simplexes."""
    certs = control_affine_certificates
    rows = [SweepRow(c.tri.num_simplexes, c.gamma_star, 0.0) for c in certs]

    assert [row.num_simplexes for row in rows] == [576, 2304, 9216]
    assert all(c.certified for c in certs)
    assert rows[0].gamma_star <= 1.35
    assert all(row.gamma_star <= 1.0 for row in rows if row.num_simplexes >= 4000)
    assert all(row.gamma_star < PRIOR_BOUND for row in rows)
    assert is_non_increasing(rows)
    _assert_pendulum_certificate_is_sound(pendulum('x2_affine'), certs[-1])


@pytest.mark.slow
def test_pendulum_constant_input_sweep(constant_input_certificates):
    """Hybrid storage for k = 1: feasible at every level, never below the linearized gain of 1."""
    certs = constant_input_certificates

    assert [c.tri.num_simplexes for c in certs] == [528, 2112, 8448]
    assert all(c.certified for c in certs)
    assert all(c.gamma_star < PRIOR_BOUND for c in certs)
    assert 1.0 - 1e-6 <= certs[-1].gamma_star <= 3.2
    _assert_pendulum_certificate_is_sound(pendulum('constant_one'), certs[-1])


class ZeroSolution(SolverAdapter):
    """Adapter that claims the all-zero point is optimal."""

    name = 'zero'

    def solve(self, program, tol, max_iters):
        return SolverResult('optimal', values=np.zeros(program.num_vars), objective=0.0)


def test_solution_failing_recheck_gives_no_certificate():
    opts = GainOptions(adapter=ZeroSolution())
    cert = bound_gain_hybrid(linear_test(), build_annulus(LINEAR_BOX, 8, 0.1), 0.1, opts)

    assert cert.status == 'optimal'
    assert not cert.certified
    assert cert.storage is None
    assert math.isinf(cert.gamma_star)
    assert cert.solver_stats['recheck']['passed'] is False
    assert cert.to_dict()['storage'] is None


def test_cpa_meshes_in_the_plane_have_an_origin_fan():
    tri = build_mesh(PENDULUM_BOX, 'cpa', 16, boundary_segments=32, fan_radius=0.05)

    assert tri.stats()['num_origin_simplexes'] == 32
    assert build_mesh(Box.symmetric(0.8, 3), 'cpa', 2).stats()['num_origin_simplexes'] == 16


def test_rotating_system_is_certified_on_the_fan_mesh():
    """The pendulum linearization rotates about the origin; the fan keeps the program feasible."""
    tri = build_mesh(PENDULUM_BOX, 'cpa', 16, boundary_segments=32, fan_radius=0.05)
    cert = bound_gain_cpa(pendulum('x2_affine'), tri, GainOptions(threads=4))

    assert cert.certified
    assert cert.gamma_star <= 1.35


def test_solver_names_select_adapters():
    assert isinstance(GainOptions(solver='reference').make_adapter(), ReferenceAdapter)
    assert isinstance(GainOptions(solver='SCS').make_adapter(), CvxpyAdapter)
    with pytest.raises(ValueError):
        GainOptions(solver='MOSEK').make_adapter()
