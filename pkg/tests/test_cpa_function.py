"""Tests for CPA interpolation and the hybrid storage function."""

import numpy as np
import pytest

from gaincert.errors import GainCertError
from gaincert.geometry.simplex_geometry import Box, build_annulus, build_kuhn_grid, refine
from gaincert.storage.cpa_function import (CpaFunction, HybridStorage, evaluate_hybrid,
                                           gradient_operator, storage_from_dict)

MESHES = {
    'kuhn_2d': lambda: build_kuhn_grid(Box.symmetric(1.0, 2), 4),
    'kuhn_3d': lambda: build_kuhn_grid(Box.from_flat([-1.0, 1.0, -0.5, 0.5, -2.0, 2.0]), 2),
    'annulus_2d': lambda: refine(build_annulus(Box.symmetric(0.8, 2), 8, 0.1)),
    'annulus_1d': lambda: build_annulus(Box.from_flat([-0.8, 0.8]), 16, 0.1),
}


def _interior_points(tri, rng, count):
    sids = rng.integers(0, tri.num_simplexes, size=count)
    weights = rng.dirichlet(np.ones(tri.n + 1), size=count)
    return sids, np.einsum('pj,pjk->pk', weights, tri.points[tri.cells[sids]])


@pytest.mark.parametrize("name", sorted(MESHES))
def test_interpolation_is_exact_at_vertices(name):
    tri = MESHES[name]()
    values = np.random.default_rng(0).uniform(0.0, 5.0, tri.num_vertices)
    cpa = CpaFunction(tri, values)
    for sid in range(0, tri.num_simplexes, 7):
        for vid in tri.cells[sid]:
            assert cpa.evaluate_affine(sid, tri.points[vid]) == pytest.approx(values[vid], abs=1e-12)
    for vid in range(0, tri.num_vertices, 5):
        assert cpa.evaluate(tri.points[vid]) == pytest.approx(values[vid], abs=1e-12)


@pytest.mark.parametrize("name", sorted(MESHES))
def test_affine_data_is_reproduced(name):
    """A globally affine function is its own CPA interpolant with one gradient everywhere."""
    tri = MESHES[name]()
    rng = np.random.default_rng(1)
    slope, offset = rng.normal(size=tri.n), 0.7
    cpa = CpaFunction(tri, tri.points @ slope + offset)

    assert np.allclose(cpa.gradients(), slope, atol=1e-10)
    _, points = _interior_points(tri, rng, 1000)
    assert np.allclose(cpa.evaluate_many(points), points @ slope + offset, atol=1e-10)


@pytest.mark.parametrize("name", sorted(MESHES))
def test_two_evaluation_paths_agree(name):
    """Barycentric interpolation and the per-simplex affine form give the same value."""
    tri = MESHES[name]()
    rng = np.random.default_rng(2)
    cpa = CpaFunction(tri, rng.uniform(-1.0, 1.0, tri.num_vertices))
    sids, points = _interior_points(tri, rng, 1000)
    by_bary = cpa.evaluate_many(points)
    by_affine = np.array([cpa.evaluate_affine(int(s), x) for s, x in zip(sids, points)])

    assert np.allclose(by_bary, by_affine, atol=1e-10)


def test_gradient_operator_matches_solve():
    tri = build_kuhn_grid(Box.symmetric(1.0, 2), 4)
    values = np.random.default_rng(4).normal(size=tri.num_vertices)
    cpa = CpaFunction(tri, values)
    for sid in range(tri.num_simplexes):
        op = gradient_operator(tri, sid)
        assert op.shape == (2, 3)
        assert op @ values[tri.cells[sid]] == pytest.approx(cpa.gradient(sid).grad, abs=1e-12)


def test_evaluate_many_outside_is_nan():
    tri = build_annulus(Box.symmetric(0.8, 2), 8, 0.1)
    cpa = CpaFunction(tri, np.ones(tri.num_vertices))
    out = cpa.evaluate_many(np.array([[0.0, 0.0], [0.5, 0.5], [2.0, 0.0]]))

    assert np.isnan(out[0]) and np.isnan(out[2])
    assert out[1] == pytest.approx(1.0)


def test_cpa_rejects_bad_values():
    tri = build_kuhn_grid(Box.symmetric(1.0, 1), 4)
    with pytest.raises(GainCertError):
        CpaFunction(tri, np.zeros(3))
    with pytest.raises(GainCertError):
        CpaFunction(tri, [0.0, 1.0, np.nan, 0.0, 0.0])
    with pytest.raises(GainCertError):
        CpaFunction.from_dict(tri, {'values': {str(v): 0.0 for v in range(1, 6)}})


def test_hybrid_storage_branches():
    """x^T P x on the closed ball, CPA outside it."""
    tri = build_annulus(Box.symmetric(0.8, 2), 8, 0.1)
    cpa = CpaFunction(tri, np.full(tri.num_vertices, 3.0))
    storage = HybridStorage(np.array([[2.0, 0.5], [0.5, 1.0]]), 0.1, cpa)

    x = np.array([0.05, -0.02])
    assert storage.evaluate(x) == pytest.approx(x @ storage.P @ x)
    assert evaluate_hybrid(storage, np.array([0.1, 0.0])) == pytest.approx(0.02)
    assert storage.evaluate(np.array([0.4, 0.4])) == pytest.approx(3.0)


def test_hybrid_storage_validation():
    tri = build_annulus(Box.symmetric(0.8, 2), 8, 0.1)
    cpa = CpaFunction(tri, np.zeros(tri.num_vertices))
    with pytest.raises(GainCertError):
        HybridStorage(np.array([[1.0, 0.2], [0.0, 1.0]]), 0.1, cpa)
    with pytest.raises(GainCertError):
        HybridStorage(np.eye(3), 0.1, cpa)
    with pytest.raises(GainCertError):
        HybridStorage(np.array([[1.0, 2.0], [2.0, 1.0]]), 0.1, cpa)
    with pytest.raises(GainCertError):
        HybridStorage(np.zeros((2, 2)), 0.1, cpa)


def test_storage_documents():
    tri = build_annulus(Box.symmetric(0.8, 2), 8, 0.1)
    values = np.random.default_rng(5).uniform(size=tri.num_vertices)
    storage = HybridStorage(np.eye(2), 0.1, CpaFunction(tri, values))
    restored = storage_from_dict(tri, storage.to_dict(), epsilon=0.1)
    indefinite = dict(storage.to_dict(), P=[1.0, 0.0, 0.0, -0.5])

    assert isinstance(restored, HybridStorage)
    assert np.array_equal(restored.cpa.values, values)
    with pytest.raises(GainCertError):
        storage_from_dict(tri, indefinite, epsilon=0.1)
    assert np.array_equal(restored.P, np.eye(2))
    assert isinstance(storage_from_dict(tri, CpaFunction(tri, values).to_dict()), CpaFunction)
    with pytest.raises(GainCertError):
        storage_from_dict(tri, storage.to_dict(), epsilon=0.2)
