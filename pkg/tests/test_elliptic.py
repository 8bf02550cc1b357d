import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emdenlab.elliptic import (DiscreteLaplacian, apply_laplacian, laplacian_matrix, pcg,
                               solve_laplace, solve_poisson, solve_spd)
from emdenlab.exceptions import GridMismatch, NoConvergence, UsageError
from emdenlab.geometry import DomainSpec, GridField, build_grid, field_from_function


def test_stencil_on_polynomials(disk64):
    zero = GridField(disk64, np.zeros(disk64.n_interior))
    assert np.all(apply_laplacian(zero).values == 0)
    quad = field_from_function(disk64, lambda p: p[:, 0] ** 2 + p[:, 1] ** 2,
                               with_boundary=True)
    np.testing.assert_allclose(apply_laplacian(quad).values, -4.0, atol=1e-9)
    lin = field_from_function(disk64, lambda p: p[:, 0], with_boundary=True)
    np.testing.assert_allclose(apply_laplacian(lin).values, 0.0, atol=1e-9)


def test_matrix_symmetric_positive(square64):
    A = laplacian_matrix(square64)
    assert abs(A - A.T).max() == 0
    rng = np.random.default_rng(3)
    for _ in range(5):
        v = rng.standard_normal(square64.n_interior)
        assert v @ (A @ v) > 0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_maximum_principle(seed):
    g = build_grid(DomainSpec.annulus(0.5, 1.0), 1 / 16)
    rng = np.random.default_rng(seed)
    f = rng.uniform(0, 1, g.n_interior)
    bnd = rng.uniform(0, 1, g.shape)
    u = solve_poisson(g, f, bnd)
    assert np.all(u.values >= -1e-12)


def test_pcg_consistency_and_zero(disk64):
    A = DiscreteLaplacian(disk64)
    v = np.sin(3 * disk64.points[:, 0]) * np.cos(disk64.points[:, 1])
    x, rep = solve_spd(A, A.matvec(v), tol=1e-12)
    np.testing.assert_allclose(x.values, v, atol=1e-9)
    assert rep.residual_norm <= 1e-12
    x0, rep0 = solve_spd(A, np.zeros(disk64.n_interior))
    assert np.all(x0.values == 0) and rep0.iterations == 0


def test_pcg_failures(disk64):
    A = DiscreteLaplacian(disk64)
    b = np.ones(disk64.n_interior)
    with pytest.raises(NoConvergence):
        pcg(A.matvec, b, A.diagonal, tol=1e-12, maxiter=3)
    with pytest.raises(NoConvergence):
        pcg(lambda v: -v, b, np.ones_like(b))
    with pytest.raises(GridMismatch):
        solve_spd(A, np.ones(5))
    with pytest.raises(UsageError):
        DiscreteLaplacian(disk64, -1.0)


def test_shift_is_spd(disk64):
    A = DiscreteLaplacian(disk64, 10.0)
    v = np.cos(disk64.points[:, 1])
    x, _ = solve_spd(A, A.matvec(v), tol=1e-12)
    np.testing.assert_allclose(x.values, v, atol=1e-9)


def test_harmonic_extension_of_affine_data(disk64):
    one = solve_laplace(disk64, lambda p: np.ones(len(p)))
    np.testing.assert_allclose(one.values, 1.0, atol=1e-8)
    lin = solve_laplace(disk64, lambda p: p[:, 0])
    np.testing.assert_allclose(lin.values, disk64.points[:, 0], atol=1e-8)


def test_log_data_matches_images_formula(disk128):
    x0 = np.array([0.5, 0.0])
    u = solve_laplace(disk128, lambda p: np.log(np.hypot(p[:, 0] - x0[0], p[:, 1] - x0[1])))
    # harmonic extension of log|y - x0| from the unit circle is log|x0| + log|y - x0*|
    xs = x0 / (x0 @ x0)
    y = disk128.points
    exact = np.log(0.5) + np.log(np.hypot(y[:, 0] - xs[0], y[:, 1] - xs[1]))
    assert np.max(np.abs(u.values - exact)) < 1e-2 * 2 * math.pi


def manufactured_error(h):
    g = build_grid(DomainSpec.rectangle(1, 1), h)
    x, y = g.points[:, 0], g.points[:, 1]
    exact = np.sin(math.pi * x) * np.sin(math.pi * y)
    u = solve_poisson(g, 2 * math.pi ** 2 * exact, None, tol=1e-12)
    return np.max(np.abs(u.values - exact))


def test_manufactured_second_order():
    ratio = manufactured_error(1 / 32) / manufactured_error(1 / 64)
    assert 3.5 <= ratio <= 4.5
