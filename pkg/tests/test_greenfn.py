import math

import numpy as np
import pytest

from emdenlab.elliptic import apply_laplacian, boundary_rhs
from emdenlab.exceptions import (NotConverged, PointsTooClose, SourceTooCloseToBoundary,
                                 TestPointTooClose)
from emdenlab.geometry import DomainSpec, build_grid
from emdenlab.greenfn import (INV_2PI, GreenCache, convloc_check, green, kr_gradient,
                              kr_stationary)
from emdenlab.lane_emden import record_from_radial


def images_robin(x):
    return INV_2PI * math.log(1 - float(np.dot(x, x)))


def images_green(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    if not np.any(x):
        return -INV_2PI * np.log(np.hypot(*y.T))
    xs = x / (x @ x)
    return INV_2PI * np.log(np.hypot(*(y - xs).T) * np.hypot(*x) / np.hypot(*(y - x).T))


def test_source_guard(disk64):
    with pytest.raises(SourceTooCloseToBoundary):
        green(disk64, (0.99, 0.0))


def test_decomposition_and_harmonicity(disk64):
    x = np.array([0.3, -0.2])
    gd = green(disk64, x)
    ok = ~gd.singular_mask
    d = np.hypot(*(disk64.points - x).T)
    np.testing.assert_array_equal(gd.G_field.values[ok],
                                  -INV_2PI * np.log(d[ok]) + gd.H_field.values[ok])
    # CG stops at a relative residual of 1e-10 against the boundary right-hand side
    rhs = np.linalg.norm(boundary_rhs(disk64, gd.H_field.boundary))
    assert np.max(np.abs(apply_laplacian(gd.H_field).values)) <= 1e-10 * rhs
    assert gd.G_field.values.min() >= -1e-8


def test_centre_source_on_fine_disk(disk128):
    gd = green(disk128, (0.0, 0.0))
    assert abs(gd.robin) < 1e-2
    r = np.linspace(0.1, 0.9, 9)
    pts = np.column_stack([r, 0.3 * r])
    pts = pts[np.hypot(*pts.T) <= 0.9]
    np.testing.assert_allclose(gd(pts), images_green((0, 0), pts), atol=1e-2)


def test_off_centre_robin_on_fine_disk(disk128):
    for x in ([0.5, 0.0], [0.0, -0.3]):
        assert green(disk128, x).robin == pytest.approx(images_robin(x), abs=1e-2)


def test_reciprocity_improves_under_refinement():
    errs = []
    for h in (1 / 32, 1 / 64):
        g = build_grid(DomainSpec.disk(1.0), h)
        a, b = (0.3, 0.1), (-0.2, 0.45)
        errs.append(abs(green(g, a)(b) - green(g, b)(a)))
    assert errs[1] <= 2e-2
    assert errs[1] < errs[0]


def test_robin_map_disk(green_disk64):
    x = np.array([0.3, 0.0])
    assert green_disk64.predict(x) == pytest.approx(images_robin(x), abs=1e-2)
    assert np.allclose(green_disk64.robin_.argmax(), 0.0)
    assert not green_disk64.robin_.values.flags.writeable


def test_robin_map_square_peaks_at_centre(green_square64):
    np.testing.assert_allclose(green_square64.robin_.argmax(), [0.5, 0.5])


def test_robin_map_annulus_rotational(green_annulus64):
    t = green_annulus64.robin_.table
    rad = np.round(np.hypot(t[:, 0], t[:, 1]), 9)
    for r in np.unique(rad):
        assert np.ptp(t[rad == r, 2]) <= 1e-2


def test_kr_gradient_disk(green_disk64):
    assert green_disk64.kr_gradient([[0.0, 0.0]]).grad_norm <= 1e-8
    g = green_disk64.kr_gradient([[0.3, 0.0]]).gradients[0]
    # the Robin function decreases outward, so the gradient points to the centre
    assert g[0] < 0 and abs(g[1]) < 1e-6 * abs(g[0])


def test_kr_gradient_annulus_antipodal(green_annulus64):
    cfg = green_annulus64.kr_gradient([[0.75, 0.0], [-0.75, 0.0]])
    assert np.all(np.abs(cfg.gradients[:, 1]) <= 1e-6)
    assert cfg.gradients[0, 0] == pytest.approx(-cfg.gradients[1, 0], abs=1e-6)


def test_points_too_close(green_disk64):
    with pytest.raises(PointsTooClose):
        green_disk64.kr_gradient([[0.0, 0.0], [0.05, 0.0]])


def test_kr_stationary_disk_any_start(green_disk64, disk64):
    cfg = green_disk64.kr_stationary(1, starts=[[[0.4, -0.3]]])
    assert np.hypot(*cfg.points[0]) <= 2 * disk64.h
    # success is stable under re-evaluation
    assert green_disk64.kr_gradient(cfg.points).grad_norm <= green_disk64.kr_tol


def test_kr_stationary_reports_best(green_disk64, disk64):
    with pytest.raises(NotConverged) as info:
        kr_stationary(disk64, 1, [[[0.4, -0.3]]], green_disk64.robin_, kr_tol=1e-14,
                      max_iter=1)
    assert info.value.best is not None and info.value.best.grad_norm > 1e-14


def test_convloc_guards_and_rows(disk64):
    from emdenlab.radial import shoot
    rec = record_from_radial(shoot(200.0), disk64)
    cache = GreenCache(disk64)
    with pytest.raises(TestPointTooClose):
        convloc_check(rec, [[0.0, 0.0]], [[0.02, 0.0]], greens=cache)
    rows = convloc_check(rec, [[0.0, 0.0]], [[0.5, 0.0], [0.0, 0.92]], greens=cache,
                         min_green=0.02)
    assert rows[0].rel_error < 0.1
    # the Green's function falls below the cut-off next to the boundary
    assert math.isnan(rows[1].rel_error)


def test_estimator_params(green_disk64):
    params = green_disk64.get_params()
    assert params["kr_tol"] == 1e-3 and params["probe_spacing"] == 0.1
