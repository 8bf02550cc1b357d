import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emdenlab.exceptions import EmptyInterior, InvalidSpacing, OutOfDomain, UsageError
from emdenlab.geometry import (DomainSpec, GridField, build_grid, circle_average,
                               field_from_function, quadrature, read_field, sample_bilinear,
                               write_field)


def test_domain_validation():
    with pytest.raises(UsageError):
        DomainSpec.disk(0.0)
    with pytest.raises(UsageError):
        DomainSpec.annulus(1.0, 0.5)
    with pytest.raises(UsageError):
        DomainSpec.from_dict({"kind": "disk", "radius": 1.0, "colour": "red"})
    d = DomainSpec.from_dict({"kind": "annulus", "inner_radius": 0.5, "outer_radius": 1.0})
    assert DomainSpec.from_dict(d.to_dict()) == d


def test_unit_square_coarse_has_single_node():
    g = build_grid(DomainSpec.rectangle(1, 1), 0.5)
    assert g.n_interior == 1
    np.testing.assert_allclose(g.points[0], [0.5, 0.5])


def test_coarse_disk_contains_origin():
    g = build_grid(DomainSpec.disk(1.0), 0.5)
    assert np.any(np.all(g.points == 0.0, axis=1))
    assert np.all(np.hypot(g.points[:, 0], g.points[:, 1]) < 1)


def test_bad_spacing():
    with pytest.raises(EmptyInterior):
        build_grid(DomainSpec.rectangle(1, 1), 2.0)
    for h in (0.0, -0.1, float("nan")):
        with pytest.raises(InvalidSpacing):
            build_grid(DomainSpec.disk(1.0), h)


@pytest.mark.parametrize("dom", [DomainSpec.disk(1.0), DomainSpec.rectangle(2.0, 1.0),
                                 DomainSpec.annulus(0.5, 1.0)])
def test_interior_nodes_inside(dom):
    g = build_grid(dom, 1 / 16)
    assert np.all(dom.contains(g.points))
    # the lattice respects the domain's point symmetry
    c = dom.center
    mirrored = {tuple(np.round(2 * c - x, 9)) for x in g.points}
    assert mirrored == {tuple(np.round(x, 9)) for x in g.points}


def test_field_rejects_nonfinite(disk64):
    v = np.zeros(disk64.n_interior)
    v[3] = np.inf
    with pytest.raises(UsageError):
        GridField(disk64, v)


def test_bilinear_constant_and_outside(disk64):
    f = GridField(disk64, np.full(disk64.n_interior, 2.5), np.full(disk64.shape, 2.5))
    assert sample_bilinear(f, (0.1, -0.3)) == pytest.approx(2.5)
    with pytest.raises(OutOfDomain):
        sample_bilinear(f, (3.0, 0.0))


@settings(max_examples=40, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), c=st.floats(-3, 3),
       x=st.floats(-0.6, 0.6), y=st.floats(-0.6, 0.6))
def test_bilinear_exact_on_affine(a, b, c, x, y):
    g = build_grid(DomainSpec.disk(1.0), 1 / 16)
    f = field_from_function(g, lambda p: a * p[:, 0] + b * p[:, 1] + c, with_boundary=True)
    assert sample_bilinear(f, (x, y)) == pytest.approx(a * x + b * y + c, abs=1e-12)


def test_circle_averages(disk64):
    f = field_from_function(disk64, lambda p: p[:, 0], with_boundary=True)
    assert abs(circle_average(f, (0, 0), 0.37)) < 1e-13
    q = field_from_function(disk64, lambda p: p[:, 0] ** 2 + p[:, 1] ** 2, with_boundary=True)
    assert circle_average(q, (0, 0), 0.5) == pytest.approx(0.25, abs=2 / 64 ** 2)


@settings(max_examples=20, deadline=None)
@given(phase=st.floats(0, 2 * math.pi))
def test_circle_average_rotation_invariant(phase):
    g = build_grid(DomainSpec.disk(1.0), 1 / 32)
    f = field_from_function(g, lambda p: np.exp(p[:, 0]) * np.cos(p[:, 1]), with_boundary=True)
    base = circle_average(f, (0, 0), 0.5)
    # rotating the field is the same as rotating the sampling offsets
    c, s = math.cos(phase), math.sin(phase)
    rot = field_from_function(
        g, lambda p: np.exp(c * p[:, 0] - s * p[:, 1]) * np.cos(s * p[:, 0] + c * p[:, 1]),
        with_boundary=True)
    assert circle_average(rot, (0, 0), 0.5) == pytest.approx(base, abs=2e-3)


def test_quadrature_converges_to_area():
    assert quadrature(GridField(build_grid(DomainSpec.disk(1.0), 0.1),
                                np.zeros(build_grid(DomainSpec.disk(1.0), 0.1).n_interior))) == 0
    errs = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        g = build_grid(DomainSpec.disk(1.0), h)
        errs.append(abs(quadrature(GridField(g, np.ones(g.n_interior))) - math.pi))
    assert errs[-1] < 8 * (1 / 64)
    assert errs[2] < errs[0]
    g = build_grid(DomainSpec.rectangle(1, 1), 1 / 64)
    assert quadrature(GridField(g, np.ones(g.n_interior))) == pytest.approx(1.0, abs=3 / 64)


def test_field_dump_roundtrip(tmp_path, disk64):
    f = field_from_function(disk64, lambda p: np.cos(p[:, 0]) + p[:, 1])
    path = tmp_path / "u.dat"
    write_field(path, f)
    head, arr = read_field(path)
    assert head["nx"] == disk64.nx and head["h"] == disk64.h
    np.testing.assert_array_equal(arr[disk64.interior_mask], f.values)
