"""Planar domains, uniform lattices with interior masks, sampling and quadrature.

Disks and annuli are centred at the origin; rectangles occupy ``[0, w] x [0, h]``.
Grid values are stored on interior nodes only, in row-major order (``y`` index
outer, ``x`` index inner). Non-interior nodes carry Dirichlet data, zero unless a
boundary table is attached to the field.
"""
from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np
from scipy import sparse

from .exceptions import EmptyInterior, InvalidSpacing, OutOfDomain, UsageError
from .validation import check_count, check_points, check_scalar

_KINDS = ("disk", "rectangle", "annulus")


@dataclass(frozen=True)
class DomainSpec:
    kind: str
    radius: float = None
    width: float = None
    height: float = None
    inner_radius: float = None
    outer_radius: float = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise UsageError(f"unknown domain kind {self.kind!r}; expected one of {_KINDS}")
        if self.kind == "disk":
            check_scalar(self.radius, "radius", min_val=0, include_min=False)
        elif self.kind == "rectangle":
            check_scalar(self.width, "width", min_val=0, include_min=False)
            check_scalar(self.height, "height", min_val=0, include_min=False)
        else:
            ri = check_scalar(self.inner_radius, "inner_radius", min_val=0, include_min=False)
            ro = check_scalar(self.outer_radius, "outer_radius", min_val=0, include_min=False)
            if not ri < ro:
                raise UsageError("annulus needs inner_radius < outer_radius")

    @classmethod
    def disk(cls, radius=1.0):
        return cls("disk", radius=float(radius))

    @classmethod
    def rectangle(cls, width=1.0, height=1.0):
        return cls("rectangle", width=float(width), height=float(height))

    @classmethod
    def annulus(cls, inner_radius, outer_radius):
        return cls("annulus", inner_radius=float(inner_radius),
                   outer_radius=float(outer_radius))

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("kind", None)
        allowed = {"disk": {"radius"}, "rectangle": {"width", "height"},
                   "annulus": {"inner_radius", "outer_radius"}}
        if kind not in allowed:
            raise UsageError(f"unknown domain kind {kind!r}")
        extra = set(d) - allowed[kind]
        if extra:
            raise UsageError(f"unknown keys for {kind}: {sorted(extra)}")
        missing = allowed[kind] - set(d)
        if missing:
            raise UsageError(f"missing keys for {kind}: {sorted(missing)}")
        return cls(kind, **d)

    def to_dict(self):
        keys = {"disk": ("radius",), "rectangle": ("width", "height"),
                "annulus": ("inner_radius", "outer_radius")}[self.kind]
        return {"kind": self.kind, **{k: getattr(self, k) for k in keys}}

    @property
    def bbox(self):
        """``(xmin, ymin, xmax, ymax)``."""
        if self.kind == "rectangle":
            return (0.0, 0.0, self.width, self.height)
        r = self.radius if self.kind == "disk" else self.outer_radius
        return (-r, -r, r, r)

    @property
    def center(self):
        if self.kind == "rectangle":
            return np.array([self.width / 2, self.height / 2])
        return np.zeros(2)

    @property
    def area(self):
        if self.kind == "disk":
            return math.pi * self.radius ** 2
        if self.kind == "rectangle":
            return self.width * self.height
        return math.pi * (self.outer_radius ** 2 - self.inner_radius ** 2)

    @property
    def diameter(self):
        if self.kind == "rectangle":
            return math.hypot(self.width, self.height)
        return 2 * (self.radius if self.kind == "disk" else self.outer_radius)

    def distance_to_boundary(self, points):
        """Distance to the boundary, positive inside and negative outside."""
        pts = np.asarray(points, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        if self.kind == "disk":
            return self.radius - np.hypot(x, y)
        if self.kind == "rectangle":
            return np.minimum(np.minimum(x, self.width - x), np.minimum(y, self.height - y))
        r = np.hypot(x, y)
        return np.minimum(r - self.inner_radius, self.outer_radius - r)

    def contains(self, points):
        """Strict membership in the open domain (vectorised)."""
        pts = np.asarray(points, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        if self.kind == "disk":
            return x * x + y * y < self.radius ** 2
        if self.kind == "rectangle":
            return (x > 0) & (x < self.width) & (y > 0) & (y < self.height)
        r2 = x * x + y * y
        return (r2 > self.inner_radius ** 2) & (r2 < self.outer_radius ** 2)

    def in_closure(self, points):
        pts = np.asarray(points, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        if self.kind == "disk":
            return x * x + y * y <= self.radius ** 2
        if self.kind == "rectangle":
            return (x >= 0) & (x <= self.width) & (y >= 0) & (y <= self.height)
        r2 = x * x + y * y
        return (r2 >= self.inner_radius ** 2) & (r2 <= self.outer_radius ** 2)


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform lattice over a domain's bounding box with an interior mask."""

    domain: DomainSpec
    origin: tuple
    h: float
    nx: int
    ny: int
    interior_mask: np.ndarray = field(repr=False)

    @cached_property
    def index(self):
        """``(ny, nx)`` array of interior indices, -1 on non-interior nodes."""
        idx = np.full((self.ny, self.nx), -1, dtype=np.int64)
        idx[self.interior_mask] = np.arange(self.n_interior)
        idx.setflags(write=False)
        return idx

    @cached_property
    def n_interior(self):
        return int(self.interior_mask.sum())

    @property
    def shape(self):
        return (self.ny, self.nx)

    @cached_property
    def xs(self):
        return self.origin[0] + self.h * np.arange(self.nx)

    @cached_property
    def ys(self):
        return self.origin[1] + self.h * np.arange(self.ny)

    @cached_property
    def node_points(self):
        """``(ny, nx, 2)`` coordinates of every lattice node."""
        X, Y = np.meshgrid(self.xs, self.ys)
        pts = np.stack([X, Y], axis=-1)
        pts.setflags(write=False)
        return pts

    @cached_property
    def points(self):
        """``(n_interior, 2)`` coordinates of interior nodes."""
        pts = self.node_points[self.interior_mask]
        pts.setflags(write=False)
        return pts

    @cached_property
    def boundary_mask(self):
        """Non-interior nodes that are a 5-point neighbour of an interior node."""
        m = self.interior_mask
        nb = np.zeros_like(m)
        nb[1:, :] |= m[:-1, :]
        nb[:-1, :] |= m[1:, :]
        nb[:, 1:] |= m[:, :-1]
        nb[:, :-1] |= m[:, 1:]
        out = nb & ~m
        out.setflags(write=False)
        return out

    @cached_property
    def _stencil(self):
        # interior-interior coupling and interior-boundary coupling, unscaled
        ny, nx = self.shape
        idx = self.index
        flat = np.arange(ny * nx).reshape(ny, nx)
        J, I = np.nonzero(self.interior_mask)
        rows_i, cols_i, rows_b, cols_b = [], [], [], []
        for dj, di in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            jj, ii = J + dj, I + di
            nb_idx = idx[jj, ii]
            me = idx[J, I]
            inside = nb_idx >= 0
            rows_i.append(me[inside])
            cols_i.append(nb_idx[inside])
            rows_b.append(me[~inside])
            cols_b.append(flat[jj[~inside], ii[~inside]])
        n = self.n_interior
        off = sparse.csr_matrix(
            (np.ones(sum(map(len, rows_i))), (np.concatenate(rows_i), np.concatenate(cols_i))),
            shape=(n, n))
        bnd = sparse.csr_matrix(
            (np.ones(sum(map(len, rows_b))), (np.concatenate(rows_b), np.concatenate(cols_b))),
            shape=(n, ny * nx))
        return off, bnd

    def node_index(self, point):
        """Nearest lattice node ``(j, i)`` to a point."""
        i = int(round((point[0] - self.origin[0]) / self.h))
        j = int(round((point[1] - self.origin[1]) / self.h))
        return j, i

    def boundary_table(self, func):
        """Evaluate ``func(points) -> values`` on the boundary nodes.

        Returns a full ``(ny, nx)`` array that is zero away from the boundary nodes.
        """
        table = np.zeros(self.shape)
        pts = self.node_points[self.boundary_mask]
        table[self.boundary_mask] = np.asarray(func(pts), dtype=float)
        return table

    def same_as(self, other):
        return self is other or (
            self.domain == other.domain and self.h == other.h and self.nx == other.nx
            and self.ny == other.ny and tuple(self.origin) == tuple(other.origin))


@dataclass(frozen=True, eq=False)
class GridField:
    grid: Grid
    values: np.ndarray
    boundary: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.n_interior,):
            raise UsageError(
                f"field has {vals.shape} values, grid has {self.grid.n_interior} interior nodes")
        if not np.all(np.isfinite(vals)):
            raise UsageError("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.boundary is not None:
            b = np.array(self.boundary, dtype=float)
            if b.shape != self.grid.shape:
                raise UsageError("boundary table must cover the full lattice")
            b[self.grid.interior_mask] = 0.0
            b.setflags(write=False)
            object.__setattr__(self, "boundary", b)

    @property
    def is_positive(self):
        return bool(np.all(self.values > 0))

    def to_array(self):
        """Full lattice array, interior values plus boundary data."""
        arr = np.zeros(self.grid.shape) if self.boundary is None else self.boundary.copy()
        arr[self.grid.interior_mask] = self.values
        return arr

    def with_values(self, values):
        return GridField(self.grid, values, self.boundary)


def build_grid(domain, h):
    """Lattice over the bounding box of ``domain`` with spacing ``h``.

    A node is interior when it lies strictly inside the domain and its four
    neighbours lie in the closed domain; the first excluded node carries the
    Dirichlet data. The lattice is centred on the bounding box so that domain
    symmetries are lattice symmetries.
    """
    if isinstance(h, bool) or not isinstance(h, (int, float, np.floating)) or not h > 0 \
            or not math.isfinite(h):
        raise InvalidSpacing(f"spacing must be positive, got {h!r}")
    h = float(h)
    xmin, ymin, xmax, ymax = domain.bbox
    origin = []
    counts = []
    for lo, hi in ((xmin, xmax), (ymin, ymax)):
        cells = math.ceil((hi - lo) / h - 1e-9)
        origin.append(0.5 * (lo + hi) - 0.5 * cells * h)
        counts.append(cells + 1)
    nx, ny = counts
    xs = origin[0] + h * np.arange(nx)
    ys = origin[1] + h * np.arange(ny)
    # pad by one node so every node has four lattice neighbours to test
    xp = np.concatenate([[xs[0] - h], xs, [xs[-1] + h]])
    yp = np.concatenate([[ys[0] - h], ys, [ys[-1] + h]])
    X, Y = np.meshgrid(xp, yp)
    P = np.stack([X, Y], axis=-1)
    inside = domain.contains(P)
    closed = domain.in_closure(P)
    mask = (inside[1:-1, 1:-1] & closed[1:-1, 2:] & closed[1:-1, :-2]
            & closed[2:, 1:-1] & closed[:-2, 1:-1])
    if not mask.any():
        raise EmptyInterior(f"no interior node for {domain} at h={h}")
    mask.setflags(write=False)
    return Grid(domain, (float(origin[0]), float(origin[1])), h, nx, ny, mask)


def field_from_function(grid, func, *, with_boundary=False):
    """Sample ``func(points)`` on interior nodes (and boundary nodes if asked)."""
    vals = np.asarray(func(grid.points), dtype=float)
    bnd = grid.boundary_table(func) if with_boundary else None
    return GridField(grid, vals, bnd)


def sample_bilinear(field, points):
    """Bilinear interpolation of a grid field at one point or an array of points."""
    grid = field.grid
    pts = np.asarray(points, dtype=float)
    scalar = pts.ndim == 1
    pts = check_points(pts)
    fx = (pts[:, 0] - grid.origin[0]) / grid.h
    fy = (pts[:, 1] - grid.origin[1]) / grid.h
    eps = 1e-9
    bad = (fx < -eps) | (fx > grid.nx - 1 + eps) | (fy < -eps) | (fy > grid.ny - 1 + eps)
    if np.any(bad):
        raise OutOfDomain(f"point {pts[np.argmax(bad)]} is outside the grid")
    i = np.clip(np.floor(fx).astype(int), 0, grid.nx - 2)
    j = np.clip(np.floor(fy).astype(int), 0, grid.ny - 2)
    tx = fx - i
    ty = fy - j
    mask = grid.interior_mask
    touches = mask[j, i] | mask[j, i + 1] | mask[j + 1, i] | mask[j + 1, i + 1]
    if not np.all(touches):
        raise OutOfDomain(f"point {pts[np.argmin(touches)]} lies in a cell without interior nodes")
    arr = field.to_array()
    v = ((1 - tx) * (1 - ty) * arr[j, i] + tx * (1 - ty) * arr[j, i + 1]
         + (1 - tx) * ty * arr[j + 1, i] + tx * ty * arr[j + 1, i + 1])
    return float(v[0]) if scalar else v


def circle_average(field, center, r, n_theta=256):
    """Mean of ``field`` over the circle of radius ``r`` about ``center``.

    Uses the periodic trapezoid rule on ``n_theta`` equispaced angles.
    """
    n_theta = check_count(n_theta, "n_theta", min_val=8)
    r = check_scalar(r, "r", min_val=0)
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    c = np.asarray(center, dtype=float)
    pts = c + r * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return float(np.mean(sample_bilinear(field, pts)))


def quadrature(field):
    """``h^2`` times the sum of interior values."""
    return float(field.grid.h ** 2 * np.sum(field.values))


def write_field(path, field):
    """Write the plain-text field dump: header ``nx ny h x0 y0`` then ``ny`` rows."""
    g = field.grid
    arr = np.zeros(g.shape)
    arr[g.interior_mask] = field.values
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"{g.nx} {g.ny} {g.h!r} {g.origin[0]!r} {g.origin[1]!r}\n")
        for row in arr:
            fh.write(" ".join(format(float(v), ".17g") for v in row))
            fh.write("\n")


def read_field(path):
    """Read a field dump; returns ``(header dict, (ny, nx) array)``."""
    with open(path, encoding="ascii") as fh:
        head = fh.readline().split()
        nx, ny = int(head[0]), int(head[1])
        h, x0, y0 = map(float, head[2:5])
        arr = np.loadtxt(fh, ndmin=2)
    if arr.shape != (ny, nx):
        raise UsageError(f"field dump {path} has shape {arr.shape}, header says {(ny, nx)}")
    return {"nx": nx, "ny": ny, "h": h, "origin": (x0, y0)}, arr
