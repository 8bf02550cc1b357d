"""Dirichlet Green's function, Robin function and Kirchhoff-Routh configurations.

``G_x(y) = (1/2pi) log(1/|x - y|) + H_x(y)`` where the regular part ``H_x`` is the
discrete harmonic extension of ``(1/2pi) log|x - y|`` from the boundary nodes. The
Robin function is ``z -> H_z(z)``.
"""
from dataclasses import dataclass, field
import logging
import math

import numpy as np
from sklearn.base import BaseEstimator

from .elliptic import DEFAULT_TOL, solve_laplace
from .exceptions import (NotConverged, OutOfDomain, PointsTooClose, SourceTooCloseToBoundary,
                         TestPointTooClose, UsageError)
from .geometry import GridField, sample_bilinear
from .validation import check_count, check_point, check_points, check_scalar

logger = logging.getLogger(__name__)

INV_2PI = 1.0 / (2.0 * math.pi)
SQRT_E = math.sqrt(math.e)


@dataclass(frozen=True, eq=False)
class GreenData:
    """Green's function data for one source.

    Nodes within one cell of the source (``singular_mask``) carry the log term
    evaluated at distance ``h/2``; they are not meaningful pointwise.
    """

    source: tuple
    G_field: GridField
    H_field: GridField
    robin: float
    singular_mask: np.ndarray = field(repr=False)

    def regular(self, points):
        return sample_bilinear(self.H_field, points)

    def __call__(self, points):
        """``G_x`` at arbitrary points, log term exact and regular part interpolated."""
        pts = np.asarray(points, dtype=float)
        scalar = pts.ndim == 1
        pts2 = check_points(pts)
        h = self.G_field.grid.h
        dist = np.hypot(pts2[:, 0] - self.source[0], pts2[:, 1] - self.source[1])
        if np.any(dist < h):
            raise OutOfDomain("Green's function evaluated within one cell of its source")
        vals = -INV_2PI * np.log(dist) + self.regular(pts2)
        return float(vals[0]) if scalar else vals


def green(grid, x, tol=DEFAULT_TOL, x0=None):
    """Green's function of the five-point Laplacian with source ``x``."""
    x = check_point(x, "source")
    d = float(grid.domain.distance_to_boundary(x))
    if d < 2 * grid.h:
        raise SourceTooCloseToBoundary(f"source {tuple(x)} is {d:.3g} from the boundary (< 2h)")

    def log_term(pts):
        return INV_2PI * np.log(np.hypot(pts[:, 0] - x[0], pts[:, 1] - x[1]))

    H = solve_laplace(grid, log_term, tol=tol, x0=x0)
    dist = np.hypot(grid.points[:, 0] - x[0], grid.points[:, 1] - x[1])
    singular = dist < grid.h
    G = -INV_2PI * np.log(np.maximum(dist, 0.5 * grid.h)) + H.values
    G_field = GridField(grid, G)
    robin = sample_bilinear(H, x)
    return GreenData(tuple(map(float, x)), G_field, H, float(robin), singular)


class RobinMap:
    """Robin function on a probe lattice with local bicubic interpolation.

    Probes sit on a lattice of the given spacing anchored at the domain centre and at
    least ``margin`` away from the boundary. Queries use the 4x4 tensor Lagrange
    stencil when all of it is available and bilinear interpolation otherwise.
    Each probe row is one warm-started chain of solves, so the table does not
    depend on ``jobs``.
    """

    def __init__(self, grid, spacing, tol=DEFAULT_TOL, margin=None, jobs=1):
        spacing = check_scalar(spacing, "probe spacing", min_val=2 * grid.h)
        self.grid = grid
        self.spacing = spacing
        self.margin = 2 * grid.h if margin is None else margin
        xmin, ymin, xmax, ymax = grid.domain.bbox
        c = grid.domain.center
        kx0 = int(math.floor((xmin - c[0]) / spacing)) - 1
        kx1 = int(math.ceil((xmax - c[0]) / spacing)) + 1
        ky0 = int(math.floor((ymin - c[1]) / spacing)) - 1
        ky1 = int(math.ceil((ymax - c[1]) / spacing)) + 1
        self.px = c[0] + spacing * np.arange(kx0, kx1 + 1)
        self.py = c[1] + spacing * np.arange(ky0, ky1 + 1)
        PX, PY = np.meshgrid(self.px, self.py)
        pts = np.stack([PX, PY], axis=-1)
        self.valid = grid.domain.distance_to_boundary(pts) >= self.margin
        rows = [j for j in range(len(self.py)) if self.valid[j].any()]
        args = [(grid, pts[j][self.valid[j]], tol) for j in rows]
        if jobs and jobs > 1:
            from concurrent.futures import ProcessPoolExecutor
            with ProcessPoolExecutor(jobs) as pool:
                results = list(pool.map(_robin_row, args))
        else:
            results = [_robin_row(a) for a in args]
        self.values = np.full(self.valid.shape, np.nan)
        for j, vals in zip(rows, results):
            self.values[j, self.valid[j]] = vals
        self.values.setflags(write=False)

    @property
    def table(self):
        """``(m, 3)`` rows ``(x, y, robin)`` over valid probes."""
        PX, PY = np.meshgrid(self.px, self.py)
        return np.column_stack([PX[self.valid], PY[self.valid], self.values[self.valid]])

    def argmax(self):
        t = self.table
        return t[int(np.argmax(t[:, 2])), :2]

    def __call__(self, points):
        pts = np.asarray(points, dtype=float)
        scalar = pts.ndim == 1
        pts = check_points(pts)
        out = np.array([self._one(p) for p in pts])
        return float(out[0]) if scalar else out

    def _one(self, z):
        fx = (z[0] - self.px[0]) / self.spacing
        fy = (z[1] - self.py[0]) / self.spacing
        i, j = int(math.floor(fx)), int(math.floor(fy))
        tx, ty = fx - i, fy - j
        ny, nx = self.values.shape
        if 1 <= i < nx - 2 and 1 <= j < ny - 2:
            block = self.values[j - 1:j + 3, i - 1:i + 3]
            if not np.any(np.isnan(block)):
                wx = _cubic_weights(tx)
                wy = _cubic_weights(ty)
                return float(wy @ block @ wx)
        if 0 <= i < nx - 1 and 0 <= j < ny - 1:
            block = self.values[j:j + 2, i:i + 2]
            if not np.any(np.isnan(block)):
                return float((1 - ty) * ((1 - tx) * block[0, 0] + tx * block[0, 1])
                             + ty * ((1 - tx) * block[1, 0] + tx * block[1, 1]))
        raise OutOfDomain(f"point {tuple(z)} is outside the probe lattice")


def _robin_row(args):
    grid, row, tol = args
    out = []
    prev = None
    for x in row:
        gd = green(grid, x, tol=tol, x0=prev)
        prev = gd.H_field.values
        out.append(gd.robin)
    return np.array(out)


def _cubic_weights(t):
    # Lagrange weights for nodes -1, 0, 1, 2
    return np.array([
        -t * (t - 1) * (t - 2) / 6,
        (t + 1) * (t - 1) * (t - 2) / 2,
        -(t + 1) * t * (t - 2) / 2,
        (t + 1) * t * (t - 1) / 6,
    ])


def robin_map(grid, probe_lattice_spacing, tol=DEFAULT_TOL, jobs=1):
    return RobinMap(grid, probe_lattice_spacing, tol=tol, jobs=jobs)


@dataclass(frozen=True)
class KRConfiguration:
    points: np.ndarray
    value: float = math.nan
    gradients: np.ndarray = None
    grad_norm: float = math.nan

    @property
    def n(self):
        return len(self.points)


class GreenCache:
    """Memoised :func:`green` solves keyed by source coordinates."""

    def __init__(self, grid, tol=DEFAULT_TOL):
        self.grid = grid
        self.tol = tol
        self._store = {}
        self._last = None

    def __call__(self, x):
        key = (float(x[0]), float(x[1]))
        if key not in self._store:
            gd = green(self.grid, key, tol=self.tol, x0=self._last)
            self._last = gd.H_field.values
            self._store[key] = gd
        return self._store[key]


def kr_gradient(grid, points, fd_step, robin, greens=None):
    """Per-point gradients of ``Phi_j(z) = R(z) + sum_{i != j} G_{x_i}(z)`` at ``z = x_j``.

    Central differences with step ``fd_step``; ``R`` is the interpolated Robin map.
    """
    pts = check_points(points)
    fd_step = check_scalar(fd_step, "fd_step", min_val=2 * grid.h * (1 - 1e-12))
    greens = greens or GreenCache(grid)
    n = len(pts)
    for a in range(n):
        for b in range(a + 1, n):
            if np.hypot(*(pts[a] - pts[b])) < 4 * fd_step:
                raise PointsTooClose(f"points {a} and {b} are closer than 4 fd_step")
    gds = [greens(x) for x in pts] if n > 1 else []
    grads = np.zeros((n, 2))
    value = 0.0
    offsets = fd_step * np.array([[1, 0], [-1, 0], [0, 1], [0, -1]])
    for j in range(n):
        z = pts[j] + offsets
        phi = robin(z)
        value += robin(pts[j])
        for i in range(n):
            if i != j:
                phi = phi + gds[i](z)
                value += gds[i](pts[j])
        grads[j] = [(phi[0] - phi[1]) / (2 * fd_step), (phi[2] - phi[3]) / (2 * fd_step)]
    norm = float(np.max(np.hypot(grads[:, 0], grads[:, 1])))
    return KRConfiguration(pts.copy(), float(value), grads, norm)


def default_starts(grid, n, robin, rng, n_random=2):
    """Seeds for :func:`kr_stationary`.

    ``n = 1``: the probe-lattice maximiser of the Robin function. ``n >= 2``: ``n``
    points equally spaced on the medial circle, then ``n_random`` random interior sets.
    """
    dom = grid.domain
    if n == 1:
        starts = [robin.argmax()[None, :]]
    else:
        if dom.kind == "annulus":
            r = 0.5 * (dom.inner_radius + dom.outer_radius)
        elif dom.kind == "disk":
            r = 0.5 * dom.radius
        else:
            r = 0.25 * min(dom.width, dom.height)
        ang = 2 * np.pi * np.arange(n) / n
        starts = [dom.center + r * np.column_stack([np.cos(ang), np.sin(ang)])]
    xmin, ymin, xmax, ymax = dom.bbox
    margin = 0.1 * dom.diameter
    for _ in range(n_random):
        pts = []
        while len(pts) < n:
            z = rng.uniform([xmin, ymin], [xmax, ymax])
            if dom.distance_to_boundary(z) >= margin and all(
                    np.hypot(*(z - q)) >= margin for q in pts):
                pts.append(z)
        starts.append(np.array(pts))
    return starts


def kr_stationary(grid, n, starts, robin, fd_step=None, kr_tol=1e-3, max_iter=40, greens=None):
    """Find a stationary Kirchhoff-Routh configuration of ``n`` points.

    Levenberg-Marquardt steps on the gradient field with backtracking on
    ``sum_j |g_j|^2``; each start is iterated until ``grad_norm <= kr_tol``. Returns the
    best configuration over all starts, or raises :class:`NotConverged` carrying it.
    """
    n = check_count(n, "n")
    fd_step = 4 * grid.h if fd_step is None else fd_step
    greens = greens or GreenCache(grid)
    dom = grid.domain
    keep_out = fd_step + 2 * grid.h + robin.margin

    def evaluate(x):
        pts = x.reshape(n, 2)
        if np.any(dom.distance_to_boundary(pts) < keep_out):
            return None
        try:
            return kr_gradient(grid, pts, fd_step, robin, greens)
        except (PointsTooClose, OutOfDomain):
            return None

    best = None
    for start in starts:
        x = np.asarray(start, dtype=float).reshape(-1)
        if x.size != 2 * n:
            raise UsageError(f"start has {x.size // 2} points, expected {n}")
        cfg = evaluate(x)
        if cfg is None:
            logger.info("start %s rejected", x)
            continue
        lam = 1e-3
        for _ in range(max_iter):
            if cfg.grad_norm <= kr_tol:
                break
            g = cfg.gradients.reshape(-1)
            J = np.empty((2 * n, 2 * n))
            ok = True
            for k in range(2 * n):
                e = np.zeros(2 * n)
                e[k] = fd_step
                cp, cm = evaluate(x + e), evaluate(x - e)
                if cp is None or cm is None:
                    ok = False
                    break
                J[:, k] = (cp.gradients.reshape(-1) - cm.gradients.reshape(-1)) / (2 * fd_step)
            if not ok:
                break
            f0 = g @ g
            JtJ = J.T @ J
            scale = max(np.max(np.diag(JtJ)), 1e-12)
            accepted = False
            for _ in range(30):
                d = np.linalg.solve(JtJ + lam * scale * np.eye(2 * n), -J.T @ g)
                trial = evaluate(x + d)
                if trial is not None:
                    gt = trial.gradients.reshape(-1)
                    if gt @ gt < f0:
                        accepted = True
                        break
                lam *= 4.0
            if not accepted:
                break
            x, cfg = x + d, trial
            lam = max(lam / 8.0, 1e-9)
        if best is None or cfg.grad_norm < best.grad_norm:
            best = cfg
    if best is None:
        raise NotConverged("no admissible start", None)
    if best.grad_norm > kr_tol:
        raise NotConverged(f"best grad_norm {best.grad_norm:.3e} > kr_tol {kr_tol:.1e}", best)
    return best


@dataclass(frozen=True)
class ConvLocRow:
    point: tuple
    p_u: float
    model: float
    rel_error: float


def convloc_check(record, peaks, test_points, delta=None, greens=None, min_green=0.01):
    """Compare ``p u(y)`` with ``8 pi sqrt(e) sum_j G_{x_j}(y)`` at test points.

    Relative errors are reported only where ``sum_j G_{x_j}(y) >= min_green``.
    """
    grid = record.grid
    delta = 5 * grid.h if delta is None else check_scalar(delta, "delta", min_val=5 * grid.h)
    peaks = check_points(peaks)
    pts = check_points(test_points)
    greens = greens or GreenCache(grid)
    dom = grid.domain
    rows = []
    gds = [greens(x) for x in peaks]
    for y in pts:
        if dom.distance_to_boundary(y) < delta or any(
                np.hypot(*(y - x)) < delta for x in peaks):
            raise TestPointTooClose(f"test point {tuple(y)} is within {delta:.3g} of a "
                                    "peak or the boundary")
        pu = record.p * sample_bilinear(record.u, y)
        gsum = sum(gd(y) for gd in gds)
        model = 8 * math.pi * SQRT_E * gsum
        rel = abs(pu - model) / abs(model) if gsum >= min_green else math.nan
        rows.append(ConvLocRow(tuple(map(float, y)), float(pu), float(model), float(rel)))
    return rows


class GreenSolver(BaseEstimator):
    """Estimator front end: ``fit(grid)`` builds the Robin map; the other methods
    reuse it together with a cache of Green solves."""

    def __init__(self, probe_spacing=0.1, fd_step=None, kr_tol=1e-3, tol=DEFAULT_TOL,
                 n_random_starts=2, seed=0, max_iter=40, jobs=1):
        self.probe_spacing = probe_spacing
        self.fd_step = fd_step
        self.kr_tol = kr_tol
        self.tol = tol
        self.n_random_starts = n_random_starts
        self.seed = seed
        self.max_iter = max_iter
        self.jobs = jobs

    def fit(self, grid, y=None):
        self.grid_ = grid
        self.greens_ = GreenCache(grid, self.tol)
        self.robin_ = RobinMap(grid, self.probe_spacing, tol=self.tol, jobs=self.jobs)
        return self

    @property
    def fd_step_(self):
        return 4 * self.grid_.h if self.fd_step is None else self.fd_step

    def green(self, x):
        return self.greens_(x)

    def predict(self, points):
        """Interpolated Robin function at ``points``."""
        from sklearn.utils.validation import check_is_fitted
        check_is_fitted(self, "robin_")
        return self.robin_(points)

    def kr_gradient(self, points):
        return kr_gradient(self.grid_, points, self.fd_step_, self.robin_, self.greens_)

    def kr_stationary(self, n, starts=None):
        if starts is None:
            rng = np.random.default_rng(self.seed)
            starts = default_starts(self.grid_, n, self.robin_, rng, self.n_random_starts)
        return kr_stationary(self.grid_, n, starts, self.robin_, self.fd_step_, self.kr_tol,
                             self.max_iter, self.greens_)

    def convloc_check(self, record, peaks, test_points, delta=None):
        return convloc_check(record, peaks, test_points, delta, self.greens_)
