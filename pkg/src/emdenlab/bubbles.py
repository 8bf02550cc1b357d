"""Blow-up structure of a solution: rescaled deficit, Liouville residuals,
circle-average inequality, limit extrapolation and peak detection.

A profile can come from a grid record (sampled on the grid's own nodes, so the
discrete equation for the deficit holds exactly) or from a radial oracle solution
(sampled on a uniform rescaled lattice from the dense output).
"""
from dataclasses import dataclass, field
import logging
import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import BallExitsDomain, OutOfDomain, ScaleUnderflow, UsageError
from .geometry import circle_average
from .lane_emden import SolutionRecord
from .radial import RadialSolution
from .validation import check_count, check_scalar

logger = logging.getLogger(__name__)

EIGHT_PI_E = 8.0 * math.pi * math.e
SQRT_E = math.sqrt(math.e)


@dataclass(frozen=True, eq=False)
class BubbleProfile:
    """Deficit ``tau`` on a uniform rescaled lattice centred at the peak.

    ``tau`` and ``mask`` are ``(k, k)`` arrays over the lattice ``y = spacing * (i - c)``;
    ``mask`` marks nodes inside the ball ``|y| <= R``.
    """

    p: float
    center: tuple
    log_mu2: float
    sup_norm: float
    spacing: float
    R: float
    tau_grid: np.ndarray = field(repr=False)
    mask: np.ndarray = field(repr=False)
    source: str = "grid"
    tolerance: float = 0.0

    @property
    def mu(self):
        return math.exp(0.5 * self.log_mu2)

    @property
    def coords(self):
        k = self.tau_grid.shape[0]
        c = (k - 1) // 2
        t = self.spacing * (np.arange(k) - c)
        Y1, Y2 = np.meshgrid(t, t)
        return Y1, Y2

    @property
    def tau_samples(self):
        """``(m, 3)`` rows ``(y1, y2, tau)`` inside the ball."""
        Y1, Y2 = self.coords
        return np.column_stack([Y1[self.mask], Y2[self.mask], self.tau_grid[self.mask]])

    @property
    def t_ref(self):
        """Reference Liouville profile ``log(1 + |y|^2)`` at the samples."""
        Y1, Y2 = self.coords
        return np.log1p(Y1[self.mask] ** 2 + Y2[self.mask] ** 2)

    def tau_deviation(self):
        """``max |tau - log(1 + |y|^2)|`` over the ball."""
        return float(np.max(np.abs(self.tau_grid[self.mask] - self.t_ref)))

    def reconstruct_u(self):
        """Map the deficit back to solution values: ``u = M (1 - 2 tau / p)``."""
        return self.sup_norm * (1.0 - 2.0 * self.tau_grid[self.mask] / self.p)

    def dump_rows(self):
        s = self.tau_samples
        return np.column_stack([s, self.t_ref])


def _resolution_guard(mu, h, min_points_per_scale):
    if mu < min_points_per_scale * h:
        raise ScaleUnderflow(
            f"concentration scale mu={mu:.3e} is below {min_points_per_scale} grid spacing(s) "
            f"h={h:.3e}; the bubble is unresolved")


def extract_bubble(source, R=10.0, spacing=0.1, min_points_per_scale=1.0):
    """Rescaled deficit ``tau(y) = (p/2)(1 - u(y_p + mu y) / M)`` on ``|y| <= R``.

    ``source`` is a grid :class:`SolutionRecord` (samples at the grid nodes, rescaled
    spacing ``h / mu``) or a :class:`RadialSolution` (uniform lattice of the given
    ``spacing``). Grid records raise :class:`ScaleUnderflow` when ``mu`` is below
    ``min_points_per_scale * h``.
    """
    R = check_scalar(R, "R", min_val=0, include_min=False)
    if isinstance(source, RadialSolution):
        spacing = check_scalar(spacing, "spacing", min_val=0, max_val=1, include_min=False)
        if R * source.mu >= 1.0:
            raise BallExitsDomain(f"R mu = {R * source.mu:.3g} reaches the unit circle")
        k = int(math.floor(R / spacing + 1e-9))
        t = spacing * np.arange(-k, k + 1)
        Y1, Y2 = np.meshgrid(t, t)
        rho = np.hypot(Y1, Y2)
        mask = rho <= R + 1e-12
        tau = np.zeros_like(rho)
        tau[mask] = source.tau(rho[mask])
        return BubbleProfile(source.p, (0.0, 0.0), source.log_mu2, source.u0, spacing, R,
                             tau, mask, source="oracle", tolerance=source.err_estimate)
    if not isinstance(source, SolutionRecord):
        raise UsageError("extract_bubble expects a SolutionRecord or a RadialSolution")
    rec = source
    grid = rec.grid
    mu = rec.mu
    _resolution_guard(mu, grid.h, min_points_per_scale)
    d = rec.delta0()
    if R * mu >= d:
        raise BallExitsDomain(f"ball of radius R mu = {R * mu:.3g} exits the domain "
                              f"(peak distance to boundary {d:.3g})")
    jc, ic = grid.node_index(rec.peak)
    k = int(math.floor(R * mu / grid.h + 1e-9))
    arr = rec.u.to_array()
    # rows/cols of the lattice window; the ball lies inside the domain so the
    # window never leaves the lattice
    win = arr[jc - k:jc + k + 1, ic - k:ic + k + 1]
    interior = grid.interior_mask[jc - k:jc + k + 1, ic - k:ic + k + 1]
    spacing = grid.h / mu
    t = spacing * np.arange(-k, k + 1)
    Y1, Y2 = np.meshgrid(t, t)
    mask = (np.hypot(Y1, Y2) <= R + 1e-12) & interior
    M = rec.sup_norm
    tau = 0.5 * rec.p * (1.0 - win / M)
    tau = np.where(mask, tau, 0.0)
    tol = rec.newton_report.tolerance
    return BubbleProfile(rec.p, tuple(rec.peak), rec.log_mu2, M, spacing, R, tau, mask,
                         source="grid", tolerance=float(tol) if tol == tol else 0.0)


@dataclass(frozen=True)
class LiouvilleReport:
    """``eq_residual``: max |lap(tau) - 4 (1 - 2 tau/p)^p|; ``limit_residual``: the same
    against ``4 exp(-2 tau)``; ``lap_min``/``lap_max`` bound the discrete ``lap(tau)``."""

    eq_residual: float
    limit_residual: float
    lap_min: float
    lap_max: float
    n_nodes: int

    def band_ok(self, slack=0.0):
        return self.lap_min > 0.0 and self.lap_max <= 4.0 + slack


def _discrete_laplacian(tau, mask, spacing):
    # standard five-point Laplacian of tau (= positive Laplacian of -tau)
    inner = mask.copy()
    inner[0, :] = inner[-1, :] = inner[:, 0] = inner[:, -1] = False
    inner[1:-1, 1:-1] &= (mask[:-2, 1:-1] & mask[2:, 1:-1] & mask[1:-1, :-2] & mask[1:-1, 2:])
    lap = np.zeros_like(tau)
    lap[1:-1, 1:-1] = (tau[:-2, 1:-1] + tau[2:, 1:-1] + tau[1:-1, :-2] + tau[1:-1, 2:]
                       - 4.0 * tau[1:-1, 1:-1]) / spacing ** 2
    return lap, inner


def source_term(tau, p):
    """``4 (1 - 2 tau / p)^p`` evaluated in log space (``4 exp(-2 tau)`` for infinite p)."""
    if math.isinf(p):
        return 4.0 * np.exp(-2.0 * np.asarray(tau))
    x = 1.0 - 2.0 * np.asarray(tau) / p
    with np.errstate(divide="ignore"):
        return np.where(x > 0, 4.0 * np.exp(p * np.log(np.where(x > 0, x, 1.0))), 0.0)


def liouville_residual(profile):
    """Residuals of the deficit equation and of its Liouville limit on the profile lattice."""
    lap, inner = _discrete_laplacian(profile.tau_grid, profile.mask, profile.spacing)
    vals = lap[inner]
    tau = profile.tau_grid[inner]
    eq = np.abs(vals - source_term(tau, profile.p))
    lim = np.abs(vals - 4.0 * np.exp(-2.0 * tau))
    return LiouvilleReport(float(eq.max()), float(lim.max()), float(vals.min()),
                           float(vals.max()), int(inner.sum()))


def liouville_profile(R, spacing):
    """Exact bubble ``log(1 + |y|^2)`` on a uniform lattice, as a profile (``p = inf``)."""
    k = int(math.floor(R / spacing + 1e-9))
    t = spacing * np.arange(-k, k + 1)
    Y1, Y2 = np.meshgrid(t, t)
    r2 = Y1 ** 2 + Y2 ** 2
    mask = r2 <= R * R + 1e-12
    return BubbleProfile(math.inf, (0.0, 0.0), -math.inf, 1.0, spacing, R,
                         np.where(mask, np.log1p(r2), 0.0), mask, source="exact")


def liouville_mass(R):
    """``int_{|y|<=R} 4 (1 + |y|^2)^-2 dy = 4 pi R^2 / (1 + R^2)``."""
    return 4.0 * math.pi * R * R / (1.0 + R * R)


@dataclass(frozen=True)
class AverageReport:
    radii: np.ndarray
    u_bar: np.ndarray
    t_bar: np.ndarray
    rho: np.ndarray
    delta0: float
    violations: np.ndarray
    rho_min: float

    def rho_at(self, r):
        idx = int(np.argmin(np.abs(self.radii - r)))
        return float(self.rho[idx])


def average_inequality(source, radii=None, n_theta=256, rho_min=0.8):
    """Circle averages of ``u`` and of ``t_p = log(1 + |y - y_p|^2 / mu^2)``.

    ``rho(r) = p (1 - u_bar / M) / (2 t_bar)``, which tends to one as ``p`` grows.
    ``delta0`` is half the distance from the peak to the boundary; it is
    appended to ``radii`` when ``radii`` is None. On grids, radii ``<= 2h`` are skipped.
    """
    n_theta = check_count(n_theta, "n_theta", min_val=8)
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    circle = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    if isinstance(source, RadialSolution):
        p, M, log_mu2 = source.p, source.u0, source.log_mu2
        center = np.zeros(2)
        dist = 1.0
        min_r = 0.0

        def ubar(r):
            return float(np.mean(source.u(np.hypot(*(r * circle).T))))
    else:
        p, M, log_mu2 = source.p, source.sup_norm, source.log_mu2
        center = np.asarray(source.peak)
        dist = source.delta0()
        min_r = 2 * source.grid.h

        def ubar(r):
            return circle_average(source.u, center, r, n_theta)
    delta0 = 0.5 * dist
    radii = [delta0] if radii is None else list(radii)
    radii = np.array([check_scalar(r, "radius", min_val=0) for r in radii])
    if np.any(radii >= dist):
        raise OutOfDomain(f"radii must stay below the peak distance to the boundary {dist:.3g}")
    radii = radii[radii > min_r]
    u_bar = np.array([ubar(r) for r in radii])
    # t_p is radial about the peak; the same quadrature points are used
    t_bar = np.array([
        float(np.mean(np.log1p(np.exp(np.log(r * r) - log_mu2) * np.ones(n_theta))))
        if r > 0 else 0.0 for r in radii])
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = p * (1.0 - u_bar / M) / (2.0 * t_bar)
    return AverageReport(radii, u_bar, t_bar, rho, delta0, rho < rho_min, rho_min)


def aitken(x0, x1, x2):
    """One Aitken delta-squared step; ``None`` when the differences degenerate."""
    d1, d2 = x1 - x0, x2 - x1
    den = d2 - d1
    scale = max(abs(x0), abs(x1), abs(x2), 1e-300)
    if abs(den) <= 1e-14 * scale:
        return None
    return x2 - d2 * d2 / den


def extrapolate(rows):
    """Aitken extrapolation of ``(p, value)`` rows on the last three values.

    Returns ``(limit, error_estimate)``. The error estimate compares the last
    extrapolant with the one from the previous triple (or with the last value when
    only three rows exist). Degenerate differences give ``(last value, 0.0)``.
    """
    rows = [(float(p), float(v)) for p, v in rows]
    if len(rows) < 3:
        raise UsageError("extrapolate needs at least three rows")
    ps = [p for p, _ in rows]
    if any(b <= a for a, b in zip(ps, ps[1:])):
        raise UsageError("rows must have increasing p")
    vals = [v for _, v in rows]
    last = aitken(*vals[-3:])
    if last is None:
        return vals[-1], 0.0
    if len(vals) >= 4:
        prev = aitken(*vals[-4:-1])
        err = abs(last - prev) if prev is not None else abs(last - vals[-1])
    else:
        err = abs(last - vals[-1])
    return last, err


def is_degenerate(rows):
    vals = [float(v) for _, v in rows]
    return len(vals) < 3 or aitken(*vals[-3:]) is None


@dataclass(frozen=True)
class PeakReport:
    p: float
    peaks: tuple
    masses: tuple
    beta: float
    threshold: float

    @property
    def n(self):
        return len(self.peaks)

    @property
    def no_peaks(self):
        return self.n == 0


def detect_peaks(record, beta=None, threshold=0.5):
    """Local maxima above ``threshold * sup_norm``, merged within distance ``beta``.

    Each retained peak carries the maximum of ``u`` over its ``beta``-ball.
    """
    grid = record.grid
    if beta is None:
        beta = 0.1 * grid.domain.diameter
    beta = check_scalar(beta, "beta", min_val=2 * grid.h, include_min=False)
    threshold = check_scalar(threshold, "threshold", min_val=0)
    arr = record.u.to_array()
    pad = np.pad(arr, 1, constant_values=-np.inf)
    c = pad[1:-1, 1:-1]
    local = grid.interior_mask.copy()
    for dj in (-1, 0, 1):
        for di in (-1, 0, 1):
            if dj or di:
                local &= c >= pad[1 + dj:pad.shape[0] - 1 + dj, 1 + di:pad.shape[1] - 1 + di]
    local &= arr > threshold * record.sup_norm
    J, I = np.nonzero(local)
    # highest first, ties in row-major order
    order = np.lexsort((I, J, -arr[J, I]))
    pts = grid.node_points
    kept = []
    for k in order:
        x = pts[J[k], I[k]]
        if all(np.hypot(*(x - y)) >= beta for y in kept):
            kept.append(x)
    masses = []
    nodes = grid.points
    for x in kept:
        near = np.hypot(nodes[:, 0] - x[0], nodes[:, 1] - x[1]) <= beta
        masses.append(float(record.u.values[near].max()))
    return PeakReport(record.p, tuple(tuple(map(float, x)) for x in kept), tuple(masses),
                      beta, threshold)


@dataclass(frozen=True)
class QuantizationReport:
    rows: tuple
    energy_limit: float
    energy_error: float
    peak_limit: float
    peak_error: float
    n_bubbles: int
    masses: tuple = ()

    def mass_bound_ok(self, tol):
        return all(m >= SQRT_E - tol for m in self.masses)


def quantization_report(rows, masses=()):
    """Extrapolated limits from ``(p, energy, sup_norm)`` rows."""
    rows = tuple((float(p), float(e), float(m)) for p, e, m in rows)
    if len(rows) >= 3:
        e_lim, e_err = extrapolate([(p, e) for p, e, _ in rows])
        m_lim, m_err = extrapolate([(p, m) for p, _, m in rows])
    else:
        e_lim, e_err = rows[-1][1], math.nan
        m_lim, m_err = rows[-1][2], math.nan
    n = max(1, int(round(e_lim / EIGHT_PI_E)))
    return QuantizationReport(rows, e_lim, e_err, m_lim, m_err, n, tuple(masses))


def mup2_constants(rows):
    """``(p, C_p, ratio_p)`` with ``C_p = |log(1/mu^2) - p log M| / log p`` and
    ``ratio_p = log(1/mu^2) / (p log M)`` from ``(p, sup_norm)`` rows."""
    out = []
    for p, M in rows:
        lm = math.log(8.0) - math.log(p) - (p - 1.0) * math.log(M)
        out.append((p, abs(-lm - p * math.log(M)) / math.log(p), -lm / (p * math.log(M))))
    return out


class BubbleAnalyzer(BaseEstimator, TransformerMixin):
    """Transforms records (grid or oracle) into quantization-table rows.

    Each row holds ``p, E_p, sup_norm, n_peaks, masses, log_mu2, tau_dev_R, rho_delta0``;
    grid records whose bubble is unresolved get ``nan`` deviation and ``unresolved=True``.
    """

    def __init__(self, R=10.0, beta=None, threshold=0.5, radii=None, rho_min=0.8,
                 spacing=0.1, grid=None):
        self.R = R
        self.beta = beta
        self.threshold = threshold
        self.radii = radii
        self.rho_min = rho_min
        self.spacing = spacing
        self.grid = grid

    def fit(self, X=None, y=None):
        return self

    def _row(self, src):
        from .lane_emden import record_from_radial
        row = {"p": src.p}
        if isinstance(src, RadialSolution):
            row.update(E_p=src.energy, sup_norm=src.u0, log_mu2=src.log_mu2)
            rec = record_from_radial(src, self.grid) if self.grid is not None else None
        else:
            row.update(E_p=src.energy, sup_norm=src.sup_norm, log_mu2=src.log_mu2)
            rec = src
        if rec is not None:
            peaks = detect_peaks(rec, self.beta, self.threshold)
            row["n_peaks"] = peaks.n
            row["masses"] = peaks.masses
        else:
            row["n_peaks"] = 1
            row["masses"] = (src.u0,)
        try:
            prof = extract_bubble(src, self.R, self.spacing)
            row["tau_dev_R"] = prof.tau_deviation()
            row["unresolved"] = False
        except ScaleUnderflow:
            row["tau_dev_R"] = math.nan
            row["unresolved"] = True
        rep = average_inequality(src, None, rho_min=self.rho_min)
        row["rho_delta0"] = float(rep.rho[0]) if len(rep.rho) else math.nan
        return row

    def transform(self, X):
        return [self._row(src) for src in X]
