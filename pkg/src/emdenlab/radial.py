"""Shooting solver for the radial Lane-Emden problem on the unit disk.

With ``u(r) = a (1 - 2 tau(rho) / p)``, ``rho = r / mu`` and ``mu^2 p a^(p-1) = 8`` the
radial equation ``u'' + u'/r = -u^p`` becomes

    tau_ss = 4 exp(2 s) (1 - 2 tau / p)^p,    s = log rho,

which stays well scaled for any exponent. The first zero of ``u`` is where
``tau = p / 2``; the Lane-Emden scaling then maps the solution onto the unit disk.
The energy integrals are carried as extra ODE components.
"""
from dataclasses import dataclass, field
import logging
import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq
from sklearn.base import BaseEstimator

from .exceptions import NoZeroFound, UsageError
from .validation import check_increasing, check_scalar

logger = logging.getLogger(__name__)

DEFAULT_ODE_TOL = 1e-11
START_RADIUS = 1e-8


def _rhs(p):
    def f(s, y):
        tau, tau_s = y[0], y[1]
        x = 1.0 - 2.0 * tau / p
        if x > 0:
            lx = math.log(x)
            w = math.exp(2.0 * s + p * lx)
            w1 = w * x
        else:
            w = w1 = 0.0
        return [tau_s, 4.0 * w, tau_s * tau_s, w1]
    return f


@dataclass(frozen=True, eq=False)
class RadialSolution:
    """Normalised radial solution on the unit disk.

    ``u0`` is the centre (= sup) value, ``log_r0`` the log of the first zero before
    rescaling, ``energy = p * int |u'|^2`` and ``nonlinear_energy = p * int u^(p+1)``.
    """

    p: float
    u0: float
    r0: float
    log_r0: float
    energy: float
    nonlinear_energy: float
    log_mu2: float
    err_estimate: float
    s_zero: float = field(repr=False)
    _dense: object = field(repr=False, default=None)
    n_samples: int = field(repr=False, default=201)

    @property
    def mu(self):
        """Concentration scale of the unit-disk solution."""
        return math.exp(0.5 * self.log_mu2)

    def tau(self, y):
        """Rescaled deficit ``tau_p`` at rescaled radius ``|y|`` (array-like)."""
        rho = np.abs(np.asarray(y, dtype=float))
        out = np.empty_like(rho)
        small = rho < START_RADIUS
        r2 = rho[small] ** 2
        out[small] = r2 - 0.5 * r2 * r2
        if np.any(~small):
            s = np.log(rho[~small])
            if np.any(s > self.s_zero * (1 + 1e-12)):
                raise UsageError("rescaled radius beyond the unit disk")
            out[~small] = self._dense(np.minimum(s, self.s_zero))[0]
        return out

    def tau_s(self, y):
        """``rho d tau / d rho`` at rescaled radius ``|y|``."""
        rho = np.abs(np.asarray(y, dtype=float))
        out = np.empty_like(rho)
        small = rho < START_RADIUS
        r2 = rho[small] ** 2
        out[small] = 2 * r2 - 2 * r2 * r2
        if np.any(~small):
            s = np.minimum(np.log(rho[~small]), self.s_zero)
            out[~small] = self._dense(s)[1]
        return out

    def u(self, r):
        """Solution value at radius ``r`` in ``[0, 1]``."""
        r = np.asarray(r, dtype=float)
        return self.u0 * (1.0 - 2.0 * self.tau(r / self.mu) / self.p)

    def du(self, r):
        """Radial derivative at radius ``r`` in ``(0, 1]``."""
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            d = -self.u0 * 2.0 / self.p * self.tau_s(r / self.mu) / r
        return np.where(r > 0, d, 0.0)

    @property
    def samples(self):
        """``(r, u(r), u'(r))`` rows on a grid graded towards the peak."""
        t = np.linspace(0.0, 1.0, self.n_samples)
        # geometric in r/mu near the centre, uniform in r further out
        r = np.unique(np.concatenate([
            self.mu * np.geomspace(1e-3, 1e3, self.n_samples // 2), t]))
        r = r[r <= 1.0]
        return np.column_stack([r, self.u(r), self.du(r)])

    def ode_residual(self, n=200):
        """Integrated residual of ``tau_ss = 4 e^(2s) (1 - 2 tau/p)^p`` between samples.

        For consecutive sample points ``a < b`` (uniform in ``s``) returns
        ``|tau_s(b) - tau_s(a) - int_a^b rhs ds|`` divided by ``max(1, |tau_s(b)|)``, the
        integral taken by 16-point Gauss-Legendre on the dense output.
        """
        # dense across the bubble, sparse on the logarithmic tail
        s_mid = min(self.s_zero, 20.0)
        s = np.linspace(math.log(START_RADIUS), s_mid, n + 1)
        if self.s_zero > s_mid:
            s = np.concatenate([s, np.linspace(s_mid, self.s_zero, n // 4 + 1)[1:]])
        n = len(s) - 1
        x, w = np.polynomial.legendre.leggauss(16)
        f = _rhs(self.p)
        ts = self._dense(s)[1]
        out = np.empty(n)
        for k in range(n):
            a, b = s[k], s[k + 1]
            nodes = 0.5 * (b - a) * x + 0.5 * (a + b)
            vals = self._dense(nodes)
            rhs = np.array([f(t, vals[:, j])[1] for j, t in enumerate(nodes)])
            integral = 0.5 * (b - a) * (w @ rhs)
            out[k] = abs(ts[k + 1] - ts[k] - integral) / max(1.0, abs(ts[k + 1]))
        return out

    def as_row(self):
        return {"p": self.p, "u0": self.u0, "r0": self.r0, "energy": self.energy,
                "log_mu2": self.log_mu2, "err_estimate": self.err_estimate}


def _integrate(p, ode_tol, amplitude):
    mu = math.sqrt(8.0 / (p * amplitude ** (p - 1.0))) if p * math.log(amplitude) < 700 \
        else math.exp(0.5 * (math.log(8.0 / p) - (p - 1.0) * math.log(amplitude)))
    # start at a fixed rescaled radius: the tau equation does not see the amplitude
    s0 = math.log(START_RADIUS)
    rho2 = math.exp(2 * s0)
    y0 = [rho2 - 0.5 * rho2 ** 2, 2 * rho2 - 2 * rho2 ** 2, rho2 ** 2, 0.5 * rho2]

    def hit_zero(s, y):
        return y[0] - 0.5 * p

    hit_zero.terminal = True
    hit_zero.direction = 1
    # tau grows like 2 s past the bubble, so the zero sits near s = p / 4
    s_max = s0 + p + 50.0
    sol = solve_ivp(_rhs(p), (s0, s_max), y0, method="DOP853", rtol=ode_tol,
                    atol=ode_tol * 1e-2, events=hit_zero, dense_output=True)
    if sol.status != 1 or len(sol.t_events[0]) == 0:
        raise NoZeroFound(f"p={p}: no zero of u before s={s_max:.1f} ({sol.message})")
    se = float(sol.t_events[0][0])
    lo, hi = max(sol.t[-2], se - 1e-2), min(sol.t[-1], se + 1e-2)
    g = lambda s: sol.sol(s)[0] - 0.5 * p
    if g(lo) < 0 < g(hi):
        se = brentq(g, lo, hi, xtol=1e-13)
    return sol, se, mu


def shoot(p, ode_tol=DEFAULT_ODE_TOL, amplitude=1.0, error_estimate=True):
    """Integrate the radial problem, locate the first zero and rescale to the unit disk."""
    p = check_scalar(p, "p", min_val=1, include_min=False)
    ode_tol = check_scalar(ode_tol, "ode_tol", min_val=0, include_min=False)
    amplitude = check_scalar(amplitude, "amplitude", min_val=0, include_min=False)
    sol, se, mu = _integrate(p, ode_tol, amplitude)
    y_end = sol.sol(se)
    log_r0 = math.log(mu) + se
    log_u0 = math.log(amplitude) + 2.0 * log_r0 / (p - 1.0)
    u0 = math.exp(log_u0)
    lam2 = u0 * u0
    energy = 8.0 * math.pi / p * lam2 * y_end[2]
    nonlinear = 16.0 * math.pi * lam2 * y_end[3]
    err = 0.0
    if error_estimate:
        coarse = shoot(p, ode_tol * 10, amplitude, error_estimate=False)
        err = abs(coarse.u0 - u0)
    return RadialSolution(
        p=p, u0=u0, r0=math.exp(log_r0) if log_r0 < 700 else math.inf, log_r0=log_r0,
        energy=energy, nonlinear_energy=nonlinear,
        log_mu2=math.log(8.0) - math.log(p) - (p - 1.0) * log_u0,
        err_estimate=err, s_zero=se, _dense=sol.sol)


def oracle_sweep(p_list, ode_tol=DEFAULT_ODE_TOL, jobs=1):
    """Independent shoots for an increasing list of exponents."""
    ps = check_increasing(p_list, "p_list")
    if jobs and jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(shoot, ps, [ode_tol] * len(ps)))
    return [shoot(p, ode_tol) for p in ps]


class RadialOracle(BaseEstimator):
    """Estimator wrapper: ``fit(p_list)`` shoots every exponent into ``solutions_``."""

    def __init__(self, ode_tol=DEFAULT_ODE_TOL, jobs=1):
        self.ode_tol = ode_tol
        self.jobs = jobs

    def fit(self, p_list, y=None):
        self.solutions_ = oracle_sweep(p_list, self.ode_tol, self.jobs)
        self.p_ = np.array([s.p for s in self.solutions_])
        return self

    def predict(self, r):
        """Profile of the last solution at radii ``r``."""
        from sklearn.utils.validation import check_is_fitted
        check_is_fitted(self, "solutions_")
        return self.solutions_[-1].u(r)

    def __getitem__(self, p):
        from sklearn.utils.validation import check_is_fitted
        check_is_fitted(self, "solutions_")
        for s in self.solutions_:
            if s.p == p:
                return s
        raise KeyError(p)
