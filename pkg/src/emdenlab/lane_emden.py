"""Positive least-energy solutions of ``A u = u^p`` with zero Dirichlet data.

A Sobolev-gradient minimisation at a moderate exponent provides the starting
branch point; damped Newton with warm starts then continues the solution in ``p``.
All powers of ``u`` are evaluated as ``exp(k log u)``.
"""
from dataclasses import dataclass, field
import logging
import math

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla
from sklearn.base import BaseEstimator

from .elliptic import DEFAULT_TOL, DiscreteLaplacian, laplacian_matrix, solve_spd
from .exceptions import (JacobianSolveFailed, NewtonDiverged, NoConvergence, NonPositive,
                         StepUnderflow, UsageError)
from .geometry import Grid, GridField
from .validation import check_count, check_increasing, check_scalar

logger = logging.getLogger(__name__)

MIN_LOG_STEP = 1e-4


@dataclass(frozen=True)
class SolveParams:
    p_start: float = 3.0
    p_targets: tuple = (10.0,)
    continuation_ratio: float = 1.15
    newton_tol: float = 1e-9
    max_newton_steps: int = 40
    damping_min: float = 1.0 / 1024
    gd_tol: float = 1e-10

    def __post_init__(self):
        check_scalar(self.p_start, "p_start", min_val=1, include_min=False)
        targets = tuple(check_increasing(self.p_targets, "p_targets"))
        object.__setattr__(self, "p_targets", targets)
        if targets[0] < self.p_start:
            raise UsageError("p_targets[0] must be >= p_start")
        check_scalar(self.continuation_ratio, "continuation_ratio", min_val=1, max_val=1.5,
                     include_min=False)
        check_scalar(self.newton_tol, "newton_tol", min_val=0, include_min=False)
        check_count(self.max_newton_steps, "max_newton_steps")
        check_scalar(self.damping_min, "damping_min", min_val=0, max_val=1, include_min=False)
        check_scalar(self.gd_tol, "gd_tol", min_val=0, include_min=False)

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise UsageError(f"unknown solve keys: {sorted(extra)}")
        d = dict(d)
        if "p_targets" in d:
            d["p_targets"] = tuple(d["p_targets"])
        return cls(**d)


@dataclass(frozen=True)
class NewtonReport:
    steps: int
    residual: float
    tolerance: float


@dataclass(frozen=True, eq=False)
class SolutionRecord:
    p: float
    u: GridField
    energy: float
    sup_norm: float
    peak: tuple
    log_mu2: float
    newton_report: NewtonReport
    nonlinear_energy: float = field(default=float("nan"))

    @property
    def grid(self):
        return self.u.grid

    @property
    def mu(self):
        return math.exp(0.5 * self.log_mu2)

    @property
    def residual(self):
        return self.newton_report.residual

    @property
    def peak_index(self):
        """Interior index of the peak node."""
        return int(np.argmax(self.u.values))

    def delta0(self):
        """Distance from the peak to the boundary."""
        return float(self.grid.domain.distance_to_boundary(np.asarray(self.peak)))


def log_mu2(p, sup_norm):
    """``log mu_p^2`` from ``mu_p^2 p sup^(p-1) = 8``, safe for huge ``p``."""
    return math.log(8.0) - math.log(p) - (p - 1.0) * math.log(sup_norm)


def _powers(u, p):
    logu = np.log(u)
    return np.exp(p * logu), np.exp((p - 1.0) * logu)


def residual(u, p):
    """``A u - u^p`` at interior nodes."""
    up, _ = _powers(u.values, p)
    return laplacian_matrix(u.grid) @ u.values - up


def effective_tol(newton_tol, p, sup_norm):
    return newton_tol * max(1.0, math.exp(min(p * math.log(sup_norm), 700.0)))


def make_record(u, p, report):
    grid = u.grid
    v = u.values
    A = laplacian_matrix(grid)
    k = int(np.argmax(v))
    sup = float(v[k])
    h2 = grid.h ** 2
    energy = p * h2 * float(v @ (A @ v))
    up, _ = _powers(v, p)
    nonlinear = p * h2 * float(up @ v)
    return SolutionRecord(p=float(p), u=u, energy=energy, sup_norm=sup,
                          peak=tuple(map(float, grid.points[k])),
                          log_mu2=log_mu2(p, sup), newton_report=report,
                          nonlinear_energy=nonlinear)


def solve_minimizer(grid, p, gd_tol=1e-10, max_iter=2000):
    """Starting guess for Newton from the constrained Dirichlet-energy minimiser.

    Minimises ``<Av, v>`` over ``v >= 0`` with ``sum v^(p+1) h^2 = 1`` by
    Sobolev-gradient steps (``v <- normalise(A^-1 v^p)``), then rescales by the
    Lagrange multiplier so that ``A u ~ u^p``.
    """
    p = check_scalar(p, "p", min_val=1, include_min=False)
    h2 = grid.h ** 2
    A = DiscreteLaplacian(grid)
    # torsion function as a positive, symmetric start
    v, _ = solve_spd(A, np.ones(grid.n_interior))
    v = v.values

    def normalise(w):
        s = np.sum(w ** (p + 1)) * h2
        return w / s ** (1.0 / (p + 1))

    v = normalise(v)
    for it in range(max_iter):
        w, _ = solve_spd(A, v ** p, x0=v)
        w = np.maximum(w.values, 0.0)
        if not np.any(w > 0):
            raise NonPositive("minimiser collapsed to zero")
        w = normalise(w)
        change = np.max(np.abs(w - v)) / np.max(w)
        v = w
        if change <= gd_tol:
            break
    else:
        logger.warning("minimiser stopped after %d iterations (change %.2e)", max_iter, change)
    if np.any(v <= 0):
        # nodes next to the boundary can underflow; lift them to keep Newton positive
        v = np.maximum(v, np.min(v[v > 0]))
    lam = float(v @ (laplacian_matrix(grid) @ v)) * h2 / (np.sum(v ** (p + 1)) * h2)
    return GridField(grid, lam ** (1.0 / (p - 1.0)) * v)


def _jacobian_solve(grid, u, p, rhs, upm1, rtol=DEFAULT_TOL):
    # the Jacobian is symmetric but indefinite (Morse index one): MINRES with an
    # SPD diagonal preconditioner, sparse LU as the fallback
    A = laplacian_matrix(grid)
    shift = p * upm1
    J = (A - sparse.diags(shift)).tocsr()
    inv_diag = 1.0 / (4.0 / grid.h ** 2 + shift)
    prec = spla.LinearOperator(J.shape, matvec=lambda x: inv_diag * x, dtype=float)
    x, info = spla.minres(J, rhs, M=prec, rtol=rtol, maxiter=20 * J.shape[0])
    if info == 0 and np.all(np.isfinite(x)):
        return x
    logger.info("MINRES failed (info=%s), falling back to sparse LU", info)
    try:
        x = spla.splu(J.tocsc()).solve(rhs)
    except RuntimeError as exc:
        raise JacobianSolveFailed(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise JacobianSolveFailed("singular Newton Jacobian")
    return x


def newton_refine(u0, p, params=None):
    """Damped Newton on ``F(u) = A u - u^p`` from a positive start.

    A step is accepted only if it keeps every node positive and decreases
    ``||F||_inf``; otherwise it is halved down to ``params.damping_min``.
    """
    params = params or SolveParams(p_start=p, p_targets=(p,))
    p = check_scalar(p, "p", min_val=1, include_min=False)
    grid = u0.grid
    u = np.array(u0.values, dtype=float)
    if np.any(u <= 0):
        raise NonPositive("Newton start must be positive")
    A = laplacian_matrix(grid)
    up, upm1 = _powers(u, p)
    F = A @ u - up
    res = float(np.max(np.abs(F)))
    steps = 0
    polish = 0
    while True:
        tol = effective_tol(params.newton_tol, p, float(u.max()))
        if res <= tol:
            # a couple of extra steps drive the residual to round-off, which the
            # discrete energy identity needs
            if polish >= 2 or res <= 1e-6 * tol:
                break
            polish += 1
        if steps >= params.max_newton_steps:
            if res <= tol:
                break
            raise NewtonDiverged(
                f"p={p}: no convergence in {steps} Newton steps (residual {res:.3e})")
        # inexact Newton far from the root, tight solves near it
        rtol = 1e-6 if res > 1e3 * tol else DEFAULT_TOL
        delta = _jacobian_solve(grid, u, p, -F, upm1, rtol)
        lam = 1.0
        while True:
            trial = u + lam * delta
            if np.all(trial > 0):
                tup, tupm1 = _powers(trial, p)
                tF = A @ trial - tup
                tres = float(np.max(np.abs(tF)))
                if tres < res:
                    break
            lam *= 0.5
            if lam < params.damping_min:
                if res <= tol:
                    tres = None
                    break
                raise NewtonDiverged(
                    f"p={p}: damping fell below {params.damping_min} (residual {res:.3e})")
        if tres is None:
            break
        u, up, upm1, F, res = trial, tup, tupm1, tF, tres
        steps += 1
        if u.max() < 1e-3:
            raise NewtonDiverged(f"p={p}: iterate collapsing to the trivial root")
    report = NewtonReport(steps, res, tol)
    return make_record(GridField(grid, u), p, report)


def continue_in_p(grid, params, start=None):
    """Continue the least-energy branch from ``p_start`` through every target.

    ``start`` resumes from an existing record at ``p_start`` instead of the
    minimiser. Returns one :class:`SolutionRecord` per entry of ``params.p_targets``.
    """
    if start is None:
        u = solve_minimizer(grid, params.p_start, params.gd_tol)
        record = newton_refine(u, params.p_start, params)
    else:
        if start.p != params.p_start or not start.grid.same_as(grid):
            raise UsageError("start record must live on this grid at p_start")
        record = start
    previous = None
    p = params.p_start
    records = []
    max_log_step = math.log(params.continuation_ratio)
    log_step = max_log_step
    for target in params.p_targets:
        while p < target:
            p_next = min(p * math.exp(log_step), target)
            try:
                nxt = newton_refine(_predict(previous, record, p_next), p_next, params)
            except (NewtonDiverged, JacobianSolveFailed, NonPositive) as exc:
                log_step *= 0.5
                logger.info("step to p=%.6g failed (%s); log step now %.3e", p_next, exc,
                            log_step)
                if log_step < MIN_LOG_STEP:
                    raise StepUnderflow(
                        f"continuation step underflow at p={p:.6g} towards {target}") from exc
                continue
            previous, record, p = record, nxt, p_next
            log_step = min(max_log_step, 2 * log_step)
        if p == target:
            records.append(record)
    return records


def _predict(previous, record, p_next):
    # secant extrapolation of log u in log p; stays positive by construction
    u = record.u.values
    if previous is None:
        return GridField(record.grid, u)
    t = math.log(p_next / record.p) / math.log(record.p / previous.p)
    logu = np.log(u)
    return GridField(record.grid, np.exp(logu + t * (logu - np.log(previous.u.values))))


class LaneEmdenSolver(BaseEstimator):
    """Estimator wrapper around :func:`continue_in_p`.

    ``fit(grid)`` runs the continuation and stores the records in ``records_``;
    ``predict(points)`` samples the solution at the last target.
    """

    def __init__(self, p_start=3.0, p_targets=(10.0,), continuation_ratio=1.15,
                 newton_tol=1e-9, max_newton_steps=40, damping_min=1.0 / 1024, gd_tol=1e-10):
        self.p_start = p_start
        self.p_targets = p_targets
        self.continuation_ratio = continuation_ratio
        self.newton_tol = newton_tol
        self.max_newton_steps = max_newton_steps
        self.damping_min = damping_min
        self.gd_tol = gd_tol

    def _params(self):
        return SolveParams(**self.get_params())

    def fit(self, grid, y=None):
        if not isinstance(grid, Grid):
            raise UsageError("LaneEmdenSolver.fit expects a Grid")
        self.records_ = continue_in_p(grid, self._params())
        self.grid_ = grid
        return self

    def predict(self, points):
        from sklearn.utils.validation import check_is_fitted

        from .geometry import sample_bilinear
        check_is_fitted(self, "records_")
        return sample_bilinear(self.records_[-1].u, points)

    def record_at(self, p):
        from sklearn.utils.validation import check_is_fitted
        check_is_fitted(self, "records_")
        for rec in self.records_:
            if rec.p == p:
                return rec
        raise KeyError(p)


def record_from_radial(solution, grid):
    """Oracle-backed record: a radial solution sampled on the nodes of a disk grid.

    Energy, sup norm and scale come from the oracle itself; the nodal values are
    exact samples, so the record does not satisfy the discrete equation.
    """
    dom = grid.domain
    if dom.kind != "disk":
        raise UsageError("radial solutions live on disks")
    r = np.hypot(grid.points[:, 0], grid.points[:, 1]) / dom.radius
    scale = dom.radius ** (-2.0 / (solution.p - 1.0))
    vals = scale * solution.u(np.minimum(r, 1.0))
    u = GridField(grid, np.maximum(vals, np.finfo(float).tiny))
    sup = scale * solution.u0
    k = int(np.argmax(u.values))
    report = NewtonReport(0, float("nan"), float("nan"))
    return SolutionRecord(p=solution.p, u=u, energy=solution.energy, sup_norm=sup,
                          peak=tuple(map(float, grid.points[k])),
                          log_mu2=log_mu2(solution.p, sup), newton_report=report,
                          nonlinear_energy=solution.nonlinear_energy)
