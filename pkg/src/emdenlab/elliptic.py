"""Five-point positive Laplacian with Dirichlet data and a Jacobi-preconditioned CG.

The operator is ``A u = (4 u_ij - u_E - u_W - u_N - u_S) / h^2``, i.e. minus the usual
Laplacian, so ``A`` is symmetric positive definite on interior nodes.
"""
from dataclasses import dataclass
import logging

import numpy as np
from scipy import sparse

from .exceptions import GridMismatch, NoConvergence, UsageError
from .geometry import GridField
from .validation import check_scalar

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class LinearSolveReport:
    iterations: int
    residual_norm: float
    tolerance: float


class DiscreteLaplacian:
    """``A + diag(shift)`` on the interior nodes of ``grid`` with ``shift >= 0``."""

    def __init__(self, grid, shift=None):
        self.grid = grid
        n = grid.n_interior
        if shift is None:
            shift = np.zeros(n)
        shift = np.asarray(shift, dtype=float)
        if shift.ndim == 0:
            shift = np.full(n, float(shift))
        if shift.shape != (n,):
            raise GridMismatch("shift must have one entry per interior node")
        if np.any(shift < 0) or not np.all(np.isfinite(shift)):
            raise UsageError("diagonal shift must be finite and nonnegative")
        self.shift = shift

    @property
    def matrix(self):
        return laplacian_matrix(self.grid) + sparse.diags(self.shift)

    @property
    def diagonal(self):
        return 4.0 / self.grid.h ** 2 + self.shift

    def matvec(self, v):
        return laplacian_matrix(self.grid) @ v + self.shift * v

    def shifted(self, shift):
        return DiscreteLaplacian(self.grid, shift)


def laplacian_matrix(grid):
    """Sparse CSR matrix of ``A`` (no shift); cached per grid."""
    cached = grid.__dict__.get("_laplacian_csr")
    if cached is None:
        off, _ = grid._stencil
        n = grid.n_interior
        cached = ((4.0 * sparse.identity(n, format="csr") - off) / grid.h ** 2).tocsr()
        grid.__dict__["_laplacian_csr"] = cached
    return cached


def boundary_rhs(grid, boundary_data):
    """Contribution of Dirichlet data to the right-hand side of ``A u = f``."""
    if boundary_data is None:
        return np.zeros(grid.n_interior)
    table = _boundary_table(grid, boundary_data)
    _, bnd = grid._stencil
    return (bnd @ table.ravel()) / grid.h ** 2


def _boundary_table(grid, boundary_data):
    if callable(boundary_data):
        return grid.boundary_table(boundary_data)
    table = np.asarray(boundary_data, dtype=float)
    if table.shape != grid.shape:
        raise GridMismatch(f"boundary table shape {table.shape} != lattice {grid.shape}")
    if not np.all(np.isfinite(table[grid.boundary_mask])):
        raise UsageError("boundary data must be finite")
    table = table.copy()
    table[~grid.boundary_mask] = 0.0
    return table


def apply_laplacian(u, boundary_data=None):
    """Five-point positive Laplacian of ``u`` at interior nodes.

    ``boundary_data`` is a callable on points or a full-lattice table; when omitted,
    the boundary table attached to ``u`` (or zero) is used.
    """
    if not isinstance(u, GridField):
        raise GridMismatch("apply_laplacian expects a GridField")
    grid = u.grid
    if boundary_data is None:
        boundary_data = u.boundary
    vals = laplacian_matrix(grid) @ u.values - boundary_rhs(grid, boundary_data)
    return GridField(grid, vals)


def pcg(matvec, rhs, diag, tol=DEFAULT_TOL, x0=None, maxiter=None):
    """Jacobi-preconditioned conjugate gradients on an SPD operator.

    Stops when ``||r|| <= tol * ||rhs||``. Returns ``(x, report)``; raises
    ``NoConvergence`` after ``maxiter`` iterations.
    """
    n = rhs.shape[0]
    if maxiter is None:
        maxiter = max(100, int(20 * np.sqrt(n)))
    bnorm = np.linalg.norm(rhs)
    target = tol * bnorm
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return np.zeros(n), LinearSolveReport(0, 0.0, tol)
    r = rhs - matvec(x) if x0 is not None else rhs.copy()
    inv_d = 1.0 / diag
    z = inv_d * r
    d = z.copy()
    rz = r @ z
    rnorm = np.linalg.norm(r)
    k = 0
    while rnorm > target:
        if k >= maxiter:
            raise NoConvergence(
                f"CG stopped after {k} iterations at relative residual {rnorm / bnorm:.3e}")
        Ad = matvec(d)
        dAd = d @ Ad
        if dAd <= 0:
            raise NoConvergence("operator is not positive definite (d'Ad <= 0)")
        alpha = rz / dAd
        x += alpha * d
        r -= alpha * Ad
        z = inv_d * r
        rz_new = r @ z
        d *= rz_new / rz
        d += z
        rz = rz_new
        rnorm = np.linalg.norm(r)
        k += 1
    return x, LinearSolveReport(k, float(rnorm / bnorm), tol)


def solve_spd(A, rhs, tol=DEFAULT_TOL, x0=None, maxiter=None):
    """Solve ``(A + D) x = rhs`` for a :class:`DiscreteLaplacian` with ``D >= 0``."""
    if not isinstance(A, DiscreteLaplacian):
        raise UsageError("solve_spd expects a DiscreteLaplacian")
    tol = check_scalar(tol, "tol", min_val=0, include_min=False)
    if isinstance(rhs, GridField):
        if not rhs.grid.same_as(A.grid):
            raise GridMismatch("rhs lives on a different grid")
        b = rhs.values
    else:
        b = np.asarray(rhs, dtype=float)
    if b.shape != (A.grid.n_interior,):
        raise GridMismatch("rhs size does not match the operator")
    guess = x0.values if isinstance(x0, GridField) else x0
    x, report = pcg(A.matvec, b, A.diagonal, tol=tol, x0=guess, maxiter=maxiter)
    return GridField(A.grid, x), report


def solve_poisson(grid, rhs, boundary_data=None, tol=DEFAULT_TOL, x0=None):
    """Solve ``A u = f`` with Dirichlet data; returns ``u`` with the data attached."""
    f = rhs.values if isinstance(rhs, GridField) else np.asarray(rhs, dtype=float)
    b = f + boundary_rhs(grid, boundary_data)
    u, _ = solve_spd(DiscreteLaplacian(grid), b, tol=tol, x0=x0)
    table = None if boundary_data is None else _boundary_table(grid, boundary_data)
    return GridField(grid, u.values, table)


def solve_laplace(grid, boundary_data, tol=DEFAULT_TOL, x0=None):
    """Discrete harmonic extension of Dirichlet data into the interior."""
    return solve_poisson(grid, np.zeros(grid.n_interior), boundary_data, tol=tol, x0=x0)
