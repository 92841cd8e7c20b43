"""Dense linear algebra and bounded simplex minimization.

Everything here works on plain numpy arrays.  Matrices are dense; the largest
systems met in practice are the n x n error covariances (n a few thousand).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize

# pivots below PIVOT_FLOOR * trace / order are rejected
PIVOT_FLOOR = 1e-12
RIDGE = 1e-8


class NumericsError(ValueError):
    pass


class NotPositiveDefinite(NumericsError):
    pass


class MaxIterationsExceeded(RuntimeWarning):
    pass


def _check_square(a):
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[-1] < 1:
        raise ValueError("matrix order must be at least 1")
    return a


def add_ridge(a, scale=RIDGE):
    """Return ``a + scale * trace(a)/order * I`` (explicit opt-in regularization)."""
    a = _check_square(a)
    k = a.shape[-1]
    tr = np.trace(a, axis1=-2, axis2=-1) / k
    return a + (scale * tr)[..., None, None] * np.eye(k)


def cholesky(a):
    """Lower Cholesky factor ``L`` with ``L @ L.T == a``.

    Accepts a single matrix or a stack of matrices (``(..., k, k)``).  A pivot
    that falls below ``1e-12 * trace(a) / order`` raises
    :class:`NotPositiveDefinite`; no regularization is applied silently, use
    :func:`add_ridge` first if that is what you want.
    """
    a = _check_square(a)
    k = a.shape[-1]
    floor = PIVOT_FLOOR * np.abs(np.trace(a, axis1=-2, axis2=-1)) / k
    try:
        low = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    piv = np.diagonal(low, axis1=-2, axis2=-1) ** 2
    if np.any(~np.isfinite(piv)) or np.any(piv <= floor[..., None]):
        raise NotPositiveDefinite("pivot below jitter floor")
    return low


def solve_lower(low, b):
    """Solve ``L x = b`` for lower-triangular ``L``."""
    return linalg.solve_triangular(low, b, lower=True, check_finite=False)


def solve_upper_t(low, b):
    """Solve ``L.T x = b`` for lower-triangular ``L``."""
    return linalg.solve_triangular(low, b, lower=True, trans="T", check_finite=False)


def cho_solve(low, b):
    return solve_upper_t(low, solve_lower(low, b))


def spd_solve(a, b):
    """Solve ``a x = b`` for symmetric positive definite ``a``.

    Stacks are supported: ``a`` of shape ``(..., k, k)`` with ``b`` of shape
    ``(..., k)`` or ``(..., k, m)``.
    """
    a = _check_square(a)
    b = np.asarray(b, dtype=float)
    low = cholesky(a)
    if a.ndim == 2:
        if b.shape[0] != a.shape[0]:
            raise ValueError("dimension mismatch between matrix and right-hand side")
        return cho_solve(low, b)
    vec = b.ndim == a.ndim - 1
    rhs = b[..., None] if vec else b
    y = np.linalg.solve(low, rhs)
    x = np.linalg.solve(np.swapaxes(low, -1, -2), y)
    return x[..., 0] if vec else x


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    nit: int
    converged: bool

    @property
    def warning(self):
        return not self.converged


def nelder_mead(objective, start, bounds=None, tol=1e-8, max_iter=2000):
    """Minimize ``objective`` with a bounded Nelder-Mead simplex.

    Proposals outside ``bounds`` (a sequence of ``(low, high)`` pairs) are
    clamped to the box.  When ``max_iter`` is hit the best point found is
    still returned, with ``converged=False`` and a
    :class:`MaxIterationsExceeded` warning.

    Returns
    -------
    MinimizeResult
    """
    import warnings

    x0 = np.atleast_1d(np.asarray(start, dtype=float))
    if bounds is not None:
        lo = np.array([b[0] for b in bounds], dtype=float)
        hi = np.array([b[1] for b in bounds], dtype=float)
        if np.any(x0 < lo) or np.any(x0 > hi):
            raise ValueError("start point outside bounds")
        sp_bounds = optimize.Bounds(lo, hi)
    else:
        sp_bounds = None
    f0 = float(objective(x0))
    with warnings.catch_warnings():
        # scipy warns about clamping initial simplex vertices; that is intended
        warnings.simplefilter("ignore", RuntimeWarning)
        warnings.simplefilter("ignore", UserWarning)
        res = optimize.minimize(
            objective, x0, method="Nelder-Mead", bounds=sp_bounds,
            options={"xatol": tol, "fatol": tol, "maxiter": max_iter,
                     "maxfev": 4 * max_iter, "adaptive": x0.size > 2},
        )
    x, fun = np.asarray(res.x, dtype=float), float(res.fun)
    if not fun <= f0:
        x, fun = x0, f0
    converged = bool(res.success)
    if not converged:
        warnings.warn(f"Nelder-Mead stopped after {res.nit} iterations",
                      MaxIterationsExceeded, stacklevel=2)
    return MinimizeResult(x=x, fun=fun, nit=int(res.nit), converged=converged)
