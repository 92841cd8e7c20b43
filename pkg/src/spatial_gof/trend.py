"""Polynomial trend surfaces fitted by OLS, GLS and iterative least squares."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np
from scipy import linalg

from .numerics import cholesky, solve_lower
from .smoothing import SpatialDataset
from .variography import (
    DEFAULT_BINS,
    EXPONENTIAL,
    EmpiricalVariogram,
    VariogramModel,
    covariance_matrix,
    empirical_semivariogram,
    fit_variogram_wls,
    normalize_family,
)

# residuals this small relative to the responses count as an exact fit
EXACT_FIT_RTOL = 1e-10


class DegenerateDesign(ValueError):
    pass


@dataclass(frozen=True)
class TrendModel:
    """Polynomial surface of total degree ``degree`` in ``dim`` variables.

    Columns are ordered graded-lexicographically:
    ``1, x1, x2, x1^2, x1 x2, x2^2, ...`` for ``dim=2``.
    """

    degree: int = 1
    dim: int = 2

    def __post_init__(self):
        if self.degree < 0 or self.dim < 1:
            raise ValueError("degree must be >= 0 and dim >= 1")

    @property
    def exponents(self):
        out = []
        for deg in range(self.degree + 1):
            for combo in combinations_with_replacement(range(self.dim), deg):
                e = [0] * self.dim
                for j in combo:
                    e[j] += 1
                out.append(tuple(e))
        return out

    @property
    def basis_size(self):
        return len(self.exponents)


def _monomials(model, locations):
    loc = np.asarray(locations, dtype=float)
    if loc.ndim == 1:
        loc = loc[:, None]
    if loc.shape[1] != model.dim:
        raise ValueError(f"trend has dim {model.dim}, locations have {loc.shape[1]}")
    return np.column_stack([np.prod(loc ** np.array(e), axis=1) for e in model.exponents])


def design_matrix(model: TrendModel, locations, check_rank=True) -> np.ndarray:
    """The ``n x p`` monomial design matrix.

    With ``check_rank`` (the default, used by every fitting routine) a matrix
    of rank < p raises DegenerateDesign; pass False to just evaluate rows.
    """
    x = _monomials(model, locations)
    if not check_rank:
        return x
    n, p = x.shape
    if n < p:
        raise DegenerateDesign(f"{n} locations cannot identify {p} trend coefficients")
    # rank on column-normalized copy so coordinate units do not matter
    norms = np.linalg.norm(x, axis=0)
    norms[norms == 0] = 1.0
    if np.linalg.matrix_rank(x / norms) < p:
        raise DegenerateDesign("trend design matrix is rank deficient")
    return x


@dataclass(frozen=True)
class TrendCoefficients:
    model: TrendModel
    beta: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.beta, dtype=float).ravel()
        if b.size != self.model.basis_size or not np.all(np.isfinite(b)):
            raise ValueError("coefficient vector must be finite with one entry per basis term")
        object.__setattr__(self, "beta", b)

    def __call__(self, locations):
        return _monomials(self.model, locations) @ self.beta


def _lstsq(x, z):
    coef, *_ = linalg.lstsq(x, z, check_finite=False)
    return coef


def ols_fit(model: TrendModel, data: SpatialDataset) -> TrendCoefficients:
    """Ordinary least squares trend coefficients."""
    x = design_matrix(model, data.locations)
    return TrendCoefficients(model, _lstsq(x, data.responses))


class GLSSolver:
    """Generalized least squares for a fixed design and error covariance.

    Whitens with the Cholesky factor of ``sigma`` and solves the resulting
    ordinary least squares problem.  Handles several response vectors at once
    (columns of ``z``).
    """

    def __init__(self, design, sigma):
        self.design = np.asarray(design, dtype=float)
        self.chol = cholesky(sigma)
        self._wx = solve_lower(self.chol, self.design)
        self._q, self._r = linalg.qr(self._wx, mode="economic")

    def coefficients(self, z):
        wz = solve_lower(self.chol, np.asarray(z, dtype=float))
        return linalg.solve_triangular(self._r, self._q.T @ wz, check_finite=False)

    def residuals(self, z):
        z = np.asarray(z, dtype=float)
        return z - self.design @ self.coefficients(z)


def gls_fit(model: TrendModel, data: SpatialDataset, sigma) -> TrendCoefficients:
    """Minimize ``(Z - X beta)' Sigma^{-1} (Z - X beta)`` by Cholesky whitening."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (data.n, data.n):
        raise ValueError(f"covariance must be {data.n} x {data.n}")
    solver = GLSSolver(design_matrix(model, data.locations), sigma)
    return TrendCoefficients(model, solver.coefficients(data.responses))


@dataclass
class IterConfig:
    """Options for :func:`iterative_fit`.

    ``passes=1`` is the plain three-step procedure (OLS, variogram, GLS).
    More passes repeat the variogram and GLS steps on the latest residuals
    until the relative coefficient change drops below ``beta_tol``.
    """

    passes: int = 1
    beta_tol: float = 1e-6
    n_bins: int = DEFAULT_BINS
    max_lag: float | None = None


@dataclass
class IterativeFit:
    coefficients: TrendCoefficients
    variogram: VariogramModel | None
    sigma: np.ndarray
    ols: TrendCoefficients
    empirical: EmpiricalVariogram | None = None
    passes: int = 1
    flagged: bool = False
    exact: bool = field(default=False)

    @property
    def beta(self):
        return self.coefficients.beta


def residuals_negligible(residuals, responses):
    scale = max(float(np.max(np.abs(responses))), np.finfo(float).tiny)
    return float(np.max(np.abs(residuals))) <= EXACT_FIT_RTOL * scale


def iterative_fit(model: TrendModel, data: SpatialDataset, vario_family=EXPONENTIAL,
                  config: IterConfig | None = None) -> IterativeFit:
    """Feasible GLS: OLS fit, variogram fit to its residuals, then GLS.

    When the OLS residuals vanish (the data lie on the parametric surface)
    there is nothing to estimate a variogram from; the OLS fit is returned
    with ``variogram=None`` and an identity covariance.
    """
    config = config or IterConfig()
    vario_family = normalize_family(vario_family)
    x = design_matrix(model, data.locations)
    ols = TrendCoefficients(model, _lstsq(x, data.responses))
    resid = data.responses - x @ ols.beta
    if residuals_negligible(resid, data.responses):
        return IterativeFit(ols, None, np.eye(data.n), ols, exact=True)

    beta = ols.beta
    flagged = False
    for k in range(1, max(1, config.passes) + 1):
        emp = empirical_semivariogram(data.locations, resid, config.n_bins, config.max_lag)
        fit = fit_variogram_wls(emp, vario_family)
        flagged = flagged or fit.flagged
        sigma = covariance_matrix(fit.model, data.locations)
        new_beta = GLSSolver(x, sigma).coefficients(data.responses)
        change = np.linalg.norm(new_beta - beta) / max(np.linalg.norm(beta), np.finfo(float).tiny)
        beta = new_beta
        resid = data.responses - x @ beta
        if k > 1 and change < config.beta_tol:
            break
    return IterativeFit(TrendCoefficients(model, beta), fit.model, sigma, ols, emp,
                        passes=k, flagged=flagged)
