"""Semivariograms: isotropic models with nugget, Matheron estimation, Cressie WLS fits."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .numerics import MaxIterationsExceeded, nelder_mead

EXPONENTIAL = "exponential"
SPHERICAL = "spherical"
RATIONAL_QUADRATIC = "rational-quadratic"
VARIOGRAM_FAMILIES = (EXPONENTIAL, SPHERICAL, RATIONAL_QUADRATIC)

DEFAULT_BINS = 13


class NoPairsInRange(ValueError):
    pass


class VariogramFitFailed(RuntimeError):
    pass


def normalize_family(name):
    key = str(name).strip().lower().replace("_", "-").replace(" ", "-")
    aliases = {"exp": EXPONENTIAL, "sph": SPHERICAL, "rq": RATIONAL_QUADRATIC,
               "rationalquadratic": RATIONAL_QUADRATIC}
    key = aliases.get(key, key)
    if key not in VARIOGRAM_FAMILIES:
        raise ValueError(f"unknown variogram family {name!r}; "
                         f"choose from {', '.join(VARIOGRAM_FAMILIES)}")
    return key


def correlation_function(family, h, a):
    """Correlation at lag ``h`` for range parameter ``a``."""
    r = np.asarray(h, dtype=float) / a
    if family == EXPONENTIAL:
        return np.exp(-r)
    if family == RATIONAL_QUADRATIC:
        return 1.0 / (1.0 + r * r)
    if family == SPHERICAL:
        return np.where(r < 1.0, 1.0 - 1.5 * r + 0.5 * r ** 3, 0.0)
    raise ValueError(f"unknown variogram family {family!r}")


@dataclass(frozen=True)
class VariogramModel:
    """Isotropic variogram with nugget ``c0``, partial sill ``c1`` and range ``a``.

    The covariance between distinct observations at distance ``h`` is
    ``c1 * rho(h)``; the variance is ``c0 + c1``.
    """

    family: str
    nugget: float
    partial_sill: float
    range: float

    def __post_init__(self):
        object.__setattr__(self, "family", normalize_family(self.family))
        if self.nugget < 0 or self.partial_sill < 0:
            raise ValueError("nugget and partial sill must be nonnegative")
        if not self.range > 0:
            raise ValueError("range must be positive")
        if not self.sill > 0:
            raise ValueError("total sill must be positive")

    @property
    def sill(self):
        return self.nugget + self.partial_sill

    @property
    def params(self):
        return np.array([self.nugget, self.partial_sill, self.range])

    def correlation(self, h):
        return correlation_function(self.family, h, self.range)

    def semivariance(self, h):
        """``gamma(h)``; zero at the origin, ``c0 + c1 (1 - rho(h))`` elsewhere."""
        h = np.asarray(h, dtype=float)
        g = self.nugget + self.partial_sill * (1.0 - self.correlation(h))
        return np.where(h > 0, g, 0.0)

    def covariance(self, h):
        """Covariance between distinct sites at lag ``h`` (excludes the nugget)."""
        return self.partial_sill * self.correlation(h)


def correlation(model: VariogramModel, h):
    return model.correlation(h)


def covariance_matrix(model: VariogramModel, locations, other=None) -> np.ndarray:
    """Error covariance matrix ``Sigma_theta`` at ``locations``.

    Diagonal entries are the total sill ``c0 + c1``, off-diagonal entries
    ``c1 * rho(|X_i - X_j|)``, including for coincident distinct sites.
    """
    loc = np.asarray(locations, dtype=float)
    if loc.ndim == 1:
        loc = loc[:, None]
    if other is not None:
        return model.covariance(cdist(loc, np.atleast_2d(other)))
    sigma = model.covariance(cdist(loc, loc))
    np.fill_diagonal(sigma, model.sill)
    return sigma


@dataclass(frozen=True)
class EmpiricalVariogram:
    bin_centers: np.ndarray
    gamma_hat: np.ndarray
    pair_counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.bin_centers, dtype=float)
        g = np.asarray(self.gamma_hat, dtype=float)
        npairs = np.asarray(self.pair_counts, dtype=np.int64)
        if not (c.shape == g.shape == npairs.shape) or c.ndim != 1:
            raise ValueError("bin arrays must be one-dimensional and of equal length")
        if np.any(np.diff(c) <= 0):
            raise ValueError("bin centers must be strictly increasing")
        if np.any(g < 0) or np.any(npairs < 1):
            raise ValueError("semivariances must be >= 0 and every bin needs a pair")
        for name, arr in (("bin_centers", c), ("gamma_hat", g), ("pair_counts", npairs)):
            object.__setattr__(self, name, arr)

    def __len__(self):
        return self.bin_centers.size

    def to_csv(self, path_or_buf):
        rows = zip(self.bin_centers, self.gamma_hat, self.pair_counts)
        _write_csv(path_or_buf, ["lag", "gamma", "npairs"],
                   [(repr(float(a)), repr(float(b)), int(n)) for a, b, n in rows])


def _write_csv(path_or_buf, header, rows):
    if hasattr(path_or_buf, "write"):
        w = csv.writer(path_or_buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return
    with open(path_or_buf, "w", newline="") as fh:
        _write_csv(fh, header, rows)


def empirical_semivariogram(locations, residuals, n_bins=DEFAULT_BINS, max_lag=None):
    """Classical (Matheron) semivariogram estimate in equal-width lag bins.

    Bins split ``[0, max_lag]`` into ``n_bins`` intervals; a bin's lag is its
    midpoint and empty bins are dropped.  ``max_lag`` defaults to half the
    largest inter-site distance.
    """
    loc = np.asarray(locations, dtype=float)
    if loc.ndim == 1:
        loc = loc[:, None]
    r = np.asarray(residuals, dtype=float).ravel()
    if loc.shape[0] != r.size or r.size < 2:
        raise ValueError("need at least two sites with one residual each")
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    dist = pdist(loc)
    sq = pdist(r[:, None], "sqeuclidean")
    if max_lag is None:
        max_lag = 0.5 * dist.max()
    if not max_lag > 0:
        raise NoPairsInRange("maximum lag must be positive (all sites coincide?)")
    keep = dist <= max_lag
    dist, sq = dist[keep], sq[keep]
    width = max_lag / n_bins
    idx = np.minimum((dist / width).astype(np.int64), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    sums = np.bincount(idx, weights=sq, minlength=n_bins)
    nonempty = counts > 0
    if not np.any(nonempty):
        raise NoPairsInRange(f"no site pairs within lag {max_lag:g}")
    centers = (np.arange(n_bins) + 0.5) * width
    gamma = sums[nonempty] / (2.0 * counts[nonempty])
    return EmpiricalVariogram(centers[nonempty], gamma, counts[nonempty])


@dataclass(frozen=True)
class VariogramFit:
    """Outcome of a WLS variogram fit."""

    model: VariogramModel
    objective: float
    converged: bool
    at_boundary: bool

    @property
    def flagged(self):
        return (not self.converged) or self.at_boundary


def wls_objective(emp: EmpiricalVariogram, model: VariogramModel) -> float:
    """Cressie's criterion ``sum_j N_j (gamma_hat_j / gamma_theta(h_j) - 1)^2``."""
    g = model.semivariance(emp.bin_centers)
    if np.any(g <= 0):
        return np.inf
    return float(np.sum(emp.pair_counts * (emp.gamma_hat / g - 1.0) ** 2))


def fit_bounds(emp: EmpiricalVariogram):
    """Box for ``(c0, c1, a)`` used by :func:`fit_variogram_wls`."""
    top = float(emp.gamma_hat.max())
    scale = top if top > 0 else 1.0
    lag_lo = float(emp.bin_centers[0]) / 10.0
    lag_hi = 10.0 * float(emp.bin_centers[-1])
    return [(0.0, 10.0 * scale), (1e-8 * scale, 10.0 * scale), (lag_lo, lag_hi)]


def _starts(emp, bounds):
    g = emp.gamma_hat
    plateau = float(np.mean(g[-max(1, len(g) // 3):])) or float(g.max()) or 1.0
    lags = emp.bin_centers
    a_lo, a_hi = bounds[2]
    fracs = ((0.0, 1.0, 0.2), (0.0, 1.0, 0.6), (0.5, 0.5, 0.4),
             (0.2, 0.8, 1.0), (0.8, 0.2, 0.1))
    out = []
    for f0, f1, fa in fracs:
        a = float(np.clip(fa * lags[-1], a_lo, a_hi))
        c0 = float(np.clip(f0 * plateau, *bounds[0]))
        c1 = float(np.clip(f1 * plateau, *bounds[1]))
        out.append(np.array([c0, c1, a]))
    return out


def fit_variogram_wls(emp: EmpiricalVariogram, family=EXPONENTIAL, start=None) -> VariogramFit:
    """Fit ``(c0, c1, a)`` by Cressie weighted least squares.

    The criterion is minimized with a bounded Nelder-Mead simplex from five
    fixed starting points spread over the parameter box (plus ``start`` when
    given); the best local solution wins.

    Raises
    ------
    VariogramFitFailed
        With fewer than three bins, or when no start yields a finite
        objective.
    """
    family = normalize_family(family)
    if len(emp) < 3:
        raise VariogramFitFailed(f"need at least 3 nonempty lag bins, got {len(emp)}")
    if not np.any(emp.gamma_hat > 0):
        raise VariogramFitFailed("empirical semivariogram is identically zero")
    bounds = fit_bounds(emp)
    scale = np.array([b[1] for b in bounds]) / 10.0
    scale[2] = emp.bin_centers[-1]
    nbounds = [(lo / s, hi / s) for (lo, hi), s in zip(bounds, scale)]
    total = float(emp.pair_counts.sum())
    lags, gam, cnt = emp.bin_centers, emp.gamma_hat, emp.pair_counts

    def objective(x):
        c0, c1, a = x * scale
        model_g = c0 + c1 * (1.0 - correlation_function(family, lags, a))
        if np.any(model_g <= 0):
            return 1e300
        return float(np.sum(cnt * (gam / model_g - 1.0) ** 2)) / total

    starts = _starts(emp, bounds)
    if start is not None:
        p = np.array([start.nugget, start.partial_sill, start.range], dtype=float)
        starts.insert(0, np.clip(p, [b[0] for b in bounds], [b[1] for b in bounds]))

    best = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MaxIterationsExceeded)
        for x0 in starts:
            res = nelder_mead(objective, x0 / scale, bounds=nbounds, tol=1e-10, max_iter=3000)
            if best is None or res.fun < best.fun:
                best = res
    if best is None or not best.fun < 1e299:
        raise VariogramFitFailed("no starting point gave a finite WLS objective")
    theta = best.x * scale
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    # a nugget of exactly zero is a legitimate interior-like answer
    at_bound = bool(np.any(np.isclose(theta[1:], lo[1:], rtol=1e-6, atol=0))
                    or np.any(np.isclose(theta, hi, rtol=1e-6, atol=0)))
    model = VariogramModel(family, float(theta[0]), float(theta[1]), float(theta[2]))
    if not best.converged:
        warnings.warn("variogram fit did not converge", MaxIterationsExceeded, stacklevel=2)
    return VariogramFit(model, wls_objective(emp, model), best.converged, at_bound)
