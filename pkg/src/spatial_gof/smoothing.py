"""Multivariate local linear smoothing.

The nonparametric fit and the smoothed parametric fit share one linear
smoother: at an evaluation point ``x`` both are ``l(x) @ v`` with ``v`` either
the responses or the fitted parametric values.  :func:`smoother_matrix` builds
those rows for many points at once; the per-point functions are thin wrappers.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .kernels import BandwidthMatrix, DimensionMismatch, KernelSpec, kernel_eval
from .numerics import NotPositiveDefinite, cholesky

_CHUNK = 256


class InsufficientLocalData(ValueError):
    """The local linear system at an evaluation point is singular."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


@dataclass(frozen=True)
class SpatialDataset:
    """Locations ``X`` (n x d) and scalar responses ``Z`` (n,)."""

    locations: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=float)
        if loc.ndim == 1:
            loc = loc[:, None]
        z = np.asarray(self.responses, dtype=float).ravel()
        if loc.ndim != 2 or loc.shape[0] != z.shape[0]:
            raise ValueError("locations must be n x d and match the number of responses")
        n, d = loc.shape
        if n < d + 2:
            raise ValueError(f"need at least d+2 = {d + 2} observations, got {n}")
        if not (np.all(np.isfinite(loc)) and np.all(np.isfinite(z))):
            raise ValueError("locations and responses must be finite")
        if np.unique(loc, axis=0).shape[0] < n:
            warnings.warn("dataset contains repeated locations", stacklevel=3)
        loc.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "responses", z)

    @property
    def n(self):
        return self.locations.shape[0]

    @property
    def dim(self):
        return self.locations.shape[1]

    def with_responses(self, z):
        return SpatialDataset(self.locations, z)

    def bounding_box(self):
        return np.column_stack([self.locations.min(axis=0), self.locations.max(axis=0)])


def _check_dims(locations, k, h, points):
    d = locations.shape[1]
    if k.dim != d or h.dim != d or points.shape[-1] != d:
        raise DimensionMismatch(
            f"data dim {d}, kernel dim {k.dim}, bandwidth dim {h.dim}, "
            f"point dim {points.shape[-1]}"
        )


def smoother_matrix(locations, k: KernelSpec, h: BandwidthMatrix, points) -> np.ndarray:
    """Local linear smoother rows ``l(x)`` for every row ``x`` of ``points``.

    Returns an ``(m, n)`` array ``S`` such that the local linear estimate of a
    response vector ``v`` at ``points[j]`` is ``S[j] @ v``.

    Raises
    ------
    InsufficientLocalData
        If fewer than d+1 observations get positive weight at a point, or the
        weighted local design is numerically singular there.
    """
    locations = np.asarray(locations, dtype=float)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    _check_dims(locations, k, h, points)
    n, d = locations.shape
    hv = h.h
    out = np.empty((points.shape[0], n))
    for start in range(0, points.shape[0], _CHUNK):
        pts = points[start:start + _CHUNK]
        # scaled offsets (X_i - x)/h; column scaling leaves e1'(X'WX)^{-1}X'W unchanged
        u = (locations[None, :, :] - pts[:, None, :]) / hv
        w = kernel_eval(k, u) / h.det
        design = np.concatenate([np.ones(u.shape[:2] + (1,)), u], axis=-1)
        xtw = design * w[..., None]
        gram = np.einsum("mni,mnj->mij", xtw, design)
        npos = np.count_nonzero(w > 0, axis=1)
        bad = np.flatnonzero(npos < d + 1)
        if bad.size:
            p = pts[bad[0]]
            raise InsufficientLocalData(
                f"only {npos[bad[0]]} observations with positive weight at {p.tolist()}; "
                "enlarge the bandwidth or shrink the weight function support", point=p)
        try:
            low = cholesky(gram)
        except NotPositiveDefinite:
            for j in range(gram.shape[0]):
                try:
                    cholesky(gram[j])
                except NotPositiveDefinite:
                    p = pts[j]
                    raise InsufficientLocalData(
                        f"singular local linear system at {p.tolist()}; "
                        "enlarge the bandwidth", point=p) from None
            raise
        e1 = np.zeros((pts.shape[0], d + 1, 1))
        e1[:, 0, 0] = 1.0
        y = np.linalg.solve(low, e1)
        coef = np.linalg.solve(np.swapaxes(low, -1, -2), y)[..., 0]
        out[start:start + pts.shape[0]] = np.einsum("mni,mi->mn", xtw, coef)
    return out


def smoother_weights_at(data: SpatialDataset, k: KernelSpec, h: BandwidthMatrix, x) -> np.ndarray:
    """Weight row ``l(x)`` with ``local_linear_at(x) == l(x) @ Z``."""
    x = np.asarray(x, dtype=float).ravel()
    return smoother_matrix(data.locations, k, h, x[None, :])[0]


def local_linear_at(data: SpatialDataset, k: KernelSpec, h: BandwidthMatrix, x) -> float:
    """Local linear estimate of the regression function at ``x``."""
    return float(smoother_weights_at(data, k, h, x) @ data.responses)


def smooth_parametric_at(locations, fitted_values, k: KernelSpec, h: BandwidthMatrix, x) -> float:
    """Local linear smooth of the parametric fit ``m_beta(X_i)`` evaluated at ``x``."""
    x = np.asarray(x, dtype=float).ravel()
    row = smoother_matrix(locations, k, h, x[None, :])[0]
    return float(row @ np.asarray(fitted_values, dtype=float))


def local_linear_surface(data: SpatialDataset, k: KernelSpec, h: BandwidthMatrix, points) -> np.ndarray:
    return smoother_matrix(data.locations, k, h, points) @ data.responses
