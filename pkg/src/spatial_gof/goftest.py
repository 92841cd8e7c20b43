"""The L2 goodness-of-fit statistic, its bootstrap calibration and asymptotics.

The statistic compares the local linear fit with the local linear smooth of
the parametric fit over a box ``D``:

    T_n = n |H|^{1/2} sum_x (l(x) @ (Z - m_beta(X)))^2 w(x) dx

where ``l(x)`` is the local linear smoother row and the sum runs over the
nodes of a midpoint tensor grid on ``D``.  Both surfaces use the identical
row, so ``T_n`` is exactly zero when ``Z`` equals the parametric fit.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import roots_legendre

from .kernels import BandwidthMatrix, KernelSpec, kernel_scaled, self_convolution_at_zero
from .numerics import NotPositiveDefinite, cholesky, solve_lower
from .seeding import derive_seed, rng_for
from .smoothing import InsufficientLocalData, SpatialDataset, smoother_matrix
from .trend import GLSSolver, IterConfig, TrendModel, design_matrix, iterative_fit, residuals_negligible
from .variography import (
    EXPONENTIAL,
    covariance_matrix,
    empirical_semivariogram,
    fit_variogram_wls,
    normalize_family,
)

log = logging.getLogger(__name__)

DEFAULT_QUAD_POINTS = 30


class BootstrapDegenerate(RuntimeError):
    pass


class NonpositiveVariance(ValueError):
    pass


# --------------------------------------------------------------------------
# integration domain and weights


@dataclass(frozen=True)
class WeightFunction:
    """``w(x)``: constant one on ``D``, or the indicator of an inner box.

    ``box`` is a ``d x 2`` array of ``(low, high)`` per axis.
    """

    kind: str = "one"
    box: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("one", "box"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if self.kind == "box":
            b = np.asarray(self.box, dtype=float)
            if b.ndim != 2 or b.shape[1] != 2 or np.any(b[:, 1] <= b[:, 0]):
                raise ValueError("box weight needs (low, high) with low < high per axis")
            object.__setattr__(self, "box", tuple(map(tuple, b)))

    @classmethod
    def indicator(cls, box):
        return cls("box", box)

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "one":
            return np.ones(x.shape[0])
        b = np.asarray(self.box)
        inside = np.all((x >= b[:, 0]) & (x <= b[:, 1]), axis=1)
        return inside.astype(float)

    def describe(self):
        if self.kind == "one":
            return "one"
        return "box:" + ",".join(f"{v:g}" for pair in self.box for v in pair)


@dataclass(frozen=True)
class QuadratureGrid:
    """Midpoint tensor grid on an axis-aligned box ``D``."""

    domain: tuple
    points_per_axis: int = DEFAULT_QUAD_POINTS

    def __post_init__(self):
        dom = np.asarray(self.domain, dtype=float)
        if dom.ndim != 2 or dom.shape[1] != 2 or np.any(dom[:, 1] <= dom[:, 0]):
            raise ValueError("domain must be (low, high) per axis with low < high")
        if self.points_per_axis < 2:
            raise ValueError("need at least 2 quadrature points per axis")
        object.__setattr__(self, "domain", tuple(map(tuple, dom)))

    @classmethod
    def unit_square(cls, points_per_axis=DEFAULT_QUAD_POINTS, dim=2):
        return cls(tuple((0.0, 1.0) for _ in range(dim)), points_per_axis)

    @classmethod
    def bounding_box(cls, data: SpatialDataset, points_per_axis=DEFAULT_QUAD_POINTS):
        return cls(tuple(map(tuple, data.bounding_box())), points_per_axis)

    @property
    def dim(self):
        return len(self.domain)

    @property
    def volume(self):
        return float(np.prod([hi - lo for lo, hi in self.domain]))

    @property
    def node_weight(self):
        return self.volume / self.points_per_axis ** self.dim

    @property
    def nodes(self):
        k = self.points_per_axis
        axes = [lo + (np.arange(k) + 0.5) * (hi - lo) / k for lo, hi in self.domain]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def refined(self, factor=2):
        return QuadratureGrid(self.domain, self.points_per_axis * factor)


# --------------------------------------------------------------------------
# the statistic


class TnOperator:
    """Precomputed smoother rows for repeated evaluation of ``T_n``.

    For fixed locations, kernel, bandwidth, weight and grid the statistic is a
    quadratic form in ``Z - m_beta(X)``; building the smoother rows once lets
    bootstrap replicates (and simulation replicates sharing a design) reuse
    them.
    """

    def __init__(self, locations, k: KernelSpec, h: BandwidthMatrix,
                 w: WeightFunction | None = None, q: QuadratureGrid | None = None):
        locations = np.asarray(locations, dtype=float)
        self.n = locations.shape[0]
        self.kernel, self.bandwidth = k, h
        self.weight = w or WeightFunction()
        if q is None:
            box = np.column_stack([locations.min(axis=0), locations.max(axis=0)])
            q = QuadratureGrid(tuple(map(tuple, box)))
        self.grid = q
        nodes = q.nodes
        wv = self.weight(nodes)
        keep = wv > 0
        self.nodes = nodes[keep]
        self.node_factor = wv[keep] * q.node_weight
        self.smoother = smoother_matrix(locations, k, h, self.nodes)
        self.scale = self.n * np.sqrt(h.det)

    def __call__(self, residuals) -> np.ndarray | float:
        """``T_n`` for a residual vector ``Z - m_beta(X)`` or an ``n x B`` block of them."""
        r = np.asarray(residuals, dtype=float)
        diff = self.smoother @ r
        if r.ndim == 1:
            return float(self.scale * np.dot(diff * diff, self.node_factor))
        return self.scale * (self.node_factor @ (diff * diff))

    def surfaces(self, responses, fitted):
        """Nonparametric and smoothed parametric surfaces at the grid nodes."""
        return self.smoother @ np.asarray(responses), self.smoother @ np.asarray(fitted)


def compute_tn(data: SpatialDataset, fitted_parametric, k: KernelSpec, h: BandwidthMatrix,
               w: WeightFunction | None = None, q: QuadratureGrid | None = None) -> float:
    """The test statistic for responses ``data`` against fitted values ``m_beta(X_i)``.

    Raises :class:`InsufficientLocalData` naming the first positive-weight
    node where the local linear system is singular.
    """
    fitted = np.asarray(fitted_parametric, dtype=float)
    if fitted.shape != (data.n,):
        raise ValueError("need one fitted value per observation")
    op = TnOperator(data.locations, k, h, w, q)
    return op(data.responses - fitted)


# --------------------------------------------------------------------------
# bootstrap


@dataclass
class AsymptoticSummary:
    b0: float
    b1: float
    v: float
    z: float


@dataclass
class TestReport:
    t_n: float
    bootstrap_stats: np.ndarray
    p_value: float
    bandwidth: BandwidthMatrix
    beta: np.ndarray | None = None
    variogram: object = None
    seed: int | None = None
    asymptotic: AsymptoticSummary | None = None
    perfect_fit: bool = False

    __test__ = False  # not a pytest class

    @property
    def B(self):
        return int(self.bootstrap_stats.size)

    def critical_value(self, alpha=0.05):
        """Bootstrap ``(1 - alpha)`` quantile ``t*_alpha``."""
        return float(np.quantile(self.bootstrap_stats, 1.0 - alpha))

    def rejects(self, alpha=0.05):
        return self.p_value <= alpha

    def to_dict(self):
        out = {
            "t_n": float(self.t_n),
            "p_value": float(self.p_value),
            "B": self.B,
            "bandwidth": list(self.bandwidth.diagonal),
            "seed": self.seed,
            "perfect_fit": bool(self.perfect_fit),
        }
        if self.beta is not None:
            out["beta"] = [float(b) for b in self.beta]
        if self.variogram is not None:
            v = self.variogram
            out["variogram"] = {"family": v.family, "nugget": v.nugget,
                                "partial_sill": v.partial_sill, "range": v.range}
        if self.asymptotic is not None:
            a = self.asymptotic
            out["asymptotic"] = {"b0": a.b0, "b1": a.b1, "v": a.v, "z": a.z}
        return out

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def p_value_from(t_n, boot):
    boot = np.asarray(boot, dtype=float)
    return (1.0 + np.count_nonzero(boot >= t_n)) / (boot.size + 1.0)


@dataclass
class BootstrapSetup:
    """Everything about the original sample the bootstrap replicates reuse."""

    data: SpatialDataset
    design: np.ndarray
    beta: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    gls: GLSSolver | None
    resample_chol: np.ndarray | None
    whitened: np.ndarray | None
    fit: object
    variogram: object
    perfect_fit: bool = False
    vario_family: str = EXPONENTIAL
    iter_config: IterConfig | None = None
    model: TrendModel | None = None


def prepare_bootstrap(data: SpatialDataset, model: TrendModel, vario_family=EXPONENTIAL,
                      iter_config: IterConfig | None = None) -> BootstrapSetup:
    """Fit the null model and build the Cholesky resampling machinery.

    Follows the calibration recipe: feasible GLS estimate of ``beta``; error
    covariance re-estimated from the GLS residuals; ``L`` its Cholesky
    factor; decorrelated residuals ``e = L^{-1} eps`` centered.
    """
    vario_family = normalize_family(vario_family)
    iter_config = iter_config or IterConfig()
    fit = iterative_fit(model, data, vario_family, iter_config)
    x = design_matrix(model, data.locations)
    fitted = x @ fit.beta
    resid = data.responses - fitted
    if fit.exact or residuals_negligible(resid, data.responses):
        return BootstrapSetup(data, x, fit.beta, data.responses.copy(), np.zeros(data.n),
                              None, None, None, fit, None, perfect_fit=True,
                              vario_family=vario_family, iter_config=iter_config, model=model)
    emp = empirical_semivariogram(data.locations, resid, iter_config.n_bins, iter_config.max_lag)
    vfit = fit_variogram_wls(emp, vario_family)
    sigma_hat = covariance_matrix(vfit.model, data.locations)
    low = cholesky(sigma_hat)
    e = solve_lower(low, resid)
    e = e - e.mean()
    return BootstrapSetup(data, x, fit.beta, fitted, resid, GLSSolver(x, fit.sigma), low, e,
                          fit, vfit.model, vario_family=vario_family,
                          iter_config=iter_config, model=model)


def bootstrap_errors(setup: BootstrapSetup, B: int, seed: int) -> np.ndarray:
    """``n x B`` bootstrap error vectors ``L e*``; column b uses derived seed b."""
    n = setup.data.n
    idx = np.empty((n, B), dtype=np.int64)
    for b in range(B):
        idx[:, b] = rng_for(seed, b).integers(0, n, size=n)
    return setup.resample_chol @ setup.whitened[idx]


def bootstrap_residuals(setup: BootstrapSetup, B: int, seed: int, refit_variogram=False):
    """Residuals ``Z* - m_beta*(X)`` for B bootstrap samples (``n x B``).

    Each bootstrap sample ``Z* = m_beta(X) + L e*`` is refitted: by GLS with
    the original estimated covariance by default, or by the full iterative
    procedure (variogram refitted too) when ``refit_variogram`` is set.
    """
    eps = bootstrap_errors(setup, B, seed)
    zstar = setup.fitted[:, None] + eps
    if not refit_variogram:
        return setup.gls.residuals(zstar)
    out = np.empty_like(zstar)
    for b in range(B):
        star = setup.data.with_responses(zstar[:, b])
        f = iterative_fit(setup.model, star, setup.vario_family, setup.iter_config)
        out[:, b] = star.responses - setup.design @ f.beta
    return out


def _report_from(setup, op, boot_resid, h, seed, B):
    if setup.perfect_fit:
        return TestReport(0.0, np.zeros(B), 1.0, h, setup.beta, None, seed, perfect_fit=True)
    t_n = op(setup.residuals)
    boot = np.asarray(op(boot_resid), dtype=float)
    if np.ptp(boot) == 0.0:
        raise BootstrapDegenerate("all bootstrap statistics are identical")
    return TestReport(t_n, boot, p_value_from(t_n, boot), h, setup.beta, setup.variogram, seed)


def bootstrap_test(data: SpatialDataset, model: TrendModel | None = None, vario_family=EXPONENTIAL,
                   k: KernelSpec | None = None, h: BandwidthMatrix | None = None,
                   w: WeightFunction | None = None, q: QuadratureGrid | None = None,
                   B: int = 500, seed: int = 0, *, refit_variogram=False,
                   iter_config: IterConfig | None = None, setup: BootstrapSetup | None = None,
                   operator: TnOperator | None = None) -> TestReport:
    """Bootstrap-calibrated goodness-of-fit test of a polynomial trend.

    Parameters
    ----------
    data : SpatialDataset
    model : TrendModel, default linear in ``data.dim`` variables
    vario_family : variogram family used for the error covariance
    k, h : kernel and bandwidth of the local linear smoother
    w, q : weight function and quadrature grid (default: ``w = 1`` on the
        bounding box of the data)
    B : number of bootstrap replicates (at least 19)
    seed : replicate ``b`` draws from the seed derived from ``(seed, b)``

    Returns
    -------
    TestReport
        ``p_value = (1 + #{T*_b >= T_n}) / (B + 1)``.
    """
    if B < 19:
        raise ValueError("B must be at least 19")
    model = model or TrendModel(1, data.dim)
    k = k or KernelSpec(dim=data.dim)
    if h is None:
        raise ValueError("a bandwidth matrix is required")
    setup = setup or prepare_bootstrap(data, model, vario_family, iter_config)
    if setup.perfect_fit:
        return _report_from(setup, None, None, h, seed, B)
    op = operator or TnOperator(data.locations, k, h, w, q or QuadratureGrid.bounding_box(data))
    resid = bootstrap_residuals(setup, B, seed, refit_variogram)
    return _report_from(setup, op, resid, h, seed, B)


@dataclass
class TraceEntry:
    bandwidth: BandwidthMatrix
    p_value: float | None
    report: TestReport | None = None
    error: str | None = None


def significance_trace(data: SpatialDataset, model: TrendModel | None, vario_family,
                       k: KernelSpec, bandwidth_grid: Sequence[BandwidthMatrix],
                       w: WeightFunction | None = None, q: QuadratureGrid | None = None,
                       B: int = 500, seed: int = 0, **kw) -> list[TraceEntry]:
    """p-values of the bootstrap test across a grid of bandwidths.

    Entry ``i`` uses seed ``derive_seed(seed, i)``.  Failures at one bandwidth
    are recorded in the entry's ``error`` and do not stop the trace.
    """
    grid = list(bandwidth_grid)
    if not grid:
        raise ValueError("bandwidth grid is empty")
    model = model or TrendModel(1, data.dim)
    setup = prepare_bootstrap(data, model, vario_family, kw.pop("iter_config", None))
    out = []
    for i, h in enumerate(grid):
        try:
            rep = bootstrap_test(data, model, vario_family, k, h, w, q, B,
                                 derive_seed(seed, i), setup=setup, **kw)
            out.append(TraceEntry(h, rep.p_value, rep))
        except (InsufficientLocalData, NotPositiveDefinite, BootstrapDegenerate, ValueError) as exc:
            log.warning("bandwidth %s failed: %s", h, exc)
            out.append(TraceEntry(h, None, None, f"{type(exc).__name__}: {exc}"))
    return out


# --------------------------------------------------------------------------
# asymptotics


UNIFORM = "uniform"
FIXED_DESIGN = "fixed"


@dataclass
class AsymptoticInputs:
    """Nuisance quantities of the normal approximation.

    ``density`` is ``"uniform"`` (uniform on the quadrature box), ``"fixed"``
    (fixed design: the density drops out) or a callable ``f(x)`` for points
    of shape ``(m, d)``.  ``g_dev`` is the local-alternative direction; when
    omitted the bias term ``b1`` is zero.
    """

    sigma2: float
    rho_c: float = 0.0
    density: str | Callable = UNIFORM
    g_dev: Callable | None = None

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if self.rho_c < 0:
            raise ValueError("rho_c must be nonnegative")


def rho_c_shrinking_exponential(lam):
    """``rho_c`` for the shrinking exponential correlation ``exp(-lam n |x|)``."""
    return 1.0 / lam


def _convolve_at(k, h, g, nodes, order=24):
    """``(K_H * g)(x)`` at each node by Gauss-Legendre quadrature over the kernel support."""
    d = k.dim
    t, wt = roots_legendre(order)
    reach = 1.0 if np.isfinite(k.support_radius) else 8.0
    mesh = np.meshgrid(*([t] * d), indexing="ij")
    u = np.column_stack([m.ravel() for m in mesh]) * reach  # in kernel units
    wu = np.prod(np.meshgrid(*([wt] * d), indexing="ij"), axis=0).ravel() * reach ** d
    ku = kernel_scaled(k, BandwidthMatrix([1.0] * d), u) * wu
    out = np.empty(nodes.shape[0])
    for i, x in enumerate(nodes):
        # int K_H(x - y) g(y) dy with y = x - H u
        out[i] = np.dot(ku, g(x - u * h.h))
    return out


def asymptotic_constants(inputs: AsymptoticInputs, k: KernelSpec, h: BandwidthMatrix,
                         w: WeightFunction | None = None, q: QuadratureGrid | None = None):
    """Centering ``b0``, local-alternative bias ``b1`` and variance ``V`` of ``T_n``.

    The integrals over ``D`` use the midpoint grid ``q``.  With density
    ``"fixed"`` the fixed-design forms apply (``1/f`` replaced by 1), which
    coincide with the random-design forms for a uniform density on the unit
    box.
    """
    w = w or WeightFunction()
    q = q or QuadratureGrid.unit_square(dim=k.dim)
    nodes = q.nodes
    wv = w(nodes)
    dx = q.node_weight
    if inputs.density == FIXED_DESIGN:
        inv_f = np.ones(nodes.shape[0])
    elif inputs.density == UNIFORM:
        inv_f = np.full(nodes.shape[0], q.volume)
    elif callable(inputs.density):
        f = np.asarray(inputs.density(nodes), dtype=float)
        if np.any(f[wv > 0] <= 0):
            raise ValueError("design density must be positive where w > 0")
        inv_f = np.where(wv > 0, 1.0 / np.where(f > 0, f, 1.0), 0.0)
    else:
        raise ValueError(f"unknown density specification {inputs.density!r}")
    s2, rc = inputs.sigma2, inputs.rho_c
    k2 = self_convolution_at_zero(k, 2)
    k4 = self_convolution_at_zero(k, 4)
    int_w_f = np.sum(wv * inv_f) * dx
    int_w = np.sum(wv) * dx
    int_w2_f2 = np.sum(wv ** 2 * inv_f ** 2) * dx
    int_w2_f = np.sum(wv ** 2 * inv_f) * dx
    int_w2 = np.sum(wv ** 2) * dx
    b0 = s2 * k2 * (int_w_f + rc * int_w) / np.sqrt(h.det)
    v = 2.0 * s2 ** 2 * k4 * (int_w2_f2 + 2.0 * rc * int_w2_f + 4.0 * rc ** 2 * int_w2)
    if inputs.g_dev is None:
        b1 = 0.0
    else:
        conv = _convolve_at(k, h, inputs.g_dev, nodes[wv > 0])
        b1 = float(np.sum(conv ** 2 * wv[wv > 0]) * dx)
    return float(b0), float(b1), float(v)


def standardized_statistic(t_n, constants) -> float:
    """``(T_n - b0 - b1) / sqrt(V)``."""
    b0, b1, v = constants
    if not v > 0:
        raise NonpositiveVariance(f"asymptotic variance must be positive, got {v}")
    return float((t_n - b0 - b1) / np.sqrt(v))
