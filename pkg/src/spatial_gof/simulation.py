"""Gaussian random field generation and rejection-rate experiments.

A scenario fixes the design, the mean surface ``m(x) = b0 + b1 x1 + x2 + c x1^3``,
the exponential error covariance (optionally with a nugget, optionally
shrinking with ``n``), the bandwidth grid and the Monte Carlo sizes.  Replicate
``r`` draws everything from seeds derived from ``(seed, r)`` so the output does
not depend on how replicates are distributed over worker processes.
"""
from __future__ import annotations

import configparser
import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import stats

from .goftest import (
    AsymptoticInputs,
    QuadratureGrid,
    TnOperator,
    WeightFunction,
    asymptotic_constants,
    bootstrap_residuals,
    p_value_from,
    prepare_bootstrap,
    rho_c_shrinking_exponential,
    standardized_statistic,
)
from .kernels import GAUSSIAN, BandwidthMatrix, KernelSpec
from .numerics import cholesky
from .seeding import rng_for, standard_normals, worker_count
from .smoothing import SpatialDataset
from .trend import TrendModel, design_matrix, iterative_fit
from .variography import EXPONENTIAL, VariogramModel, covariance_matrix, normalize_family

log = logging.getLogger(__name__)

TRENDS = {"M1": (2.0, 1.0, 1.0), "M2": (3.0, 2.0, 1.0)}
CSV_COLUMNS = ["sigma", "a_e", "c", "n", "h1", "h2", "rejections", "replicates", "proportion"]
MAX_FAILURE_FRACTION = 0.02

# seed path components
_LOCATIONS, _ERRORS, _BOOTSTRAP = 0, 1, 2


class ScenarioError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation cell (single deviation size ``c``)."""

    design: str = "grid"          # "grid" (side x side) or "random" (uniform, size points)
    size: int = 15
    trend: str = "M1"
    c: float = 0.0
    sigma: float = 0.4
    range: float = 0.2
    nugget_frac: float = 0.0
    correlation: str = "fixed"    # or "shrinking": rho(h) = exp(-lam * n * h)
    lam: float | None = None
    bandwidths: tuple = ((0.6, 0.6), (0.7, 0.7), (0.8, 0.8), (0.9, 0.9), (1.0, 1.0))
    alpha: float = 0.05
    replicates: int = 200
    bootstrap_B: int = 200
    seed: int = 1
    kernel: str = "triweight"
    variogram: str = EXPONENTIAL
    grid_convention: str = "endpoints"   # i/(s-1); "centers" gives (i+0.5)/s
    quad_points: int = 30

    def __post_init__(self):
        object.__setattr__(self, "bandwidths", tuple(tuple(float(v) for v in b) for b in self.bandwidths))
        object.__setattr__(self, "variogram", normalize_family(self.variogram))
        problems = []
        if self.design not in ("grid", "random"):
            problems.append(f"design must be grid or random, got {self.design!r}")
        if self.n < 25:
            problems.append("need at least 25 sites")
        if self.trend not in TRENDS:
            problems.append(f"trend must be one of {sorted(TRENDS)}")
        if not self.sigma > 0:
            problems.append("sigma must be positive")
        if self.correlation == "fixed":
            if not self.range > 0:
                problems.append("range must be positive")
        elif self.correlation == "shrinking":
            if not (self.lam and self.lam > 0):
                problems.append("shrinking correlation needs lam > 0")
        else:
            problems.append(f"correlation must be fixed or shrinking, got {self.correlation!r}")
        if not 0 <= self.nugget_frac <= 1:
            problems.append("nugget_frac must lie in [0, 1]")
        if not 0 < self.alpha < 1:
            problems.append("alpha must lie in (0, 1)")
        if self.replicates < 1:
            problems.append("replicates must be >= 1")
        if self.bootstrap_B < 19:
            problems.append("bootstrap_B must be >= 19")
        if not self.bandwidths:
            problems.append("bandwidth grid is empty")
        if self.grid_convention not in ("endpoints", "centers"):
            problems.append("grid_convention must be endpoints or centers")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def n(self):
        return self.size ** 2 if self.design == "grid" else self.size

    @property
    def effective_range(self):
        """Exponential range parameter actually used (``1/(lam n)`` when shrinking)."""
        if self.correlation == "shrinking":
            return 1.0 / (self.lam * self.n)
        return self.range

    @property
    def error_model(self):
        s2 = self.sigma ** 2
        c0 = self.nugget_frac * s2
        return VariogramModel(EXPONENTIAL, c0, s2 - c0, self.effective_range)

    @property
    def true_beta(self):
        return np.array(TRENDS[self.trend])

    def mean(self, locations):
        loc = np.asarray(locations, dtype=float)
        b0, b1, b2 = TRENDS[self.trend]
        return b0 + b1 * loc[:, 0] + b2 * loc[:, 1] + self.c * loc[:, 0] ** 3

    def bandwidth_matrices(self):
        return [BandwidthMatrix(b) for b in self.bandwidths]

    def kernel_spec(self):
        return KernelSpec(self.kernel, 2)


@dataclass
class FieldSample:
    dataset: SpatialDataset
    true_beta: np.ndarray
    scenario: ScenarioConfig
    errors: np.ndarray


def grid_locations(side, convention="endpoints"):
    if convention == "endpoints":
        ticks = np.arange(side) / (side - 1.0)
    else:
        ticks = (np.arange(side) + 0.5) / side
    xx, yy = np.meshgrid(ticks, ticks, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def _locations(cfg, replicate_index):
    if cfg.design == "grid":
        return grid_locations(cfg.size, cfg.grid_convention)
    return rng_for(cfg.seed, replicate_index, _LOCATIONS).random((cfg.size, 2))


@lru_cache(maxsize=8)
def _grid_cholesky(side, convention, model):
    return cholesky(covariance_matrix(model, grid_locations(side, convention)))


def _error_factor(cfg, locations):
    if cfg.design == "grid":
        return _grid_cholesky(cfg.size, cfg.grid_convention, cfg.error_model)
    return cholesky(covariance_matrix(cfg.error_model, locations))


def generate_field(cfg: ScenarioConfig, replicate_index: int) -> FieldSample:
    """Sample ``Z = m(X) + L z`` with ``L L' = Sigma`` and ``z`` Box-Muller normals."""
    loc = _locations(cfg, replicate_index)
    low = _error_factor(cfg, loc)
    z = standard_normals(rng_for(cfg.seed, replicate_index, _ERRORS), loc.shape[0])
    eps = low @ z
    data = SpatialDataset(loc, cfg.mean(loc) + eps)
    return FieldSample(data, cfg.true_beta, cfg, eps)


@dataclass
class CovarianceCheck:
    lags: np.ndarray
    analytic: np.ndarray
    empirical: np.ndarray
    standard_error: np.ndarray

    @property
    def deviation(self):
        return np.abs(self.empirical - self.analytic)

    @property
    def max_abs_deviation(self):
        return float(self.deviation.max())

    @property
    def max_z(self):
        return float(np.max(self.deviation / self.standard_error))


def empirical_covariance_check(cfg: ScenarioConfig, R: int = 500, n_lags: int = 5) -> CovarianceCheck:
    """Compare Monte Carlo error covariances with the analytic model.

    Uses the site nearest the centre of the unit square and the sites
    ``0..n_lags-1`` grid steps to its right.  The errors have known zero mean,
    so the estimator is the mean cross product; its standard error for a
    Gaussian pair is ``sqrt((var_i var_j + cov^2) / R)``.
    """
    if R < 2:
        raise ValueError("R must be at least 2")
    if cfg.design != "grid":
        raise ValueError("covariance check is defined on the regular grid design")
    side = cfg.size
    if n_lags > side // 2 + 1:
        raise ValueError("too many lags for the grid")
    i0 = (side - 1) // 2 - (n_lags - 1) // 2
    anchor = i0 * side + (side - 1) // 2
    # ij indexing: flat index = ix * side + iy, so +side is one step along x
    partners = anchor + side * np.arange(n_lags)
    loc = grid_locations(side, cfg.grid_convention)
    model = cfg.error_model
    analytic = covariance_matrix(model, loc[[anchor]], loc[partners])[0]
    analytic[0] = model.sill
    lags = np.linalg.norm(loc[partners] - loc[anchor], axis=1)
    prods = np.empty((R, n_lags))
    for r in range(R):
        eps = generate_field(cfg, r).errors
        prods[r] = eps[anchor] * eps[partners]
    empirical = prods.mean(axis=0)
    se = np.sqrt((model.sill ** 2 + analytic ** 2) / R)
    return CovarianceCheck(lags, analytic, empirical, se)


# --------------------------------------------------------------------------
# rejection-rate experiments


@dataclass
class ReplicateOutcome:
    index: int
    p_values: np.ndarray | None
    error: str | None = None


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    rejections: np.ndarray
    used: int
    failures: list = field(default_factory=list)
    p_values: np.ndarray | None = None

    @property
    def proportions(self):
        return self.rejections / self.used

    def rows(self):
        cfg = self.config
        out = []
        for (h1, h2), rej, prop in zip(cfg.bandwidths, self.rejections, self.proportions):
            out.append({
                "sigma": repr(float(cfg.sigma)), "a_e": repr(float(cfg.effective_range)),
                "c": repr(float(cfg.c)), "n": str(cfg.n), "h1": repr(h1), "h2": repr(h2),
                "rejections": str(int(rej)), "replicates": str(self.used),
                "proportion": f"{prop:.6f}",
            })
        return out

    def metadata(self):
        meta = asdict(self.config)
        meta["bandwidths"] = [list(b) for b in self.config.bandwidths]
        meta["n"] = self.config.n
        meta["failures"] = self.failures
        return meta


def write_rows_csv(results, path_or_buf):
    """Write scenario results with the fixed column order ``CSV_COLUMNS``."""
    if hasattr(path_or_buf, "write"):
        w = csv.DictWriter(path_or_buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for res in results:
            w.writerows(res.rows())
        return
    with open(path_or_buf, "w", newline="") as fh:
        write_rows_csv(results, fh)


class _DesignCache:
    """Per-process cache of T_n operators for a fixed design."""

    def __init__(self):
        self.key = None
        self.ops = None

    def operators(self, cfg, locations):
        key = (cfg.design, cfg.size, cfg.grid_convention, cfg.kernel, cfg.bandwidths,
               cfg.quad_points) if cfg.design == "grid" else None
        if key is not None and key == self.key:
            return self.ops
        k = cfg.kernel_spec()
        q = QuadratureGrid.unit_square(cfg.quad_points)
        ops = [TnOperator(locations, k, h, WeightFunction(), q) for h in cfg.bandwidth_matrices()]
        if key is not None:
            self.key, self.ops = key, ops
        return ops


_CACHE = _DesignCache()


def run_replicate(cfg: ScenarioConfig, r: int) -> ReplicateOutcome:
    """One Monte Carlo replicate: p-value of the bootstrap test at every bandwidth.

    The same bootstrap resamples are shared by all bandwidths of the replicate.
    """
    try:
        sample = generate_field(cfg, r)
        data = sample.dataset
        model = TrendModel(1, 2)
        setup = prepare_bootstrap(data, model, cfg.variogram)
        ops = _CACHE.operators(cfg, data.locations)
        B = cfg.bootstrap_B
        if setup.perfect_fit:
            return ReplicateOutcome(r, np.ones(len(ops)))
        boot_seed = int(rng_for(cfg.seed, r, _BOOTSTRAP).integers(0, 2 ** 63))
        resid = bootstrap_residuals(setup, B, boot_seed)
        pv = np.array([p_value_from(op(setup.residuals), op(resid)) for op in ops])
        return ReplicateOutcome(r, pv)
    except Exception as exc:  # counted and reported by run_scenario
        log.warning("replicate %d of seed %d failed: %s", r, cfg.seed, exc)
        return ReplicateOutcome(r, None, f"{type(exc).__name__}: {exc}")


def _run_chunk(args):
    cfg, indices = args
    return [run_replicate(cfg, r) for r in indices]


def map_replicates(cfg, indices, workers=None):
    """Run replicates, possibly in worker processes; results in index order."""
    indices = list(indices)
    workers = workers or worker_count()
    if workers <= 1 or len(indices) < 2:
        return [run_replicate(cfg, r) for r in indices]
    chunks = [indices[i::workers] for i in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, [(cfg, c) for c in chunks]))
    out = [o for part in parts for o in part]
    return sorted(out, key=lambda o: o.index)


def run_scenario(cfg: ScenarioConfig, workers: int | None = None) -> ScenarioResult:
    """Rejection proportions ``#{p <= alpha} / R`` for every bandwidth.

    Failed replicates (for instance an unfittable variogram) are dropped from
    the denominator and reported with their seeds, provided they are fewer
    than 2% of the total; otherwise :class:`ScenarioError` is raised.
    """
    outcomes = map_replicates(cfg, range(cfg.replicates), workers)
    failures = [{"replicate": o.index, "seed": cfg.seed, "error": o.error}
                for o in outcomes if o.p_values is None]
    if len(failures) >= max(1, MAX_FAILURE_FRACTION * cfg.replicates) and failures:
        raise ScenarioError(f"{len(failures)} of {cfg.replicates} replicates failed: {failures[:3]}")
    pv = np.array([o.p_values for o in outcomes if o.p_values is not None])
    rejections = np.count_nonzero(pv <= cfg.alpha, axis=0)
    return ScenarioResult(cfg, rejections, pv.shape[0], failures, pv)


def binomial_band(p, R, level=0.95):
    """Central ``level`` interval of Binomial(R, p) counts, as proportions."""
    lo, hi = stats.binom.interval(level, R, p)
    return lo / R, hi / R


# --------------------------------------------------------------------------
# asymptotic behaviour under shrinking correlation


def asymptotic_replicate(cfg: ScenarioConfig, r: int, q: QuadratureGrid | None = None) -> float:
    """Standardized statistic ``(T_n - b0) / sqrt(V)`` for one null replicate."""
    k = cfg.kernel_spec()
    h = cfg.bandwidth_matrices()[0]
    q = q or QuadratureGrid.unit_square(cfg.quad_points)
    sample = generate_field(cfg, r)
    data = sample.dataset
    model = TrendModel(1, 2)
    fit = iterative_fit(model, data, cfg.variogram)
    resid = data.responses - design_matrix(model, data.locations) @ fit.beta
    t_n = TnOperator(data.locations, k, h, WeightFunction(), q)(resid)
    inputs = AsymptoticInputs(cfg.sigma ** 2, rho_c_shrinking_exponential(cfg.lam), "uniform")
    return standardized_statistic(t_n, asymptotic_constants(inputs, k, h, WeightFunction(), q))


def asymptotic_study(cfg: ScenarioConfig, n_list, R: int) -> dict:
    """Standardized statistics under the null for each sample size in ``n_list``.

    ``cfg`` must use the random design, a Gaussian kernel and shrinking
    exponential correlation; its ``size`` is replaced by each ``n``.
    """
    if cfg.correlation != "shrinking" or cfg.kernel != GAUSSIAN or cfg.design != "random":
        raise ValueError("asymptotic study needs random design, Gaussian kernel "
                         "and shrinking correlation")
    out = {}
    for n in n_list:
        c = replace(cfg, size=int(n), c=0.0)
        out[int(n)] = np.array([asymptotic_replicate(c, r) for r in range(R)])
    return out


def ks_to_normal(sample) -> float:
    return float(stats.kstest(np.asarray(sample), "norm").statistic)


# --------------------------------------------------------------------------
# config files


def _floats(text):
    return [float(t) for t in text.replace(",", " ").split()]


def _bandwidths(text):
    out = []
    for tok in text.replace(",", " ").split():
        if "x" in tok:
            h1, h2 = tok.split("x")
            out.append((float(h1), float(h2)))
        else:
            out.append((float(tok), float(tok)))
    return tuple(out)


_SCALARS = {
    "sigma": float, "range": float, "nugget_frac": float, "lam": float, "alpha": float,
    "replicates": int, "bootstrap_b": int, "seed": int, "quad_points": int, "size": int,
}


def parse_scenarios(text: str) -> list[ScenarioConfig]:
    """Scenario configs from INI text.

    Every section whose name starts with ``scenario`` yields one config per
    value of ``c`` (a comma separated list is allowed).  Keys are the
    :class:`ScenarioConfig` fields; ``side`` (grid) or ``n`` (random) may
    replace ``size`` and ``bandwidths`` accepts ``h`` or ``h1xh2`` tokens.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.read_string(text)
    sections = [s for s in parser.sections() if s.lower().startswith("scenario")]
    if not sections:
        raise ValueError("config has no [scenario] section")
    out = []
    for name in sections:
        sec = parser[name]
        kw = {}
        cs = [0.0]
        for key, raw in sec.items():
            key = key.lower()
            try:
                if key in ("side", "n"):
                    kw["size"] = int(raw)
                elif key == "lambda":
                    kw["lam"] = float(raw)
                elif key == "c":
                    cs = _floats(raw)
                elif key == "bandwidths":
                    kw["bandwidths"] = _bandwidths(raw)
                elif key in _SCALARS:
                    kw["bootstrap_B" if key == "bootstrap_b" else key] = _SCALARS[key](raw)
                elif key in ("design", "trend", "correlation", "kernel", "variogram",
                             "grid_convention"):
                    kw[key] = raw.strip()
                else:
                    raise ValueError(f"unknown key {key!r}")
            except ValueError as exc:
                raise ValueError(f"[{name}] {key}: {exc}") from None
        if not cs:
            raise ValueError(f"[{name}] c: empty list")
        for c in cs:
            out.append(ScenarioConfig(c=c, **kw))
    return out


def load_scenarios(path) -> list[ScenarioConfig]:
    with open(path) as fh:
        return parse_scenarios(fh.read())
