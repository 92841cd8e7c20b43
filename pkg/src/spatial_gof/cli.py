"""Command-line front end.

Exit codes: 0 = ran, no rejection; 2 = null hypothesis rejected at ``--alpha``
(``test`` only); 1 = error, including usage errors.

    spatial-gof test --data wells.csv --bandwidth 400,225 --B 1000 --seed 7
    spatial-gof trace --data wells.csv --bandwidth-grid 300:500:5,150:300:4 --B 1000
    spatial-gof variogram --data wells.csv --bins 13
    spatial-gof simulate table1_s04_ae02_n225.cfg --out rates.csv
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time

import numpy as np

from . import io as gio
from .goftest import (
    BootstrapDegenerate,
    QuadratureGrid,
    WeightFunction,
    bootstrap_test,
    significance_trace,
)
from .kernels import BandwidthMatrix, KernelSpec
from .numerics import NotPositiveDefinite
from .seeding import fresh_seed
from .simulation import load_scenarios, run_scenario, write_rows_csv
from .smoothing import InsufficientLocalData
from .trend import DegenerateDesign, TrendModel, ols_fit
from .variography import (
    VARIOGRAM_FAMILIES,
    NoPairsInRange,
    VariogramFitFailed,
    empirical_semivariogram,
    fit_variogram_wls,
    normalize_family,
)

log = logging.getLogger("spatial_gof")

STAGES = (
    (gio.DatasetParseError, "parse"),
    (OSError, "parse"),
    (NotPositiveDefinite, "cholesky"),
    (InsufficientLocalData, "quadrature"),
    (VariogramFitFailed, "fit"),
    (NoPairsInRange, "fit"),
    (DegenerateDesign, "fit"),
    (BootstrapDegenerate, "bootstrap"),
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _pair(text):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected h1,h2 got {text!r}") from None
    if len(vals) == 1:
        vals *= 2
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected h1,h2 got {text!r}")
    return BandwidthMatrix(vals)


def parse_grid_spec(spec):
    """``h1min:h1max:steps,h2min:h2max:steps`` to a list of bandwidth matrices.

    The two axes are combined as a Cartesian product (h1 varies slowest).  A
    single ``hmin:hmax:steps`` part gives scalar bandwidths ``diag(h, h)``.
    """
    parts = [p for p in spec.strip().split(",") if p.strip()]
    if not parts or len(parts) > 2:
        raise UsageError(f"bad bandwidth grid {spec!r}: expected "
                         "h1min:h1max:steps[,h2min:h2max:steps]")
    axes = []
    for p in parts:
        try:
            lo, hi, steps = p.split(":")
            lo, hi, steps = float(lo), float(hi), int(steps)
        except ValueError:
            raise UsageError(f"bad bandwidth grid component {p!r}") from None
        if steps < 1 or lo <= 0 or hi < lo:
            raise UsageError(f"bad bandwidth grid component {p!r}")
        axes.append(np.linspace(lo, hi, steps) if steps > 1 else np.array([lo]))
    if len(axes) == 1:
        return [BandwidthMatrix([h, h]) for h in axes[0]]
    return [BandwidthMatrix([a, b]) for a in axes[0] for b in axes[1]]


def _weight(text):
    if text in (None, "one"):
        return WeightFunction()
    if text.startswith("box:"):
        try:
            v = [float(t) for t in text[4:].split(",")]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad weight {text!r}") from None
        if len(v) != 4:
            raise argparse.ArgumentTypeError("box weight needs x0,x1,y0,y1")
        return WeightFunction.indicator([(v[0], v[1]), (v[2], v[3])])
    raise argparse.ArgumentTypeError(f"weight must be 'one' or 'box:x0,x1,y0,y1', got {text!r}")


def _family(text):
    try:
        return normalize_family(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _common(p):
    p.add_argument("--data", required=True, help="CSV file with x,y,z columns")
    p.add_argument("--trend-degree", type=int, default=1)
    p.add_argument("--variogram", type=_family, default="exponential",
                   help="|".join(VARIOGRAM_FAMILIES))


def _testing(p):
    p.add_argument("--kernel", choices=["triweight", "gaussian"], default="triweight")
    p.add_argument("--B", type=int, default=500)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--weight", type=_weight, default=WeightFunction(),
                   help="one | box:x0,x1,y0,y1")
    p.add_argument("--quad-points", type=int, default=30)
    p.add_argument("--refit-variogram", action="store_true",
                   help="refit the variogram in every bootstrap replicate")


def build_parser():
    parser = _Parser(prog="spatial-gof", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("test", help="bootstrap goodness-of-fit test at one bandwidth")
    _common(p)
    _testing(p)
    p.add_argument("--bandwidth", type=_pair, required=True, help="h1,h2")
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=["json", "csv"], default="json")

    p = sub.add_parser("trace", help="significance trace over a bandwidth grid")
    _common(p)
    _testing(p)
    p.add_argument("--bandwidth-grid", required=True,
                   help="h1min:h1max:steps,h2min:h2max:steps")
    p.add_argument("--out", default=None)

    p = sub.add_parser("variogram", help="empirical and fitted semivariograms of OLS residuals")
    _common(p)
    p.add_argument("--bins", type=int, default=13)
    p.add_argument("--max-lag", type=float, default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("simulate", help="rejection proportions for scenario config files")
    p.add_argument("config")
    p.add_argument("--out", default=None)
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: SPATIAL_GOF_THREADS or 1)")
    return parser


def _seed(args, err):
    if args.seed is None:
        args.seed = fresh_seed()
        print(f"seed: {args.seed}", file=err)
    return args.seed


def _open_out(path, out):
    return open(path, "w", newline="") if path else None


def _emit(text, path, out):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        out.write(text)


def cmd_test(args, out, err):
    data = gio.read_dataset(args.data)
    seed = _seed(args, err)
    model = TrendModel(args.trend_degree, data.dim)
    q = QuadratureGrid.bounding_box(data, args.quad_points)
    rep = bootstrap_test(data, model, args.variogram, KernelSpec(args.kernel, data.dim),
                         args.bandwidth, args.weight, q, args.B, seed,
                         refit_variogram=args.refit_variogram)
    d = rep.to_dict()
    d["alpha"] = args.alpha
    d["reject"] = bool(rep.rejects(args.alpha))
    if args.format == "json":
        _emit(json.dumps(d, indent=2) + "\n", args.out, out)
    else:
        cols = ["t_n", "p_value", "B", "h1", "h2", "alpha", "reject", "seed"]
        row = [repr(rep.t_n), repr(rep.p_value), rep.B, *map(repr, rep.bandwidth.diagonal),
               args.alpha, int(d["reject"]), seed]
        _emit(",".join(cols) + "\n" + ",".join(map(str, row)) + "\n", args.out, out)
    return 2 if d["reject"] else 0


def cmd_trace(args, out, err):
    grid = parse_grid_spec(args.bandwidth_grid)
    data = gio.read_dataset(args.data)
    seed = _seed(args, err)
    model = TrendModel(args.trend_degree, data.dim)
    q = QuadratureGrid.bounding_box(data, args.quad_points)
    entries = significance_trace(data, model, args.variogram, KernelSpec(args.kernel, data.dim),
                                 grid, args.weight, q, args.B, seed,
                                 refit_variogram=args.refit_variogram)
    if args.out:
        gio.write_trace(entries, args.out)
    else:
        gio.write_trace(entries, out)
    return 0


def cmd_variogram(args, out, err):
    data = gio.read_dataset(args.data)
    model = TrendModel(args.trend_degree, data.dim)
    resid = data.responses - ols_fit(model, data)(data.locations)
    emp = empirical_semivariogram(data.locations, resid, args.bins, args.max_lag)
    if len(emp) < 3:
        print(f"warning: only {len(emp)} nonempty lag bins; no models fitted", file=err)
    rows = [["empirical", repr(float(h)), repr(float(g)), int(m), "", "", "", ""]
            for h, g, m in zip(emp.bin_centers, emp.gamma_hat, emp.pair_counts)]
    if len(emp) >= 3:
        for fam in VARIOGRAM_FAMILIES:
            fit = fit_variogram_wls(emp, fam)
            m = fit.model
            for h, g, cnt in zip(emp.bin_centers, m.semivariance(emp.bin_centers), emp.pair_counts):
                rows.append([fam, repr(float(h)), repr(float(g)), int(cnt), repr(m.nugget),
                             repr(m.partial_sill), repr(m.range), repr(fit.objective)])
    fh = _open_out(args.out, out) or out
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["family", "lag", "gamma", "npairs", "nugget", "partial_sill", "range", "objective"])
    w.writerows(rows)
    if fh is not out:
        fh.close()
    return 0


def cmd_simulate(args, out, err):
    try:
        configs = load_scenarios(args.config)
    except (ValueError, OSError) as exc:
        raise UsageError(f"config error: {exc}") from None
    results = []
    for cfg in configs:
        t0 = time.time()
        res = run_scenario(cfg, workers=args.workers)
        results.append(res)
        props = " ".join(f"{p:.3f}" for p in res.proportions)
        print(f"sigma={cfg.sigma:g} a_e={cfg.effective_range:g} c={cfg.c:g} n={cfg.n}: "
              f"{props}  ({res.used} replicates, {len(res.failures)} failed, "
              f"{time.time() - t0:.0f}s)", file=err)
    if args.out:
        write_rows_csv(results, args.out)
        with open(args.out + ".meta.json", "w") as fh:
            json.dump([r.metadata() for r in results], fh, indent=2)
    else:
        write_rows_csv(results, out)
    return 0


COMMANDS = {"test": cmd_test, "trace": cmd_trace, "variogram": cmd_variogram,
            "simulate": cmd_simulate}


def main(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("a subcommand is required: " + ", ".join(COMMANDS))
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args, out, err)
    except UsageError as exc:
        print(f"usage error: {exc}", file=err)
        return 1
    except Exception as exc:
        for cls, stage in STAGES:
            if isinstance(exc, cls):
                print(f"error [{stage}]: {exc}", file=err)
                return 1
        print(f"error: {type(exc).__name__}: {exc}", file=err)
        return 1


if __name__ == "__main__":
    sys.exit(main())
