"""
Significance trace over a bandwidth grid
========================================

The p-value depends on H.  A trace shows it across a grid of diagonal
bandwidths; the same fitted null model is reused at every bandwidth.
"""

import sys

from spatial_gof import KernelSpec, TrendModel, significance_trace
from spatial_gof.cli import parse_grid_spec
from spatial_gof.io import write_trace
from spatial_gof.simulation import ScenarioConfig, generate_field

data = generate_field(ScenarioConfig(sigma=0.8, range=0.2, c=3, seed=5), 0).dataset

grid = parse_grid_spec("0.5:1.0:3,0.5:1.0:3")      # 3 x 3 Cartesian grid of (h1, h2)
trace = significance_trace(data, TrendModel(1, 2), "exponential", KernelSpec("triweight", 2),
                           grid, B=199, seed=2)

# plot-ready CSV on stdout: h1,h2,p_value,t_n,reason
write_trace(trace, sys.stdout)
