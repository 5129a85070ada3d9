"""Interval splitting with choice: simulation and limiting-profile solvers."""

from intervalchoice.psi import (
    ChoiceRule,
    MaxK,
    MinK,
    UniformChoice,
    Kakutani,
    Tabulated,
    DensityRule,
    parse_rule,
)
from intervalchoice.grid import GridFunction, make_grid
from intervalchoice.intervals import IntervalTable, SplitEvent, Histogram, run, make_rng
from intervalchoice.evolution import (
    Trajectory,
    op_T,
    op_A,
    op_S,
    evolve,
    fixed_point,
    ode_solve,
    min_k_phase,
    tail_fit,
)
from intervalchoice import metrics

__version__ = "0.1.0"
