"""Large deviations for symbolic models of the Teichmueller flow.

Rauzy combinatorics, zippered rectangles, locally constant observables on
full shifts, thermodynamic formalism, suspension flows and Monte-Carlo
deviation experiments.
"""

__version__ = "0.1.0"

from .errors import (
    BudgetError,
    ConvergenceError,
    MetricUndefinedError,
    NonInducibleError,
    TeichLDError,
    ValidationError,
)
from .rauzy import Permutation, RauzyClass, integer_det, is_irreducible, matrix_a, matrix_b, rauzy_a, rauzy_b, rauzy_class
from .shift import Configuration, FunctionObservable, Observable, holder_fit, livsic_test, log_holder_fit, variation
from .thermo import (
    PressureCurve,
    bernoulli,
    bernoulli_potential,
    constrained_sup,
    deviation_bound,
    equilibrium_measure,
    exact_deviation_probability,
    pressure,
    rate_function,
)
from .zippered import ZipperedRectangle, area, distance, flow, heights, induce, renormalized_step, roof, symbolic_itinerary
from .suspension import FlowObservable, Roof, SuspensionPoint, flow_integral, lap_number, phi_r, rho, sample_mu_r, tail_estimate
from .ldlab import (
    DeviationReport,
    ExperimentConfig,
    deviate_flow,
    deviate_shift,
    lap_deviation,
    slope_fit,
    teich_demo,
    wilson_interval,
)
