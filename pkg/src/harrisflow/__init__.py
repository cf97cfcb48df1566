"""Coalescing stochastic flows with drift: simulation, splitting, diagnostics."""

from . import (coalescence_theory, covariance, drift, dual, experiments,
               flow_sim, measures, report, splitting, streams)
from .coalescence_theory import (DiffusionSpec, accessibility_limit,
                                 gap_survival_bound, scale_function,
                                 squared_bessel_survival)
from .covariance import CovarianceSpec, eval_phi, verify_class
from .drift import DriftSpec, eval_drift, ode_flow
from .dual import (DualBundle, TrajectoryBundle, dual_value, mapping_I,
                   wedge_check)
from .experiments import (ExperimentConfig, run_sharpness, run_strong_rate,
                          run_wasserstein_rate, run_weak_convergence)
from .flow_sim import PathRecord, SimConfig, simulate
from .measures import (QuantileMeasure, estimate_W1p, pushforward,
                       wasserstein_p)
from .report import ConvergenceReport, emit_report, fit_loglog
from .splitting import (CoupledPaths, Partition, SplitPaths, coupled_pair,
                        decomposition_diagnostics, locate, make_partition,
                        split_simulate, split_two_param)

__version__ = "0.1.0"

__all__ = [
    "CovarianceSpec", "DriftSpec", "SimConfig", "PathRecord", "Partition",
    "SplitPaths", "CoupledPaths", "simulate", "split_simulate", "coupled_pair",
    "split_two_param", "decomposition_diagnostics", "make_partition", "locate",
    "eval_phi", "eval_drift", "ode_flow", "verify_class",
    "QuantileMeasure", "pushforward", "wasserstein_p", "estimate_W1p",
    "TrajectoryBundle", "DualBundle", "dual_value", "mapping_I", "wedge_check",
    "DiffusionSpec", "scale_function", "accessibility_limit",
    "squared_bessel_survival", "gap_survival_bound",
    "ExperimentConfig", "ConvergenceReport", "run_strong_rate",
    "run_sharpness", "run_wasserstein_rate", "run_weak_convergence",
    "fit_loglog", "emit_report",
    "coalescence_theory", "covariance", "drift", "dual", "experiments",
    "flow_sim", "measures", "report", "splitting", "streams",
]
