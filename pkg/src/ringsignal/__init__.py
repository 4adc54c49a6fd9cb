"""Kinematic-wave model of a signalized ring road: simulation, MFD and cycle design."""
from .analytic import activation_time, recurse_green, recurse_red, solve_analytic
from .config import ExperimentConfig, Grid
from .errors import ConfigurationError, DomainError, SequencingError
from .fundamentals import (FundamentalDiagram, RingConfig, SignalPlan, beta,
                           effective_green_ratio, flow)
from .ltm import (CumulativeFlowSeries, StationaryResult, advance, aligned_step,
                  check_invariants, demand_step, detect_stationary, read_series_csv,
                  simulate, simulate_stationary, supply_step)
from .mfd import (MfdPoint, Regime, WaveDecomposition, classify, critical_densities,
                  decompose, main_equation_residual, mfd_gbar, phi1_of_T, phi2_of_T)
from .optimizer import (OptimalCycleResult, SweepResult, congestion_level,
                        congestion_regime, objective, optimal_cycle, stationary_delay,
                        sweep_optimum)

__all__ = [name for name in dir() if not name.startswith("_")]
