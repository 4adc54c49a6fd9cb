"""Cross-checks between the solvers and the closed form, cell by cell."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .analytic import solve_analytic
from .fundamentals import FundamentalDiagram, RingConfig, SignalPlan
from .ltm import (DEFAULT_MAX_CYCLES, aligned_step, check_invariants, simulate,
                  simulate_stationary)
from .mfd import main_equation_residual, mfd_gbar


@dataclass(frozen=True)
class CellReport:
    check: str
    k0: float
    T: float
    dt: float
    value: float
    reference: float
    residual: float
    tolerance: float
    passed: bool
    note: str = ""
    violations: tuple = ()


def equivalence_cell(fd: FundamentalDiagram, plan: SignalPlan, ring: RingConfig,
                     dt: Optional[float] = None, max_cycles: int = 40) -> CellReport:
    """Largest gap between the recursion and the discrete scheme after L/W."""
    dt = aligned_step(fd, plan, ring) if dt is None else dt
    disc = simulate(fd, plan, ring, dt, max_cycles, stop_early=False)
    ana = solve_analytic(fd, plan, ring, dt, max_cycles)
    late = disc.times > ring.L / fd.W
    resid = float(np.max(np.abs(disc.values[late] - ana.values[late]), initial=0.0))
    tol = 1e-9 * ring.vehicles
    problems = check_invariants(disc) + check_invariants(ana)
    return CellReport("equivalence", ring.k0, plan.T, dt, float(ana.values[-1]),
                      float(disc.values[-1]), resid, tol, resid <= tol and not problems,
                      "; ".join(problems), tuple(problems))


def agreement_tolerance(fd: FundamentalDiagram, plan: SignalPlan, dt: float) -> float:
    return max(2 * fd.C * dt / plan.T, 1e-3 * fd.C)


def agreement_cell(fd: FundamentalDiagram, plan: SignalPlan, ring: RingConfig,
                   dt: Optional[float] = None,
                   max_cycles: int = DEFAULT_MAX_CYCLES) -> CellReport:
    """Simulated stationary flow-rate against the closed-form MFD.

    The note records the detected period multiple, convergence, invariant
    violations and the main-equation residual for period-one states.
    """
    dt = aligned_step(fd, plan, ring) if dt is None else dt
    series, st = simulate_stationary(fd, plan, ring, dt, max_cycles)
    formula = mfd_gbar(fd, plan, ring).gbar
    resid = abs(st.gbar - formula)
    tol = agreement_tolerance(fd, plan, dt)
    notes = [f"m={st.period_multiple}", f"converged={st.converged}"]
    problems = check_invariants(series)
    notes += problems
    if st.converged and st.period_multiple == 1:
        notes.append(f"main_eq={main_equation_residual(series, st.gbar):.3g}")
    return CellReport("agreement", ring.k0, plan.T, dt, st.gbar, formula, resid, tol,
                      resid <= tol and st.converged and not problems, " ".join(notes),
                      tuple(problems))


def _run(job):
    fn, args = job
    return fn(*args)


def run_cells(fn, cells, jobs: int = 1) -> list:
    """Evaluate ``fn(*cell)`` for every cell; results keep the input order."""
    work = [(fn, cell) for cell in cells]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(_run, work))
    return [_run(w) for w in work]
