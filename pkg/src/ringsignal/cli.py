"""Command-line driver: single runs, sweeps, cycle optimization and validation grids."""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager

from .analytic import solve_analytic
from .config import ExperimentConfig
from .errors import ConfigurationError, DomainError, SequencingError
from .ltm import check_step, detect_stationary, simulate
from .mfd import classify, mfd_gbar, phi1_of_T, phi2_of_T
from .optimizer import default_grid, objective, optimal_cycle, sweep_optimum
from .validation import agreement_cell, equivalence_cell, run_cells

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NONCONVERGED = 3
EXIT_CONFIG = 4


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return "%.9g" % x


@contextmanager
def _sink(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def write_rows(path, header, rows) -> None:
    with _sink(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _stationary(cfg: ExperimentConfig, k0: float, T: float, dt: float):
    """Run one cell with the configured solver and detect its stationary state."""
    fd, plan, ring = cfg.fd, cfg.plan(T), cfg.ring(k0)
    if cfg.mode == "analytic":
        series = solve_analytic(fd, plan, ring, dt, cfg.max_cycles)
    else:
        series = simulate(fd, plan, ring, dt, cfg.max_cycles, True, cfg.m_max, cfg.tol)
    return series, detect_stationary(series, cfg.m_max, cfg.tol)


def _sim_cell(args):
    cfg, k0, T = args
    try:
        _, st = _stationary(cfg, k0, T, cfg.dt)
    except (DomainError, SequencingError) as exc:
        return math.nan, f"error: {exc}"
    return st.gbar, "ok" if st.converged else "nonconverged"


def _sim_many(cfg, cells, jobs):
    work = [(cfg, k0, T) for k0, T in cells]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(_sim_cell, work))
    return [_sim_cell(w) for w in work]


def _single_point(cfg):
    if len(cfg.densities) != 1 or len(cfg.T.values) != 1:
        raise ConfigurationError("simulate needs a single k0 and a single T")
    return cfg.densities[0], cfg.T.values[0]


def cmd_simulate(cfg: ExperimentConfig, out=None, **_) -> int:
    k0, T = _single_point(cfg)
    series, st = _stationary(cfg, k0, T, cfg.dt)
    if out is not None:
        series.to_csv(out)
    C = cfg.fd.C
    line = (f"k0={fmt(k0)} T={fmt(T)} gbar={fmt(st.gbar)} gbar/C={fmt(st.gbar / C)} "
            f"m={st.period_multiple} converged={fmt(st.converged)} "
            f"residual={fmt(st.residual)} cycles={fmt(st.cycles_run)}")
    print(line)
    return EXIT_OK if st.converged else EXIT_NONCONVERGED


def cmd_mfd_sweep(cfg: ExperimentConfig, out=None, with_sim=False, jobs=1, **_) -> int:
    """One curve per cycle length, density along each curve."""
    fd, approx = cfg.fd, not cfg.exact_pi
    cells = [(k0, T) for T in cfg.T.values for k0 in cfg.densities]

    header = ["k0", "T", "k1", "k2", "phi1", "phi2", "gbar_formula", "gbar_sim",
              "regime", "status"]
    sims = _sim_many(cfg, cells, jobs) if with_sim else [(math.nan, "ok")] * len(cells)
    rows = []
    for (k0, T), (g, status) in zip(cells, sims):
        p = mfd_gbar(fd, cfg.plan(T), cfg.ring(k0), approx_pi0=approx)
        rows.append([k0, T, p.k1, p.k2, p.phi1, p.phi2, p.gbar, g, p.regime.value, status])
    write_rows(out, header, rows)
    return EXIT_NONCONVERGED if any(s != "ok" for _, s in sims) else EXIT_OK


def cmd_cycle_sweep(cfg: ExperimentConfig, out=None, with_sim=False, jobs=1, **_) -> int:
    """Average flow-rate against cycle length, one block of rows per density."""
    fd, approx = cfg.fd, not cfg.exact_pi
    cells = [(k0, T) for k0 in cfg.densities for T in cfg.T.values]
    header = ["k0", "T", "pi", "phi1", "phi2", "gbar", "gbar_sim", "regime", "status"]
    sims = _sim_many(cfg, cells, jobs) if with_sim else [(math.nan, "ok")] * len(cells)
    rows = []
    for (k0, T), (g, status) in zip(cells, sims):
        plan, ring = cfg.plan(T), cfg.ring(k0)
        rows.append([k0, T, plan.pi,
                     phi1_of_T(fd, plan, ring, approx_pi0=approx),
                     phi2_of_T(fd, plan, ring, approx_pi0=approx),
                     objective(fd, ring, cfg.delta, cfg.pi0, T, approx_pi0=approx),
                     g, classify(fd, k0, plan.pi).value, status])
    write_rows(out, header, rows)
    return EXIT_NONCONVERGED if any(s != "ok" for _, s in sims) else EXIT_OK


def ranges(values, step) -> str:
    """Compress sorted grid values into 'a-b' runs separated by ';'."""
    if not values:
        return ""
    runs, start, prev = [], values[0], values[0]
    for v in values[1:]:
        if v - prev > step * 1.5:
            runs.append((start, prev))
            start = v
        prev = v
    runs.append((start, prev))
    return ";".join(fmt(a) if a == b else f"{fmt(a)}-{fmt(b)}" for a, b in runs)


def cmd_optimize(cfg: ExperimentConfig, out=None, with_sim=False, jobs=1, **_) -> int:
    fd = cfg.fd
    grid = default_grid(cfg.delta, cfg.T_cap)
    header = ["k0", "k0_over_kbar", "chi", "regime", "T_star", "gbar_star",
              "gbar_star_over_pi0C", "near_optimal"]
    if cfg.cross_check:
        header += ["T_sweep", "gbar_sweep", "sweep_agrees"]
    rows = []
    for k0 in cfg.densities:
        ring = cfg.ring(k0)
        res = optimal_cycle(fd, ring, cfg.delta, cfg.pi0, grid, cfg.gap, cfg.T_cap)
        T_star = "unbounded" if res.unbounded else ";".join(fmt(t) for t in res.optimal_T)
        row = [k0, k0 / fd.Kbar, res.chi, res.regime.value, T_star, res.gbar_star,
               res.gbar_star / (cfg.pi0 * fd.C), ranges([t for t, _, _ in res.near_optimal], 1.0)]
        if cfg.cross_check:
            sw = sweep_optimum(fd, ring, cfg.delta, cfg.pi0, grid, approx_pi0=not cfg.exact_pi,
                               simulate=with_sim, dt=cfg.dt if with_sim else None, jobs=jobs)
            if res.unbounded:
                agrees = bool(sw.T_best >= grid[-1] - 1.0)
            else:
                agrees = any(abs(sw.T_best - t) <= 1.0 for t in res.optimal_T)
            row += [sw.T_best, sw.gbar_best, agrees]
        rows.append(row)

    table = io.StringIO()
    table.write(f"{'k0/Kbar':>8} {'chi':>7} {'regime':>11} {'gbar*/pi0C':>10}  T*  [near-optimal]\n")
    for r in rows:
        table.write(f"{r[1]:8.4g} {r[2]:7.4g} {r[3]:>11} {r[6]:10.4f}  {r[4]}  [{r[7]}]")
        if cfg.cross_check:
            table.write(f"  sweep T={fmt(r[8])} agrees={fmt(r[10])}")
        table.write("\n")
    sys.stdout.write(table.getvalue())
    if out is not None:
        write_rows(out, header, rows)
    return EXIT_OK


def cmd_validate(cfg: ExperimentConfig, out=None, jobs=1, **_) -> int:
    """Equivalence, sim-vs-formula agreement and the dt-halving check over the grid."""
    fd = cfg.fd
    cells = [(k0, T) for k0 in cfg.densities for T in cfg.T.values]
    for k0, T in cells:
        check_step(fd, cfg.plan(T), cfg.ring(k0), cfg.dt)
    args = [(fd, cfg.plan(T), cfg.ring(k0), cfg.dt) for k0, T in cells]
    eq = run_cells(equivalence_cell, args, jobs)
    ag = run_cells(agreement_cell, [a + (cfg.max_cycles,) for a in args], jobs)
    half = run_cells(agreement_cell,
                     [(fd, cfg.plan(T), cfg.ring(k0), cfg.dt / 2, cfg.max_cycles)
                      for k0, T in cells], jobs)

    reports = eq + ag + half
    with _sink(out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["check", "k0", "T", "dt", "value", "reference", "residual",
                    "tolerance", "passed", "note"])
        for r in reports:
            w.writerow([r.check, fmt(r.k0), fmt(r.T), fmt(r.dt), fmt(r.value), fmt(r.reference),
                        fmt(r.residual), fmt(r.tolerance), fmt(r.passed), r.note])

    C = fd.C
    full_max = max(r.residual for r in ag)
    half_max = max(r.residual for r in half)
    halving_ok = half_max <= 0.75 * full_max + 1e-9 * C
    summary = sys.stderr if out is None else sys.stdout
    for name, group in (("equivalence", eq), ("agreement", ag), ("agreement dt/2", half)):
        bad = [r for r in group if not r.passed]
        print(f"{name}: {len(group) - len(bad)}/{len(group)} passed, "
              f"max residual {fmt(max(r.residual for r in group))}", file=summary)
        for r in bad:
            print(f"  FAIL k0={fmt(r.k0)} T={fmt(r.T)} residual={fmt(r.residual)} "
                  f"tol={fmt(r.tolerance)} {r.note}", file=summary)
    print(f"dt halving: max residual {fmt(full_max)} -> {fmt(half_max)} "
          f"({'ok' if halving_ok else 'FAIL'})", file=summary)
    ok = all(r.passed for r in reports) and halving_ok
    return EXIT_OK if ok else EXIT_VALIDATION


COMMANDS = {
    "simulate": cmd_simulate,
    "mfd-sweep": cmd_mfd_sweep,
    "cycle-sweep": cmd_cycle_sweep,
    "optimize": cmd_optimize,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ringsignal",
                                description="Signalized ring-road kinematic wave experiments.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="TOML experiment file (defaults used when omitted)")
    p.add_argument("--out", help="output CSV path (stdout when omitted)")
    p.add_argument("--with-sim", action="store_true",
                   help="also simulate every cell (sweeps) or use simulation in the cross-check")
    p.add_argument("--exact-pi", action="store_true",
                   help="use the lost-time-corrected green ratio inside the wave bounds")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        if args.exact_pi:
            cfg = cfg.override(exact_pi=True)
        if args.jobs < 1:
            raise ConfigurationError("--jobs must be at least 1")
        return COMMANDS[args.command](cfg, out=args.out, with_sim=args.with_sim,
                                      jobs=args.jobs)
    except (ConfigurationError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
