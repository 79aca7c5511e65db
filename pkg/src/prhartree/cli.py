"""Command line entry point: ``prhartree <subcommand> --config run.ini``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .concentration import compare_profile, fit_scaling
from .ground_state import ConvergenceError, solve_q
from .minimizer import (
    MinimizerResult,
    SweepError,
    ThresholdError,
    minimize,
    nonexistence_probe,
    sweep,
    trial_energy,
    trial_state,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_CERTIFICATION = 4

logger = logging.getLogger("prhartree")


def _solver_kwargs(cfg: io.RunConfig) -> dict:
    kw = {"tol": cfg.get_float("solver", "tol"), "max_iter": cfg.get_int("solver", "max_iter")}
    if cfg.has("solver", "tau0"):
        kw["tau0"] = cfg.get_float("solver", "tau0")
    return kw


def _load_q(cfg):
    try:
        return io.load_qstate(cfg.qstate_stem())
    except FileNotFoundError as exc:
        raise io.ConfigError(str(exc)) from exc


def run_ground_state(cfg: io.RunConfig, args) -> int:
    grid = cfg.grid("ground_state")
    tol = cfg.get_float("ground_state", "tol")
    max_iter = cfg.get_int("ground_state", "max_iter")
    q = solve_q(grid, tol=tol, max_iter=max_iter)
    stem = cfg.qstate_stem()
    stem.parent.mkdir(parents=True, exist_ok=True)
    io.save_qstate(q, stem)
    failures = q.certify()
    print(f"a* = {q.astar:.10f}  Pohozaev ratios {q.pohozaev_ratios[0]:.6f} "
          f"{q.pohozaev_ratios[1]:.6f}  tail slope {q.decay_slope:.3f}")
    for f in failures:
        print(f"certification failed: {f}", file=sys.stderr)
    return EXIT_CERTIFICATION if failures else EXIT_OK


def _physics(cfg):
    grid = cfg.grid()
    spec = cfg.validate_potential(grid)
    m = cfg.get_float("physics", "m")
    return grid, spec, m


def run_minimize(cfg, args) -> int:
    grid, spec, m = _physics(cfg)
    frac = cfg.fractions("physics", "a_fraction")
    if len(frac) != 1:
        raise io.ConfigError("[physics] a_fraction must be a single value for 'minimize'")
    kw = _solver_kwargs(cfg)
    q = _load_q(cfg)
    res = minimize(frac[0] * q.astar, m, spec, grid, astar=q.astar, **kw)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    io.write_json(cfg.out_dir / "minimize.json", {**res.row(), "m": m, "a_fraction": frac[0],
                                                  "spectral_tail": res.spectral_tail})
    if args.dump_fields or cfg.dump_fields():
        io.write_field(cfg.out_dir / "minimizer.prhf", res.u)
    print(f"e(a) = {res.e_a:.10g} at a = {res.a:.6g} ({res.iterations} steps)")
    return EXIT_OK


def run_sweep(cfg, args) -> int:
    grid, spec, m = _physics(cfg)
    fracs = cfg.fractions("physics", "a_fractions")
    kw = _solver_kwargs(cfg)
    q = _load_q(cfg)
    a_values = [f * q.astar for f in fracs]
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    csv_path, ckpt = out / "sweep.csv", out / "sweep_last.prhf"
    dump = args.dump_fields or cfg.dump_fields()

    done, init = [], None
    if args.resume and csv_path.exists():
        done = io.read_sweep_csv(csv_path)
        if len(done) > len(a_values) or not all(
            np.isclose(r["a"], a, rtol=1e-12, atol=0) for r, a in zip(done, a_values)
        ):
            raise io.ConfigError(f"{csv_path} does not match the configured a values; cannot resume")
        if done:
            init = io.result_from_row(done[-1], io.read_field(ckpt), m)
        logger.info("resuming after %d persisted entries", len(done))
    elif csv_path.exists():
        csv_path.unlink()

    def persist(res: MinimizerResult):
        io.append_sweep_row(csv_path, res)
        io.write_field(ckpt, res.u)
        if dump:
            k = len(io.read_sweep_csv(csv_path)) - 1
            io.write_field(out / f"sweep_{k:03d}.prhf", res.u)

    todo = a_values[len(done):]
    sweep(todo, m, spec, grid, astar=q.astar, init=init, callback=persist, **kw)
    rows = io.read_sweep_csv(csv_path)
    print(f"{len(rows)} sweep rows in {csv_path}")
    return EXIT_OK


def run_analyze(cfg, args) -> int:
    grid, spec, m = _physics(cfg)
    q = _load_q(cfg)
    out = cfg.out_dir
    csv_path = out / "sweep.csv"
    if not csv_path.exists():
        raise io.ConfigError(f"{csv_path} not found; run 'sweep' first")
    rows = io.read_sweep_csv(csv_path)
    tol = cfg.get_float("solver", "tol")
    rep = fit_scaling(rows, q.astar, spec, q, residual_tol=tol)
    io.write_json(out / "scaling.json", rep.as_dict())
    a = np.array(rep.a_values)
    gap = q.astar - a
    sel = [r for r in rows if r["a"] in rep.a_values]
    io.write_table(out / "scaling.csv", [
        {"a": r["a"], "log_gap": float(np.log(q.astar - r["a"])), "log_e": float(np.log(r["e_a"])),
         "log_hartree": float(np.log(r["hartree"])), "energy_residual": er, "hartree_residual": hr}
        for r, er, hr in zip(sel, rep.energy_residuals, rep.hartree_residuals)
    ], ("a", "log_gap", "log_e", "log_hartree", "energy_residual", "hartree_residual"))
    io.write_columns(out / "scaling_energy.dat", np.log(gap), np.log([r["e_a"] for r in sel]),
                     "log(a*-a) log e(a)")
    io.write_columns(out / "scaling_hartree.dat", np.log(gap), np.log([r["hartree"] for r in sel]),
                     "log(a*-a) log hartree")
    print(f"energy exponent {rep.energy_exponent:.4f} +- {rep.energy_exponent_stderr:.4f} "
          f"(predicted {rep.predicted_energy_exponent:.4f})")
    print(f"hartree exponent {rep.hartree_exponent:.4f} +- {rep.hartree_exponent_stderr:.4f} "
          f"(predicted {rep.predicted_hartree_exponent:.4f})")
    print(f"prefactor {rep.energy_prefactor:.4f} (predicted {rep.predicted_prefactor:.4f})")

    comps = []
    for k, r in enumerate(rows):
        fpath = out / f"sweep_{k:03d}.prhf"
        if not fpath.exists() or r["a"] < 0.9 * q.astar - 1e-12:
            continue
        res = io.result_from_row(r, io.read_field(fpath), m)
        comps.append(compare_profile(res, q.astar, spec, q).as_dict())
    if comps:
        io.write_json(out / "profiles.json", {"comparisons": comps})
        io.write_table(out / "profiles.csv", comps,
                       ("a", "lambda_a", "l2_distance", "mu_used", "w_mass", "captured_fraction"))
        io.write_columns(out / "profile_distance.dat", [c["a"] / q.astar for c in comps],
                         [c["l2_distance"] for c in comps], "a/a* l2_distance")
    return EXIT_OK


def run_nonexistence(cfg, args) -> int:
    spec = cfg.potential()
    m = cfg.get_float("physics", "m")
    q = _load_q(cfg)
    try:
        spec.check_inside(q.grid)
    except ValueError as exc:
        raise io.ConfigError(str(exc)) from exc
    fracs = cfg.fractions("nonexistence", "a_fractions")
    R_values = cfg.get_floats("nonexistence", "R_values")
    delta = cfg.get_float("nonexistence", "delta")
    if 2 * delta * max(R_values) > q.grid.L:
        raise io.ConfigError(
            f"[nonexistence] 2*delta*max(R_values) = {2 * delta * max(R_values):.4g} "
            f"exceeds the ground-state half-length {q.grid.L}"
        )
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for f in fracs:
        rep = nonexistence_probe(f * q.astar, m, spec, R_values, q, delta=delta)
        reports.append({"a_fraction": f, **rep.as_dict()})
        print(f"a = {f:.4g} a*: descent coefficient {rep.coefficient:.6f} (expected {rep.expected:.6f})")
    io.write_json(out / "nonexistence.json", {"reports": reports})
    rows = [{"a_fraction": r["a_fraction"], **row} for r in reports for row in r["rows"]]
    io.write_table(out / "nonexistence.csv", rows,
                   ("a_fraction", "R", "kinetic", "potential", "hartree", "total", "A_R2"))
    return EXIT_OK


def run_trial_energy(cfg, args) -> int:
    spec = cfg.potential()
    m = cfg.get_float("physics", "m")
    q = _load_q(cfg)
    R = cfg.get_float("trial", "R")
    delta = cfg.get_float("trial", "delta")
    x0 = cfg.get_floats("trial", "x0") if cfg.has("trial", "x0") else spec.Z[0]
    frac = cfg.fractions("trial", "a_fraction")[0]
    try:
        t = trial_state(R, x0, delta, q)
    except ValueError as exc:
        raise io.ConfigError(str(exc)) from exc
    b = trial_energy(frac * q.astar, m, spec, t)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "trial_energy.json", {**b.as_dict(), "R": R, "delta": delta,
                                              "x0": list(x0), "A_R2": t.A_R**2})
    if args.dump_fields or cfg.dump_fields():
        io.write_field(out / "trial_state.prhf", t.field)
    print(f"E_a(U_R) = {b.total:.10g} at R = {R}")
    return EXIT_OK


COMMANDS = {
    "ground-state": run_ground_state,
    "minimize": run_minimize,
    "sweep": run_sweep,
    "analyze": run_analyze,
    "nonexistence": run_nonexistence,
    "trial-energy": run_trial_energy,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="prhartree", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", type=Path, default=None)
        sp.add_argument("--resume", action="store_true")
        sp.add_argument("--dump-fields", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = io.load_config(args.config, out_dir=args.out)
        return COMMANDS[args.command](cfg, args)
    except (io.ConfigError, ThresholdError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, SweepError) as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
