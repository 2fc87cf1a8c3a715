"""Command-line driver.

Exit status: 0 success, 1 configuration error, 2 solver failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .io.output import AuditLog, RunManifest, file_hash, write_compare_csv, write_line_csv
from .io.vtk import write_interface_vtk, write_vtk
from .mesh.geometry import GeometryError
from .mesh.motion import MeshMotionError
from .mesh.sampling import sample_line
from .scenarios import (ScenarioError, case_config, compare_reduced_full, load_scenario, make_run)
from .solver import newton
from .solver.discretization import element_aperture
from .solver.stepper import StepFailure, advance

log = logging.getLogger("fracflow")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2


class ConfigError(ValueError):
    pass


def build_parser():
    p = argparse.ArgumentParser(prog="fracflow", description="Two-phase flow with a moving fracture.")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--case", type=int, choices=(1, 2, 3), help="built-in case")
    src.add_argument("--scenario", help="scenario file (INI)")
    p.add_argument("--mode", choices=("reduced", "full", "both"), default="reduced")
    p.add_argument("--tend", type=float, help="final time (default from the case)")
    p.add_argument("--dt", type=float, help="time step (default from the case)")
    p.add_argument("--resolution", type=int, default=64, help="bulk cells per unit length")
    p.add_argument("--steps", type=int, help="number of steps (overrides --tend)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--line", default="diag",
                   help="plot-over-line: 'diag', 'centerline' or 'x0,y0,x1,y1'")
    p.add_argument("--samples", type=int, default=257, help="points per sampled line")
    p.add_argument("--output-every", type=int, default=10, help="VTK snapshot interval in steps")
    p.add_argument("--seed", type=int, default=None, help="seed recorded for randomised checks")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def parse_line(spec, schedule, t):
    if spec == "diag":
        return np.array([0.0, 0.0]), np.array([1.0, 1.0])
    if spec == "centerline":
        if schedule is None:
            raise ConfigError("--line centerline needs a fracture")
        return schedule.tip(-1.0, t), schedule.tip(1.0, t)
    try:
        v = [float(s) for s in spec.split(",")]
    except ValueError:
        raise ConfigError(f"--line: cannot parse {spec!r}") from None
    if len(v) != 4:
        raise ConfigError(f"--line: expected 4 numbers, got {len(v)}")
    return np.array(v[:2]), np.array(v[2:])


def _configs(args):
    modes = ("reduced", "full") if args.mode == "both" else (args.mode,)
    cfgs = []
    for mode in modes:
        if args.scenario:
            cfg = load_scenario(args.scenario, mode=mode)
        else:
            cfg = case_config(args.case or 1, mode, 1.0 / args.resolution)
        if args.resolution and not args.scenario:
            cfg.h = 1.0 / args.resolution
        if args.dt is not None:
            if args.dt <= 0:
                raise ConfigError("--dt must be positive")
            cfg.dt = args.dt
        if args.steps is not None:
            if args.steps < 0:
                raise ConfigError("--steps must be non-negative")
            cfg.T = args.steps * cfg.dt
        elif args.tend is not None:
            if args.tend < 0:
                raise ConfigError("--tend must be non-negative")
            cfg.T = args.tend
        cfgs.append(cfg)
    return cfgs


def _scenario_id(args):
    if args.scenario:
        return args.scenario, file_hash(args.scenario)
    text = f"case={args.case or 1}"
    return text, hashlib.sha256(text.encode()).hexdigest()


def _snapshot(outdir, k, state, cfg):
    bulk = os.path.join(outdir, f"bulk_{k:04d}.vtk")
    write_vtk(state.mesh, state, bulk)
    files = {"time": state.t, "bulk": os.path.basename(bulk)}
    if len(state.mesh.interface):
        m = state.mesh
        d = element_aperture(cfg.schedule, m.points[m.interface[:, 0]], m.points[m.interface[:, 1]], state.t)
        iface = os.path.join(outdir, f"interface_{k:04d}.vtk")
        write_interface_vtk(m, state, d, iface)
        files["interface"] = os.path.basename(iface)
    return files


def run_one(cfg, args, outdir):
    os.makedirs(outdir, exist_ok=True)
    state, sim = make_run(cfg)
    n = int(round(cfg.T / cfg.dt))
    series = [_snapshot(outdir, 0, state, cfg)]
    t0 = time.perf_counter()
    with AuditLog(os.path.join(outdir, "audit.jsonl")) as audit:
        for k in range(1, n + 1):
            t_new = cfg.T if k == n else round(k * cfg.dt, 12)
            try:
                state, rep = advance(state, sim, t_new, step=k)
            except (StepFailure, MeshMotionError, GeometryError, newton.NewtonError) as exc:
                audit.write({"step": k, "t": state.t, "error": str(exc)})
                raise StepFailure(str(exc)) from exc
            audit.write(rep)
            log.info("step %d t=%.4g newton=%d mass_error=%.2e", k, state.t, rep.newton_iterations,
                     rep.mass_error)
            if k % max(args.output_every, 1) == 0 or k == n:
                series.append(_snapshot(outdir, k, state, cfg))
    with open(os.path.join(outdir, "series.json"), "w") as fh:
        json.dump({"files": series}, fh, indent=1)
    a, b = parse_line(args.line, cfg.schedule, state.t)
    m = state.mesh
    d = (element_aperture(cfg.schedule, m.points[m.interface[:, 0]], m.points[m.interface[:, 1]], state.t)
         if len(m.interface) else None)
    smp = sample_line(m, state.S, state.P, a, b, args.samples, state.S_gamma, state.P_gamma, d)
    write_line_csv(os.path.join(outdir, "line.csv"), smp, {"t": state.t, "mode": cfg.mode})
    sid, shash = _scenario_id(args)
    RunManifest(sid, shash, cfg.mode, cfg.h, cfg.dt, cfg.T,
                {"atol": newton.ATOL, "rtol": newton.RTOL, "max_iter": newton.MAX_ITER}, outdir, __version__,
                args.seed, {"wall_seconds": time.perf_counter() - t0}).write(os.path.join(outdir, "manifest.json"))
    return state


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfgs = _configs(args)
    except (ScenarioError, ConfigError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    states = {}
    for cfg in cfgs:
        outdir = os.path.join(args.out, cfg.mode) if len(cfgs) > 1 else args.out
        try:
            states[cfg.mode] = run_one(cfg, args, outdir)
        except ConfigError as exc:
            print(f"configuration error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except StepFailure as exc:
            print(f"solver failure: {exc}", file=sys.stderr)
            return EXIT_SOLVER
    if len(states) == 2 and cfgs[0].schedule is not None:
        try:
            a, b = parse_line(args.line, cfgs[0].schedule, states["full"].t)
        except ConfigError as exc:
            print(f"configuration error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        cmp = compare_reduced_full(states["reduced"], states["full"], cfgs[0].schedule, (a, b), args.samples)
        write_compare_csv(os.path.join(args.out, "compare.csv"), cmp, {"t": states["full"].t})
        print(f"L1 saturation discrepancy {cmp.l1_diff:.6g} (relative {cmp.relative:.4g})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
