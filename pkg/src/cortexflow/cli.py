"""Command-line front end.

Exit codes: 0 success, 1 simulation error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import _backend
from .checks import run_checks
from .config import UNIT_SCALES, ConfigError, RunConfig, convert_units, parse_config
from .cortex import CoercivityError, equilibrium_radius, make_perturbed_circle
from .geometry import ConvergenceError
from .output import (
    write_energies, write_plotdata, write_step_reports, write_sweep, write_trajectory, write_wall,
)
from .protocols import EntryFailed, PenetrationError, Trajectory, relax_free, run_channel, sweep
from .solvers import ExplicitIntegrator, InnerSolverError, InstabilityError, mm_step

SIMULATION_ERRORS = (InstabilityError, InnerSolverError, EntryFailed, PenetrationError,
                     CoercivityError, ConvergenceError)


def _load(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    return parse_config(text)


def initial_state(cfg: RunConfig):
    r = equilibrium_radius(cfg.params.p, kappa=cfg.params.kappa)
    st = make_perturbed_circle(cfg.N, r, cfg.perturbation, cfg.perturbation_mode)
    if cfg.seed:
        # rotate the perturbation pattern by a seeded random angle
        ang = np.random.default_rng(cfg.seed).uniform(0, 2 * math.pi)
        c, s = math.cos(ang), math.sin(ang)
        st.positions[:] = st.positions @ np.array([[c, s], [-s, c]])
    return st


def simulate_free(cfg: RunConfig):
    """Plain time integration in ``cfg.geometry`` with the selected solver."""
    st = initial_state(cfg)
    traj = Trajectory(cfg.params, cfg.geometry)
    traj.append(st, phase="run")
    reports = []
    if cfg.solver == "mm":
        dt, n = cfg.mm.tau, int(round(cfg.T / cfg.mm.tau))
        step = lambda s: mm_step(s, cfg.params, cfg.geometry, cfg.mm)  # noqa: E731
    else:
        n = int(round(cfg.T / cfg.params.dt))
        integ = ExplicitIntegrator(cfg.params, cfg.geometry, cfg.N)
        step = integ.step
    for k in range(1, n + 1):
        st, rep = step(st)
        reports.append(rep)
        if k % cfg.frame_every == 0 or k == n:
            traj.append(st, rep.energy_after, "run")
    return traj, reports


def _write_outputs(traj, out: Path, reports=None):
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory(traj, out / "trajectory.csv")
    write_plotdata(traj, out / "plotdata.csv")
    write_energies(traj, out / "energies.jsonl")
    if reports:
        write_step_reports(reports, out / "steps.jsonl")
    if traj.geom.has_walls:
        X = traj.X
        write_wall(traj.geom, out / "wall.csv", float(X[..., 0].min()) - 0.5, float(X[..., 0].max()) + 0.5)


def _summary(traj) -> dict:
    com = traj.com
    return {
        "backend": _backend.BACKEND, "frames": len(traj), "t_end": traj.times[-1],
        "com_start": com[0].tolist(), "com_end": com[-1].tolist(),
        "E_total_end": traj.energies[-1].E_total,
    }


def cmd_run(args) -> int:
    cfg = _load(args.config)
    reports = None
    if cfg.protocol == "channel":
        traj = run_channel(cfg.params, cfg.geometry, cfg.entry, cfg.T, cfg.N)
    elif cfg.protocol == "relax":
        traj = relax_free(cfg.params, cfg.N, cfg.T, cfg.frame_every)
    else:
        traj, reports = simulate_free(cfg)
    if args.out:
        _write_outputs(traj, Path(args.out), reports)
    print(json.dumps(_summary(traj), sort_keys=True))
    return 0


def cmd_relax(args) -> int:
    cfg = _load(args.config)
    traj = relax_free(cfg.params, cfg.N, cfg.T, cfg.frame_every)
    if args.out:
        _write_outputs(traj, Path(args.out))
    X = traj.positions[-1]
    r = np.linalg.norm(X - X.mean(axis=0), axis=1)
    print(json.dumps({**_summary(traj), "mean_radius": float(r.mean()),
                      "isoperimetric_ratio": traj.energies[-1].isoperimetric_ratio}, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args.config)
    if cfg.sweep is None:
        raise ConfigError("sweep needs a 'sweep' section with h, d0, L0 and w0 lists")
    sc = cfg.sweep
    grid = {"h": sc.h, "d0": sc.d0, "L0": sc.L0, "w0": sc.w0}
    res = sweep(cfg.params.with_(omega=(1.0, 0.0)), grid, cfg.entry, sc.post_entry_time, cfg.N,
                jobs=args.jobs, channel_length=sc.channel_length)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"backend": _backend.BACKEND, "post_entry_time": sc.post_entry_time,
            "channel_length": sc.channel_length, "push_fraction": cfg.entry.push_fraction, "N": cfg.N}
    write_sweep(res, out / "sweep.csv", out / "sweep.json", meta)
    print(f"{res.mean_speed.size} cells, {int(res.entered.sum())} entered -> {out / 'sweep.csv'}")
    return 0


def cmd_validate(args) -> int:
    cfg = _load(args.config) if args.config else parse_config("{}")
    results = run_checks(cfg.params)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def cmd_convert(args) -> int:
    print(repr(convert_units(args.value, args.kind, args.to)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cortexflow", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run a configured simulation")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_run)
    p = sub.add_parser("relax", help="free-space relaxation")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_relax)
    p = sub.add_parser("sweep", help="ratchet parameter sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(fn=cmd_sweep)
    p = sub.add_parser("validate", help="fast invariant checks")
    p.add_argument("--config")
    p.set_defaults(fn=cmd_validate)
    p = sub.add_parser("convert", help="unit conversion")
    p.add_argument("--kind", required=True, choices=sorted(UNIT_SCALES))
    p.add_argument("--value", required=True, type=float)
    p.add_argument("--to", default="physical", choices=["physical", "model"])
    p.set_defaults(fn=cmd_convert)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except SIMULATION_ERRORS as e:
        print(f"simulation error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
