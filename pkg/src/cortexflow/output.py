"""CSV / JSON-lines writers.  Floats use shortest round-trip ``repr``."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .config import LENGTH_UNIT_UM, convert_units
from .geometry import ChannelGeometry


def _f(x) -> str:
    return repr(float(x))


def _open(path, mode="w"):
    path = Path(path)
    try:
        return path.open(mode, newline="")
    except OSError as e:
        raise OSError(f"cannot open {path} for writing: {e.strerror}") from e


def write_trajectory(traj, path) -> None:
    """Rows ``frame, t, i, x, y``."""
    with _open(path) as fh:
        fh.write("frame,t,i,x,y\n")
        for k, (t, X) in enumerate(zip(traj.times, traj.positions)):
            ts = _f(t)
            fh.writelines(f"{k},{ts},{i},{_f(x)},{_f(y)}\n" for i, (x, y) in enumerate(X))


def read_trajectory(path):
    """Inverse of :func:`write_trajectory`: ``(times, positions[F, N, 2])``."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    frames = data[:, 0].astype(int)
    n_frames = frames.max() + 1
    N = data.shape[0] // n_frames
    times = data[::N, 1]
    return times, data[:, 3:5].reshape(n_frames, N, 2)


def write_plotdata(traj, path) -> None:
    """Rows ``t, com_x, com_y, speed, E_el, E_p, E_total, isoperimetric_ratio``."""
    t = traj.t
    com = traj.com
    speed = np.gradient(com[:, 0], t) if len(t) > 1 else np.zeros(1)
    with _open(path) as fh:
        fh.write("t,com_x,com_y,speed,E_el,E_p,E_total,isoperimetric_ratio\n")
        for k in range(len(t)):
            e = traj.energies[k]
            fh.write(",".join(_f(v) for v in (t[k], com[k, 0], com[k, 1], speed[k], e.E_el,
                                               e.E_p, e.E_total, e.isoperimetric_ratio)) + "\n")


def write_energies(traj, path) -> None:
    """One JSON object per frame."""
    with _open(path) as fh:
        for t, e in zip(traj.times, traj.energies):
            fh.write(json.dumps({"t": t, **e.as_dict()}) + "\n")


def write_wall(geom: ChannelGeometry, path, x_lo: float, x_hi: float, per_wavelength: int = 256) -> None:
    """Rows ``x, y_top, y_bottom`` of the channel walls between ``x_lo`` and ``x_hi``."""
    if geom.kind == "ratchet":
        x, _, _, _ = geom._ratchet_samples(max(x_lo, geom.start), x_hi, per_wavelength)
    else:
        x = np.array([max(x_lo, geom.start), x_hi])
    y = geom.wall_half_width(x)
    with _open(path) as fh:
        fh.write("x,y_top,y_bottom\n")
        fh.writelines(f"{_f(a)},{_f(b)},{_f(-b)}\n" for a, b in zip(x, y))


def write_step_reports(reports, path) -> None:
    with _open(path) as fh:
        for r in reports:
            fh.write(json.dumps(r.as_dict()) + "\n")


def write_sweep(result, csv_path, json_path=None, metadata: dict | None = None) -> None:
    """Sweep grid as CSV rows plus an optional JSON summary.

    Lengths are written in um and speeds in um/min; failed entries leave
    ``mean_speed_um_per_min`` empty.
    """
    with _open(csv_path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["h", "d0_um", "L0_um", "w0_um", "mean_speed_um_per_min", "entered"])
        for h, d0, L0, w0, sp, ok in result.rows():
            w.writerow([_f(h), _f(d0 * LENGTH_UNIT_UM), _f(L0 * LENGTH_UNIT_UM), _f(w0 * LENGTH_UNIT_UM),
                        "" if not np.isfinite(sp) else _f(convert_units(sp, "speed")), ok])
    if json_path is not None:
        speeds = [None if not np.isfinite(s) else float(s) for s in result.mean_speed.ravel()]
        summary = {
            "axes": {"h": result.h, "d0": result.d0, "L0": result.L0, "w0": result.w0},
            "shape": list(result.mean_speed.shape),
            "mean_speed_model": speeds,
            "entered": result.entered.ravel().tolist(),
            "metadata": metadata or {},
        }
        with _open(json_path) as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
