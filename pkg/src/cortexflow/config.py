"""Run configuration: JSON parsing, defaults and unit conversion.

Keys ending in ``_um``, ``_min``, ``_um_per_min`` or ``_pN_per_um`` are
physical and converted once at parse time; everything else is in model
units (length ``x0 = 47.6 um``, time ``t0 = 8 min``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .cortex import LENGTH_UNIT_UM, TIME_UNIT_MIN, SimParams
from .geometry import ChannelGeometry, RatchetSpec
from .protocols import EntryProtocolConfig
from .solvers import MMConfig

# 22 pN/um of pressure corresponds to p = 3.2
FORCE_PER_LENGTH_PN_PER_UM = 55.0 / TIME_UNIT_MIN

UNIT_SCALES = {
    "length": LENGTH_UNIT_UM,
    "time": TIME_UNIT_MIN,
    "speed": LENGTH_UNIT_UM / TIME_UNIT_MIN,
    "force_per_length": FORCE_PER_LENGTH_PN_PER_UM,
}


class ConfigError(ValueError):
    pass


def convert_units(value, kind: str, direction: str = "to_physical"):
    """Convert between model and physical units.

    ``direction`` is ``"to_physical"`` (model -> um, min, um/min, pN/um)
    or ``"to_model"``.
    """
    try:
        scale = UNIT_SCALES[kind]
    except KeyError:
        raise ValueError(f"unknown unit kind {kind!r}; expected one of {sorted(UNIT_SCALES)}") from None
    if direction in ("to_physical", "physical"):
        return value * scale
    if direction in ("to_model", "model"):
        return value / scale
    raise ValueError(f"unknown direction {direction!r}")


@dataclass(frozen=True)
class SweepConfig:
    h: tuple
    d0: tuple
    L0: tuple
    w0: tuple
    channel_length: float = 3.0
    post_entry_time: float = 3.0


@dataclass(frozen=True)
class RunConfig:
    params: SimParams
    N: int = 200
    geometry: ChannelGeometry = field(default_factory=ChannelGeometry.free)
    solver: str = "explicit"
    mm: MMConfig = field(default_factory=MMConfig)
    protocol: str = "free"
    entry: EntryProtocolConfig = field(default_factory=EntryProtocolConfig)
    T: float = 1.0
    frame_every: int = 1
    seed: int = 0
    perturbation: float = 0.0
    perturbation_mode: int = 3
    sweep: SweepConfig | None = None

    @property
    def ds(self) -> float:
        return 1.0 / self.N


# key -> (physical key, unit kind); the physical spelling is converted
_PHYSICAL = {
    "p": ("p_pN_per_um", "force_per_length"),
    "v": ("v_um_per_min", "speed"),
    "dt": ("dt_min", "time"),
    "eps": ("eps_um", "length"),
    "T": ("T_min", "time"),
}
_GEOM_PHYSICAL = {
    "half_width": ("half_width_um", "length"),
    "w0": ("w0_um", "length"),
    "d0": ("d0_um", "length"),
    "entry_x": ("entry_x_um", "length"),
}
_TOP_KEYS = {
    "p", "kappa", "mu", "v", "a", "h", "omega", "dt", "ds", "N", "eps", "compensating", "flow_arc",
    "geometry", "solver", "mm", "protocol", "entry", "T", "frame_every", "seed", "perturbation",
    "sweep",
} | {v[0] for v in _PHYSICAL.values()}
_GEOM_KEYS = {"kind", "alpha", "sections", "sections_um"} | set(_GEOM_PHYSICAL) | {v[0] for v in _GEOM_PHYSICAL.values()}
_MM_KEYS = {"tau", "delta", "tol", "max_iter"}
_ENTRY_KEYS = {"push_fraction", "entry_x", "relaxation_time", "max_push_time", "gap", "speed_window", "frame_every"}
_SWEEP_KEYS = {"h", "d0", "d0_um", "L0", "L0_um", "w0", "w0_um", "channel_length", "post_entry_time"}
_PERT_KEYS = {"amplitude", "mode"}


def _check_keys(d: dict, allowed: set, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object, got {type(d).__name__}")
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}")


def _resolve(d: dict, table: dict, where: str) -> dict:
    """Pop physical spellings, rejecting conflicts with model-unit keys."""
    out = {}
    for key, (phys, kind) in table.items():
        if key in d and phys in d:
            raise ConfigError(f"{where}: both {key!r} and {phys!r} given")
        if phys in d:
            out[key] = convert_units(_number(d[phys], f"{where}.{phys}"), kind, "to_model")
        elif key in d:
            out[key] = _number(d[key], f"{where}.{key}")
    return out


def _number(x, where: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {x!r}")
    return float(x)


def _number_list(d: dict, key: str, phys: str | None, where: str) -> tuple:
    if key in d and phys and phys in d:
        raise ConfigError(f"{where}: both {key!r} and {phys!r} given")
    if phys and phys in d:
        vals, scale = d[phys], LENGTH_UNIT_UM
    elif key in d:
        vals, scale = d[key], 1.0
    else:
        raise ConfigError(f"{where}: missing {key!r}" + (f" or {phys!r}" if phys else ""))
    if not isinstance(vals, list) or not vals:
        raise ConfigError(f"{where}.{key}: expected a non-empty list")
    return tuple(_number(v, f"{where}.{key}") / scale for v in vals)


def _geometry(g: dict) -> ChannelGeometry:
    _check_keys(g, _GEOM_KEYS, "geometry")
    kind = g.get("kind", "free")
    vals = _resolve(g, _GEOM_PHYSICAL, "geometry")
    entry_x = vals.get("entry_x", 0.0)
    if kind == "free":
        return ChannelGeometry.free()
    if kind == "flat":
        hw = vals.get("half_width", vals.get("w0"))
        if hw is None:
            raise ConfigError("geometry: flat channel needs 'half_width' or 'w0' (or their _um forms)")
        return ChannelGeometry.flat(hw, entry_x)
    if kind == "ratchet":
        if "sections" in g and "sections_um" in g:
            raise ConfigError("geometry: both 'sections' and 'sections_um' given")
        raw, scale = (g["sections_um"], LENGTH_UNIT_UM) if "sections_um" in g else (g.get("sections"), 1.0)
        if not isinstance(raw, list) or not raw or not all(isinstance(s, list) and len(s) == 2 for s in raw):
            raise ConfigError("geometry.sections: expected a non-empty list of [wavelength, length] pairs")
        sections = tuple((_number(a, "geometry.sections") / scale, _number(b, "geometry.sections") / scale)
                         for a, b in raw)
        if "w0" not in vals or "d0" not in vals:
            raise ConfigError("geometry: ratchet needs 'w0' and 'd0' (or their _um forms)")
        spec = RatchetSpec(sections, w0=vals["w0"], d0=vals["d0"], alpha=float(g.get("alpha", 0.4)))
        return ChannelGeometry.ratcheted(spec, entry_x)
    raise ConfigError(f"geometry.kind: unknown kind {kind!r}")


def parse_config(text: str) -> RunConfig:
    """Parse a JSON run configuration; missing keys take the default values."""
    try:
        d = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON at line {e.lineno}, column {e.colno}: {e.msg}") from None
    _check_keys(d, _TOP_KEYS, "config")
    try:
        return _build(d)
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from None


def _build(d: dict) -> RunConfig:
    vals = _resolve(d, _PHYSICAL, "config")
    if "a" in d and "h" in d:
        raise ConfigError("config: both 'a' and 'h' given")
    N = d.get("N", 200)
    if not isinstance(N, int) or isinstance(N, bool):
        raise ConfigError(f"config.N: expected an integer, got {N!r}")
    ds = _number(d.get("ds", 1.0 / N), "config.ds")
    if abs(N * ds - 1.0) > 1e-12:
        raise ConfigError(f"config: N * ds must equal 1 (N={N}, ds={ds})")
    protocol = d.get("protocol", "free")
    if protocol not in ("free", "relax", "channel"):
        raise ConfigError(f"config.protocol: unknown protocol {protocol!r}")
    omega = d.get("omega", [1.0, 0.0] if protocol == "channel" else [-1.0, 0.0])
    if not isinstance(omega, list) or len(omega) != 2:
        raise ConfigError("config.omega: expected [x, y]")
    kw = dict(
        p=vals.get("p", 3.2), kappa=_number(d.get("kappa", 1.0), "config.kappa"),
        mu=_number(d.get("mu", 1.0), "config.mu"), v=vals.get("v", 2.0),
        a=_number(d.get("a", d.get("h", 0.1)), "config.a"),
        omega=tuple(_number(o, "config.omega") for o in omega),
        dt=vals.get("dt", 4e-2), compensating=bool(d.get("compensating", True)),
        flow_arc=d.get("flow_arc", "forward"),
    )
    if "eps" in vals:
        kw["eps"] = vals["eps"]
    params = SimParams(**kw)

    geometry = _geometry(d.get("geometry", {}))
    solver = d.get("solver", "explicit")
    if solver not in ("explicit", "mm"):
        raise ConfigError(f"config.solver: unknown solver {solver!r}")
    mmd = d.get("mm", {})
    _check_keys(mmd, _MM_KEYS, "mm")
    mm = MMConfig(**mmd)
    ed = d.get("entry", {})
    _check_keys(ed, _ENTRY_KEYS, "entry")
    entry = EntryProtocolConfig(**ed)
    if protocol == "channel" and not geometry.has_walls:
        raise ConfigError("protocol 'channel' needs a flat or ratchet geometry")
    pert = d.get("perturbation", {})
    _check_keys(pert, _PERT_KEYS, "perturbation")
    sweep = None
    if "sweep" in d:
        sd = d["sweep"]
        _check_keys(sd, _SWEEP_KEYS, "sweep")
        sweep = SweepConfig(
            h=_number_list(sd, "h", None, "sweep"),
            d0=_number_list(sd, "d0", "d0_um", "sweep"),
            L0=_number_list(sd, "L0", "L0_um", "sweep"),
            w0=_number_list(sd, "w0", "w0_um", "sweep"),
            channel_length=_number(sd.get("channel_length", 3.0), "sweep.channel_length"),
            post_entry_time=_number(sd.get("post_entry_time", 3.0), "sweep.post_entry_time"),
        )
    frame_every = d.get("frame_every", 1)
    if not isinstance(frame_every, int) or frame_every < 1:
        raise ConfigError("config.frame_every: expected a positive integer")
    T = vals.get("T", 1.0)
    if not T > 0 or not math.isfinite(T):
        raise ConfigError("config.T: expected a positive duration")
    return RunConfig(
        params=params, N=N, geometry=geometry, solver=solver, mm=mm, protocol=protocol,
        entry=entry, T=T, frame_every=frame_every, seed=int(d.get("seed", 0)),
        perturbation=_number(pert.get("amplitude", 0.0), "perturbation.amplitude"),
        perturbation_mode=int(pert.get("mode", 3)), sweep=sweep,
    )
