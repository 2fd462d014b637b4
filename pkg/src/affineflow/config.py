"""Configuration files for flow runs.

The on-disk format is a YAML document whose keys mirror `FlowConfig`:

    n: 1
    bounds: [[-3.0, 3.0]]
    resolution: [257]
    initial:
      soliton: sphere          # or points_file: cloud.txt / grid_file: snap.csv
      params: {r0: 1.0}
      map: [[1.0, 0.5], [0.0, 1.0]]        # optional ambient affine image
      offset: [0.0, 0.0]
    boundary: exact-soliton    # fixed | exact-soliton
    boundary_soliton: {soliton: sphere, params: {r0: 1.0}}   # optional override
    t_end: 0.375
    dt_safety: 0.25
    snapshot_every: 0.075
    det_floor: 1.0e-10
    monitors:
      - {name: andrews-speed, r: 0.5}

Parsing is strict: unknown keys are fatal and the offending key is named,
because silent typos in numerics configs are costly.
"""

from __future__ import annotations

from pathlib import Path

import yaml

from .errors import ConfigError
from .flow import FlowConfig, InitialSpec
from .solitons import SolitonSpec

_TOP_KEYS = ("n", "bounds", "resolution", "initial", "boundary",
             "boundary_soliton", "t_end", "dt_safety", "snapshot_every",
             "det_floor", "monitors")
_INITIAL_KEYS = ("soliton", "params", "map", "offset", "points_file",
                 "grid_file")
_MONITOR_KEYS = {
    "cubic-decay": ("sample_count", "half_window", "slack", "t_min"),
    "andrews-speed": ("r", "exponent_tol"),
    "gh": ("beta", "vertex", "blowup_factor"),
}


def _reject_unknown(mapping: dict, allowed, context: str) -> None:
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ConfigError(f"{context}: unknown key(s) {', '.join(map(repr, unknown))}")


def _soliton_from_dict(entry: dict, n: int, context: str) -> SolitonSpec:
    _reject_unknown(entry, ("soliton", "params", "map", "offset"), context)
    if "soliton" not in entry:
        raise ConfigError(f"{context}: missing 'soliton' name")
    return SolitonSpec(kind=str(entry["soliton"]), n=n,
                       params={str(k): float(v)
                               for k, v in (entry.get("params") or {}).items()},
                       map=entry.get("map"), offset=entry.get("offset"))


def _initial_from_dict(entry: dict, n: int) -> InitialSpec:
    if not isinstance(entry, dict):
        raise ConfigError("initial: expected a mapping")
    _reject_unknown(entry, _INITIAL_KEYS, "initial")
    sources = [k for k in ("soliton", "points_file", "grid_file") if k in entry]
    if len(sources) != 1:
        raise ConfigError(
            "initial: give exactly one of soliton / points_file / grid_file")
    if sources[0] == "soliton":
        return InitialSpec(kind="soliton",
                           soliton=_soliton_from_dict(entry, n, "initial"))
    if sources[0] == "points_file":
        return InitialSpec(kind="points", path=str(entry["points_file"]))
    return InitialSpec(kind="grid", path=str(entry["grid_file"]))


def config_from_dict(doc: dict) -> FlowConfig:
    """Validate a parsed document and build a `FlowConfig`."""
    if not isinstance(doc, dict):
        raise ConfigError("config: expected a mapping at top level")
    _reject_unknown(doc, _TOP_KEYS, "config")
    for key in ("n", "bounds", "resolution", "initial", "t_end"):
        if key not in doc:
            raise ConfigError(f"config: missing required key {key!r}")
    n = int(doc["n"])
    monitors = []
    for i, entry in enumerate(doc.get("monitors") or []):
        if not isinstance(entry, dict) or "name" not in entry:
            raise ConfigError(f"monitors[{i}]: expected a mapping with 'name'")
        name = str(entry["name"])
        if name not in _MONITOR_KEYS:
            raise ConfigError(f"monitors[{i}]: unknown monitor {name!r}")
        _reject_unknown({k: v for k, v in entry.items() if k != "name"},
                        _MONITOR_KEYS[name], f"monitors[{i}] ({name})")
        monitors.append(dict(entry))
    boundary_soliton = None
    if doc.get("boundary_soliton") is not None:
        boundary_soliton = _soliton_from_dict(doc["boundary_soliton"], n,
                                              "boundary_soliton")
    try:
        return FlowConfig(
            n=n,
            bounds=tuple(tuple(b) for b in doc["bounds"]),
            resolution=tuple(doc["resolution"]),
            initial=_initial_from_dict(doc["initial"], n),
            boundary_mode=str(doc.get("boundary", "fixed")),
            boundary_soliton=boundary_soliton,
            t_end=float(doc["t_end"]),
            dt_safety=float(doc.get("dt_safety", 0.25)),
            snapshot_every=(None if doc.get("snapshot_every") is None
                            else float(doc["snapshot_every"])),
            det_floor=float(doc.get("det_floor", 1e-10)),
            monitors=tuple(monitors),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config: {exc}") from exc


def load_config(path) -> FlowConfig:
    """Parse and validate a config file; parse errors carry line info."""
    text = Path(path).read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"{path}: parse error{where}: {exc}") from exc
    try:
        return config_from_dict(doc)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_to_dict(config: FlowConfig) -> dict:
    """Plain-python echo of a config, inverse of `config_from_dict`."""
    init = config.initial
    if init.kind == "soliton":
        entry = {"soliton": init.soliton.kind}
        if init.soliton.params:
            entry["params"] = {k: float(v) for k, v in init.soliton.params.items()}
        if init.soliton.map is not None:
            entry["map"] = [list(row) for row in init.soliton.map]
        if init.soliton.offset is not None:
            entry["offset"] = list(init.soliton.offset)
    elif init.kind == "points":
        entry = {"points_file": init.path}
    else:
        entry = {"grid_file": init.path}
    doc = {
        "n": config.n,
        "bounds": [list(b) for b in config.bounds],
        "resolution": list(config.resolution),
        "initial": entry,
        "boundary": config.boundary_mode,
        "t_end": float(config.t_end),
        "dt_safety": float(config.dt_safety),
        "det_floor": float(config.det_floor),
    }
    if config.boundary_soliton is not None:
        bs = {"soliton": config.boundary_soliton.kind}
        if config.boundary_soliton.params:
            bs["params"] = {k: float(v)
                            for k, v in config.boundary_soliton.params.items()}
        if config.boundary_soliton.map is not None:
            bs["map"] = [list(row) for row in config.boundary_soliton.map]
        if config.boundary_soliton.offset is not None:
            bs["offset"] = list(config.boundary_soliton.offset)
        doc["boundary_soliton"] = bs
    if config.snapshot_every is not None:
        doc["snapshot_every"] = float(config.snapshot_every)
    if config.monitors:
        doc["monitors"] = [dict(m) for m in config.monitors]
    return doc


def emit_config(config: FlowConfig) -> str:
    """Serialize a config so that ``load_config(emit(c))`` reproduces it."""
    return yaml.safe_dump(config_to_dict(config), sort_keys=False)
