"""Scenario configs: JSON loading, schema checks, cell placement and presets."""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Union

import jsonschema
import numpy as np

from .kinetics import REFERENCE_PARAMS
from .types import (DEFAULT_RECEIVER_STATE, DEFAULT_SENDER_STATE, CellKind, CellSpec, DomainSpec,
                    SystemSpec, ValidationReport, validate)

MAX_ATTEMPTS = 1_000_000
PRESET_NAMES = ("paper-4-1", "paper-4-1-sweep", "paper-4-2-slab", "paper-4-2-shell", "prop-1-decay")
PARAMETER_PRESETS = {"paper-sec4": REFERENCE_PARAMS}


class ConfigError(ValueError):
    """Config could not be parsed (bad JSON or unknown preset)."""


class ConfigValidationError(ValueError):
    """Config parsed but violates the schema or describes an invalid system."""


class PlacementError(ValueError):
    pass


# -- placement ----------------------------------------------------------------

def place_slab(count: int, bounds, domain: DomainSpec, rng_seed: int, R: float = 1.5,
               max_attempts: int = MAX_ATTEMPTS) -> np.ndarray:
    """Uniform dart throwing in {lo <= r1 <= hi} inside the ball.

    Accepted points keep |p| < L - R and pairwise distance > 2R.  Neighbour
    checks use a hash grid of cell size 2R.
    """
    lo, hi = float(bounds[0]), float(bounds[1])
    if count < 0:
        raise PlacementError("count must be non-negative")
    if count == 0:
        return np.zeros((0, 3))
    L = domain.L
    rmax = L - R
    if not lo < hi:
        raise PlacementError("slab bounds must satisfy lo < hi")
    if lo >= rmax or hi <= -rmax:
        raise PlacementError("slab does not intersect the ball")
    rng = np.random.default_rng(rng_seed)
    cell = 2.0 * R
    buckets: dict[tuple, list] = {}
    pts: list = []
    lo_c, hi_c = max(lo, -rmax), min(hi, rmax)
    attempts = 0
    while len(pts) < count:
        if attempts >= max_attempts:
            raise PlacementError(
                f"placed {len(pts)} of {count} cells after {max_attempts} attempts")
        batch = min(4096, max_attempts - attempts)
        cand = np.column_stack([rng.uniform(lo_c, hi_c, batch),
                                rng.uniform(-rmax, rmax, batch),
                                rng.uniform(-rmax, rmax, batch)])
        for p in cand:
            attempts += 1
            if p @ p >= rmax * rmax:
                continue
            key = tuple(np.floor(p / cell).astype(int))
            clash = False
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    for dz in (-1, 0, 1):
                        for q in buckets.get((key[0] + dx, key[1] + dy, key[2] + dz), ()):
                            d = p - q
                            if d @ d <= cell * cell:
                                clash = True
                                break
                        if clash:
                            break
                    if clash:
                        break
                if clash:
                    break
            if not clash:
                buckets.setdefault(key, []).append(p)
                pts.append(p)
                if len(pts) == count:
                    break
            if attempts >= max_attempts:
                break
    return np.array(pts)


def _fibonacci_offset(n: int) -> float:
    # offsets that push the first/last points off the poles; larger n tolerate more
    for threshold, eps in ((600000, 214.0), (400000, 75.0), (11000, 27.0),
                           (890, 10.0), (177, 3.33), (24, 1.33), (3, 0.33)):
        if n >= threshold:
            return eps
    return 0.0


def place_shell(count: int, radius: float, domain: DomainSpec, R: float = 1.5) -> np.ndarray:
    """Fibonacci-lattice points on the sphere of ``radius`` about the origin."""
    if count < 0:
        raise PlacementError("count must be non-negative")
    if not (radius > 0) or not (radius + R < domain.L):
        raise PlacementError(f"shell radius {radius:g} must satisfy 0 < radius < L - R")
    if count == 0:
        return np.zeros((0, 3))
    if count == 1:
        return np.array([[0.0, 0.0, float(radius)]])
    eps = _fibonacci_offset(count)
    i = np.arange(count, dtype=float)
    golden = (1.0 + math.sqrt(5.0)) / 2.0
    theta = 2.0 * math.pi * i / golden
    z = 1.0 - 2.0 * (i + eps) / (count - 1 + 2.0 * eps)
    s = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return radius * np.column_stack([s * np.cos(theta), s * np.sin(theta), z])


# -- config -------------------------------------------------------------------

def _schema() -> dict:
    return json.loads(resources.files("diffnet").joinpath("config.schema.json").read_text())


def load_preset(name: str) -> dict:
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    return json.loads(resources.files("diffnet").joinpath("presets", f"{name}.json").read_text())


def load_config(ref: Union[str, Path]) -> dict:
    """Read a config from a path, or a bundled preset by name."""
    p = Path(ref)
    if not p.exists():
        stem = str(ref)[:-5] if str(ref).endswith(".json") else str(ref)
        if stem in PRESET_NAMES:
            return load_preset(stem)
        raise ConfigError(f"config {ref} not found and not a preset name")
    try:
        doc = json.loads(p.read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{p}: malformed JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{p}: top level must be a JSON object")
    return doc


def check_config(cfg: dict) -> None:
    """Schema validation plus the cross-field rules the schema cannot express."""
    try:
        jsonschema.validate(cfg, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(x) for x in exc.absolute_path) or "<root>"
        raise ConfigValidationError(f"schema violation at {where}: {exc.message}") from exc
    stochastic = any(g.get("generator") == "slab" for g in cfg["cells"])
    if stochastic and "rng_seed" not in cfg:
        raise ConfigValidationError("rng_seed is required when a slab placement is used")


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _params(cfg: dict):
    block = cfg.get("parameters", "paper-sec4")
    if isinstance(block, str):
        block = {"preset": block}
    base = PARAMETER_PRESETS[block.get("preset", "paper-sec4")]
    sender = dataclasses.replace(base["sender"], **block.get("sender", {}))
    receiver = dataclasses.replace(base["receiver"], **block.get("receiver", {}))
    signal = dataclasses.replace(base["signal"], **block.get("signal", {}))
    return sender, receiver, signal, base


def positions_for(group: dict, domain: DomainSpec, R: float, seed: Optional[int]) -> np.ndarray:
    gen = group.get("generator", "explicit")
    if gen == "explicit":
        return np.asarray(group["positions"], dtype=float).reshape(-1, 3)
    if gen == "slab":
        return place_slab(group["count"], group["r1_range"], domain, seed, R)
    if gen == "shell":
        return place_shell(group["count"], group["radius"], domain, R)
    raise ConfigValidationError(f"unknown generator {gen!r}")


def build_spec(cfg: dict) -> SystemSpec:
    sender, receiver, signal, base = _params(cfg)
    dom = cfg["domain"]
    domain = DomainSpec(L=float(dom["L"]), D=float(dom.get("D", base["D"])))
    R = float(cfg.get("cell_radius", base["R"]))
    cells = []
    seed = cfg.get("rng_seed")
    for k, group in enumerate(cfg["cells"]):
        kind = CellKind(group["kind"])
        gseed = None if seed is None else int(seed) + k
        for p in positions_for(group, domain, R, gseed):
            cells.append(CellSpec(tuple(float(c) for c in p), kind, R))
    init = cfg.get("initial_state")
    x0 = None
    if isinstance(init, list):
        x0 = tuple(tuple(s) for s in init)
    elif init:
        per_kind = {CellKind.SENDER: tuple(init.get("sender", DEFAULT_SENDER_STATE)),
                    CellKind.RECEIVER: tuple(init.get("receiver", DEFAULT_RECEIVER_STATE))}
        x0 = tuple(per_kind[c.kind] for c in cells)
    u0 = cfg.get("initial_u")
    if u0 is not None:
        u0 = tuple(u0) if len(u0) == len(cells) else (float(u0[0]),) * len(cells)
    return SystemSpec(domain, tuple(cells), signal, sender, receiver, initial_state=x0, initial_u=u0)


@dataclass
class Scenario:
    config: dict
    spec: SystemSpec
    report: ValidationReport

    @property
    def name(self) -> str:
        return self.config["name"]

    @property
    def digest(self) -> str:
        return config_hash(self.config)

    @property
    def solver(self) -> dict:
        return {**DEFAULT_SOLVER, **self.config.get("solver", {})}


DEFAULT_SOLVER = {"h": 1.0, "dt": 5e-3, "cg_rtol": 1e-9, "engine": "kernel", "boundary": "ghost",
                  "method": "rk45", "rtol": 1e-6, "atol": 1e-6, "rk4_dt": 0.1}


def apply_overrides(cfg: dict, seed: Optional[int] = None, model: Optional[str] = None) -> dict:
    cfg = copy.deepcopy(cfg)
    if seed is not None:
        cfg["rng_seed"] = int(seed)
    if model is not None:
        cfg["model"] = model
    return cfg


def prepare(cfg: dict) -> Scenario:
    """Schema-check, build and validate; raises ConfigValidationError on any problem."""
    check_config(cfg)
    try:
        spec = build_spec(cfg)
    except (ValueError, TypeError) as exc:
        raise ConfigValidationError(str(exc)) from exc
    report = validate(spec, allow_overlap=bool(cfg.get("allow_overlap", False)))
    if not report.ok:
        raise ConfigValidationError(f"invalid system:\n{report}")
    return Scenario(cfg, spec, report)


def spec_to_json(spec: SystemSpec) -> dict:
    """Explicit-position config body describing ``spec`` exactly.

    Cells are regrouped by kind, which preserves order for any valid spec
    (senders first).
    """
    groups = []
    for kind in (CellKind.SENDER, CellKind.RECEIVER):
        pos = [list(c.position) for c in spec.cells if c.kind is kind]
        if pos:
            groups.append({"kind": kind.value, "positions": pos})
    radii = {c.R for c in spec.cells}
    out = {
        "domain": {"L": spec.domain.L, "D": spec.domain.D},
        "parameters": {"sender": dataclasses.asdict(spec.sender_params),
                       "receiver": dataclasses.asdict(spec.receiver_params),
                       "signal": dataclasses.asdict(spec.signal)},
        "cells": groups,
        "initial_state": [list(x) for x in spec.initial_state],
        "initial_u": list(spec.initial_u),
    }
    if len(radii) == 1:
        out["cell_radius"] = radii.pop()
    return out
