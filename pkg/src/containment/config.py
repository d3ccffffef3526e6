"""Scenario configuration: YAML in, validated model objects out.

One file describes one scenario: a landscape (preset name or inline
definition), a dose range, numerical tolerances and per-command options.
Unknown keys are rejected so that typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .landscape import Interaction, Landscape, RateFunction, preset, PRESET_NAMES

__all__ = ["ConfigError", "ScenarioConfig"]


class ConfigError(ValueError):
    """Malformed or inconsistent scenario configuration."""


_TOP_KEYS = {
    "name", "landscape", "range", "epsilon", "seed", "window", "grids",
    "tolerances", "check", "equilibria", "omega", "simulate", "verify",
    "sweep", "control",
}
_LANDSCAPE_KEYS = {
    "preset", "r", "g", "u_centers", "poly", "sigmoids", "c", "k",
    "epsilon", "window", "dose_max",
}
_GRID_KEYS = {"u_points", "a_points"}
_TOL_KEYS = {"rtol", "atol", "eta", "deriv_tol", "seed_offset", "stop_radius",
             "sag_tol"}
_BLOCK_KEYS = {
    "check": set(),
    "equilibria": set(),
    "omega": set(),
    "simulate": {"x0", "schedule", "repeat", "system", "horizon"},
    "verify": {"property", "n_samples", "band", "n_points", "n_schedules",
               "n_pairs", "tol_target", "horizon", "component", "delta",
               "grid", "schedule_budget"},
    "sweep": {"deltas"},
    "control": {"x0", "T", "classify", "tol_ctrl", "max_iter", "relax",
                "max_cycles"},
}


def _require_keys(mapping: dict, allowed: set, where: str):
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}; "
                          f"allowed: {sorted(allowed)}")


@dataclass
class ScenarioConfig:
    name: str
    landscape: Landscape
    dose_range: tuple[float, float]
    seed: int = 0
    grids: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)  # per-command blocks

    @classmethod
    def from_file(cls, path, *, seed_override=None) -> "ScenarioConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = yaml.safe_load(path.read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(raw, default_name=path.stem, seed_override=seed_override)

    @classmethod
    def from_dict(cls, raw: dict, *, default_name="scenario",
                  seed_override=None) -> "ScenarioConfig":
        _require_keys(raw, _TOP_KEYS, "scenario")
        land_spec = raw.get("landscape", "a")
        eps = raw.get("epsilon")
        window = raw.get("window")
        L = _build_landscape(land_spec, eps, window)
        rng = raw.get("range", L.default_range)
        if rng is None:
            raise ConfigError("no dose range given and the landscape has no default")
        rng = _pair(rng, "range")
        if not (0.0 <= rng[0] <= rng[1] <= L.dose_max + 1e-12):
            raise ConfigError(
                f"range {rng} must satisfy 0 <= lo <= hi <= dose_max={L.dose_max}")
        grids = dict(raw.get("grids", {}))
        _require_keys(grids, _GRID_KEYS, "grids")
        tols = dict(raw.get("tolerances", {}))
        _require_keys(tols, _TOL_KEYS, "tolerances")
        seed = int(raw.get("seed", 0))
        if seed_override is not None:
            seed = int(seed_override)
        options = {}
        for key, allowed in _BLOCK_KEYS.items():
            if key in raw:
                block = dict(raw[key]) if raw[key] else {}
                _require_keys(block, allowed, key)
                options[key] = block
        return cls(name=str(raw.get("name", default_name)), landscape=L,
                   dose_range=rng, seed=seed, grids=grids, tolerances=tols,
                   options=options)

    def grid_u(self) -> int:
        return int(self.grids.get("u_points", 2000))

    def grid_a(self) -> int:
        return int(self.grids.get("a_points", 41))

    def tol(self, key: str, default: float) -> float:
        return float(self.tolerances.get(key, default))


def _pair(value, what) -> tuple[float, float]:
    try:
        lo, hi = value
        return float(lo), float(hi)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what} must be a pair [lo, hi], got {value!r}") from exc


def _build_landscape(spec, eps, window) -> Landscape:
    overrides = {}
    if eps is not None:
        overrides["epsilon"] = float(eps)
    if window is not None:
        w = tuple(float(v) for v in window)
        if len(w) != 4:
            raise ConfigError("window must be [u_min, u_max, n_min, n_max]")
        overrides["window"] = w
    if isinstance(spec, str):
        if spec not in PRESET_NAMES:
            raise ConfigError(f"unknown preset {spec!r}; choose from {PRESET_NAMES}")
        return preset(spec, **overrides)
    if not isinstance(spec, dict):
        raise ConfigError("landscape must be a preset name or a mapping")
    _require_keys(spec, _LANDSCAPE_KEYS, "landscape")
    if "preset" in spec:
        base = spec["preset"]
        if base not in PRESET_NAMES:
            raise ConfigError(f"unknown preset {base!r}")
        extra = {k: v for k, v in spec.items() if k != "preset"}
        overrides.update(_landscape_fields(extra))
        return preset(base, **overrides)
    needed = {"r", "g", "u_centers", "poly", "sigmoids"}
    missing = needed - set(spec)
    if missing:
        raise ConfigError(f"inline landscape missing key(s) {sorted(missing)}")
    fields = _landscape_fields(spec)
    fields.update(overrides)
    try:
        return Landscape(**fields)
    except ValueError as exc:
        raise ConfigError(f"invalid landscape: {exc}") from exc


def _landscape_fields(spec: dict) -> dict:
    out = {}
    if "r" in spec:
        out["r"] = tuple(float(v) for v in spec["r"])
    if "g" in spec:
        out["g"] = tuple(float(v) for v in spec["g"])
    if "u_centers" in spec:
        out["u_centers"] = tuple(float(v) for v in spec["u_centers"])
    if "poly" in spec:
        p = spec["poly"]
        if len(p) != 3:
            raise ConfigError("poly must be [p1, p2, p3]")
        out["poly"] = (float(p[0]), float(p[1]), int(p[2]))
    if "sigmoids" in spec:
        out["sigmoids"] = tuple(tuple(float(v) for v in t) for t in spec["sigmoids"])
    if "c" in spec:
        out["interaction"] = Interaction(const=float(spec["c"]))
    if "k" in spec:
        kv = spec["k"]
        if kv == "identity":
            out["rate"] = RateFunction(slope=1.0)
        else:
            out["rate"] = RateFunction(slope=float(kv))
    if "epsilon" in spec:
        out["epsilon"] = float(spec["epsilon"])
    if "window" in spec:
        out["window"] = tuple(float(v) for v in spec["window"])
    if "dose_max" in spec:
        out["dose_max"] = float(spec["dose_max"])
    return out
