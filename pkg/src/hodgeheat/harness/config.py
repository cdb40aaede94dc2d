"""Flat ``key = value`` experiment configuration with namespaced keys."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

KINDS = ("mesh", "elliptic-convergence", "parabolic-convergence", "crimes", "cshape", "decay")
GEOMETRIES = ("square", "circle", "sphere")


class ConfigError(ValueError):
    pass


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if "." not in key:
            raise ConfigError(f"line {lineno}: key {key!r} is not namespaced")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _parse_bool(v: str) -> bool:
    low = v.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _parse_float(v: str) -> float:
    if v.lower() in ("inf", "none"):
        return math.inf
    return float(v)


def _list(conv):
    def parse(v: str):
        return tuple(conv(p.strip()) for p in v.split(",") if p.strip())
    return parse


# config key -> (attribute, parser)
_KEYS = {
    "experiment.kind": ("kind", str),
    "experiment.seed": ("seed", int),
    "mesh.geometry": ("geometry", str),
    "mesh.levels": ("levels", _list(int)),
    "space.k": ("k", int),
    "space.r": ("r", int),
    "space.family": ("family", str),
    "space.s": ("s", int),
    "quadrature.degree": ("quad_degree", int),
    "solution.mode": ("mode", int),
    "solution.harmonic": ("harmonic", float),
    "time.T": ("T", float),
    "time.dt": ("dt", _parse_float),
    "time.dt_cap": ("dt_cap", _parse_float),
    "time.dt_factor": ("dt_factor", float),
    "time.steps": ("steps", int),
    "time.snapshots": ("snapshots", _list(float)),
    "time.method": ("method", str),
    "thomee.level": ("thomee_level", int),
    "thomee.dts": ("thomee_dts", _list(float)),
    "thomee.t_min": ("thomee_t_min", float),
    "solver.null_tol": ("null_tol", float),
    "crimes.samples": ("samples", int),
    "cshape.outer": ("cshape_outer", _list(float)),
    "cshape.cut": ("cshape_cut", _list(float)),
    "cshape.side": ("side", float),
    "output.snapshots": ("write_snapshots", _parse_bool),
    "assert.u_order_min": ("assert_u_order", float),
    "assert.sigma_order_min": ("assert_sigma_order", float),
    "assert.crime_order_min": ("assert_crime_order", float),
    "assert.delta_order_tol": ("assert_delta_tol", float),
    "assert.r1_max": ("assert_r1_max", float),
    "assert.r2_order_min": ("assert_r2_order", float),
    "assert.energy_nonincreasing": ("assert_energy", _parse_bool),
    "assert.harmonic_drift_max": ("assert_harmonic_drift", float),
    "assert.decay_rel_tol": ("assert_decay_tol", float),
    "assert.betti": ("assert_betti", _list(int)),
}


@dataclass
class ExperimentConfig:
    kind: str = "elliptic-convergence"
    seed: int = 0
    geometry: str = "circle"
    levels: tuple = (32, 64, 128)
    k: int = 1
    r: int = 1
    family: str = "trimmed"
    s: int = 1
    quad_degree: int | None = None
    mode: int = 1
    harmonic: float = 0.0
    T: float = 0.25
    dt: float | None = None
    dt_cap: float = 1e-4
    dt_factor: float = 0.25
    steps: int | None = None
    snapshots: tuple = ()
    method: str = "backward_euler"
    thomee_level: int | None = None
    thomee_dts: tuple = ()
    thomee_t_min: float = 0.2
    null_tol: float = 1e-8
    samples: int = 25
    cshape_outer: tuple = (0.2, 0.8)
    cshape_cut: tuple = (0.4, 1.0, 0.4, 0.6)
    side: float = 1.0
    write_snapshots: bool = True
    assert_u_order: float | None = None
    assert_sigma_order: float | None = None
    assert_crime_order: float | None = None
    assert_delta_tol: float | None = None
    assert_r1_max: float | None = None
    assert_r2_order: float | None = None
    assert_energy: bool = False
    assert_harmonic_drift: float | None = None
    assert_decay_tol: float | None = None
    assert_betti: tuple = ()
    raw: dict = field(default_factory=dict, repr=False)

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if self.geometry not in GEOMETRIES:
            raise ConfigError(f"unknown geometry {self.geometry!r}")
        if self.kind.endswith("convergence") or self.kind == "crimes":
            if len(self.levels) < 2:
                raise ConfigError("order computation needs at least two levels")
        if self.s not in (1, 2):
            raise ConfigError("space.s must be 1 or 2")
        if self.geometry == "square" and self.s != 1:
            raise ConfigError("flat meshes have no interpolation degree")
        if self.method not in ("backward_euler", "semidiscrete"):
            raise ConfigError(f"unknown time.method {self.method!r}")
        if len(self.cshape_outer) != 2 or len(self.cshape_cut) != 4:
            raise ConfigError("cshape.outer needs 2 numbers and cshape.cut needs 4")
        return self

    @classmethod
    def from_mapping(cls, mapping: dict[str, str]) -> "ExperimentConfig":
        values = {}
        for key, text in mapping.items():
            if key not in _KEYS:
                raise ConfigError(f"unknown key {key!r}")
            attr, conv = _KEYS[key]
            try:
                values[attr] = conv(text)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {text!r}") from exc
        cfg = cls(**values, raw=dict(mapping))
        return cfg.validate()

    def echo(self) -> str:
        lines = []
        for f in fields(self):
            if f.name != "raw":
                lines.append(f"{f.name} = {getattr(self, f.name)}")
        return "\n".join(lines)


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    return ExperimentConfig.from_mapping(parse_config_text(text))
