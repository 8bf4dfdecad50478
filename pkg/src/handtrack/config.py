"""Run configuration: every tunable, a key=value file format, and overrides.

Config files are flat ``key = value`` lines (``#`` comments). CLI flags
override file values; the effective config is echoed into every output so a
run is reproducible from its artifacts alone.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class RunConfig:
    # camera (None: take intrinsics from the sequence file)
    fx: float | None = None
    fy: float | None = None
    cx: float | None = None
    cy: float | None = None
    # segmentation
    delta_depth: int = 20
    max_pixels: int = 12000
    # sampling
    n_samples: int = 256
    n_seeds: int = 192
    t1: float = 30.0
    t2: float = 10.0
    window: int = 3
    sampling_mode: str = "hierarchical"
    # hand model
    template_path: str | None = None
    initial_scale: float = 1.0
    # objective
    w_d2m: float = 1.0
    w_m2d: float = 1.0
    w_overlap: float = 1.0
    d_max: float = 100.0
    # swarm
    n_particles: int = 256
    n_generations: int = 6
    sigma_trans: float = 7.0
    sigma_rot: float = 0.08
    sigma_size: float = 0.01
    hint_fraction: float = 0.25
    # re-initialization
    use_prediction: bool = True
    band_min: float = 0.4
    band_max: float = 2.5
    orth_window_scale: float = 1.5
    min_protrusion_mm: float = 15.0
    extreme_margin: float = 0.5
    e_init: float = 0.1
    # run control
    seed: int = 0
    threads: int = 1
    eval_skip_frames: int = 100

    def validate(self) -> "RunConfig":
        if self.sampling_mode not in ("hierarchical", "random"):
            raise ConfigError(f"sampling_mode must be hierarchical|random, got {self.sampling_mode!r}")
        if self.n_samples < 1 or self.n_seeds < 1:
            raise ConfigError("n_samples and n_seeds must be >= 1")
        if self.n_particles < 2 or self.n_generations < 1:
            raise ConfigError("need n_particles >= 2 and n_generations >= 1")
        if not (0.0 <= self.hint_fraction <= 1.0):
            raise ConfigError("hint_fraction must lie in [0, 1]")
        if min(self.sigma_trans, self.sigma_rot, self.sigma_size) < 0:
            raise ConfigError("noise scales must be >= 0")
        if self.delta_depth < 0 or self.max_pixels < 1:
            raise ConfigError("bad segmentation thresholds")
        if self.d_max <= 0:
            raise ConfigError("d_max must be positive")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        given = [v is not None for v in (self.fx, self.fy, self.cx, self.cy)]
        if any(given) and not all(given):
            raise ConfigError("intrinsics must be given as all of fx, fy, cx, cy or none")
        return self

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _convert(key: str, raw: str):
    ftype = _FIELD_TYPES.get(key)
    if ftype is None:
        raise ConfigError(f"unknown config key {key!r}")
    raw = raw.strip()
    if raw.lower() == "none":
        return None
    if ftype == "bool":
        low = raw.lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if ftype == "int":
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from exc
    if ftype in ("float", "float | None"):
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from exc
    return raw


def load_config(path) -> RunConfig:
    """Parse a key=value config file; unknown keys are rejected."""
    cfg = RunConfig()
    for i, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{i}: expected key = value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        setattr(cfg, key, _convert(key, val))
    return cfg.validate()


def apply_overrides(cfg: RunConfig, overrides: dict[str, str]) -> RunConfig:
    """Apply CLI ``key=value`` overrides on top of a config."""
    for key, val in overrides.items():
        setattr(cfg, key, _convert(key, str(val)))
    return cfg.validate()
