"""Read and write run configurations as versioned key-value text.

The format is a magic first line (``gridnav-config 1``) followed by
``key = value`` lines, ``#`` comments, and blank lines.  Every RunConfig
field has a key; omitted keys keep their defaults, so a file holding
nothing but the magic line is a valid default config.  Threshold curves
pack into one line of colon-separated breakpoints, and the synthetic
matcher's noise parameters are plain keys so a calibration result can be
pasted straight into a run config.
"""

from __future__ import annotations

import math
from dataclasses import replace

from .errors import ConfigError
from .harness import RunConfig
from .matching import SyntheticMatcherParams, calibrate_synthetic
from .policy import ThresholdCurves
from .world import SensorConfig

__all__ = ["MAGIC", "parse_config", "dump_config"]

MAGIC = "gridnav-config 1"

_MATCHER_KEYS = ("mu_pos", "sigma_pos", "mu_neg", "sigma_neg", "band_edges")


def _parse_float(key: str, raw: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"{key}: not a number: {raw!r}") from None
    if not math.isfinite(value):
        raise ConfigError(f"{key}: must be finite, got {raw!r}")
    return value


def _parse_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key}: not an integer: {raw!r}") from None


def _parse_floats(key: str, raw: str) -> tuple[float, ...]:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ConfigError(f"{key}: expected a comma-separated list of numbers")
    return tuple(_parse_float(key, p) for p in parts)


def _parse_curves(raw: str) -> ThresholdCurves:
    """One breakpoint per comma group, ``distance:upper:lower``."""
    breakpoints = []
    for group in raw.split(","):
        group = group.strip()
        if not group:
            continue
        parts = group.split(":")
        if len(parts) != 3:
            raise ConfigError(
                f"curves: breakpoint {group!r} is not distance:upper:lower"
            )
        breakpoints.append(tuple(_parse_float("curves", p) for p in parts))
    if not breakpoints:
        raise ConfigError("curves: no breakpoints given")
    return ThresholdCurves(breakpoints=tuple(breakpoints))


def _dump_curves(curves: ThresholdCurves) -> str:
    return ",".join(f"{d!r}:{u!r}:{l!r}" for d, u, l in curves.breakpoints)


def parse_config(text: str) -> RunConfig:
    """Parse config text into a RunConfig.

    Raises ConfigError on a bad magic line, unknown or duplicate keys,
    malformed values, and anything RunConfig itself rejects.
    """
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise ConfigError(f"first line must be {MAGIC!r}")

    seen: dict[str, str] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key = key.strip()
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen[key] = value.strip()

    kwargs: dict = {}
    matcher_kwargs: dict = {}
    sensor_kwargs: dict = {}
    for key, raw in seen.items():
        if key in ("policy", "exploration", "matcher", "label"):
            kwargs[key] = raw
        elif key == "curves":
            kwargs[key] = _parse_curves(raw)
        elif key in ("ee_threshold", "feasible_radius", "stop_distance"):
            kwargs[key] = _parse_float(key, raw)
        elif key in (
            "exploration_refresh",
            "field_refresh",
            "inflate_cells",
            "goal_dilation",
            "seed",
        ):
            kwargs[key] = _parse_int(key, raw)
        elif key == "rays":
            sensor_kwargs[key] = _parse_int(key, raw)
        elif key in ("fov", "max_range"):
            sensor_kwargs[key] = _parse_float(key, raw)
        elif key in ("mu_neg", "sigma_neg"):
            matcher_kwargs[key] = _parse_float(key, raw)
        elif key in ("mu_pos", "sigma_pos"):
            values = _parse_floats(key, raw)
            if len(values) != 3:
                raise ConfigError(f"{key}: expected exactly 3 values, got {len(values)}")
            matcher_kwargs[key] = values
        elif key == "band_edges":
            matcher_kwargs[key] = _parse_floats(key, raw)
        else:
            raise ConfigError(f"unknown key {key!r}")

    if sensor_kwargs:
        kwargs["sensor"] = SensorConfig(**sensor_kwargs)
    if matcher_kwargs:
        kwargs["matcher_params"] = replace(calibrate_synthetic(), **matcher_kwargs)
    return RunConfig(**kwargs)


def dump_config(cfg: RunConfig) -> str:
    """Serialize a RunConfig; ``parse_config`` round-trips it exactly."""
    lines = [
        MAGIC,
        f"policy = {cfg.policy}",
        f"exploration = {cfg.exploration}",
        f"matcher = {cfg.matcher}",
        f"curves = {_dump_curves(cfg.curves)}",
        f"ee_threshold = {cfg.ee_threshold!r}",
        f"rays = {cfg.sensor.rays}",
        f"fov = {cfg.sensor.fov!r}",
        f"max_range = {cfg.sensor.max_range!r}",
        f"feasible_radius = {cfg.feasible_radius!r}",
        f"stop_distance = {cfg.stop_distance!r}",
        f"exploration_refresh = {cfg.exploration_refresh}",
        f"field_refresh = {cfg.field_refresh}",
        f"inflate_cells = {cfg.inflate_cells}",
        f"goal_dilation = {cfg.goal_dilation}",
        f"seed = {cfg.seed}",
        f"label = {cfg.label}",
    ]
    p = cfg.matcher_params
    if p is not None:
        lines += [
            f"mu_pos = {','.join(repr(v) for v in p.mu_pos)}",
            f"sigma_pos = {','.join(repr(v) for v in p.sigma_pos)}",
            f"mu_neg = {p.mu_neg!r}",
            f"sigma_neg = {p.sigma_neg!r}",
            f"band_edges = {','.join(repr(v) for v in p.band_edges)}",
        ]
    return "\n".join(lines) + "\n"
