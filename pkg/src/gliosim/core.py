"""Shared domain types, flat index mapping and the configuration schema.

Flat ordering is row-major with x fastest: a field on a grid is stored as a
1-D array whose C-order reshape is ``(nz, ny, nx)``.
"""

from __future__ import annotations

import configparser
import dataclasses
import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    """Invalid or unparsable configuration."""


class DataError(ValueError):
    """Malformed input data (images, volumes, snapshots)."""


class NumericalError(ArithmeticError):
    """Non-finite values or overflow during a numerical kernel."""


class Material(enum.IntEnum):
    AIR = 0
    WHITE = 1
    GRAY = 2
    SKULL = 3


@dataclass(frozen=True)
class Grid:
    """Regular lattice with uniform spacing ``h`` (mm).

    Axes with a single point are inactive; a 2-D grid has ``nz == 1``.
    """

    nx: int
    ny: int
    nz: int
    h: float
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("nx", "ny", "nz"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValueError(f"h must be positive, got {self.h}")
        object.__setattr__(self, "origin", tuple(float(c) for c in self.origin))
        if len(self.origin) != 3:
            raise ValueError("origin must have three components")

    @property
    def size(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def shape(self) -> tuple[int, int, int]:
        """Array shape ``(nz, ny, nx)`` matching the flat ordering."""
        return (self.nz, self.ny, self.nx)

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def ndim(self) -> int:
        return sum(n > 1 for n in self.dims)

    @property
    def upper(self) -> tuple[float, float, float]:
        return tuple(o + (n - 1) * self.h for o, n in zip(self.origin, self.dims))

    def point(self, i: int, j: int, k: int) -> np.ndarray:
        """Physical position of the 1-based lattice point ``(i, j, k)``."""
        global_index(i, j, k, self)
        return np.asarray(self.origin) + self.h * np.array([i - 1, j - 1, k - 1], float)

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(o + self.h * np.arange(n) for o, n in zip(self.origin, self.dims))

    def coordinates(self) -> np.ndarray:
        """Physical coordinates of every point, shape ``(size, 3)`` in flat order."""
        x, y, z = self.axes()
        zz, yy, xx = np.meshgrid(z, y, x, indexing="ij")
        return np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)

    def contains(self, p) -> bool:
        lo, hi = np.asarray(self.origin), np.asarray(self.upper)
        p = np.asarray(p, float)
        return bool(np.all(p >= lo - 1e-12) and np.all(p <= hi + 1e-12))


def global_index(i: int, j: int, k: int, grid: Grid) -> int:
    """Map 1-based ``(i, j, k)`` to the 0-based flat index."""
    if not (1 <= i <= grid.nx and 1 <= j <= grid.ny and 1 <= k <= grid.nz):
        raise IndexError(f"lattice index ({i}, {j}, {k}) outside grid {grid.dims}")
    return (i - 1) + (j - 1) * grid.nx + (k - 1) * grid.nx * grid.ny


def grid_coords(index: int, grid: Grid) -> tuple[int, int, int]:
    """Inverse of :func:`global_index`; returns 1-based ``(i, j, k)``."""
    if not 0 <= index < grid.size:
        raise IndexError(f"flat index {index} outside [0, {grid.size})")
    k, rem = divmod(index, grid.nx * grid.ny)
    j, i = divmod(rem, grid.nx)
    return i + 1, j + 1, k + 1


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.values.size != self.grid.size:
            raise ValueError(f"field has {self.values.size} values, grid has {self.grid.size} points")

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)


@dataclass
class MaterialVolume:
    grid: Grid
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.uint8).reshape(-1)
        if self.labels.size != self.grid.size:
            raise ValueError(f"volume has {self.labels.size} labels, grid has {self.grid.size} points")
        if self.labels.size and self.labels.max() > max(Material):
            raise ValueError(f"unknown material label {int(self.labels.max())}")

    @property
    def tissue(self) -> np.ndarray:
        return (self.labels == Material.WHITE) | (self.labels == Material.GRAY)


@dataclass
class DiffusionField:
    grid: Grid
    d: np.ndarray

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=float).reshape(-1)
        if self.d.size != self.grid.size:
            raise ValueError(f"diffusion field has {self.d.size} values, grid has {self.grid.size} points")
        if not np.all(np.isfinite(self.d)) or np.any(self.d < 0):
            raise ValueError("diffusion coefficients must be finite and nonnegative")


# --------------------------------------------------------------------------
# configuration


@dataclass
class SimConfig:
    """Simulation parameters. Defaults reproduce the 50^3 head experiment."""

    # [model]
    rho: float = 0.025
    d_white: float = 0.13
    d_gray: float = 0.013
    # [grid]
    nx: int = 50
    ny: int = 50
    nz: int = 50
    extent: float = 200.0
    h: float | None = None
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    # [time]
    t0: float = 150.0
    t_end: float = 3500.0
    num_steps: int = 100
    tol: float = 1e-8
    # [seed]
    seed_center: tuple[float, float, float] = (102.0, 138.0, 96.0)
    seed_amplitude: float = 0.1
    seed_width: float = 10.0
    seed_snap: bool = True
    # [imaging]
    air_max: int = 1
    white_max: int = 230
    gray_max: int = 240
    # [output]
    snapshot_every: int = 2
    radius_threshold: float = 0.1
    # [validate]
    validate_h: float = 0.5
    validate_length: float = 160.0
    validate_dt: float = 1.0
    validate_duration: float = 1000.0

    def __post_init__(self):
        self.origin = tuple(float(c) for c in self.origin)
        self.seed_center = tuple(float(c) for c in self.seed_center)
        self.validate()

    @property
    def tau(self) -> float:
        return (self.t_end - self.t0) / self.num_steps

    @property
    def thresholds(self) -> tuple[int, int, int]:
        return (self.air_max, self.white_max, self.gray_max)

    def grid(self) -> Grid:
        h = self.h
        if h is None:
            n = max(self.nx, self.ny, self.nz)
            h = self.extent / (n - 1) if n > 1 else self.extent
        return Grid(self.nx, self.ny, self.nz, h, self.origin)

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def validate(self) -> None:
        def bad(key, why):
            raise ConfigError(f"{_KEY_OF[key]}: {why}")

        for key in ("rho", "d_white", "d_gray", "t0", "t_end", "extent", "tol",
                    "seed_amplitude", "seed_width", "radius_threshold", "validate_h",
                    "validate_length", "validate_dt", "validate_duration"):
            if not math.isfinite(getattr(self, key)):
                bad(key, "must be finite")
        if len(self.origin) != 3:
            bad("origin", "needs three components")
        if len(self.seed_center) != 3:
            bad("seed_center", "needs three components")
        if self.rho < 0:
            bad("rho", "must be >= 0")
        if self.d_gray < 0:
            bad("d_gray", "must be >= 0")
        if self.d_white < self.d_gray:
            bad("d_white", "must be >= d_gray")
        if self.t_end <= self.t0:
            bad("t_end", "must exceed t0")
        if self.num_steps < 1:
            bad("num_steps", "must be >= 1")
        for key in ("nx", "ny", "nz"):
            if getattr(self, key) < 1:
                bad(key, "must be >= 1")
        if self.extent <= 0:
            bad("extent", "must be positive")
        if self.h is not None and not (self.h > 0 and math.isfinite(self.h)):
            bad("h", "must be positive")
        if not 0 < self.tol < 1:
            bad("tol", "must lie in (0, 1)")
        if self.seed_width < 0:
            bad("seed_width", "must be >= 0")
        if not 0 <= self.air_max < self.white_max < self.gray_max <= 255:
            bad("gray_max", "thresholds must satisfy 0 <= air_max < white_max < gray_max <= 255")
        if self.snapshot_every < 0:
            bad("snapshot_every", "must be >= 0")
        if not 0 < self.radius_threshold < 1:
            bad("radius_threshold", "must lie in (0, 1)")
        for key in ("validate_h", "validate_length", "validate_dt", "validate_duration"):
            if getattr(self, key) <= 0:
                bad(key, "must be positive")


# (section, key) -> (field name, kind)
CONFIG_KEYS: dict[tuple[str, str], tuple[str, str]] = {
    ("model", "rho"): ("rho", "float"),
    ("model", "d_white"): ("d_white", "float"),
    ("model", "d_gray"): ("d_gray", "float"),
    ("grid", "nx"): ("nx", "int"),
    ("grid", "ny"): ("ny", "int"),
    ("grid", "nz"): ("nz", "int"),
    ("grid", "extent"): ("extent", "float"),
    ("grid", "h"): ("h", "optfloat"),
    ("grid", "origin"): ("origin", "vec3"),
    ("time", "t0"): ("t0", "float"),
    ("time", "t_end"): ("t_end", "float"),
    ("time", "num_steps"): ("num_steps", "int"),
    ("time", "tol"): ("tol", "float"),
    ("seed", "center"): ("seed_center", "vec3"),
    ("seed", "amplitude"): ("seed_amplitude", "float"),
    ("seed", "width"): ("seed_width", "float"),
    ("seed", "snap"): ("seed_snap", "bool"),
    ("imaging", "air_max"): ("air_max", "int"),
    ("imaging", "white_max"): ("white_max", "int"),
    ("imaging", "gray_max"): ("gray_max", "int"),
    ("output", "snapshot_every"): ("snapshot_every", "int"),
    ("output", "radius_threshold"): ("radius_threshold", "float"),
    ("validate", "h"): ("validate_h", "float"),
    ("validate", "length"): ("validate_length", "float"),
    ("validate", "dt"): ("validate_dt", "float"),
    ("validate", "duration"): ("validate_duration", "float"),
}
_KEY_OF = {name: f"{sec}.{key}" for (sec, key), (name, _) in CONFIG_KEYS.items()}


def _parse_value(raw: str, kind: str, where: str):
    raw = raw.strip()
    try:
        if kind == "float":
            return float(raw)
        if kind == "optfloat":
            return None if raw.lower() in ("", "none", "auto") else float(raw)
        if kind == "int":
            return int(raw)
        if kind == "bool":
            lowered = raw.lower()
            if lowered in ("true", "yes", "on", "1"):
                return True
            if lowered in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if kind == "vec3":
            parts = [float(p) for p in raw.replace(",", " ").split()]
            if len(parts) != 3:
                raise ValueError(raw)
            return tuple(parts)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {kind}") from None
    raise AssertionError(kind)


def parse_config(text: str, base: SimConfig | None = None) -> SimConfig:
    """Parse ``key = value`` text with ``[section]`` headers over ``base`` defaults."""
    parser = configparser.ConfigParser(
        delimiters=("=",), comment_prefixes=("#",), inline_comment_prefixes=("#",),
        interpolation=None, default_section="__defaults__",
    )
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    changes = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            entry = CONFIG_KEYS.get((section, key))
            if entry is None:
                raise ConfigError(f"{section}.{key}: unknown configuration key")
            name, kind = entry
            changes[name] = _parse_value(raw, kind, f"{section}.{key}")
    base = base if base is not None else SimConfig()
    return dataclasses.replace(base, **changes)


def load_config(path, base: SimConfig | None = None) -> SimConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, base)


def _format_value(value, kind: str) -> str:
    if kind in ("float", "optfloat"):
        return "auto" if value is None else repr(float(value))
    if kind == "int":
        return str(int(value))
    if kind == "bool":
        return "true" if value else "false"
    return ", ".join(repr(float(v)) for v in value)


def dump_config(cfg: SimConfig) -> str:
    """Serialize ``cfg`` so that :func:`parse_config` reproduces it exactly."""
    lines: list[str] = []
    current = None
    for (section, key), (name, kind) in CONFIG_KEYS.items():
        if section != current:
            if current is not None:
                lines.append("")
            lines.append(f"[{section}]")
            current = section
        lines.append(f"{key} = {_format_value(getattr(cfg, name), kind)}")
    return "\n".join(lines) + "\n"


PRESETS: dict[str, dict] = {
    # single central slice, 193 x 193 points over a 200 mm square
    "paper-2d": dict(nx=193, ny=193, nz=1, extent=200.0, seed_center=(110.0, 140.0, 0.0)),
    "paper-3d": dict(nx=50, ny=50, nz=50, extent=200.0, seed_center=(102.0, 138.0, 96.0)),
    "bench-32": dict(nx=32, ny=32, nz=32, extent=200.0, seed_center=(102.0, 138.0, 96.0)),
}


def preset_config(name: str, **overrides) -> SimConfig:
    try:
        values = dict(PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    values.update(overrides)
    return SimConfig(**values)
