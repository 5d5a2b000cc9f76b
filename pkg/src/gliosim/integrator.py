"""Exponential Euler time stepping for ``U' = A U + F(U)``.

One step is ``U + tau * phi_1(tau A) (A U + F(U))``, which equals
``exp(tau A) U + tau * phi_1(tau A) F(U)`` and needs a single phi_1 action.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from gliosim.core import ConfigError, DiffusionField, Grid, MaterialVolume, NumericalError, ScalarField, SimConfig
from gliosim.expact import phi1v
from gliosim.operator import SparseOperator, assemble, reaction

log = logging.getLogger(__name__)

# Values outside this band trigger a diagnostic warning; they are never clamped.
DENSITY_BAND = (-0.01, 1.01)

Sink = Callable[[int, float, ScalarField], None]


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    t_end: float
    num_steps: int

    def __post_init__(self):
        if self.num_steps < 0:
            raise ValueError("num_steps must be >= 0")
        if self.num_steps > 0 and not self.t_end > self.t0:
            raise ValueError("t_end must exceed t0")

    @property
    def tau(self) -> float:
        return (self.t_end - self.t0) / self.num_steps if self.num_steps else 0.0

    def time(self, n: int) -> float:
        # hits t_end exactly at n == num_steps
        if n == self.num_steps:
            return self.t_end
        return self.t0 + n * self.tau


@dataclass
class StepMetrics:
    step: int
    time: float
    total_mass: float
    max_density: float
    radius: float


@dataclass
class RunResult:
    field: ScalarField
    metrics: list[StepMetrics]
    seed_center: np.ndarray
    timings: dict[str, float] = field(default_factory=dict)


def seed_center(grid: Grid, cfg: SimConfig) -> np.ndarray:
    """Configured seed centre, snapped to the nearest lattice point when ``cfg.seed_snap``."""
    c = np.asarray(cfg.seed_center, dtype=float)
    if not grid.contains(c):
        raise ConfigError(f"seed.center {tuple(c)} lies outside the domain "
                          f"{grid.origin}..{grid.upper}")
    if cfg.seed_snap:
        origin = np.asarray(grid.origin)
        idx = np.floor((c - origin) / grid.h + 0.5)
        idx = np.clip(idx, 0, np.asarray(grid.dims) - 1)
        c = origin + idx * grid.h
    return c


def seed_initial(grid: Grid, cfg: SimConfig, materials: MaterialVolume | None = None) -> ScalarField:
    """Gaussian seed ``amplitude * exp(-width * |x - c|^2)``, zero outside tissue."""
    c = seed_center(grid, cfg)
    r2 = np.sum((grid.coordinates() - c) ** 2, axis=1)
    values = cfg.seed_amplitude * np.exp(-cfg.seed_width * r2)
    if materials is not None:
        values[~materials.tissue] = 0.0
    return ScalarField(grid, values)


def step(u, A: SparseOperator, cfg: SimConfig, tau: float, *, workers: int = 1,
         index: int | None = None) -> np.ndarray:
    """Advance the density vector ``u`` by one exponential Euler step of length ``tau``."""
    u = np.asarray(u, dtype=float)
    # overflow surfaces as NumericalError below, not as a RuntimeWarning
    with np.errstate(over="ignore", invalid="ignore"):
        rhs = A.matvec(u, workers) + reaction(u, cfg.rho)
        if not np.all(np.isfinite(rhs)):
            raise NumericalError(f"non-finite right-hand side{'' if index is None else f' at step {index}'}")
        new = u + tau * phi1v(tau, A, rhs, cfg.tol, workers)
    if not np.all(np.isfinite(new)):
        where = "" if index is None else f" at step {index}"
        raise NumericalError(f"non-finite density{where}")
    return new


def tumor_radius(field: ScalarField, center, threshold: float) -> float:
    above = field.values >= threshold
    if not np.any(above):
        return 0.0
    pts = field.grid.coordinates()[above]
    return float(np.sqrt(np.max(np.sum((pts - np.asarray(center)) ** 2, axis=1))))


def measure(n: int, t: float, field: ScalarField, center, threshold: float) -> StepMetrics:
    h3 = field.grid.h ** 3
    return StepMetrics(
        step=n,
        time=t,
        total_mass=float(field.values.sum() * h3),
        max_density=float(field.values.max()) if field.values.size else 0.0,
        radius=tumor_radius(field, center, threshold),
    )


def run(cfg: SimConfig, d: DiffusionField, sinks: Iterable[Sink] = (), *,
        materials: MaterialVolume | None = None, initial: ScalarField | None = None,
        num_steps: int | None = None, workers: int = 1,
        progress: Callable[[int, float, float], None] | None = None) -> RunResult:
    """Integrate from ``cfg.t0`` to ``cfg.t_end`` and return the final field and metrics.

    ``sinks`` are called with ``(step, time, field)`` at step 0, every
    ``cfg.snapshot_every`` steps and at the final step.  ``num_steps``
    overrides the configured count (0 returns the initial field).
    """
    grid = d.grid
    if materials is not None and materials.grid.dims != grid.dims:
        raise ValueError("material volume and diffusion field live on different grids")
    nsteps = cfg.num_steps if num_steps is None else num_steps
    tg = TimeGrid(cfg.t0, cfg.t_end, nsteps)
    sinks = list(sinks)
    timings = {"assemble": 0.0, "loop": 0.0, "io": 0.0}

    tic = time.perf_counter()
    A = assemble(d, grid)
    timings["assemble"] = time.perf_counter() - tic

    center = seed_center(grid, cfg)
    u = initial if initial is not None else seed_initial(grid, cfg, materials)
    u = ScalarField(grid, u.values.copy())
    metrics = [measure(0, tg.time(0), u, center, cfg.radius_threshold)]

    def emit(n):
        tic = time.perf_counter()
        for sink in sinks:
            sink(n, tg.time(n), u)
        timings["io"] += time.perf_counter() - tic

    emit(0)
    warned = False
    loop_start = time.perf_counter()
    for n in range(1, nsteps + 1):
        tic = time.perf_counter()
        u = ScalarField(grid, step(u.values, A, cfg, tg.tau, workers=workers, index=n))
        timings["loop"] += time.perf_counter() - tic
        if not warned and (u.values.min() < DENSITY_BAND[0] or u.values.max() > DENSITY_BAND[1]):
            log.warning("density left [%g, %g] at step %d (min %g, max %g)",
                        *DENSITY_BAND, n, u.values.min(), u.values.max())
            warned = True
        metrics.append(measure(n, tg.time(n), u, center, cfg.radius_threshold))
        if n == nsteps or (cfg.snapshot_every and n % cfg.snapshot_every == 0):
            emit(n)
        if progress is not None:
            progress(n, tg.time(n), time.perf_counter() - loop_start)
    return RunResult(u, metrics, center, timings)
