"""Front tracking and wave-speed validation against the Fisher-KPP velocity."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from gliosim.core import DiffusionField, Grid, ScalarField, SimConfig
from gliosim.integrator import run, seed_center


@dataclass(frozen=True)
class VelocityPrediction:
    kpp: float  # 2 sqrt(D rho), the asymptotic Fisher-KPP front speed
    literal: float  # 2 sqrt(D) rho, the formula read as printed
    d_mix: float


def theoretical_velocity(p_white: float, p_gray: float, cfg: SimConfig) -> VelocityPrediction:
    """Front speed for the tissue mixture ``D = p_w D_w + p_g D_g`` (mm/day)."""
    if p_white < 0 or p_gray < 0 or not math.isclose(p_white + p_gray, 1.0, abs_tol=1e-9):
        raise ValueError(f"fractions must be nonnegative and sum to 1, got {p_white}, {p_gray}")
    d_mix = p_white * cfg.d_white + p_gray * cfg.d_gray
    return VelocityPrediction(
        kpp=2.0 * math.sqrt(d_mix * cfg.rho),
        literal=2.0 * math.sqrt(d_mix) * cfg.rho,
        d_mix=d_mix,
    )


def front_position(u: ScalarField, axis: int = 0, threshold: float = 0.1,
                   center=None, direction: int = 1) -> float:
    """Distance from ``center`` to the outermost threshold crossing along one axis.

    The profile is the lattice line through the point nearest ``center``.
    The crossing is linearly interpolated between the last voxel with
    ``u >= threshold`` and its successor.  Returns 0 when no voxel on the
    line reaches the threshold.
    """
    grid = u.grid
    center = np.asarray(grid.origin if center is None else center, dtype=float)
    lattice = np.rint((center - np.asarray(grid.origin)) / grid.h).astype(int)
    lattice = np.clip(lattice, 0, np.asarray(grid.dims) - 1)
    arr = u.as_array()  # (z, y, x)
    index = [lattice[2], lattice[1], lattice[0]]
    index[2 - axis] = slice(None)
    profile = arr[tuple(index)]
    coords = grid.origin[axis] + grid.h * np.arange(profile.size)
    if direction < 0:
        profile, coords = profile[::-1], coords[::-1]
    ahead = direction * (coords - center[axis]) >= -1e-12
    hits = np.flatnonzero((profile >= threshold) & ahead)
    if hits.size == 0:
        return 0.0
    k = hits[-1]
    pos = coords[k]
    if k + 1 < profile.size and profile[k] > profile[k + 1]:
        frac = (profile[k] - threshold) / (profile[k] - profile[k + 1])
        pos = coords[k] + direction * grid.h * min(frac, 1.0)
    return float(direction * (pos - center[axis]))


def estimate_velocity(times, positions, *, h: float | None = None,
                      max_position: float | None = None, skip_fraction: float = 0.2) -> float:
    """Least-squares slope of front position against time.

    The first ``skip_fraction`` of samples is dropped while the front relaxes
    onto its travelling profile.  With ``h`` given, samples closer than
    ``5h`` to the seed (or to ``max_position``) are dropped as well.
    """
    t = np.asarray(times, dtype=float)
    r = np.asarray(positions, dtype=float)
    if t.shape != r.shape or t.size < 3:
        raise ValueError("need at least three (time, position) samples")
    keep = np.arange(t.size) >= int(math.floor(skip_fraction * t.size))
    if h is not None:
        keep &= r >= 5 * h
        if max_position is not None:
            keep &= r <= max_position - 5 * h
    if np.count_nonzero(keep) < 3:
        raise ValueError(f"only {np.count_nonzero(keep)} samples left in the fit window; need 3")
    t, r = t[keep], r[keep]
    if np.ptp(r) == 0:
        return 0.0
    return float(stats.linregress(t, r).slope)


@dataclass
class WaveResult:
    measured: float
    predicted: VelocityPrediction
    times: np.ndarray
    positions: np.ndarray
    h: float
    length: float

    @property
    def deviation(self) -> float:
        return abs(self.measured - self.predicted.kpp) / self.predicted.kpp


def slab_config(cfg: SimConfig) -> SimConfig:
    """1-D slab in homogeneous white matter with the seed on the left wall."""
    h = cfg.validate_h
    n = int(round(cfg.validate_length / h)) + 1
    steps = max(1, int(round(cfg.validate_duration / cfg.validate_dt)))
    return cfg.replace(nx=n, ny=1, nz=1, h=h, origin=(0.0, 0.0, 0.0), seed_center=(0.0, 0.0, 0.0),
                       t0=0.0, t_end=steps * cfg.validate_dt, num_steps=steps, snapshot_every=0)


def wave_speed_experiment(cfg: SimConfig, workers: int = 1) -> WaveResult:
    slab = slab_config(cfg)
    grid = slab.grid()
    d = DiffusionField(grid, np.full(grid.size, slab.d_white))
    center = seed_center(grid, slab)
    times, positions = [], []

    def track(n, t, field):
        times.append(t)
        positions.append(front_position(field, 0, slab.radius_threshold, center))

    run(slab.replace(snapshot_every=1), d, [track], workers=workers)
    length = (grid.nx - 1) * grid.h
    measured = estimate_velocity(times, positions, h=grid.h, max_position=length)
    return WaveResult(measured, theoretical_velocity(1.0, 0.0, slab), np.array(times),
                      np.array(positions), grid.h, length)


@dataclass
class ConservationResult:
    drift: float
    max_increase: float
    tau: float


def conservation_check(cfg: SimConfig, d: DiffusionField, tau: float, num_steps: int = 100,
                       initial: ScalarField | None = None, workers: int = 1) -> ConservationResult:
    """Pure-diffusion run: relative mass drift and the largest step-to-step rise of max|u|."""
    pure = cfg.replace(rho=0.0, t0=0.0, t_end=tau * num_steps, num_steps=num_steps, snapshot_every=1)
    sup = []
    res = run(pure, d, [lambda n, t, f: sup.append(float(np.abs(f.values).max()))],
              initial=initial, workers=workers)
    mass = np.array([m.total_mass for m in res.metrics])
    drift = float(np.max(np.abs(mass - mass[0])) / abs(mass[0])) if mass[0] else float(np.max(np.abs(mass)))
    rise = float(np.max(np.diff(sup))) if len(sup) > 1 else 0.0
    return ConservationResult(drift, rise, tau)


def homogeneous_field(grid: Grid, value: float) -> DiffusionField:
    return DiffusionField(grid, np.full(grid.size, value))
