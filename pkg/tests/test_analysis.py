import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gliosim.analysis import (conservation_check, estimate_velocity, front_position, homogeneous_field,
                              slab_config, theoretical_velocity, wave_speed_experiment)
from gliosim.core import Grid, ScalarField, SimConfig


def test_theoretical_velocity_readings():
    cfg = SimConfig()
    white = theoretical_velocity(1.0, 0.0, cfg)
    assert white.kpp == pytest.approx(2 * math.sqrt(0.13 * 0.025))
    assert white.kpp == pytest.approx(0.114, abs=5e-4)
    assert white.literal == pytest.approx(2 * math.sqrt(0.13) * 0.025)
    mix = theoretical_velocity(0.3, 0.7, cfg)
    assert mix.d_mix == pytest.approx(0.3 * 0.13 + 0.7 * 0.013)
    assert mix.kpp == pytest.approx(0.069, abs=5e-4)
    assert mix.literal == pytest.approx(0.011, abs=5e-4)
    assert white.kpp >= theoretical_velocity(0.0, 1.0, cfg).kpp


@pytest.mark.parametrize("pw, pg", [(0.5, 0.6), (-0.1, 1.1), (1.2, -0.2)])
def test_theoretical_velocity_rejects_bad_fractions(pw, pg):
    with pytest.raises(ValueError):
        theoretical_velocity(pw, pg, SimConfig())


def test_front_position_linear_profile():
    grid = Grid(21, 1, 1, 1.0)
    x = grid.coordinates()[:, 0]
    u = ScalarField(grid, np.clip(1 - x / 10, 0, None))
    assert front_position(u, threshold=0.1) == pytest.approx(9.0)
    assert front_position(u, threshold=0.25) == pytest.approx(7.5)
    assert front_position(u, threshold=1.5) == 0.0


def test_front_position_direction_and_axis():
    grid = Grid(3, 21, 3, 0.5)
    y = grid.coordinates()[:, 1]
    u = ScalarField(grid, np.clip(1 - np.abs(y - 5.0) / 4, 0, None))
    centre = (0.5, 5.0, 0.5)
    assert front_position(u, axis=1, threshold=0.5, center=centre) == pytest.approx(2.0)
    assert front_position(u, axis=1, threshold=0.5, center=centre, direction=-1) == pytest.approx(2.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 1.0), st.floats(-100, 100), st.floats(-1e3, 1e3), st.floats(-50, 50))
def test_estimate_velocity_recovers_slope_and_is_translation_invariant(v, r0, t_shift, r_shift):
    t = np.linspace(0.0, 200.0, 41)
    r = r0 + v * t
    assert estimate_velocity(t, r) == pytest.approx(v, rel=1e-9, abs=1e-12)
    assert estimate_velocity(t + t_shift, r) == pytest.approx(estimate_velocity(t, r), rel=1e-9, abs=1e-12)
    assert estimate_velocity(t, r + r_shift) == pytest.approx(estimate_velocity(t, r), rel=1e-9, abs=1e-12)


def test_estimate_velocity_windows():
    t = np.arange(20.0)
    r = np.where(t < 10, 2.0 * t, 20.0 + 0.5 * (t - 10))
    # early samples are discarded, so only the later slope remains
    assert estimate_velocity(t, r, skip_fraction=0.5) == pytest.approx(0.5)
    # samples within 5h of the far wall are dropped as well
    r2 = np.minimum(t, 12.0)
    assert estimate_velocity(t, r2, h=1.0, max_position=15.0, skip_fraction=0.0) == pytest.approx(1.0)
    assert estimate_velocity(t, np.full(20, 7.0)) == 0.0
    with pytest.raises(ValueError):
        estimate_velocity([0, 1], [0, 1])
    with pytest.raises(ValueError, match="fit window"):
        estimate_velocity(t, t, h=10.0)


def test_slab_config():
    cfg = SimConfig(validate_h=0.5, validate_length=160.0, validate_dt=1.0, validate_duration=1000.0)
    slab = slab_config(cfg)
    grid = slab.grid()
    assert grid.dims == (321, 1, 1) and grid.h == 0.5
    assert slab.num_steps == 1000 and slab.tau == pytest.approx(1.0)
    assert slab.seed_center == (0.0, 0.0, 0.0)


def test_coarse_wave_experiment_reports_measurement():
    cfg = SimConfig(validate_h=8.0, validate_length=160.0, validate_dt=5.0, validate_duration=1000.0)
    res = wave_speed_experiment(cfg)
    assert math.isfinite(res.measured) and res.measured > 0
    assert res.h == 8.0 and res.length == 160.0
    assert res.deviation == pytest.approx(abs(res.measured - res.predicted.kpp) / res.predicted.kpp)


def test_conservation_check_uniform(rng):
    cfg = SimConfig(nx=5, ny=5, nz=5, extent=40.0, seed_center=(20.0, 20.0, 20.0))
    grid = cfg.grid()
    res = conservation_check(cfg, homogeneous_field(grid, 0.13), 1e6, num_steps=5,
                             initial=ScalarField(grid, rng.random(grid.size)))
    assert res.drift <= 1e-12
    assert res.max_increase <= 1e-12
    assert res.tau == 1e6
