import numpy as np
import pytest

from gliosim.core import DataError, DiffusionField, Grid, Material, ScalarField, SimConfig
from gliosim.imaging import phantom_volume, uniform_volume
from gliosim.integrator import StepMetrics, run, seed_initial
from gliosim.io import (CSV_HEADER, SnapshotWriter, format_metrics_csv, format_vtk, read_vtk, read_vtk_arrays,
                        write_metrics_csv, write_vtk)


def test_small_vtk_exact_text():
    grid = Grid(2, 2, 1, 0.5, origin=(1.0, 0.0, -2.0))
    text = format_vtk(ScalarField(grid, [0.0, 0.5, 1.0, 0.25]))
    assert text == (
        "# vtk DataFile Version 3.0\n"
        "gliosim tumor density\n"
        "ASCII\n"
        "DATASET STRUCTURED_POINTS\n"
        "DIMENSIONS 2 2 1\n"
        "SPACING 0.5 0.5 0.5\n"
        "ORIGIN 1 0 -2\n"
        "POINT_DATA 4\n"
        "SCALARS tumor_density float 1\n"
        "LOOKUP_TABLE default\n"
        "0\n0.5\n1\n0.25\n"
    )


def test_vtk_with_materials(tmp_path):
    grid = Grid(2, 1, 1, 1.0)
    mv = uniform_volume(grid, Material.WHITE)
    mv.labels[1] = Material.SKULL
    write_vtk(ScalarField(grid, [0.1, 0.0]), tmp_path / "m.vtk", mv)
    text = (tmp_path / "m.vtk").read_text()
    assert text.endswith("SCALARS material int 1\nLOOKUP_TABLE default\n1\n3\n")
    _, arrays = read_vtk_arrays(tmp_path / "m.vtk")
    np.testing.assert_array_equal(arrays["material"], [1, 3])
    with pytest.raises(ValueError):
        format_vtk(ScalarField(grid, [0.0, 0.0]), uniform_volume(Grid(3, 1, 1, 1.0), Material.AIR))


def test_round_trip_is_exact(tmp_path, rng):
    grid = Grid(4, 3, 5, 200.0 / 49, origin=(0.1, 0.2, 0.3))
    values = rng.random(grid.size) * 10.0 ** rng.integers(-300, 300, grid.size)
    write_vtk(ScalarField(grid, values), tmp_path / "r.vtk")
    back = read_vtk(tmp_path / "r.vtk")
    assert back.grid == grid
    np.testing.assert_array_equal(back.values, values)


def test_head_preset_initial_field_round_trip(tmp_path):
    cfg = SimConfig()
    grid = cfg.grid()
    u = seed_initial(grid, cfg, phantom_volume(grid))
    write_vtk(u, tmp_path / "p.vtk")
    back = read_vtk(tmp_path / "p.vtk")
    assert back.grid.dims == (50, 50, 50)
    np.testing.assert_array_equal(back.values, u.values)


@pytest.mark.parametrize("mutate, message", [
    (lambda L: L.__setitem__(11, "0.x5"), r"line 12: bad token '0.x5'"),
    (lambda L: L.__setitem__(4, "DIMENSIONS 2 2"), "line 5: expected 3 values"),
    (lambda L: L.__setitem__(5, "SPACING 1 1 2"), "line 6: non-uniform spacing"),
    (lambda L: L.__setitem__(2, "BINARY"), "line 3: expected 'ASCII'"),
    (lambda L: L.__setitem__(7, "POINT_DATA 5"), "line 8: POINT_DATA 5 does not match"),
    (lambda L: L.__delitem__(slice(12, None)), "ends after 2 of 4 values"),
    (lambda L: L.__setitem__(6, "ORIGIN 0 0 zero"), "line 7: bad token 'zero'"),
])
def test_read_errors_name_the_problem(tmp_path, mutate, message):
    lines = format_vtk(ScalarField(Grid(2, 2, 1, 1.0), [0.0, 0.5, 1.0, 0.25])).splitlines()
    mutate(lines)
    (tmp_path / "bad.vtk").write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError, match=message):
        read_vtk(tmp_path / "bad.vtk")


def test_read_missing_file(tmp_path):
    with pytest.raises(DataError, match="nope.vtk"):
        read_vtk(tmp_path / "nope.vtk")


def test_write_error_names_path(tmp_path):
    target = tmp_path / "missing_dir" / "x.vtk"
    with pytest.raises(OSError, match="missing_dir"):
        write_vtk(ScalarField(Grid(1, 1, 1, 1.0), [0.0]), target)
    with pytest.raises(OSError, match="missing_dir"):
        write_metrics_csv([], target)


def test_metrics_csv_format(tmp_path):
    assert format_metrics_csv([]) == CSV_HEADER + "\n"
    assert format_metrics_csv([StepMetrics(0, 150.0, 0.0, 0.0, 0.0)]) == CSV_HEADER + "\n0,150,0,0,0\n"
    row = format_metrics_csv([StepMetrics(3, 250.5, 0.1, 1.0 / 3.0, 12.25)]).splitlines()[1]
    assert row == "3,250.5,0.10000000000000001,0.33333333333333331,12.25"
    write_metrics_csv([], tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text() == "step,time_days,total_mass,max_density,radius_mm\n"


def test_run_outputs(tmp_path):
    cfg = SimConfig(nx=5, ny=5, nz=1, extent=40.0, seed_center=(20.0, 20.0, 0.0), t0=0.0, t_end=100.0,
                    num_steps=100, snapshot_every=25)
    grid = cfg.grid()
    writer = SnapshotWriter(tmp_path / "snap")
    res = run(cfg, DiffusionField(grid, np.full(grid.size, 0.13)), [writer])
    assert [p.name for p in writer.written] == [f"tumor_{n:05d}.vtk" for n in (0, 25, 50, 75, 100)]
    assert "step 100 time 100" in writer.written[-1].read_text().splitlines()[1]
    write_metrics_csv(res.metrics, tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert len(lines) == 102
    np.testing.assert_array_equal(read_vtk(writer.written[-1]).values, res.field.values)
