"""Legacy VTK snapshots and CSV metrics.

Snapshot layout (ASCII, one value per line, 17 significant digits)::

    # vtk DataFile Version 3.0
    gliosim tumor density step <n> time <t>
    ASCII
    DATASET STRUCTURED_POINTS
    DIMENSIONS nx ny nz
    SPACING h h h
    ORIGIN ox oy oz
    POINT_DATA nx*ny*nz
    SCALARS tumor_density float 1
    LOOKUP_TABLE default
    <values in flat index order>
    SCALARS material int 1          (optional)
    LOOKUP_TABLE default
    <labels>
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from gliosim.core import DataError, Grid, MaterialVolume, ScalarField

CSV_HEADER = "step,time_days,total_mass,max_density,radius_mm"


def _g(x: float) -> str:
    return f"{x:.17g}"


def format_vtk(u: ScalarField, materials: MaterialVolume | None = None, title: str = "gliosim tumor density") -> str:
    g = u.grid
    if materials is not None and materials.grid.dims != g.dims:
        raise ValueError("material volume does not match field grid")
    lines = [
        "# vtk DataFile Version 3.0",
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {g.nx} {g.ny} {g.nz}",
        f"SPACING {_g(g.h)} {_g(g.h)} {_g(g.h)}",
        "ORIGIN " + " ".join(_g(c) for c in g.origin),
        f"POINT_DATA {g.size}",
        "SCALARS tumor_density float 1",
        "LOOKUP_TABLE default",
    ]
    lines.extend(map(_g, u.values.tolist()))
    if materials is not None:
        lines += ["SCALARS material int 1", "LOOKUP_TABLE default"]
        lines.extend(map(str, materials.labels.tolist()))
    return "\n".join(lines) + "\n"


def write_vtk(u: ScalarField, path, materials: MaterialVolume | None = None, title: str = "gliosim tumor density") -> None:
    path = Path(path)
    try:
        path.write_text(format_vtk(u, materials, title))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_vtk_arrays(path) -> tuple[Grid, dict[str, np.ndarray]]:
    """Parse a file written by :func:`write_vtk` into its grid and named point arrays."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from None

    pos = 0

    def fail(what, line=None):
        raise DataError(f"{path}: line {pos + 1 if line is None else line}: {what}")

    def expect(prefix):
        nonlocal pos
        if pos >= len(lines) or not lines[pos].startswith(prefix):
            fail(f"expected {prefix!r}, found {lines[pos] if pos < len(lines) else 'end of file'!r}")
        tokens = lines[pos].split()[len(prefix.split()):]
        pos += 1
        return tokens

    def numbers(tokens, kind, count):
        # called right after expect(), so the offending line is the previous one
        if len(tokens) != count:
            fail(f"expected {count} values, found {len(tokens)}", pos)
        out = []
        for tok in tokens:
            try:
                out.append(kind(tok))
            except ValueError:
                fail(f"bad token {tok!r}", pos)
        return out

    expect("# vtk DataFile")
    pos += 1  # title
    expect("ASCII")
    expect("DATASET STRUCTURED_POINTS")
    nx, ny, nz = numbers(expect("DIMENSIONS"), int, 3)
    spacing = numbers(expect("SPACING"), float, 3)
    origin = numbers(expect("ORIGIN"), float, 3)
    (npts,) = numbers(expect("POINT_DATA"), int, 1)
    if len(set(spacing)) != 1:
        fail(f"non-uniform spacing {spacing}", 6)
    if npts != nx * ny * nz:
        fail(f"POINT_DATA {npts} does not match DIMENSIONS", 8)
    try:
        grid = Grid(nx, ny, nz, spacing[0], tuple(origin))
    except ValueError as exc:
        fail(str(exc), 5)

    arrays = {}
    while pos < len(lines):
        if not lines[pos].strip():
            pos += 1
            continue
        head = expect("SCALARS")
        if len(head) < 2:
            fail("SCALARS needs a name and a type")
        name, dtype = head[0], head[1]
        kind = int if dtype in ("int", "unsigned_char", "short", "long") else float
        expect("LOOKUP_TABLE")
        values = []
        while len(values) < npts:
            if pos >= len(lines):
                fail(f"array {name!r} ends after {len(values)} of {npts} values")
            for tok in lines[pos].split():
                try:
                    values.append(kind(tok))
                except ValueError:
                    fail(f"bad token {tok!r}")
            pos += 1
        if len(values) != npts:
            fail(f"array {name!r} has {len(values)} values, expected {npts}")
        arrays[name] = np.asarray(values, dtype=float if kind is float else np.int64)
    return grid, arrays


def read_vtk(path) -> ScalarField:
    grid, arrays = read_vtk_arrays(path)
    if "tumor_density" not in arrays:
        raise DataError(f"{path}: no tumor_density array")
    return ScalarField(grid, arrays["tumor_density"])


def format_metrics_csv(series) -> str:
    rows = [CSV_HEADER]
    for m in series:
        rows.append(",".join([str(int(m.step)), _g(m.time), _g(m.total_mass), _g(m.max_density), _g(m.radius)]))
    return "\n".join(rows) + "\n"


def write_metrics_csv(series, path) -> None:
    path = Path(path)
    try:
        path.write_text(format_metrics_csv(series))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


class SnapshotWriter:
    """Run sink writing ``<prefix>_<step>.vtk`` files into a directory."""

    def __init__(self, directory, materials: MaterialVolume | None = None, prefix: str = "tumor"):
        self.directory = Path(directory)
        self.materials = materials
        self.prefix = prefix
        self.written: list[Path] = []
        self.directory.mkdir(parents=True, exist_ok=True)

    def __call__(self, step: int, time: float, field: ScalarField) -> None:
        path = self.directory / f"{self.prefix}_{step:05d}.vtk"
        write_vtk(field, path, self.materials, title=f"gliosim tumor density step {step} time {_g(time)}")
        self.written.append(path)
