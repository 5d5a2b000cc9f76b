"""Slice-stack ingestion, intensity classification and nearest-neighbour resampling."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from gliosim.core import DataError, DiffusionField, Grid, Material, MaterialVolume, SimConfig

DEFAULT_THRESHOLDS = (1, 230, 240)

# Intensities used by the synthetic head phantom, one per material band.
PHANTOM_INTENSITY = {Material.AIR: 0, Material.WHITE: 200, Material.GRAY: 235, Material.SKULL: 250}


@dataclass
class ImageStack:
    """Grayscale volume stored as ``data[slice, row, column]`` (x fastest when flattened).

    Slices are ordered bottom to top.
    """

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise DataError(f"image stack must be 3-D, got shape {self.data.shape}")
        if self.data.dtype != np.uint8:
            if self.data.size and (self.data.min() < 0 or self.data.max() > 255):
                raise DataError("intensities must lie in [0, 255]")
            self.data = self.data.astype(np.uint8)

    @property
    def num_slices(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def intensities(self) -> np.ndarray:
        return self.data.reshape(-1)


# --------------------------------------------------------------------------
# file formats


def _pgm_tokens(buf: bytes, count: int, name) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise DataError(f"{name}: truncated PGM header")
        tokens.append(buf[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def read_pgm(path) -> np.ndarray:
    """Read a binary 8-bit graymap (``P5``, maxval 255) into a ``(height, width)`` array."""
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from None
    tokens, offset = _pgm_tokens(buf, 4, path)
    if tokens[0] != b"P5":
        raise DataError(f"{path}: bad magic {tokens[0]!r}, expected b'P5'")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise DataError(f"{path}: non-integer PGM header field") from None
    if maxval != 255:
        raise DataError(f"{path}: maxval {maxval} unsupported, expected 255")
    raster = buf[offset:offset + width * height]
    if len(raster) != width * height:
        raise DataError(f"{path}: expected {width * height} pixel bytes, found {len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(path, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=np.uint8)
    height, width = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(image).tobytes())


def load_stack(paths) -> ImageStack:
    """Read PGM slices in the given order (first path is the bottom slice)."""
    paths = [Path(p) for p in paths]
    if not paths:
        raise DataError("no slice files given")
    slices, shape = [], None
    for p in paths:
        img = read_pgm(p)
        if shape is None:
            shape = img.shape
        elif img.shape != shape:
            raise DataError(f"{p}: dimension mismatch, {img.shape[1]}x{img.shape[0]} "
                            f"vs {shape[1]}x{shape[0]}")
        slices.append(img)
    return ImageStack(np.stack(slices))


def load_slice_dir(directory) -> ImageStack:
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"{directory}: not a directory")
    paths = sorted(p for p in directory.iterdir() if p.suffix.lower() == ".pgm")
    if not paths:
        raise DataError(f"{directory}: no .pgm slices found")
    return load_stack(paths)


def write_stack(directory, stack: ImageStack, prefix: str = "slice") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    digits = max(3, len(str(stack.num_slices)))
    out = []
    for k in range(stack.num_slices):
        p = directory / f"{prefix}_{k:0{digits}d}.pgm"
        write_pgm(p, stack.data[k])
        out.append(p)
    return out


def read_raw_volume(path) -> np.ndarray:
    """Read the raw byte volume format: ``nx ny nz`` on line one, then nx*ny*nz bytes.

    Returns an array of shape ``(nz, ny, nx)``.
    """
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from None
    newline = buf.find(b"\n")
    if newline < 0:
        raise DataError(f"{path}: missing header line")
    try:
        dims = [int(t) for t in buf[:newline].split()]
    except ValueError:
        raise DataError(f"{path}: header must hold three integers") from None
    if len(dims) != 3 or min(dims) < 1:
        raise DataError(f"{path}: header must hold three positive integers, got {dims}")
    nx, ny, nz = dims
    body = buf[newline + 1:]
    if len(body) != nx * ny * nz:
        raise DataError(f"{path}: expected {nx * ny * nz} voxel bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(nz, ny, nx).copy()


def write_raw_volume(path, volume: np.ndarray) -> None:
    volume = np.asarray(volume, dtype=np.uint8)
    nz, ny, nx = volume.shape
    with open(path, "wb") as fh:
        fh.write(f"{nx} {ny} {nz}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(volume).tobytes())


def load_raw_stack(path) -> ImageStack:
    return ImageStack(read_raw_volume(path))


def write_labels(path, mv: MaterialVolume) -> None:
    """Write a material volume as a raw labelled volume (0=air 1=white 2=gray 3=skull)."""
    write_raw_volume(path, mv.labels.reshape(mv.grid.shape))


def read_labels(path, grid: Grid | None = None) -> MaterialVolume:
    vol = read_raw_volume(path)
    nz, ny, nx = vol.shape
    if grid is None:
        grid = Grid(nx, ny, nz, 1.0)
    elif grid.dims != (nx, ny, nz):
        raise DataError(f"{path}: label volume is {nx}x{ny}x{nz}, grid is "
                        f"{grid.nx}x{grid.ny}x{grid.nz}")
    if vol.size and vol.max() > max(Material):
        raise DataError(f"{path}: label {int(vol.max())} is not a material code")
    return MaterialVolume(grid, vol.reshape(-1))


# --------------------------------------------------------------------------
# classification and resampling


def classify(intensity: int, thresholds=DEFAULT_THRESHOLDS) -> Material:
    """Material of one intensity: air <= t0 < white <= t1 < gray <= t2 < skull."""
    air_max, white_max, gray_max = thresholds
    if intensity <= air_max:
        return Material.AIR
    if intensity <= white_max:
        return Material.WHITE
    if intensity <= gray_max:
        return Material.GRAY
    return Material.SKULL


def classify_array(values: np.ndarray, thresholds=DEFAULT_THRESHOLDS) -> np.ndarray:
    # the enum codes are ordered like the intensity bands
    return np.digitize(np.asarray(values), np.asarray(thresholds), right=True).astype(np.uint8)


def _nearest_source(n_target: int, n_source: int) -> np.ndarray:
    """Nearest source index for each target point, both spanning the same interval.

    Ties round down. Integer arithmetic keeps tie detection exact.
    """
    if n_target == 1:
        num, den = np.array([n_source - 1]), 2
    else:
        num, den = np.arange(n_target) * (n_source - 1), n_target - 1
    # ceil(num/den - 1/2)
    return -((den - 2 * num) // (2 * den))


def resample(stack: ImageStack, grid: Grid, thresholds=DEFAULT_THRESHOLDS) -> MaterialVolume:
    """Classify the stack and sample it onto ``grid`` by nearest neighbour.

    The stack and the grid are taken to cover the same physical box.  A grid
    axis with one point samples the middle of the stack along that axis.
    """
    if stack.num_slices == 0 or stack.width == 0 or stack.height == 0:
        raise DataError("cannot resample an empty image stack")
    ix = _nearest_source(grid.nx, stack.width)
    iy = _nearest_source(grid.ny, stack.height)
    iz = _nearest_source(grid.nz, stack.num_slices)
    sampled = stack.data[np.ix_(iz, iy, ix)]
    return MaterialVolume(grid, classify_array(sampled, thresholds).reshape(-1))


def diffusion_from_materials(mv: MaterialVolume, cfg: SimConfig) -> DiffusionField:
    table = np.zeros(len(Material))
    table[Material.WHITE] = cfg.d_white
    table[Material.GRAY] = cfg.d_gray
    return DiffusionField(mv.grid, table[mv.labels])


def matter_fractions(mv: MaterialVolume) -> tuple[float, float]:
    """White and gray matter proportions among tissue voxels."""
    white = int(np.count_nonzero(mv.labels == Material.WHITE))
    gray = int(np.count_nonzero(mv.labels == Material.GRAY))
    if white + gray == 0:
        raise DataError("volume contains no white or gray matter voxels")
    return white / (white + gray), gray / (white + gray)


def uniform_volume(grid: Grid, material: Material) -> MaterialVolume:
    return MaterialVolume(grid, np.full(grid.size, int(material), dtype=np.uint8))


def synthetic_head_stack(width: int = 532, height: int = 565, num_slices: int = 29) -> ImageStack:
    """Layered ellipsoidal head phantom in normalised coordinates.

    From the centre outwards: deep gray nuclei, white matter, gray cortex,
    skull, then air.  Deterministic; used where real MRI data is unavailable.
    """
    def axis(n):
        return np.linspace(0.0, 1.0, n) if n > 1 else np.array([0.5])

    z, y, x = np.meshgrid(axis(num_slices), axis(height), axis(width), indexing="ij")
    r = np.sqrt(((x - 0.5) / 0.45) ** 2 + ((y - 0.5) / 0.475) ** 2 + ((z - 0.5) / 0.45) ** 2)
    data = np.full(r.shape, PHANTOM_INTENSITY[Material.AIR], dtype=np.uint8)
    data[r <= 0.85] = PHANTOM_INTENSITY[Material.SKULL]
    data[r <= 0.75] = PHANTOM_INTENSITY[Material.GRAY]
    data[r <= 0.60] = PHANTOM_INTENSITY[Material.WHITE]
    data[r <= 0.15] = PHANTOM_INTENSITY[Material.GRAY]
    return ImageStack(data)


def phantom_volume(grid: Grid, thresholds=DEFAULT_THRESHOLDS) -> MaterialVolume:
    """Material volume of the synthetic phantom sampled directly at ``grid``'s resolution."""
    return resample(synthetic_head_stack(grid.nx, grid.ny, grid.nz), grid, thresholds)
