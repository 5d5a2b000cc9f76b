"""Command-line entry point: ``gliosim {ingest,run,validate,bench,make-phantom}``.

Configuration is layered: built-in defaults, then ``--preset``, then the
``--config`` file, then explicit flags.  Config files use ``[section]``
headers and ``key = value`` lines with ``#`` comments; the keys are::

    [model]    rho, d_white, d_gray                 (1/day, mm^2/day)
    [grid]     nx, ny, nz, extent, h, origin        (mm; h = auto spans extent)
    [time]     t0, t_end, num_steps, tol            (days)
    [seed]     center, amplitude, width, snap       (mm, -, 1/mm^2, bool)
    [imaging]  air_max, white_max, gray_max         (intensity band upper bounds)
    [output]   snapshot_every, radius_threshold
    [validate] h, length, dt, duration              (wave-speed slab experiment)

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure or failed validation.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from gliosim import __version__
from gliosim.analysis import conservation_check, homogeneous_field, wave_speed_experiment
from gliosim.core import (CONFIG_KEYS, PRESETS, ConfigError, DataError, DiffusionField, NumericalError,
                          ScalarField, SimConfig, dump_config, load_config, preset_config)
from gliosim.imaging import (ImageStack, diffusion_from_materials, load_raw_stack, load_slice_dir,
                             matter_fractions, phantom_volume, read_labels, resample,
                             synthetic_head_stack, write_labels, write_stack)
from gliosim.integrator import run
from gliosim.io import SnapshotWriter, write_metrics_csv

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

VELOCITY_TOLERANCE = 0.15
CONSERVATION_TOLERANCE = 1e-8
STABILITY_TAU = 1e6


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for data errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _key_help() -> str:
    sections: dict[str, list[str]] = {}
    for section, key in CONFIG_KEYS:
        sections.setdefault(section, []).append(key)
    return "config keys:\n" + "\n".join(f"  [{s}] {', '.join(keys)}" for s, keys in sections.items())


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="configuration file applied over the preset")
    p.add_argument("--preset", metavar="NAME", choices=sorted(PRESETS),
                   help=f"built-in setup: {', '.join(sorted(PRESETS))}")


def _add_workers(p: argparse.ArgumentParser) -> None:
    p.add_argument("--workers", type=int, default=None, metavar="N",
                   help="matvec threads (default: all cores; 1 gives reproducible timings)")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = _Parser(prog="gliosim", description="Glioblastoma growth simulation with exponential integrators.",
                     epilog=_key_help(), formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="classify an image stack into a material volume",
                       epilog=_key_help(), formatter_class=fmt)
    p.add_argument("source", help="directory of PGM slices, or a raw volume file")
    _add_config_flags(p)
    p.add_argument("--out", metavar="DIR", default=".", help="output directory (writes materials.raw)")

    p = sub.add_parser("run", help="simulate tumour growth and write snapshots and metrics",
                       epilog=_key_help(), formatter_class=fmt)
    _add_config_flags(p)
    p.add_argument("--materials", metavar="PATH",
                   help="label volume from 'ingest' (default: synthetic head phantom)")
    p.add_argument("--out", metavar="DIR", default="out", help="output directory")
    _add_workers(p)
    p.add_argument("--snapshot-every", type=int, metavar="K", help="VTK cadence in steps (0: first and last only)")
    p.add_argument("--steps", type=int, metavar="N", help="override the number of time steps")
    p.add_argument("--quiet", action="store_true", help="no progress output")

    p = sub.add_parser("validate", help="wave-speed, conservation and stability checks",
                       epilog=_key_help(), formatter_class=fmt)
    _add_config_flags(p)
    _add_workers(p)

    p = sub.add_parser("bench", help="time the 32^3 benchmark run", epilog=_key_help(), formatter_class=fmt)
    _add_config_flags(p)
    _add_workers(p)
    p.add_argument("--out", metavar="DIR", help="also write snapshots and metrics here")

    p = sub.add_parser("make-phantom", help="write the synthetic head phantom as PGM slices")
    p.add_argument("--out", metavar="DIR", required=True, help="output directory")
    p.add_argument("--slices", type=int, default=29)
    p.add_argument("--width", type=int, default=532)
    p.add_argument("--height", type=int, default=565)
    return parser


def resolve_config(args, default_preset: str | None = None) -> SimConfig:
    preset = getattr(args, "preset", None) or default_preset
    cfg = preset_config(preset) if preset else SimConfig()
    if getattr(args, "config", None):
        cfg = load_config(args.config, cfg)
    changes = {}
    if getattr(args, "snapshot_every", None) is not None:
        changes["snapshot_every"] = args.snapshot_every
    if getattr(args, "steps", None) is not None:
        changes["num_steps"] = args.steps
    return cfg.replace(**changes) if changes else cfg


def _workers(args) -> int:
    n = args.workers if args.workers is not None else (os.cpu_count() or 1)
    if n < 1:
        raise UsageError("--workers must be >= 1")
    return n


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def _load_images(source) -> ImageStack:
    src = Path(source)
    if src.is_dir():
        return load_slice_dir(src)
    if src.is_file():
        return load_raw_stack(src)
    raise DataError(f"{src}: no such file or directory")


def cmd_ingest(args) -> int:
    cfg = resolve_config(args)
    stack = _load_images(args.source)
    grid = cfg.grid()
    mv = resample(stack, grid, cfg.thresholds)
    out = _out_dir(args.out) / "materials.raw"
    write_labels(out, mv)
    white, gray = matter_fractions(mv)
    print(f"stack: {stack.num_slices} slices of {stack.width}x{stack.height}")
    print(f"grid: {grid.nx}x{grid.ny}x{grid.nz}, h = {grid.h:g} mm")
    print(f"white matter: {100 * white:.1f}%")
    print(f"gray matter:  {100 * gray:.1f}%")
    print(f"wrote {out}")
    return EXIT_OK


def _simulate(cfg: SimConfig, out: Path | None, materials_path, workers: int, quiet: bool):
    grid = cfg.grid()
    tic = time.perf_counter()
    if materials_path:
        mv = read_labels(materials_path, grid)
    else:
        mv = phantom_volume(grid, cfg.thresholds)
    d = diffusion_from_materials(mv, cfg)
    setup = time.perf_counter() - tic

    sinks = []
    if out is not None:
        sinks.append(SnapshotWriter(out, mv))

    def progress(n, t, elapsed):
        if n == cfg.num_steps or n % max(1, cfg.num_steps // 10) == 0:
            print(f"  step {n}/{cfg.num_steps}  t = {t:g} d  ({elapsed:.2f} s)", file=sys.stderr)

    result = run(cfg, d, sinks, materials=mv, workers=workers, progress=None if quiet else progress)
    if out is not None:
        tic = time.perf_counter()
        write_metrics_csv(result.metrics, out / "metrics.csv")
        (out / "config.ini").write_text(dump_config(cfg))
        result.timings["io"] += time.perf_counter() - tic
    result.timings["setup"] = setup
    return result


def _report(result) -> None:
    first, last = result.metrics[0], result.metrics[-1]
    t = result.timings
    print(f"steps: {last.step}, t = {first.time:g} .. {last.time:g} days")
    print(f"radius: {first.radius:.3f} -> {last.radius:.3f} mm; max density {last.max_density:.4f}")
    print(f"wall time: setup {t['setup']:.3f} s, assembly {t['assemble']:.3f} s, "
          f"time loop {t['loop']:.3f} s, io {t['io']:.3f} s")


def cmd_run(args) -> int:
    cfg = resolve_config(args)
    out = _out_dir(args.out)
    result = _simulate(cfg, out, args.materials, _workers(args), args.quiet)
    _report(result)
    print(f"output: {out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = resolve_config(args, default_preset="bench-32")
    out = _out_dir(args.out) if args.out else None
    g = cfg.grid()
    print(f"benchmark: {g.nx}x{g.ny}x{g.nz}, {cfg.num_steps} steps, tau = {cfg.tau:g} days")
    result = _simulate(cfg, out, None, _workers(args), quiet=True)
    _report(result)
    return EXIT_OK


def _conservation_fields(cfg: SimConfig):
    # coarse copies of the configured box: all tissue, and phantom tissue inside air/skull
    n = 6
    small = cfg.replace(nx=n, ny=n, nz=n if cfg.nz > 1 else 1, h=None)
    grid = small.grid()
    uniform = homogeneous_field(grid, cfg.d_white)
    tissue = phantom_volume(grid, cfg.thresholds).tissue
    masked = DiffusionField(grid, np.where(tissue, cfg.d_white, 0.0))
    return small, [("uniform D", uniform), ("tissue in air", masked)]


def cmd_validate(args) -> int:
    cfg = resolve_config(args)
    workers = _workers(args)
    ok = True
    rows = []

    if cfg.rho == 0:
        rows.append(("wave speed", "skipped (rho = 0)", True))
    else:
        wave = wave_speed_experiment(cfg, workers)
        passed = wave.deviation <= VELOCITY_TOLERANCE
        print(f"wave speed (slab {wave.length:g} mm, h = {wave.h:g} mm, D = {cfg.d_white:g}, rho = {cfg.rho:g})")
        print(f"  theoretical 2*sqrt(D*rho): {wave.predicted.kpp:.5f} mm/day")
        print(f"  theoretical 2*sqrt(D)*rho: {wave.predicted.literal:.5f} mm/day")
        print(f"  measured:                  {wave.measured:.5f} mm/day")
        print(f"  relative deviation:        {100 * wave.deviation:.2f}% (limit {100 * VELOCITY_TOLERANCE:g}%)")
        rows.append(("wave speed", f"{100 * wave.deviation:.2f}% from 2*sqrt(D*rho)", passed))

    small, fields = _conservation_fields(cfg)
    rng = np.random.default_rng(0)
    for name, d in fields:
        u0 = ScalarField(d.grid, np.where(d.d > 0, rng.random(d.grid.size), 0.0))
        for tau in (cfg.tau, STABILITY_TAU):
            res = conservation_check(small, d, tau, initial=u0, workers=workers)
            rows.append((f"mass, {name}, tau={tau:g}", f"drift {res.drift:.2e}", res.drift <= CONSERVATION_TOLERANCE))
            if tau == STABILITY_TAU:
                rows.append((f"max principle, {name}, tau={tau:g}", f"max rise {res.max_increase:.2e}",
                             res.max_increase <= CONSERVATION_TOLERANCE))

    width = max(len(r[0]) for r in rows)
    for name, detail, passed in rows:
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name:<{width}}  {detail}")
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_make_phantom(args) -> int:
    if min(args.slices, args.width, args.height) < 1:
        raise UsageError("phantom dimensions must be >= 1")
    paths = write_stack(_out_dir(args.out), synthetic_head_stack(args.width, args.height, args.slices))
    print(f"wrote {len(paths)} slices to {args.out}")
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "run": cmd_run,
    "validate": cmd_validate,
    "bench": cmd_bench,
    "make-phantom": cmd_make_phantom,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"gliosim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"gliosim: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"gliosim: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main())
