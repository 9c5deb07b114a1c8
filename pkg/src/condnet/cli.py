"""Command-line entry point.

Commands: generate, homogenize, tensor, campaign, voxel, calibrate,
rve-scan.  Every parameter can come from an INI config file (sections
below) and any flag overrides the file value, which overrides the
built-in default.  The effective configuration is echoed to the log so a
run can be reproduced from its output alone.

Config file dialect (config_version 1)::

    [run]
    config_version = 1
    [generation]
    target_volume_fraction = 0.2
    n_spheres = 240
    ...
    [calibration]
    k_ss = 1.0
    ...
    [campaign]
    sweep = repartition
    values = 0, 0.5, 1
    n_samples = 30
    ...
    [solver]
    central_fraction = 0.5
    full_conductor_reference = 1.0

Exit codes: 0 success, 1 computation or I/O failure, 2 usage error.
All outputs are written atomically (temp file, then rename).
"""

from __future__ import annotations

import argparse
import configparser
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .calibrate import (
    fit_constants,
    format_constants,
    load_constants,
    load_reference_points,
)
from .errors import CondnetError
from .generator import GenerationSpec, format_sample, generate, load_sample, puff_up
from .graph import (
    GRAPH_MAGIC,
    CalibrationConstants,
    build_contact_graph,
    load_graph,
)
from .errors import ConfigError
from .montecarlo import (
    CampaignConfig,
    export_csv,
    export_records_csv,
    export_rve_csv,
    run_campaign,
    rve_convergence_scan,
)
from .solver import (
    conductivity_tensor,
    effective_conductance,
    format_solution,
    solve,
)
from .voxel import (
    load_slice_stack,
    load_voxel_grid,
    voxel_effective_conductivity,
)

log = logging.getLogger("condnet")

CONFIG_VERSION = 1

#: every recognised config key with (section, type); unknown keys are
#: rejected before any work starts
_GENERATION_KEYS = {
    "target_volume_fraction": float, "n_spheres": int, "n_cylinders": int,
    "sphere_radius": float, "cylinder_radius": float, "cylinder_aspect": float,
    "method": str, "puff_factor": float, "seed": int, "max_attempts": int,
    "edge_length": float,
}
_CALIBRATION_KEYS = {
    "k_ss": float, "k_sc": float, "k_cc": float, "k_boundary_s": float,
    "k_boundary_c": float, "k_face": float, "k_edge": float, "k_vertex": float,
    "contact_law": str,
}
_CAMPAIGN_KEYS = {
    "sweep": str, "values": str, "n_samples": int, "master_seed": int,
    "workers": int, "fraction_probes": int,
}
_SOLVER_KEYS = {"central_fraction": float, "full_conductor_reference": float}
_SECTIONS = {
    "run": {"config_version": int},
    "generation": _GENERATION_KEYS,
    "calibration": _CALIBRATION_KEYS,
    "campaign": _CAMPAIGN_KEYS,
    "solver": _SOLVER_KEYS,
}


class UsageError(Exception):
    """Bad invocation or config file; maps to exit code 2."""


class _StderrHandler(logging.Handler):
    """Resolves sys.stderr at emit time (it may be swapped under tests)."""

    def emit(self, record):
        try:
            sys.stderr.write(self.format(record) + "\n")
        except Exception:
            self.handleError(record)


def _configure_logging(verbose: bool) -> None:
    if not any(isinstance(h, _StderrHandler) for h in log.handlers):
        handler = _StderrHandler()
        handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
        log.addHandler(handler)
    log.propagate = False
    log.setLevel(logging.DEBUG if verbose else logging.INFO)


def load_config_file(path) -> dict:
    """Parse and validate an INI config into {section: {key: typed value}}."""
    parser = configparser.ConfigParser()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise UsageError(f"config file {path}: {exc}") from exc
    out: dict = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise UsageError(f"config file {path}: unknown section [{section}]")
        known = _SECTIONS[section]
        out[section] = {}
        for key, raw in parser.items(section):
            if key not in known:
                raise UsageError(f"config file {path}: unknown key "
                                 f"{key!r} in [{section}]")
            try:
                out[section][key] = known[key](raw)
            except ValueError as exc:
                raise UsageError(f"config file {path}: bad value for "
                                 f"{section}.{key}: {raw!r}") from exc
    version = out.get("run", {}).get("config_version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise UsageError(f"config file {path}: unsupported config_version {version}")
    return out


def _effective(flag_value, file_section: dict, key: str, default):
    """Flag overrides file value overrides default; reports the source."""
    if flag_value is not None:
        return flag_value, "flag"
    if key in file_section:
        return file_section[key], "file"
    return default, "default"


def _echo(command: str, pairs: dict) -> None:
    for key, (value, source) in pairs.items():
        log.info("effective %s.%s = %s  (%s)", command, key, value, source)


def _warn_duplicate_flags(argv) -> None:
    seen: dict = {}
    for token in argv:
        if token.startswith("--"):
            name = token.split("=", 1)[0]
            seen[name] = seen.get(name, 0) + 1
    for name, count in seen.items():
        if count > 1:
            log.warning("flag %s given %d times; the last occurrence wins",
                        name, count)


def atomic_write_text(path, text: str) -> None:
    """Write via a sibling temp file and rename, so failures leave no output."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent) or ".",
                               prefix=path.name + ".", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_via_temp(path, producer) -> None:
    """Run ``producer(tmp_path)`` then rename the temp file into place.

    The temp name keeps the real extension so format-sniffing writers
    (image encoders) behave as they would on the final path.
    """
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent) or ".",
                               prefix=path.name + ".part.",
                               suffix=path.suffix or ".tmp")
    os.close(fd)
    try:
        producer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sniff_condnet_text(path) -> str:
    """First bytes of a condnet structured-text document, or ''. """
    try:
        with open(path, "rb") as fh:
            head = fh.read(64)
    except OSError:
        return ""
    return head.decode("utf-8", "replace").splitlines()[0] if head else ""


# ---------------------------------------------------------------------------
# shared builders
# ---------------------------------------------------------------------------

def _generation_spec(args, cfg, placeholder_counts: bool = False) -> GenerationSpec:
    section = cfg.get("generation", {})
    fields = {}
    pairs = {}
    defaults = {
        "target_volume_fraction": 0.2, "n_spheres": 0, "n_cylinders": 0,
        "sphere_radius": 0.06, "cylinder_radius": 0.04, "cylinder_aspect": 3.0,
        "method": "rsa", "puff_factor": 1.1, "seed": 0, "max_attempts": 10_000,
        "edge_length": 1.0,
    }
    for key, default in defaults.items():
        value, source = _effective(getattr(args, key, None), section, key, default)
        fields[key] = value
        pairs[key] = (value, source)
    _echo("generation", pairs)
    if placeholder_counts and fields["n_spheres"] + fields["n_cylinders"] == 0:
        # a repartition sweep rederives counts per point from the sizes
        fields["n_spheres"] = 1
    try:
        return GenerationSpec(**fields)
    except ValueError as exc:
        raise UsageError(f"invalid generation parameters: {exc}") from exc


def _calibration(args, cfg) -> CalibrationConstants:
    if getattr(args, "constants", None):
        cal = load_constants(args.constants)
        log.info("effective calibration = %s  (file %s)", cal, args.constants)
        return cal
    section = cfg.get("calibration", {})
    if section:
        cal = CalibrationConstants(**section)
        log.info("effective calibration = %s  (config)", cal)
        return cal
    return CalibrationConstants()


def _solver_params(args, cfg) -> tuple[float, float]:
    section = cfg.get("solver", {})
    central, s1 = _effective(getattr(args, "central_fraction", None),
                             section, "central_fraction", 0.5)
    reference, s2 = _effective(getattr(args, "reference", None),
                               section, "full_conductor_reference", 1.0)
    _echo("solver", {"central_fraction": (central, s1),
                     "full_conductor_reference": (reference, s2)})
    return central, reference


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_generate(args, cfg) -> int:
    spec = _generation_spec(args, cfg)
    sample = generate(spec)
    if not args.no_puff and spec.puff_factor > 1.0:
        sample = puff_up(sample, scale_length=not args.puff_radial_only,
                         fraction_probes=args.fraction_probes)
    atomic_write_text(args.out, format_sample(sample))
    log.info("wrote %s (%d inclusions, fraction %.4f)",
             args.out, sample.n_inclusions, sample.achieved_fraction)
    return 0


def _load_sample_checked(path):
    head = _sniff_condnet_text(path)
    if head.startswith(GRAPH_MAGIC):
        raise UsageError(f"{path} is a graph document; pass it via --graph")
    return load_sample(path)


def cmd_homogenize(args, cfg) -> int:
    cal = _calibration(args, cfg)
    central, reference = _solver_params(args, cfg)
    lines = ["# condnet conductance v1"]
    if args.graph:
        g = load_graph(args.graph)
        value = effective_conductance(g, method=args.method,
                                      full_conductor_reference=reference)
        lines.append(f"graph {args.graph}")
        lines.append(f"value {value:.10g}")
        if args.dump_solution:
            atomic_write_text(args.dump_solution, format_solution(g, solve(g)))
    else:
        sample = _load_sample_checked(args.sample)
        axes = ["x", "y", "z"] if args.direction == "all" else [args.direction]
        for axis in axes:
            g = build_contact_graph(sample, axis, cal, central_fraction=central)
            value = effective_conductance(g, method=args.method,
                                          full_conductor_reference=reference)
            lines.append(f"axis {axis} {value:.10g}")
            if args.dump_solution:
                dump = Path(args.dump_solution)
                target = dump.with_name(f"{dump.stem}_{axis}{dump.suffix}") \
                    if len(axes) > 1 else dump
                atomic_write_text(target, format_solution(g, solve(g)))
    text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_tensor(args, cfg) -> int:
    cal = _calibration(args, cfg)
    central, reference = _solver_params(args, cfg)
    sample = _load_sample_checked(args.sample)
    tensor = conductivity_tensor(sample, cal, central_fraction=central,
                                 full_conductor_reference=reference)
    lines = ["# condnet tensor v1"]
    for name, (a, b) in (("Lxx", (0, 0)), ("Lyy", (1, 1)), ("Lzz", (2, 2)),
                         ("Lxy", (0, 1)), ("Lxz", (0, 2)), ("Lyz", (1, 2))):
        lines.append(f"{name} {tensor.L[a, b]:.10g}")
    text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def _parse_values(raw: str) -> tuple:
    try:
        return tuple(float(tok) for tok in raw.replace(",", " ").split())
    except ValueError as exc:
        raise UsageError(f"cannot parse sweep values from {raw!r}") from exc


def cmd_campaign(args, cfg) -> int:
    section0 = cfg.get("campaign", {})
    sweep_kind = args.sweep or section0.get("sweep", "repartition")
    base = _generation_spec(args, cfg, placeholder_counts=sweep_kind == "repartition")
    cal = _calibration(args, cfg)
    central, reference = _solver_params(args, cfg)
    section = cfg.get("campaign", {})
    pairs = {}
    sweep, src = _effective(args.sweep, section, "sweep", "repartition")
    pairs["sweep"] = (sweep, src)
    values_raw, src = _effective(args.values, section, "values",
                                 "0,0.1429,0.2857,0.4286,0.5714,0.7143,0.8571,1")
    pairs["values"] = (values_raw, src)
    n_samples, src = _effective(args.samples, section, "n_samples", 30)
    pairs["n_samples"] = (n_samples, src)
    master_seed, src = _effective(args.master_seed, section, "master_seed", 0)
    pairs["master_seed"] = (master_seed, src)
    workers, src = _effective(args.workers, section, "workers", 1)
    pairs["workers"] = (workers, src)
    probes, src = _effective(args.fraction_probes, section, "fraction_probes", 20_000)
    pairs["fraction_probes"] = (probes, src)
    _echo("campaign", pairs)

    config = CampaignConfig(
        base=base, values=_parse_values(str(values_raw)), n_samples=n_samples,
        calibration=cal, sweep=sweep, master_seed=master_seed, workers=workers,
        central_fraction=central, full_conductor_reference=reference,
        fraction_probes=probes)
    result = run_campaign(config)
    _atomic_via_temp(args.out, lambda tmp: export_csv(result, tmp))
    log.info("wrote %s (%d sweep points)", args.out, len(result.points))
    if args.raw_records:
        _atomic_via_temp(args.raw_records,
                         lambda tmp: export_records_csv(result, tmp))
        log.info("wrote %s (%d records)", args.raw_records, len(result.records))
    if args.plot:
        from .plots import campaign_figure
        _atomic_via_temp(args.plot,
                         lambda tmp: campaign_figure(result, tmp))
        log.info("wrote %s", args.plot)
    return 0


def cmd_voxel(args, cfg) -> int:
    cal = _calibration(args, cfg)
    _echo("voxel", {
        "threshold": (args.threshold, "flag"),
        "wrap_transverse": (args.wrap_transverse, "flag"),
        "normalized": (args.normalized, "flag"),
        "connectivity": (args.connectivity, "flag"),
    })
    if args.raw:
        head = _sniff_condnet_text(args.raw)
        if head.startswith("# condnet"):
            raise UsageError(
                f"{args.raw} is a condnet text document, not raw voxel data")
        if not args.dims:
            raise UsageError("--raw needs --dims NX,NY,NZ")
        dims = tuple(int(t) for t in args.dims.replace(",", " ").split())
        if len(dims) != 3:
            raise UsageError("--dims must hold three integers")
        grid = load_voxel_grid(args.raw, dims, threshold=args.threshold)
    else:
        grid = load_slice_stack(args.slices, threshold=args.threshold)
    log.info("grid %sx%sx%s, %.3f occupied", *grid.dims, grid.occupied_fraction)
    values = voxel_effective_conductivity(
        grid, cal, wrap_transverse=args.wrap_transverse,
        normalized=args.normalized, connectivity=args.connectivity)
    lines = ["# condnet voxel conductivity v1"]
    for axis, v in zip("xyz", values):
        lines.append(f"axis {axis} {v:.10g}")
    text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    if args.csv:
        nx, ny, nz = grid.dims
        csv_text = ("nx,ny,nz,occupied_fraction,gx,gy,gz\n"
                    f"{nx},{ny},{nz},{grid.occupied_fraction:.10g},"
                    f"{values[0]:.10g},{values[1]:.10g},{values[2]:.10g}\n")
        atomic_write_text(args.csv, csv_text)
    return 0


def cmd_calibrate(args, cfg) -> int:
    _echo("calibrate", {"reference": (args.reference, "flag"),
                        "law": (args.law, "flag")})
    points = load_reference_points(args.reference)
    result = fit_constants(points, law=args.law)
    for kind, resid in result.residuals.items():
        log.info("fit %s: %d points, residual %.3e",
                 kind, result.n_points[kind], resid)
    atomic_write_text(args.out, format_constants(result.constants))
    log.info("wrote %s", args.out)
    return 0


def cmd_rve_scan(args, cfg) -> int:
    spec = _generation_spec(args, cfg)
    cal = _calibration(args, cfg)
    _echo("rve-scan", {"multipliers": (args.multipliers, "flag"),
                       "n_samples": (args.samples, "flag"),
                       "master_seed": (args.master_seed or 0, "flag")})
    multipliers = _parse_values(args.multipliers)
    rows = rve_convergence_scan(spec, multipliers, n_samples=args.samples,
                                calibration=cal, master_seed=args.master_seed or 0,
                                fraction_probes=args.fraction_probes)
    stds = [r.std for r in rows]
    if stds and any(stds[i + 1] > stds[i] for i in range(len(stds) - 1)):
        log.warning("spread does not decrease monotonically with size; "
                    "consider more samples per point")
    _atomic_via_temp(args.out, lambda tmp: export_rve_csv(rows, tmp))
    log.info("wrote %s (%d rows)", args.out, len(rows))
    if args.plot:
        from .plots import rve_scan_figure
        _atomic_via_temp(args.plot, lambda tmp: rve_scan_figure(rows, tmp))
        log.info("wrote %s", args.plot)
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_generation_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("generation")
    g.add_argument("--target-volume-fraction", dest="target_volume_fraction",
                   type=float, help="pre-puff solid volume fraction")
    g.add_argument("--n-spheres", dest="n_spheres", type=int)
    g.add_argument("--n-cylinders", dest="n_cylinders", type=int)
    g.add_argument("--sphere-radius", dest="sphere_radius", type=float)
    g.add_argument("--cylinder-radius", dest="cylinder_radius", type=float)
    g.add_argument("--cylinder-aspect", dest="cylinder_aspect", type=float,
                   help="cylinder length over radius")
    g.add_argument("--method", choices=("rsa", "md"))
    g.add_argument("--puff-factor", dest="puff_factor", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--max-attempts", dest="max_attempts", type=int)
    g.add_argument("--edge-length", dest="edge_length", type=float)


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--central-fraction", dest="central_fraction", type=float,
                   help="linear face fraction of the terminal zone for "
                        "neighbouring-face pairs")
    p.add_argument("--reference", type=float,
                   help="full-conductor conductance used for normalisation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="condnet",
        description="Effective conductivity of two-phase composites via "
                    "contact graphs and circuit solves.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug logging")
    parser.add_argument("--config", help="INI config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a (puffed) sample file")
    _add_generation_flags(p)
    p.add_argument("--out", required=True, help="sample file to write")
    p.add_argument("--no-puff", action="store_true",
                   help="store the raw non-overlapping placement")
    p.add_argument("--puff-radial-only", dest="puff_radial_only",
                   action="store_true",
                   help="puff radii only, keeping cylinder lengths")
    p.add_argument("--fraction-probes", dest="fraction_probes", type=int,
                   default=200_000)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("homogenize",
                       help="effective conductance of a sample or graph file")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--sample", help="sample file")
    src.add_argument("--graph", help="graph interchange file")
    p.add_argument("--constants", help="calibration constants file")
    p.add_argument("--direction", choices=("x", "y", "z", "all"), default="all")
    p.add_argument("--method", choices=("auto", "direct", "cg", "full"),
                   default="auto")
    p.add_argument("--dump-solution", dest="dump_solution",
                   help="write per-vertex potentials and per-edge currents")
    _add_solver_flags(p)
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_homogenize)

    p = sub.add_parser("tensor", help="full 3x3 conductivity tensor of a sample")
    p.add_argument("--sample", required=True)
    p.add_argument("--constants")
    _add_solver_flags(p)
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_tensor)

    p = sub.add_parser("campaign", help="sweep campaign with CSV (and figure) output")
    _add_generation_flags(p)
    _add_solver_flags(p)
    p.add_argument("--constants")
    p.add_argument("--sweep", help="'repartition' or a generation field name")
    p.add_argument("--values", help="comma-separated sweep values")
    p.add_argument("--samples", type=int, help="samples per sweep point")
    p.add_argument("--master-seed", dest="master_seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--fraction-probes", dest="fraction_probes", type=int)
    p.add_argument("--out", required=True, help="CSV file to write")
    p.add_argument("--plot", help="also render the sweep figure (PNG)")
    p.add_argument("--raw-records", dest="raw_records",
                   help="also dump one CSV row per generated sample")
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("voxel", help="homogenize a segmented voxel volume")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--raw", help="raw 8-bit volume file")
    src.add_argument("--slices", help="directory of PGM slices")
    p.add_argument("--dims", help="NX,NY,NZ for --raw")
    p.add_argument("--threshold", type=int, default=128)
    p.add_argument("--constants")
    p.add_argument("--wrap-transverse", dest="wrap_transverse",
                   action="store_true",
                   help="periodic wrap across the transverse faces")
    p.add_argument("--normalized", action="store_true",
                   help="report relative to the fully occupied grid")
    p.add_argument("--connectivity", type=int, choices=(6, 18, 26), default=26)
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--csv", help="also write a one-row CSV summary")
    p.set_defaults(func=cmd_voxel)

    p = sub.add_parser("calibrate", help="fit constants from reference values")
    p.add_argument("--reference", required=True, help="reference points file")
    p.add_argument("--law", choices=("linear", "hertz"), default="linear")
    p.add_argument("--out", required=True, help="constants file to write")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("rve-scan", help="volume-element size convergence table")
    _add_generation_flags(p)
    p.add_argument("--constants")
    p.add_argument("--multipliers", required=True,
                   help="comma-separated count multipliers, e.g. 1,2,4")
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--master-seed", dest="master_seed", type=int)
    p.add_argument("--fraction-probes", dest="fraction_probes", type=int,
                   default=20_000)
    p.add_argument("--out", required=True, help="CSV file to write")
    p.add_argument("--plot", help="also render the convergence figure (PNG)")
    p.set_defaults(func=cmd_rve_scan)
    return parser


def parse_config(argv=None):
    """Parse flags plus optional config file into (namespace, file config)."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    _warn_duplicate_flags(argv)
    cfg = load_config_file(args.config) if args.config else {}
    return args, cfg


def main(argv=None) -> int:
    _configure_logging(verbose=False)
    try:
        args, cfg = parse_config(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    except UsageError as exc:
        log.error("%s", exc)
        return 2
    _configure_logging(verbose=args.verbose)
    try:
        return args.func(args, cfg)
    except (UsageError, ConfigError) as exc:
        log.error("%s", exc)
        return 2
    except FileNotFoundError as exc:
        log.error("input file not found: %s", exc.filename)
        return 1
    except (CondnetError, OSError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
