"""Stochastic-homogenization campaigns: many seeds per parameter point.

The reference study sweeps the repartition of a fixed total solid volume
between spheres and cylinders: at each sweep value the inclusion counts
are rederived from the shared sizes, a batch of independently seeded
samples is generated, puffed and homogenized, and the tensor statistics
are aggregated.  Per-sample seeds come from a stable hash of
(master seed, point index, sample index), so results are reproducible and
independent of worker scheduling.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, PlacementFailure, RelaxationFailure
from .generator import GenerationSpec, generate, puff_up
from .graph import DEFAULT_CENTRAL_FRACTION, CalibrationConstants
from .solver import conductivity_tensor

log = logging.getLogger(__name__)

#: order in which the six independent tensor entries are reported
TENSOR_ENTRIES = ("Lxx", "Lyy", "Lzz", "Lxy", "Lxz", "Lyz")
_ENTRY_INDEX = {"Lxx": (0, 0), "Lyy": (1, 1), "Lzz": (2, 2),
                "Lxy": (0, 1), "Lxz": (0, 2), "Lyz": (1, 2)}


def split_seed(master: int, point_index: int, sample_index: int) -> int:
    """Stable per-sample seed: 64-bit BLAKE2b of the packed index triple."""
    payload = struct.pack("<QQQ", master & 0xFFFFFFFFFFFFFFFF,
                          point_index & 0xFFFFFFFFFFFFFFFF,
                          sample_index & 0xFFFFFFFFFFFFFFFF)
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class CampaignConfig:
    """A sweep definition on top of a base generation spec.

    ``sweep`` is either 'repartition' (the share of solid volume carried
    by cylinders, using the base spec's sizes) or the name of a numeric
    GenerationSpec field to replace per point.
    """

    base: GenerationSpec
    values: tuple
    n_samples: int
    calibration: CalibrationConstants = CalibrationConstants()
    sweep: str = "repartition"
    master_seed: int = 0
    workers: int = 1
    central_fraction: float = DEFAULT_CENTRAL_FRACTION
    full_conductor_reference: float = 1.0
    fraction_probes: int = 20_000

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        if not self.values:
            raise ConfigError("sweep needs at least one value")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        for v in self.values:
            try:
                self.spec_for(v, seed=0)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"infeasible sweep value {v}: {exc}") from exc

    def spec_for(self, value: float, seed: int) -> GenerationSpec:
        if self.sweep == "repartition":
            return GenerationSpec.from_fractions(
                self.base.target_volume_fraction, value,
                self.base.sphere_radius, self.base.cylinder_radius,
                self.base.cylinder_aspect, method=self.base.method,
                puff_factor=self.base.puff_factor, seed=seed,
                max_attempts=self.base.max_attempts,
                edge_length=self.base.edge_length)
        if self.sweep in ("seed", "method") \
                or self.sweep not in GenerationSpec.__dataclass_fields__:
            raise ConfigError(f"cannot sweep over {self.sweep!r}")
        cast = int if self.sweep in ("n_spheres", "n_cylinders", "max_attempts") else float
        return replace(self.base, **{self.sweep: cast(value)}, seed=seed)


@dataclass(eq=False)
class SampleRecord:
    point_index: int
    sample_index: int
    seed: int
    tensor: Optional[np.ndarray]      # None when generation failed
    achieved_fraction: float
    error: str = ""

    @property
    def failed(self) -> bool:
        return self.tensor is None

    @property
    def percolates(self) -> bool:
        """Conducting in at least one principal direction."""
        return self.tensor is not None and bool(np.any(np.diag(self.tensor) > 0))

    @property
    def mean_diagonal(self) -> float:
        return float(np.trace(self.tensor) / 3.0) if self.tensor is not None else 0.0


@dataclass(eq=False)
class PointResult:
    sweep_value: float
    n_samples: int                    # successful samples
    n_failed: int
    mean: np.ndarray                  # (3, 3) tensor of means
    std: np.ndarray                   # (3, 3) sample standard deviations
    percolation_rate: float
    flagged: bool                     # under half of the generations succeeded


@dataclass(eq=False)
class CampaignResult:
    config: CampaignConfig
    points: list
    records: list

    def point_records(self, point_index: int) -> list:
        return [r for r in self.records if r.point_index == point_index]


def _run_one(cfg: CampaignConfig, point_index: int, sample_index: int) -> SampleRecord:
    seed = split_seed(cfg.master_seed, point_index, sample_index)
    spec = cfg.spec_for(cfg.values[point_index], seed=seed)
    try:
        sample = generate(spec)
    except (PlacementFailure, RelaxationFailure) as exc:
        return SampleRecord(point_index, sample_index, seed, None, 0.0, str(exc))
    sample = puff_up(sample, fraction_probes=cfg.fraction_probes)
    tensor = conductivity_tensor(
        sample, cfg.calibration, central_fraction=cfg.central_fraction,
        full_conductor_reference=cfg.full_conductor_reference)
    return SampleRecord(point_index, sample_index, seed, tensor.L,
                        sample.achieved_fraction)


def _run_one_packed(args) -> SampleRecord:
    return _run_one(*args)


def run_campaign(cfg: CampaignConfig) -> CampaignResult:
    """Generate, puff and homogenize every (point, sample) of the sweep.

    Failed generations reduce the effective sample count of their point
    instead of aborting; a point is flagged when fewer than half of its
    generations succeed.  Aggregation is a sequential reduce over sample
    order, so the worker count never changes the result.
    """
    tasks = [(cfg, p, s) for p in range(len(cfg.values))
             for s in range(cfg.n_samples)]
    log.info("campaign: %d points x %d samples (%d workers)",
             len(cfg.values), cfg.n_samples, cfg.workers)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            records = []
            for k, rec in enumerate(pool.map(_run_one_packed, tasks, chunksize=1)):
                records.append(rec)
                if (k + 1) % cfg.n_samples == 0:
                    log.info("progress: %d / %d samples", k + 1, len(tasks))
    else:
        records = []
        for k, t in enumerate(tasks):
            records.append(_run_one(*t))
            if (k + 1) % cfg.n_samples == 0:
                log.info("progress: %d / %d samples", k + 1, len(tasks))

    points = []
    for p, value in enumerate(cfg.values):
        recs = [r for r in records if r.point_index == p and not r.failed]
        n_failed = sum(1 for r in records if r.point_index == p and r.failed)
        if n_failed:
            log.warning("sweep point %g: %d of %d generations failed",
                        value, n_failed, cfg.n_samples)
        if recs:
            stack = np.stack([r.tensor for r in recs])
            mean = stack.mean(axis=0)
            std = stack.std(axis=0, ddof=1) if len(recs) > 1 else np.zeros((3, 3))
            rate = float(np.mean([r.percolates for r in recs]))
        else:
            mean = np.zeros((3, 3))
            std = np.zeros((3, 3))
            rate = 0.0
        points.append(PointResult(value, len(recs), n_failed, mean, std, rate,
                                  flagged=len(recs) < 0.5 * cfg.n_samples))
    return CampaignResult(cfg, points, records)


def reference_study_config(cylinder_aspect: float, n_samples: int = 30,
                           n_points: int = 8, master_seed: int = 2024,
                           workers: int = 1) -> CampaignConfig:
    """Default repartition study: fixed solid budget shared by shape.

    Eight evenly spaced repartition values sweep the cylinder share of a
    22 percent pre-puff solid fraction (sphere radius 0.06, cylinder
    radius 0.04, puff 1.25), n_samples seeds per point.  Runs with
    different aspects share the same per-sample seeds, so their sphere
    backbones coincide point by point and the comparison is paired.
    """
    base = GenerationSpec(
        target_volume_fraction=0.22, n_spheres=1, n_cylinders=0,
        sphere_radius=0.06, cylinder_radius=0.04,
        cylinder_aspect=cylinder_aspect, method="rsa", puff_factor=1.25,
        seed=0)
    values = tuple(np.linspace(0.0, 1.0, n_points))
    return CampaignConfig(base=base, values=values, n_samples=n_samples,
                          sweep="repartition", master_seed=master_seed,
                          workers=workers)


# ---------------------------------------------------------------------------
# RVE sizing scan
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class RveScanRow:
    multiplier: float
    n_inclusions: int
    mean: float                      # mean of the tensor diagonal average
    std: float


def rve_convergence_scan(spec: GenerationSpec, multipliers: Sequence[float],
                         n_samples: int = 10,
                         calibration: Optional[CalibrationConstants] = None,
                         master_seed: int = 0,
                         fraction_probes: int = 20_000) -> list:
    """Scale inclusion counts at fixed fraction and tabulate statistics.

    Multiplying counts by m at fixed solid fraction shrinks every linear
    size by m**(-1/3); the returned rows support the usual judgement call
    of growing the volume element until the mean stops moving.
    """
    if calibration is None:
        calibration = CalibrationConstants()
    rows = []
    for idx, m in enumerate(multipliers):
        if m < 1:
            raise ConfigError("size multipliers must be >= 1")
        shrink = float(m) ** (-1.0 / 3.0)
        scaled = replace(
            spec,
            n_spheres=round(spec.n_spheres * m),
            n_cylinders=round(spec.n_cylinders * m),
            sphere_radius=spec.sphere_radius * shrink,
            cylinder_radius=spec.cylinder_radius * shrink)
        values = []
        n_inclusions = scaled.n_spheres + scaled.n_cylinders
        for s in range(n_samples):
            seed = split_seed(master_seed, idx, s)
            sample = generate(replace(scaled, seed=seed))
            sample = puff_up(sample, fraction_probes=fraction_probes)
            tensor = conductivity_tensor(sample, calibration)
            values.append(tensor.mean_diagonal)
        mean = float(np.mean(values))
        std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        rows.append(RveScanRow(float(m), n_inclusions, mean, std))
    return rows


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    return f"{x:.10g}"


def export_csv(result: CampaignResult, destination) -> None:
    """One row per sweep point: value, tensor entry stats, rate, count."""
    close = False
    if hasattr(destination, "write"):
        fh = destination
    else:
        fh = open(destination, "w", encoding="utf-8", newline="")
        close = True
    try:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["sweep_value"]
        for name in TENSOR_ENTRIES:
            header += [f"{name}_mean", f"{name}_std"]
        header += ["percolation_rate", "n_samples"]
        writer.writerow(header)
        for pt in result.points:
            row = [_fmt(pt.sweep_value)]
            for name in TENSOR_ENTRIES:
                a, b = _ENTRY_INDEX[name]
                row += [_fmt(pt.mean[a, b]), _fmt(pt.std[a, b])]
            row += [_fmt(pt.percolation_rate), str(pt.n_samples)]
            writer.writerow(row)
    finally:
        if close:
            fh.close()


def export_records_csv(result: CampaignResult, destination) -> None:
    """Raw per-sample dump: one row per generated (or failed) sample."""
    close = False
    if hasattr(destination, "write"):
        fh = destination
    else:
        fh = open(destination, "w", encoding="utf-8", newline="")
        close = True
    try:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["point_index", "sweep_value", "sample_index", "seed"]
        header += list(TENSOR_ENTRIES)
        header += ["achieved_fraction", "percolates", "error"]
        writer.writerow(header)
        for r in result.records:
            row = [str(r.point_index),
                   _fmt(result.config.values[r.point_index]),
                   str(r.sample_index), str(r.seed)]
            for name in TENSOR_ENTRIES:
                a, b = _ENTRY_INDEX[name]
                row.append(_fmt(r.tensor[a, b]) if r.tensor is not None else "")
            row += [_fmt(r.achieved_fraction), str(int(r.percolates)), r.error]
            writer.writerow(row)
    finally:
        if close:
            fh.close()


def export_rve_csv(rows: Sequence[RveScanRow], destination) -> None:
    close = False
    if hasattr(destination, "write"):
        fh = destination
    else:
        fh = open(destination, "w", encoding="utf-8", newline="")
        close = True
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["multiplier", "n_inclusions", "mean", "std"])
        for r in rows:
            writer.writerow([_fmt(r.multiplier), str(r.n_inclusions),
                             _fmt(r.mean), _fmt(r.std)])
    finally:
        if close:
            fh.close()
