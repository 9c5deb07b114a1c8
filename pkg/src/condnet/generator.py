"""Sample generation: sequential and relaxation placement, puff-up.

Both placement methods produce strictly non-overlapping inclusions inside
a periodic unit cell; the puff-up step then scales the inclusions to
create the controlled overlaps that make a sample conduct.  Everything is
deterministic given (spec, seed): spheres are placed before cylinders, in
index order, from a single random stream seeded by the spec.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import FormatError, PlacementFailure, RelaxationFailure
from .geometry import (
    Cylinder,
    Inclusion,
    Sphere,
    UnitCell,
    _seg_seg_core,
    capsule_capsule_block,
    capsule_sphere_block,
    contact_table,
    pair_contacts,
    sphere_block,
    sphere_capsule_block,
    volume_fraction_estimate,
    wrap_deltas,
    wrap_points,
)

log = logging.getLogger(__name__)

METHODS = ("rsa", "md")

#: probes used when re-estimating the fraction of a puffed sample
DEFAULT_FRACTION_PROBES = 200_000


def sphere_volume(r: float) -> float:
    return (4.0 / 3.0) * np.pi * r ** 3


def capsule_volume(r: float, half_length: float) -> float:
    return np.pi * r ** 2 * (2.0 * half_length) + sphere_volume(r)


@dataclass(frozen=True)
class GenerationSpec:
    """Macroscopic recipe for one sample.

    ``target_volume_fraction`` is the intended pre-puff solid fraction; the
    analytic fraction implied by counts and sizes is the authoritative one
    and generation proceeds from counts and sizes alone.
    ``cylinder_aspect`` is axial length over radius, so the axis segment
    half-length is aspect * radius / 2.
    """

    target_volume_fraction: float
    n_spheres: int
    n_cylinders: int
    sphere_radius: float
    cylinder_radius: float
    cylinder_aspect: float
    method: str = "rsa"
    puff_factor: float = 1.1
    seed: int = 0
    max_attempts: int = 10_000
    edge_length: float = 1.0

    def __post_init__(self):
        if self.n_spheres < 0 or self.n_cylinders < 0:
            raise ValueError("inclusion counts must be non-negative")
        if self.n_spheres + self.n_cylinders < 1:
            raise ValueError("at least one inclusion is required")
        if not (0.0 < self.target_volume_fraction < 1.0):
            raise ValueError("target_volume_fraction must lie in (0, 1)")
        if self.n_spheres and not self.sphere_radius > 0:
            raise ValueError("sphere_radius must be positive")
        if self.n_cylinders and not (self.cylinder_radius > 0 and self.cylinder_aspect > 0):
            raise ValueError("cylinder_radius and cylinder_aspect must be positive")
        if self.puff_factor < 1.0:
            raise ValueError("puff_factor must be >= 1")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if not self.edge_length > 0:
            raise ValueError("edge_length must be positive")

    @property
    def cylinder_half_length(self) -> float:
        return 0.5 * self.cylinder_aspect * self.cylinder_radius

    @property
    def cell(self) -> UnitCell:
        return UnitCell(self.edge_length)

    def analytic_fraction(self) -> float:
        """Pre-puff solid fraction implied by counts and sizes."""
        v = self.n_spheres * sphere_volume(self.sphere_radius)
        if self.n_cylinders:
            v += self.n_cylinders * capsule_volume(self.cylinder_radius,
                                                   self.cylinder_half_length)
        return v / self.cell.volume

    @classmethod
    def from_fractions(cls, total_fraction: float, cylinder_share: float,
                       sphere_radius: float, cylinder_radius: float,
                       cylinder_aspect: float, **kwargs) -> "GenerationSpec":
        """Derive counts from a total fraction and its cylinder share.

        ``cylinder_share`` in [0, 1] is the portion of the solid volume
        carried by cylinders; counts are rounded to the nearest integers.
        """
        if not (0.0 <= cylinder_share <= 1.0):
            raise ValueError("cylinder_share must lie in [0, 1]")
        edge = kwargs.get("edge_length", 1.0)
        volume = edge ** 3
        half = 0.5 * cylinder_aspect * cylinder_radius
        n_s = round((1.0 - cylinder_share) * total_fraction * volume
                    / sphere_volume(sphere_radius))
        n_c = round(cylinder_share * total_fraction * volume
                    / capsule_volume(cylinder_radius, half))
        return cls(target_volume_fraction=total_fraction,
                   n_spheres=int(n_s), n_cylinders=int(n_c),
                   sphere_radius=sphere_radius, cylinder_radius=cylinder_radius,
                   cylinder_aspect=cylinder_aspect, **kwargs)


@dataclass(eq=False)
class Sample:
    cell: UnitCell
    inclusions: list
    spec: Optional[GenerationSpec]
    achieved_fraction: float

    @property
    def n_inclusions(self) -> int:
        return len(self.inclusions)

    def measured_fraction(self, n_probes: int = 1_000_000,
                          rng: Optional[np.random.Generator] = None) -> float:
        return volume_fraction_estimate(self.inclusions, self.cell, n_probes, rng)


# ---------------------------------------------------------------------------
# overlap bookkeeping against already-placed inclusions
# ---------------------------------------------------------------------------

class _Arena:
    """Preallocated arrays over the placed inclusions, for candidate tests.

    Queries prune partners by minimum-image centre distance first (a pair
    can only touch when the centres come within the sum of reaches), then
    evaluate exact skeleton distances on the survivors.  Oversized pairs
    fall back to the image-enumerating block kernels.
    """

    def __init__(self, cell: UnitCell, n_spheres: int, n_cylinders: int):
        self.cell = cell
        self.s_centers = np.empty((n_spheres, 3))
        self.s_radii = np.empty(n_spheres)
        self.c_centers = np.empty((n_cylinders, 3))
        self.c_axes = np.empty((n_cylinders, 3))
        self.c_halves = np.empty(n_cylinders)
        self.c_radii = np.empty(n_cylinders)
        self.ns = 0
        self.nc = 0
        self.max_reach = 0.0

    def add(self, inc: Inclusion):
        if isinstance(inc, Sphere):
            self.s_centers[self.ns] = inc.center
            self.s_radii[self.ns] = inc.radius
            self.ns += 1
        else:
            self.c_centers[self.nc] = inc.center
            self.c_axes[self.nc] = inc.axis
            self.c_halves[self.nc] = inc.half_length
            self.c_radii[self.nc] = inc.radius
            self.nc += 1
        self.max_reach = max(self.max_reach, inc.reach)

    def max_overlap(self, inc: Inclusion) -> float:
        """Largest overlap depth of a candidate against everything placed."""
        cell = self.cell
        if inc.reach + self.max_reach >= 0.5 * cell.edge_length:
            return self._max_overlap_oversize(inc)
        worst = -np.inf
        is_sphere = isinstance(inc, Sphere)
        if self.ns:
            sc = self.s_centers[:self.ns]
            sr = self.s_radii[:self.ns]
            wrapped = wrap_deltas(sc - inc.center, cell)
            d = np.linalg.norm(wrapped, axis=1)
            if is_sphere:
                worst = max(worst, float((inc.radius + sr - d).max()))
            else:
                near = d < inc.reach + sr
                if np.any(near):
                    t = np.clip(wrapped[near] @ inc.axis,
                                -inc.half_length, inc.half_length)
                    dist = np.linalg.norm(wrapped[near] - t[:, None] * inc.axis,
                                          axis=1)
                    worst = max(worst, float((inc.radius + sr[near] - dist).max()))
        if self.nc:
            cc = self.c_centers[:self.nc]
            ca = self.c_axes[:self.nc]
            ch = self.c_halves[:self.nc]
            cr = self.c_radii[:self.nc]
            wrapped = wrap_deltas(cc - inc.center, cell)
            d = np.linalg.norm(wrapped, axis=1)
            near = d < inc.reach + ch + cr
            if np.any(near):
                if is_sphere:
                    t = np.clip(np.sum(-wrapped[near] * ca[near], axis=1),
                                -ch[near], ch[near])
                    dist = np.linalg.norm(-wrapped[near] - t[:, None] * ca[near],
                                          axis=1)
                else:
                    dist, _ = _seg_seg_core(inc.axis, inc.half_length,
                                            wrapped[near], ca[near], ch[near])
                worst = max(worst, float((inc.radius + cr[near] - dist).max()))
        return worst

    def _max_overlap_oversize(self, inc: Inclusion) -> float:
        worst = -np.inf
        cell = self.cell
        if self.ns:
            sc = self.s_centers[:self.ns]
            sr = self.s_radii[:self.ns]
            if isinstance(inc, Sphere):
                depths, _ = sphere_block(inc.center, inc.radius, sc, sr, cell)
            else:
                depths, _ = capsule_sphere_block(inc.center, inc.axis,
                                                 inc.half_length, inc.radius,
                                                 sc, sr, cell)
            worst = max(worst, float(depths.max()))
        if self.nc:
            args = (self.c_centers[:self.nc], self.c_axes[:self.nc],
                    self.c_halves[:self.nc], self.c_radii[:self.nc], cell)
            if isinstance(inc, Sphere):
                depths, _ = sphere_capsule_block(inc.center, inc.radius, *args)
            else:
                depths, _ = capsule_capsule_block(inc.center, inc.axis,
                                                  inc.half_length, inc.radius, *args)
            worst = max(worst, float(depths.max()))
        return worst


def _random_axis(rng: np.random.Generator) -> np.ndarray:
    """Uniform direction on the unit sphere (area-preserving map)."""
    z = 2.0 * rng.random() - 1.0
    phi = 2.0 * np.pi * rng.random()
    s = np.sqrt(max(0.0, 1.0 - z * z))
    return np.array([s * np.cos(phi), s * np.sin(phi), z])


def _check_fit(spec: GenerationSpec):
    half = 0.5 * spec.edge_length
    if spec.n_spheres and spec.sphere_radius >= half:
        raise PlacementFailure(
            f"sphere radius {spec.sphere_radius} cannot fit in a cell of edge "
            f"{spec.edge_length}")
    if spec.n_cylinders and spec.cylinder_half_length + spec.cylinder_radius >= half:
        raise PlacementFailure(
            "cylinder reach exceeds half the cell edge; it cannot fit")


def generate_rsa(spec: GenerationSpec,
                 rng: Optional[np.random.Generator] = None) -> Sample:
    """Sequential placement: keep only candidates that intersect nothing.

    Spheres are placed first, then cylinders; positions are uniform in the
    cell and cylinder axes uniform on the sphere.  Raises PlacementFailure
    when a candidate cannot be placed within spec.max_attempts tries.
    """
    _check_fit(spec)
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    cell = spec.cell
    L = cell.edge_length
    arena = _Arena(cell, spec.n_spheres, spec.n_cylinders)
    inclusions: list = []

    def place(make_candidate, label):
        for _ in range(spec.max_attempts):
            cand = make_candidate()
            if not inclusions or arena.max_overlap(cand) <= 0.0:
                arena.add(cand)
                inclusions.append(cand)
                return
        raise PlacementFailure(
            f"could not place {label} #{len(inclusions)} within "
            f"{spec.max_attempts} attempts (fraction too high for RSA?)")

    for _ in range(spec.n_spheres):
        place(lambda: Sphere(rng.random(3) * L, spec.sphere_radius), "sphere")
    for _ in range(spec.n_cylinders):
        place(lambda: Cylinder(rng.random(3) * L, _random_axis(rng),
                               spec.cylinder_half_length, spec.cylinder_radius),
              "cylinder")

    return Sample(cell, inclusions, spec, spec.analytic_fraction())


def generate_md(spec: GenerationSpec,
                rng: Optional[np.random.Generator] = None,
                tolerance: float = 1e-9,
                max_iterations: int = 100_000) -> Sample:
    """Simultaneous placement relaxed by pairwise repulsive displacements.

    All inclusions start at uniform random poses; each relaxation step
    pushes every overlapping pair apart along the contact normal by half
    the overlap depth per side, with each particle's net step capped at
    a tenth of the smallest radius.  Orientations never change.
    """
    _check_fit(spec)
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    cell = spec.cell
    L = cell.edge_length

    inclusions: list = [Sphere(rng.random(3) * L, spec.sphere_radius)
                        for _ in range(spec.n_spheres)]
    inclusions += [Cylinder(rng.random(3) * L, _random_axis(rng),
                            spec.cylinder_half_length, spec.cylinder_radius)
                   for _ in range(spec.n_cylinders)]
    n = len(inclusions)
    if n == 1:
        return Sample(cell, inclusions, spec, spec.analytic_fraction())

    centers = np.array([inc.center for inc in inclusions])
    radii = np.array([inc.radius for inc in inclusions])
    cap = 0.1 * float(radii.min())

    ns = spec.n_spheres
    axes = np.array([inc.axis for inc in inclusions[ns:]]).reshape(-1, 3)
    halves = np.array([inc.half_length for inc in inclusions[ns:]])

    max_depth = np.inf
    for iteration in range(max_iterations):
        disp = np.zeros((n, 3))
        max_depth = 0.0

        def push(i, js, depths, normals):
            nonlocal max_depth
            hit = depths > tolerance
            if not np.any(hit):
                return
            max_depth = max(max_depth, float(depths[hit].max()))
            nrm = normals[hit]
            # coincident skeletons have no defined normal: draw one
            bad = np.linalg.norm(nrm, axis=1) < 0.5
            for b in np.flatnonzero(bad):
                nrm[b] = _random_axis(rng)
            step = 0.5 * depths[hit, None] * nrm
            disp[i] -= step.sum(axis=0)
            np.add.at(disp, np.asarray(js)[hit], step)

        for i in range(n - 1):
            if i < ns:
                if ns - i - 1 > 0:
                    depths, normals = sphere_block(
                        centers[i], radii[i], centers[i + 1:ns], radii[i + 1:ns], cell)
                    push(i, np.arange(i + 1, ns), depths, normals)
                if n > ns:
                    depths, normals = sphere_capsule_block(
                        centers[i], radii[i], centers[ns:], axes, halves, radii[ns:], cell)
                    push(i, np.arange(ns, n), depths, normals)
            else:
                j = i - ns
                if n - i - 1 > 0:
                    depths, normals = capsule_capsule_block(
                        centers[i], axes[j], halves[j], radii[i],
                        centers[i + 1:], axes[j + 1:], halves[j + 1:], radii[i + 1:], cell)
                    push(i, np.arange(i + 1, n), depths, normals)

        if max_depth <= tolerance:
            log.debug("relaxation converged after %d iterations", iteration + 1)
            break

        norms = np.linalg.norm(disp, axis=1)
        over = norms > cap
        if np.any(over):
            disp[over] *= (cap / norms[over])[:, None]
        centers = wrap_points(centers + disp, cell)
    else:
        raise RelaxationFailure(
            f"residual overlap {max_depth:.3e} above {tolerance} after "
            f"{max_iterations} iterations")

    out: list = [Sphere(centers[k], radii[k]) for k in range(ns)]
    out += [Cylinder(centers[ns + j], axes[j], halves[j], radii[ns + j])
            for j in range(n - ns)]
    return Sample(cell, out, spec, spec.analytic_fraction())


def generate(spec: GenerationSpec,
             rng: Optional[np.random.Generator] = None) -> Sample:
    analytic = spec.analytic_fraction()
    if abs(analytic - spec.target_volume_fraction) > 0.2 * spec.target_volume_fraction:
        log.warning("counts and sizes imply a solid fraction of %.4f, far from "
                    "the stated target %.4f; the analytic value is what gets "
                    "generated", analytic, spec.target_volume_fraction)
    if spec.method == "rsa":
        return generate_rsa(spec, rng)
    return generate_md(spec, rng)


def max_pairwise_overlap(sample: Sample) -> float:
    """Largest overlap depth over all inclusion pairs (images included)."""
    table = contact_table(sample.inclusions, sample.cell)
    worst = float(table.depth.max()) if table.depth.size else 0.0
    incs = sample.inclusions
    for i, j in table.oversize_pairs:
        for c in pair_contacts(incs[i], incs[j], sample.cell, ids=(i, j)):
            worst = max(worst, c.overlap_depth)
    return worst


def puff_up(sample: Sample, factor: Optional[float] = None,
            scale_length: bool = True,
            fraction_probes: int = DEFAULT_FRACTION_PROBES,
            rng: Optional[np.random.Generator] = None) -> Sample:
    """Scale every inclusion about its own centre to create overlaps.

    Radii always scale; cylinder half-lengths scale too unless
    ``scale_length`` is off.  Centres and orientations are untouched.  The
    achieved fraction is re-estimated by point probing with a stream
    derived from the spec seed, so puffing stays deterministic.
    """
    if factor is None:
        factor = sample.spec.puff_factor if sample.spec else 1.0
    if factor < 1.0:
        raise ValueError("puff factor must be >= 1")
    if factor == 1.0:
        return sample
    puffed: list = []
    for inc in sample.inclusions:
        if isinstance(inc, Sphere):
            puffed.append(Sphere(inc.center, inc.radius * factor))
        else:
            h = inc.half_length * factor if scale_length else inc.half_length
            puffed.append(Cylinder(inc.center, inc.axis, h, inc.radius * factor))
    if rng is None:
        seed = sample.spec.seed if sample.spec else 0
        rng = np.random.default_rng([seed & 0xFFFFFFFF, 0x9E3779B9])
    fraction = volume_fraction_estimate(puffed, sample.cell, fraction_probes, rng)
    return Sample(sample.cell, puffed, sample.spec, fraction)


# ---------------------------------------------------------------------------
# sample serialisation
# ---------------------------------------------------------------------------

SAMPLE_MAGIC = "# condnet sample v1"

_SPEC_FIELDS = ("target_volume_fraction", "n_spheres", "n_cylinders",
                "sphere_radius", "cylinder_radius", "cylinder_aspect",
                "method", "puff_factor", "seed", "max_attempts", "edge_length")


def format_sample(sample: Sample) -> str:
    """Stable text form: header keys, then one record per inclusion.

    Record layout is fixed: kind, centre (3 floats), radius, and for
    cylinders the axis (3 floats) and half length.  All floats print with
    17 significant digits so parsing back is lossless.
    """
    out = io.StringIO()
    out.write(SAMPLE_MAGIC + "\n")
    out.write(f"cell {sample.cell.edge_length:.17g}\n")
    if sample.spec is not None:
        for name in _SPEC_FIELDS:
            out.write(f"{name} {getattr(sample.spec, name)}\n")
    out.write(f"achieved_fraction {sample.achieved_fraction:.17g}\n")
    out.write(f"inclusions {len(sample.inclusions)}\n")
    for inc in sample.inclusions:
        c = inc.center
        if isinstance(inc, Sphere):
            out.write(f"sphere {c[0]:.17g} {c[1]:.17g} {c[2]:.17g} {inc.radius:.17g}\n")
        else:
            a = inc.axis
            out.write(f"cylinder {c[0]:.17g} {c[1]:.17g} {c[2]:.17g} "
                      f"{inc.radius:.17g} {a[0]:.17g} {a[1]:.17g} {a[2]:.17g} "
                      f"{inc.half_length:.17g}\n")
    return out.getvalue()


def save_sample(sample: Sample, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_sample(sample))


def parse_sample(text: str) -> Sample:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    header: dict = {}
    idx = 0
    try:
        while not lines[idx].startswith("inclusions"):
            key, value = lines[idx].split(maxsplit=1)
            header[key] = value
            idx += 1
        count = int(lines[idx].split()[1])
        records = lines[idx + 1: idx + 1 + count]
        if len(records) != count:
            raise FormatError(f"expected {count} inclusion records, got {len(records)}")
        cell = UnitCell(float(header["cell"]))
        inclusions: list = []
        for rec in records:
            parts = rec.split()
            if parts[0] == "sphere" and len(parts) == 5:
                vals = [float(v) for v in parts[1:]]
                inclusions.append(Sphere(np.array(vals[:3]), vals[3]))
            elif parts[0] == "cylinder" and len(parts) == 9:
                vals = [float(v) for v in parts[1:]]
                inclusions.append(Cylinder(np.array(vals[:3]),
                                           np.array(vals[4:7]), vals[7], vals[3]))
            else:
                raise FormatError(f"malformed inclusion record: {rec!r}")
    except (KeyError, IndexError, ValueError) as exc:
        raise FormatError(f"malformed sample document: {exc}") from exc

    spec = None
    if all(name in header for name in _SPEC_FIELDS):
        spec = GenerationSpec(
            target_volume_fraction=float(header["target_volume_fraction"]),
            n_spheres=int(header["n_spheres"]),
            n_cylinders=int(header["n_cylinders"]),
            sphere_radius=float(header["sphere_radius"]),
            cylinder_radius=float(header["cylinder_radius"]),
            cylinder_aspect=float(header["cylinder_aspect"]),
            method=header["method"],
            puff_factor=float(header["puff_factor"]),
            seed=int(header["seed"]),
            max_attempts=int(header["max_attempts"]),
            edge_length=float(header["edge_length"]))
    fraction = float(header.get("achieved_fraction", 0.0))
    return Sample(cell, inclusions, spec, fraction)


def load_sample(path) -> Sample:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_sample(fh.read())
