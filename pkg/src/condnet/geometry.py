"""Shapes, periodic minimum-image distances, and overlap detection.

All geometry is dimensionless: lengths are fractions of the unit-cell edge
(the cell is scaled to edge 1 internally by every caller in this package).
Cylinders are treated as spherocylinders (capsules) for every contact test:
distance between axis segments plus the two radii.  Flat-cap corner cases
never enter any distance computation.

Periodic image handling assumes each shape fits inside the cell, i.e. its
reach (radius, or half_length + radius) is below half the cell edge.  Pairs
violating that bound fall back to an explicit enumeration of neighbour
images, which stays exact while each reach is below three quarters of the
edge.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Iterable, Optional, Sequence, Union

import numpy as np

FACES = ("x-", "x+", "y-", "y+", "z-", "z+")

_EPS_SQ = 1e-24  # squared-length threshold below which a segment is a point


@dataclass(frozen=True, eq=False)
class UnitCell:
    """Periodic cubic cell; all three axes wrap."""

    edge_length: float = 1.0

    def __post_init__(self):
        if not self.edge_length > 0:
            raise ValueError(f"edge_length must be positive, got {self.edge_length}")

    @property
    def volume(self) -> float:
        return self.edge_length ** 3


@dataclass(frozen=True, eq=False)
class Sphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not self.radius > 0:
            raise ValueError(f"sphere radius must be positive, got {self.radius}")

    @property
    def reach(self) -> float:
        return self.radius

    @property
    def volume(self) -> float:
        return (4.0 / 3.0) * np.pi * self.radius ** 3


@dataclass(frozen=True, eq=False)
class Cylinder:
    """Finite cylinder given by midpoint, unit axis, half length and radius."""

    center: np.ndarray
    axis: np.ndarray
    half_length: float
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "axis", np.asarray(self.axis, dtype=float))
        if not self.half_length > 0:
            raise ValueError(f"half_length must be positive, got {self.half_length}")
        if not self.radius > 0:
            raise ValueError(f"cylinder radius must be positive, got {self.radius}")
        norm = float(np.linalg.norm(self.axis))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"axis must be a unit vector, |axis| = {norm}")

    @property
    def reach(self) -> float:
        return self.half_length + self.radius

    @property
    def aspect(self) -> float:
        """Length/radius ratio of the axial segment."""
        return 2.0 * self.half_length / self.radius

    @property
    def volume(self) -> float:
        """Capsule volume: cylindrical body plus two hemispherical caps."""
        return np.pi * self.radius ** 2 * (2.0 * self.half_length) \
            + (4.0 / 3.0) * np.pi * self.radius ** 3


Inclusion = Union[Sphere, Cylinder]


@dataclass(frozen=True, eq=False)
class Contact:
    """A classified pairwise overlap with positive penetration depth.

    ``participants`` is a pair of inclusion indices, or (index, face id)
    for inclusion-boundary contacts.
    """

    kind: str  # sphere-sphere | sphere-cylinder | cylinder-cylinder | inclusion-boundary
    overlap_depth: float
    participants: tuple

    def __post_init__(self):
        if not self.overlap_depth > 0:
            raise ValueError("a Contact must have positive overlap_depth")


def reach(inc: Inclusion) -> float:
    return inc.reach


def face_axis(face: str) -> int:
    return "xyz".index(face[0])


def face_is_max(face: str) -> bool:
    return face.endswith("+")


# ---------------------------------------------------------------------------
# minimum-image arithmetic
# ---------------------------------------------------------------------------

def min_image_delta(p, q, cell: UnitCell, wrap=(True, True, True)) -> np.ndarray:
    """Shortest displacement q - p under periodic wrapping.

    Wrapped components land in (-L/2, L/2]; an exact half-cell tie breaks
    toward the positive image.  Axes with wrap[i] == False keep the direct
    difference (used when a terminal face cuts the torus open).
    """
    d = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
    L = cell.edge_length
    w = np.asarray(wrap, dtype=bool)
    d[..., w] -= L * np.ceil(d[..., w] / L - 0.5)
    return d


def wrap_deltas(deltas: np.ndarray, cell: UnitCell, wrap=(True, True, True)) -> np.ndarray:
    """Vectorised min_image_delta for an (..., 3) array of raw differences."""
    d = np.array(deltas, dtype=float)
    L = cell.edge_length
    w = np.asarray(wrap, dtype=bool)
    d[..., w] -= L * np.ceil(d[..., w] / L - 0.5)
    return d


def wrap_points(points: np.ndarray, cell: UnitCell) -> np.ndarray:
    """Map points into [0, L) componentwise."""
    L = cell.edge_length
    return np.mod(points, L)


def _image_offsets(wrap) -> Iterable[tuple]:
    """Integer image offsets to enumerate: {-1,0,1} on wrapped axes, {0} else."""
    choices = [(-1, 0, 1) if w else (0,) for w in wrap]
    return product(*choices)


# ---------------------------------------------------------------------------
# segment distance kernels
# ---------------------------------------------------------------------------

def _point_segments(p_rel: np.ndarray, u: np.ndarray, h) -> tuple[np.ndarray, np.ndarray]:
    """Distance and offset vector from points to segments through the origin frame.

    p_rel: (..., 3) point positions relative to segment midpoints;
    u: (..., 3) unit axes; h: (...) half lengths.  Returns (dist, vec) where
    vec points from the point to its closest segment point.
    """
    t = np.clip(np.sum(p_rel * u, axis=-1), -np.asarray(h), np.asarray(h))
    vec = t[..., None] * u - p_rel
    return np.linalg.norm(vec, axis=-1), vec


def _seg_seg_core(u0, h0, c_rel, u1, h1) -> tuple[np.ndarray, np.ndarray]:
    """Broadcastable segment-to-segment closest approach.

    Query segments span +-h0*u0 about the origin of each broadcast lane;
    partners span c_rel +- h1*u1.  Clamped closest-point computation after
    Ericson's closestPtSegmentSegment, written with np.where so any mix
    of degenerate (zero-length) segments stays valid.  Returns (dist, vec)
    with vec from the query's closest point to the partner's.
    """
    u0 = np.asarray(u0, dtype=float)
    u1 = np.asarray(u1, dtype=float)
    h0 = np.asarray(h0, dtype=float)
    h1 = np.asarray(h1, dtype=float)
    c_rel = np.asarray(c_rel, dtype=float)

    p1 = -h0[..., None] * u0
    d1 = 2.0 * h0[..., None] * u0
    p2 = c_rel - h1[..., None] * u1
    d2 = 2.0 * h1[..., None] * u1

    r = p1 - p2
    a = np.sum(d1 * d1, axis=-1)
    e = np.sum(d2 * d2, axis=-1)
    f = np.sum(d2 * r, axis=-1)
    cc = np.sum(d1 * r, axis=-1)
    b = np.sum(d1 * d2, axis=-1)
    denom = a * e - b * b

    a_degen = a <= _EPS_SQ
    e_degen = e <= _EPS_SQ
    a_safe = np.where(a_degen, 1.0, a)
    e_safe = np.where(e_degen, 1.0, e)

    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > _EPS_SQ,
                     np.clip((b * f - cc * e) / np.where(denom > _EPS_SQ, denom, 1.0),
                             0.0, 1.0),
                     0.0)
        t = (b * s + f) / e_safe
        t_lo = t < 0.0
        t_hi = t > 1.0
        t = np.clip(t, 0.0, 1.0)
        s = np.where(t_lo, np.clip(-cc / a_safe, 0.0, 1.0), s)
        s = np.where(t_hi, np.clip((b - cc) / a_safe, 0.0, 1.0), s)
        # degenerate partner: point at c_rel, parametrise the query only
        s = np.where(e_degen,
                     np.clip(np.sum(d1 * (c_rel - p1), axis=-1) / a_safe, 0.0, 1.0),
                     s)
        t = np.where(e_degen, 0.0, t)
        # degenerate query: point at the origin, parametrise the partner
        s = np.where(a_degen, 0.0, s)
        t = np.where(a_degen & ~e_degen,
                     np.clip(np.sum(-p2 * d2, axis=-1) / e_safe, 0.0, 1.0),
                     t)

    close1 = p1 + s[..., None] * d1
    close2 = p2 + t[..., None] * d2
    vec = close2 - close1
    return np.linalg.norm(vec, axis=-1), vec


def _segment_segments(u0: np.ndarray, h0: float, c_rel: np.ndarray,
                      u1: np.ndarray, h1) -> tuple[np.ndarray, np.ndarray]:
    """Distance between one query segment and many partner segments."""
    c_rel = np.atleast_2d(np.asarray(c_rel, dtype=float))
    u1 = np.atleast_2d(np.asarray(u1, dtype=float))
    h1 = np.atleast_1d(np.asarray(h1, dtype=float))
    return _seg_seg_core(np.asarray(u0, dtype=float), np.asarray(h0, dtype=float),
                         c_rel, u1, h1)


# ---------------------------------------------------------------------------
# pairwise depth blocks (vectorised, one query against many partners)
# ---------------------------------------------------------------------------

def sphere_block(center, radius, centers, radii, cell, wrap=(True, True, True)):
    """Depths and contact normals of one sphere against many spheres.

    Returns (depths, normals): depth > 0 means overlap; normals point from
    the query sphere toward each partner.  Exact for any radii because the
    minimum image of a point pair is always the closest image.
    """
    centers = np.atleast_2d(centers)
    deltas = wrap_deltas(centers - np.asarray(center, dtype=float), cell, wrap)
    d = np.linalg.norm(deltas, axis=1)
    depths = radius + np.asarray(radii, dtype=float) - d
    with np.errstate(invalid="ignore", divide="ignore"):
        normals = deltas / np.where(d > 0.0, d, 1.0)[:, None]
    return depths, normals


def sphere_capsule_block(center, radius, c_centers, c_axes, c_halves, c_radii,
                         cell, wrap=(True, True, True)):
    """Depths and normals of one sphere against many capsules."""
    c_centers = np.atleast_2d(c_centers)
    p_rel = wrap_deltas(np.asarray(center, dtype=float) - c_centers, cell, wrap)
    dist, vec = _point_segments(p_rel, np.atleast_2d(c_axes), c_halves)
    depths = radius + np.asarray(c_radii, dtype=float) - dist
    depths = _patch_oversize(depths, dist, radius, c_radii,
                             lambda k, off: _point_segments(
                                 p_rel[k][None, :] + np.asarray(off) * cell.edge_length,
                                 np.atleast_2d(c_axes)[k][None, :],
                                 np.atleast_1d(c_halves)[k])[0],
                             cell, wrap,
                             radius, np.atleast_1d(c_halves) + np.asarray(c_radii, dtype=float))
    with np.errstate(invalid="ignore", divide="ignore"):
        normals = vec / np.where(dist > 0.0, dist, 1.0)[:, None]
    return depths, normals


def capsule_sphere_block(center, axis, half_length, radius,
                         s_centers, s_radii, cell, wrap=(True, True, True)):
    """Depths and normals of one capsule against many spheres."""
    s_centers = np.atleast_2d(s_centers)
    p_rel = wrap_deltas(s_centers - np.asarray(center, dtype=float), cell, wrap)
    # p_rel are sphere centres relative to the capsule midpoint
    t = np.clip(np.sum(p_rel * np.asarray(axis, dtype=float), axis=-1),
                -half_length, half_length)
    vec = p_rel - t[:, None] * np.asarray(axis, dtype=float)
    dist = np.linalg.norm(vec, axis=-1)
    depths = radius + np.asarray(s_radii, dtype=float) - dist
    depths = _patch_oversize(depths, dist, radius, s_radii,
                             lambda k, off: _point_segments(
                                 p_rel[k][None, :] + np.asarray(off) * cell.edge_length,
                                 np.asarray(axis, dtype=float)[None, :],
                                 half_length)[0],
                             cell, wrap,
                             half_length + radius, np.asarray(s_radii, dtype=float))
    with np.errstate(invalid="ignore", divide="ignore"):
        normals = vec / np.where(dist > 0.0, dist, 1.0)[:, None]
    return depths, normals


def capsule_capsule_block(center, axis, half_length, radius,
                          c_centers, c_axes, c_halves, c_radii,
                          cell, wrap=(True, True, True)):
    """Depths and normals of one capsule against many capsules."""
    c_centers = np.atleast_2d(c_centers)
    c_rel = wrap_deltas(c_centers - np.asarray(center, dtype=float), cell, wrap)
    dist, vec = _segment_segments(np.asarray(axis, dtype=float), half_length,
                                  c_rel, c_axes, c_halves)
    depths = radius + np.asarray(c_radii, dtype=float) - dist
    depths = _patch_oversize(depths, dist, radius, c_radii,
                             lambda k, off: _segment_segments(
                                 np.asarray(axis, dtype=float), half_length,
                                 c_rel[k][None, :] + np.asarray(off) * cell.edge_length,
                                 np.atleast_2d(c_axes)[k][None, :],
                                 np.atleast_1d(c_halves)[k:k + 1])[0],
                             cell, wrap,
                             half_length + radius,
                             np.atleast_1d(c_halves) + np.asarray(c_radii, dtype=float))
    with np.errstate(invalid="ignore", divide="ignore"):
        normals = vec / np.where(dist > 0.0, dist, 1.0)[:, None]
    return depths, normals


def _patch_oversize(depths, dist, q_radius, p_radii, eval_image, cell, wrap,
                    q_reach, p_reaches):
    """Re-evaluate pairs whose combined reach defeats the single-image shortcut.

    For those rare pairs the distance is recomputed as the minimum over the
    explicit neighbour images; only the depth is patched (normals keep the
    principal-image direction, which is the one that matters whenever the
    principal image is the overlapping one).
    """
    L = cell.edge_length
    over = (q_reach + np.atleast_1d(p_reaches)) >= 0.5 * L
    if not np.any(over):
        return depths
    p_radii = np.broadcast_to(np.asarray(p_radii, dtype=float), depths.shape)
    for k in np.flatnonzero(over):
        best = dist[k]
        for off in _image_offsets(wrap):
            if off == (0, 0, 0):
                continue
            best = min(best, float(np.atleast_1d(eval_image(k, off))[0]))
        depths[k] = q_radius + p_radii[k] - best
    return depths


@dataclass(eq=False)
class ContactTable:
    """All-pairs overlap table of a sample under full periodic wrap.

    Arrays hold one row per overlapping pair: global inclusion indices,
    kind code (0 sphere-sphere, 1 sphere-cylinder, 2 cylinder-cylinder),
    overlap depth, and the integer periodic image offset through which the
    pair touches.  Pairs whose combined reach defeats the single-image
    argument are not tabulated; they are listed in ``oversize_pairs`` for
    explicit image enumeration by the caller.
    """

    pair_i: np.ndarray
    pair_j: np.ndarray
    kind: np.ndarray
    depth: np.ndarray
    offset: np.ndarray          # (m, 3) integers in {-1, 0, 1}
    oversize_pairs: list

    KIND_NAMES = ("sphere-sphere", "sphere-cylinder", "cylinder-cylinder")


def contact_table(inclusions: Sequence[Inclusion], cell: UnitCell) -> ContactTable:
    """Vectorised all-pairs contact detection with image offsets."""
    blocks = ShapeBlocks(inclusions)
    L = cell.edge_length
    reach_arr = np.array([inc.reach for inc in inclusions]) if inclusions else np.zeros(0)
    parts_i, parts_j, parts_k, parts_d, parts_o = [], [], [], [], []
    oversize: list = []

    def collect(gi, gj, kind_code, depth, off):
        over = reach_arr[gi] + reach_arr[gj] >= 0.5 * L
        if np.any(over):
            oversize.extend(zip(gi[over].tolist(), gj[over].tolist()))
        hit = (depth > 0.0) & ~over
        if np.any(hit):
            parts_i.append(gi[hit])
            parts_j.append(gj[hit])
            parts_k.append(np.full(int(hit.sum()), kind_code, dtype=np.int8))
            parts_d.append(depth[hit])
            parts_o.append(off[hit])

    s_ids = np.asarray(blocks.sphere_ids, dtype=np.int64)
    c_ids = np.asarray(blocks.cyl_ids, dtype=np.int64)

    if blocks.n_spheres >= 2:
        raw = blocks.s_centers[None, :, :] - blocks.s_centers[:, None, :]
        wrapped = wrap_deltas(raw, cell)
        off = np.rint((wrapped - raw) / L).astype(np.int8)
        depth = blocks.s_radii[:, None] + blocks.s_radii[None, :] \
            - np.linalg.norm(wrapped, axis=-1)
        iu, ju = np.triu_indices(blocks.n_spheres, 1)
        collect(s_ids[iu], s_ids[ju], 0, depth[iu, ju], off[iu, ju])

    if blocks.n_spheres and blocks.n_cylinders:
        raw = blocks.s_centers[:, None, :] - blocks.c_centers[None, :, :]
        wrapped = wrap_deltas(raw, cell)
        off = np.rint((wrapped - raw) / L).astype(np.int8)
        t = np.clip(np.sum(wrapped * blocks.c_axes[None, :, :], axis=-1),
                    -blocks.c_halves, blocks.c_halves)
        dist = np.linalg.norm(wrapped - t[..., None] * blocks.c_axes[None, :, :],
                              axis=-1)
        depth = blocks.s_radii[:, None] + blocks.c_radii[None, :] - dist
        gi = np.repeat(s_ids, blocks.n_cylinders)
        gj = np.tile(c_ids, blocks.n_spheres)
        collect(gi, gj, 1, depth.ravel(), off.reshape(-1, 3))

    if blocks.n_cylinders >= 2:
        raw = blocks.c_centers[None, :, :] - blocks.c_centers[:, None, :]
        wrapped = wrap_deltas(raw, cell)
        off = np.rint((wrapped - raw) / L).astype(np.int8)
        dist, _ = _seg_seg_core(blocks.c_axes[:, None, :], blocks.c_halves[:, None],
                                wrapped, blocks.c_axes[None, :, :],
                                blocks.c_halves[None, :])
        depth = blocks.c_radii[:, None] + blocks.c_radii[None, :] - dist
        iu, ju = np.triu_indices(blocks.n_cylinders, 1)
        collect(c_ids[iu], c_ids[ju], 2, depth[iu, ju], off[iu, ju])

    if parts_i:
        return ContactTable(np.concatenate(parts_i), np.concatenate(parts_j),
                            np.concatenate(parts_k), np.concatenate(parts_d),
                            np.concatenate(parts_o), oversize)
    return ContactTable(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64),
                        np.zeros(0, dtype=np.int8), np.zeros(0),
                        np.zeros((0, 3), dtype=np.int8), oversize)


# ---------------------------------------------------------------------------
# spec-level contact operations
# ---------------------------------------------------------------------------

def sphere_sphere_contact(a: Sphere, b: Sphere, cell: UnitCell,
                          wrap=(True, True, True), ids=(0, 1)) -> Optional[Contact]:
    """Overlap of two spheres: depth = r_a + r_b - minimum-image distance."""
    d = float(np.linalg.norm(min_image_delta(a.center, b.center, cell, wrap)))
    depth = a.radius + b.radius - d
    if depth > 0.0:
        return Contact("sphere-sphere", depth, tuple(ids))
    return None


def sphere_cylinder_contact(s: Sphere, c: Cylinder, cell: UnitCell,
                            wrap=(True, True, True), ids=(0, 1)) -> Optional[Contact]:
    """Overlap of a sphere and a capsule: point-to-axis-segment distance."""
    depths, _ = sphere_capsule_block(s.center, s.radius,
                                     c.center[None, :], c.axis[None, :],
                                     np.array([c.half_length]), np.array([c.radius]),
                                     cell, wrap)
    depth = float(depths[0])
    if depth > 0.0:
        return Contact("sphere-cylinder", depth, tuple(ids))
    return None


def cylinder_cylinder_contact(a: Cylinder, b: Cylinder, cell: UnitCell,
                              wrap=(True, True, True), ids=(0, 1)) -> Optional[Contact]:
    """Overlap of two capsules: axis-segment to axis-segment distance.

    The pair is ordered by a deterministic key before evaluation so the
    result is bit-identical under argument swap.
    """
    ka = (tuple(a.center), tuple(a.axis), a.half_length, a.radius)
    kb = (tuple(b.center), tuple(b.axis), b.half_length, b.radius)
    if kb < ka:
        a, b = b, a
    depths, _ = capsule_capsule_block(a.center, a.axis, a.half_length, a.radius,
                                      b.center[None, :], b.axis[None, :],
                                      np.array([b.half_length]), np.array([b.radius]),
                                      cell, wrap)
    depth = float(depths[0])
    if depth > 0.0:
        return Contact("cylinder-cylinder", depth, tuple(ids))
    return None


def contact(a: Inclusion, b: Inclusion, cell: UnitCell,
            wrap=(True, True, True), ids=(0, 1)) -> Optional[Contact]:
    """Type-dispatching pairwise contact test."""
    if isinstance(a, Sphere) and isinstance(b, Sphere):
        return sphere_sphere_contact(a, b, cell, wrap, ids)
    if isinstance(a, Sphere) and isinstance(b, Cylinder):
        return sphere_cylinder_contact(a, b, cell, wrap, ids)
    if isinstance(a, Cylinder) and isinstance(b, Sphere):
        c = sphere_cylinder_contact(b, a, cell, wrap, (ids[1], ids[0]))
        if c is None:
            return None
        return Contact(c.kind, c.overlap_depth, tuple(ids))
    return cylinder_cylinder_contact(a, b, cell, wrap, ids)


def pair_contacts(a: Inclusion, b: Inclusion, cell: UnitCell,
                  wrap=(True, True, True), ids=(0, 1)) -> list[Contact]:
    """All overlapping periodic images of a pair, one Contact per image.

    Usually empty or a single element; several images can only overlap
    simultaneously when the combined reach reaches half the cell edge.
    Distinct image contacts are what the graph layer merges by conductance
    summation.
    """
    if a.reach + b.reach < 0.5 * cell.edge_length:
        c = contact(a, b, cell, wrap, ids)
        return [c] if c is not None else []

    kind, r_sum = _pair_kind(a, b)
    out = []
    raw = b.center - a.center
    L = cell.edge_length
    for off in _image_offsets(wrap):
        delta = raw + np.asarray(off, dtype=float) * L
        d = _pair_skeleton_distance(a, b, delta)
        depth = r_sum - d
        if depth > 0.0:
            out.append(Contact(kind, depth, tuple(ids)))
    return out


def _pair_kind(a: Inclusion, b: Inclusion) -> tuple[str, float]:
    if isinstance(a, Sphere) and isinstance(b, Sphere):
        return "sphere-sphere", a.radius + b.radius
    if isinstance(a, Cylinder) and isinstance(b, Cylinder):
        return "cylinder-cylinder", a.radius + b.radius
    return "sphere-cylinder", a.radius + b.radius


def _pair_skeleton_distance(a: Inclusion, b: Inclusion, delta: np.ndarray) -> float:
    """Distance between shape skeletons given an explicit displacement b - a."""
    if isinstance(a, Sphere) and isinstance(b, Sphere):
        return float(np.linalg.norm(delta))
    if isinstance(a, Sphere):
        d, _ = _point_segments(-delta[None, :], b.axis[None, :], np.array([b.half_length]))
        return float(d[0])
    if isinstance(b, Sphere):
        d, _ = _point_segments(delta[None, :], a.axis[None, :], np.array([a.half_length]))
        return float(d[0])
    d, _ = _segment_segments(a.axis, a.half_length, delta[None, :],
                             b.axis[None, :], np.array([b.half_length]))
    return float(d[0])


def boundary_contact(inc: Inclusion, face: str, cell: UnitCell, inc_id: int = 0,
                     central_fraction: Optional[float] = None) -> Optional[Contact]:
    """Penetration of an inclusion past one of the six cube faces.

    Depth is the overshoot of the closest skeleton point plus the radius
    past the face plane.  When ``central_fraction`` is given (a linear
    fraction of the face edge) the contact only counts if the deepest
    point projects inside the centred square zone of that size.
    """
    if face not in FACES:
        raise ValueError(f"unknown face {face!r}")
    k = face_axis(face)
    L = cell.edge_length

    if isinstance(inc, Sphere):
        point = inc.center
        r = inc.radius
    else:
        # axis-segment endpoint nearest to the face plane
        if inc.axis[k] == 0.0:
            t = 0.0
        elif face_is_max(face):
            t = inc.half_length if inc.axis[k] > 0 else -inc.half_length
        else:
            t = -inc.half_length if inc.axis[k] > 0 else inc.half_length
        point = inc.center + t * inc.axis
        r = inc.radius

    plane_dist = (L - point[k]) if face_is_max(face) else point[k]
    depth = r - plane_dist
    if depth <= 0.0:
        return None

    if central_fraction is not None:
        lo = 0.5 * L * (1.0 - central_fraction)
        hi = 0.5 * L * (1.0 + central_fraction)
        for ax in range(3):
            if ax == k:
                continue
            if not (lo <= point[ax] <= hi):
                return None

    return Contact("inclusion-boundary", depth, (inc_id, face))


# ---------------------------------------------------------------------------
# point membership and volume fraction
# ---------------------------------------------------------------------------

def points_inside(points: np.ndarray, inc: Inclusion, cell: UnitCell) -> np.ndarray:
    """Boolean mask of points lying inside one inclusion (periodic)."""
    points = np.atleast_2d(points)
    if isinstance(inc, Sphere):
        d = np.linalg.norm(wrap_deltas(points - inc.center, cell), axis=1)
        return d <= inc.radius
    p_rel = wrap_deltas(points - inc.center, cell)
    d, _ = _point_segments(p_rel, inc.axis, inc.half_length)
    return d <= inc.radius


class ShapeBlocks:
    """Type-blocked array views over an inclusion list (read-only)."""

    def __init__(self, inclusions: Sequence[Inclusion]):
        self.sphere_ids = [k for k, inc in enumerate(inclusions)
                           if isinstance(inc, Sphere)]
        self.cyl_ids = [k for k, inc in enumerate(inclusions)
                        if isinstance(inc, Cylinder)]
        self.s_centers = np.array([inclusions[k].center
                                   for k in self.sphere_ids]).reshape(-1, 3)
        self.s_radii = np.array([inclusions[k].radius for k in self.sphere_ids])
        self.c_centers = np.array([inclusions[k].center
                                   for k in self.cyl_ids]).reshape(-1, 3)
        self.c_axes = np.array([inclusions[k].axis
                                for k in self.cyl_ids]).reshape(-1, 3)
        self.c_halves = np.array([inclusions[k].half_length for k in self.cyl_ids])
        self.c_radii = np.array([inclusions[k].radius for k in self.cyl_ids])

    @property
    def n_spheres(self) -> int:
        return len(self.sphere_ids)

    @property
    def n_cylinders(self) -> int:
        return len(self.cyl_ids)


def points_inside_any(points: np.ndarray, inclusions: Sequence[Inclusion],
                      cell: UnitCell, chunk: int = 4096) -> np.ndarray:
    """Boolean mask of points covered by the union of inclusions."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    mask = np.zeros(len(points), dtype=bool)
    if not inclusions:
        return mask
    blocks = ShapeBlocks(inclusions)
    for start in range(0, len(points), chunk):
        pts = points[start:start + chunk]
        m = np.zeros(len(pts), dtype=bool)
        if blocks.n_spheres:
            deltas = wrap_deltas(pts[:, None, :] - blocks.s_centers[None, :, :], cell)
            d2 = np.sum(deltas * deltas, axis=-1)
            m |= np.any(d2 <= blocks.s_radii[None, :] ** 2, axis=1)
        if blocks.n_cylinders:
            p_rel = wrap_deltas(pts[:, None, :] - blocks.c_centers[None, :, :], cell)
            t = np.clip(np.sum(p_rel * blocks.c_axes[None, :, :], axis=-1),
                        -blocks.c_halves, blocks.c_halves)
            vec = p_rel - t[..., None] * blocks.c_axes[None, :, :]
            d2 = np.sum(vec * vec, axis=-1)
            m |= np.any(d2 <= blocks.c_radii[None, :] ** 2, axis=1)
        mask[start:start + len(pts)] = m
    return mask


def volume_fraction_estimate(inclusions: Sequence[Inclusion], cell: UnitCell,
                             n_probes: int = 1_000_000,
                             rng: Optional[np.random.Generator] = None,
                             chunk: int = 65536) -> float:
    """Monte Carlo estimate of the union volume fraction of the inclusions.

    Uniform point probes against periodic membership; the standard error
    is at most 0.5 / sqrt(n_probes).
    """
    if n_probes < 1:
        raise ValueError("n_probes must be >= 1")
    if not inclusions:
        return 0.0
    if rng is None:
        rng = np.random.default_rng(0)
    hits = 0
    remaining = n_probes
    L = cell.edge_length
    while remaining > 0:
        n = min(chunk, remaining)
        pts = rng.random((n, 3)) * L
        hits += int(np.count_nonzero(points_inside_any(pts, inclusions, cell)))
        remaining -= n
    return hits / n_probes
