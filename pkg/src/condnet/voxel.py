"""Voxel-grid mode for segmented volume data.

Conductor voxels become graph vertices; occupied voxels touching by a
face, an edge or a corner are linked with the respective calibration
constant, and the first and last layers along the studied axis connect to
the terminals.  Construction is streaming: memory scales with occupied
voxels and edges, never with a dense matrix.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import BadSlice, SizeMismatch
from .geometry import Sphere, points_inside
from .graph import CalibrationConstants, CircuitGraph
from .solver import effective_conductance

AXES = ("x", "y", "z")


@dataclass(eq=False)
class VoxelGrid:
    """Boolean occupancy with voxel (x, y, z) stored at occupancy[x, y, z]."""

    occupancy: np.ndarray
    spacing: float = 1.0

    def __post_init__(self):
        self.occupancy = np.asarray(self.occupancy, dtype=bool)
        if self.occupancy.ndim != 3:
            raise ValueError("occupancy must be a 3-d boolean array")
        if min(self.occupancy.shape) < 1:
            raise ValueError("all dimensions must be at least 1")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.occupancy.shape

    @property
    def n_occupied(self) -> int:
        return int(np.count_nonzero(self.occupancy))

    @property
    def occupied_fraction(self) -> float:
        return self.n_occupied / self.occupancy.size


def load_voxel_grid(source, dims: Sequence[int], threshold: int = 128,
                    spacing: float = 1.0) -> VoxelGrid:
    """Threshold a raw 8-bit volume into a VoxelGrid.

    ``source`` is a bytes object, a binary stream or a file path holding
    nx*ny*nz bytes with voxel (x, y, z) at index x + nx*(y + ny*z).
    Occupancy is value >= threshold.
    """
    nx, ny, nz = (int(d) for d in dims)
    if isinstance(source, (str, os.PathLike)):
        data = Path(source).read_bytes()
    elif isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    else:
        data = source.read()
    if len(data) != nx * ny * nz:
        raise SizeMismatch(
            f"stream holds {len(data)} bytes but dims {nx}x{ny}x{nz} "
            f"need {nx * ny * nz}")
    raw = np.frombuffer(data, dtype=np.uint8).reshape(nz, ny, nx)
    occupancy = (raw >= threshold).transpose(2, 1, 0)
    return VoxelGrid(occupancy, spacing)


# ---------------------------------------------------------------------------
# PGM slice stacks
# ---------------------------------------------------------------------------

def _read_pgm(path) -> np.ndarray:
    """Minimal 8-bit PGM reader (binary P5 or ASCII P2)."""
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        if pos >= len(data):
            raise BadSlice(f"{path}: truncated PGM header")
        if data[pos:pos + 1].isspace():
            pos += 1
            continue
        if data[pos:pos + 1] == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
            continue
        end = pos
        while end < len(data) and not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    magic = tokens[0]
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise BadSlice(f"{path}: malformed PGM header") from exc
    if magic not in (b"P5", b"P2"):
        raise BadSlice(f"{path}: not a PGM file (magic {magic!r})")
    if not (0 < maxval <= 255):
        raise BadSlice(f"{path}: only 8-bit PGM supported (maxval {maxval})")
    if magic == b"P5":
        pos += 1  # single whitespace after maxval
        pixels = np.frombuffer(data, dtype=np.uint8, offset=pos)
        if pixels.size != width * height:
            raise BadSlice(f"{path}: expected {width * height} pixels, "
                           f"found {pixels.size}")
    else:
        try:
            pixels = np.array(data[pos:].split(), dtype=np.uint8)
        except (ValueError, OverflowError) as exc:
            raise BadSlice(f"{path}: bad ASCII pixel data") from exc
        if pixels.size != width * height:
            raise BadSlice(f"{path}: expected {width * height} pixels, "
                           f"found {pixels.size}")
    return pixels.reshape(height, width)


def write_pgm(path, image: np.ndarray) -> None:
    """Write an 8-bit grayscale image as binary PGM."""
    img = np.asarray(image, dtype=np.uint8)
    if img.ndim != 2:
        raise ValueError("image must be 2-d")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def load_slice_stack(source, threshold: int = 128, spacing: float = 1.0,
                     pattern: str = "*.pgm") -> VoxelGrid:
    """Stack grayscale PGM slices (lexicographic order) into a grid.

    ``source`` is a directory or an explicit list of files; slice k maps
    to z = k, image row to y, image column to x.
    """
    if isinstance(source, (str, os.PathLike)):
        paths = sorted(Path(source).glob(pattern))
    else:
        paths = [Path(p) for p in source]
    if not paths:
        raise BadSlice("no slices found")
    slices = []
    shape = None
    for p in paths:
        img = _read_pgm(p)
        if shape is None:
            shape = img.shape
        elif img.shape != shape:
            raise BadSlice(f"{p}: slice shape {img.shape} differs from {shape}")
        slices.append(img >= threshold)
    stack = np.stack(slices, axis=0)          # (z, y, x)
    return VoxelGrid(stack.transpose(2, 1, 0), spacing)


# ---------------------------------------------------------------------------
# sample voxelisation
# ---------------------------------------------------------------------------

def voxelize_sample(sample, resolution: int) -> VoxelGrid:
    """Occupancy from periodic membership of voxel centres in a sample.

    Samples are periodic, so grids made this way should be homogenised
    with wrap_transverse=True; grids from real (non-periodic) specimens
    keep the default open boundaries.
    """
    if resolution < 8:
        raise ValueError("resolution must be at least 8")
    res = int(resolution)
    L = sample.cell.edge_length
    s = L / res
    occ = np.zeros((res, res, res), dtype=bool)

    for inc in sample.inclusions:
        if isinstance(inc, Sphere):
            lo = inc.center - inc.radius
            hi = inc.center + inc.radius
        else:
            e1 = inc.center - inc.half_length * inc.axis
            e2 = inc.center + inc.half_length * inc.axis
            lo = np.minimum(e1, e2) - inc.radius
            hi = np.maximum(e1, e2) + inc.radius
        idx = []
        for ax in range(3):
            i0 = int(np.floor(lo[ax] / s - 0.5))
            i1 = int(np.ceil(hi[ax] / s - 0.5))
            if i1 - i0 + 1 >= res:
                idx.append(np.arange(res))
            else:
                idx.append(np.arange(i0, i1 + 1))
        gx, gy, gz = np.meshgrid(*idx, indexing="ij")
        pts = (np.stack([gx, gy, gz], axis=-1).reshape(-1, 3) + 0.5) * s
        inside = points_inside(pts, inc, sample.cell).reshape(gx.shape)
        occ[np.ix_(idx[0] % res, idx[1] % res, idx[2] % res)] |= inside
    return VoxelGrid(occ, s)


# ---------------------------------------------------------------------------
# graph construction and homogenisation
# ---------------------------------------------------------------------------

#: the 13 positive neighbour offsets covering 26-connectivity
_OFFSETS = tuple(o for o in product((-1, 0, 1), repeat=3) if o > (0, 0, 0))


def _offset_constant(off, cal: CalibrationConstants) -> float:
    nnz = sum(1 for d in off if d)
    return (cal.k_face, cal.k_edge, cal.k_vertex)[nnz - 1]


def voxel_graph(grid: VoxelGrid, axis: str, cal: CalibrationConstants,
                wrap_transverse: bool = False,
                connectivity: int = 26) -> CircuitGraph:
    """Contact graph of occupied voxels for one terminal axis.

    Occupied voxels sharing a face, edge or corner are linked with the
    respective constant; voxels in the first/last layer along ``axis``
    connect to w1/w2 with the face constant.  There is never a periodic
    wrap along the terminal axis; transverse wrapping is optional (off for
    real specimens, on for voxelised periodic samples).  ``connectivity``
    can be lowered to 18 (drop corners) or 6 (faces only) for sensitivity
    studies.
    """
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}")
    if connectivity not in (6, 18, 26):
        raise ValueError("connectivity must be 6, 18 or 26")
    ax = AXES.index(axis)
    nx, ny, nz = grid.dims

    flat = grid.occupancy.transpose(2, 1, 0).ravel()   # code = x + nx*(y + ny*z)
    codes = np.flatnonzero(flat)
    n_occ = len(codes)
    w1, w2 = n_occ, n_occ + 1
    if n_occ == 0:
        return CircuitGraph.from_edges(2, 0, 1, [])

    x = codes % nx
    y = (codes // nx) % ny
    z = codes // (nx * ny)
    coords = np.stack([x, y, z], axis=1)
    dims = np.array([nx, ny, nz])

    ei_parts, ej_parts, ec_parts = [], [], []
    max_nnz = {6: 1, 18: 2, 26: 3}[connectivity]

    for off in _OFFSETS:
        if sum(1 for d in off if d) > max_nnz:
            continue
        nb = coords + np.asarray(off)
        valid = np.ones(n_occ, dtype=bool)
        for a in range(3):
            if off[a] == 0:
                continue
            if a == ax or not wrap_transverse:
                valid &= (nb[:, a] >= 0) & (nb[:, a] < dims[a])
            else:
                nb[:, a] %= dims[a]
        if not np.any(valid):
            continue
        src = np.flatnonzero(valid)
        nb_codes = nb[src, 0] + nx * (nb[src, 1] + ny * nb[src, 2])
        pos = np.searchsorted(codes, nb_codes)
        pos = np.clip(pos, 0, n_occ - 1)
        hit = codes[pos] == nb_codes
        src = src[hit]
        dst = pos[hit]
        keep = src != dst     # wrap on a one-voxel-thick axis folds onto itself
        src, dst = src[keep], dst[keep]
        if len(src):
            ei_parts.append(src)
            ej_parts.append(dst)
            ec_parts.append(np.full(len(src), _offset_constant(off, cal)))

    # terminal couplings along the studied axis
    first = np.flatnonzero(coords[:, ax] == 0)
    last = np.flatnonzero(coords[:, ax] == dims[ax] - 1)
    if len(first):
        ei_parts.append(first)
        ej_parts.append(np.full(len(first), w1))
        ec_parts.append(np.full(len(first), cal.k_face))
    if len(last):
        ei_parts.append(last)
        ej_parts.append(np.full(len(last), w2))
        ec_parts.append(np.full(len(last), cal.k_face))

    if ei_parts:
        ei = np.concatenate(ei_parts)
        ej = np.concatenate(ej_parts)
        ec = np.concatenate(ec_parts)
    else:
        ei = ej = np.zeros(0, dtype=np.int64)
        ec = np.zeros(0)
    g = CircuitGraph(n_occ + 2, w1, w2, ei, ej, ec)
    return g.merged()


def _shift_links(d: int, s: int, wrap: bool) -> int:
    """Links per transverse line of length d under a +-1 or 0 shift.

    Counts ordered source-target index pairs the neighbour enumeration in
    voxel_graph produces, multiplicities included (a wrap on a 2-wide axis
    reaches the same neighbour from both sides and the merge step sums the
    two parallel links).
    """
    if s == 0:
        return d
    if wrap:
        return d if d >= 2 else 1
    return max(0, d - 1)


def full_grid_conductance(dims: Sequence[int], axis: str,
                          cal: CalibrationConstants,
                          wrap_transverse: bool = False,
                          connectivity: int = 26,
                          method: str = "auto") -> float:
    """Conductance of a fully occupied grid along one axis.

    With transverse wrapping (or without diagonal links) every voxel of a
    layer is equivalent, the potential is constant per layer, and the
    network reduces in closed form to a series of layer-to-layer couplings
    plus the two terminal couplings.  Without wrapping, boundary voxels
    lose diagonal links and the reduction is only approximate, so the grid
    is solved outright instead.
    """
    nx, ny, nz = (int(d) for d in dims)
    ax = AXES.index(axis)
    n_along = (nx, ny, nz)[ax]
    d1, d2 = [d for i, d in enumerate((nx, ny, nz)) if i != ax]

    g_term = d1 * d2 * cal.k_face
    if n_along == 1:
        # a single layer couples to both terminals only
        return 0.5 * g_term

    exact = wrap_transverse or connectivity == 6 or (d1 == 1 and d2 == 1)
    if not exact:
        grid = VoxelGrid(np.ones((nx, ny, nz), dtype=bool))
        g = voxel_graph(grid, axis, cal, wrap_transverse, connectivity)
        return effective_conductance(g, method=method)

    max_nnz = {6: 1, 18: 2, 26: 3}[connectivity]
    g_layer = 0.0
    for s1 in (-1, 0, 1):
        for s2 in (-1, 0, 1):
            nnz = 1 + (s1 != 0) + (s2 != 0)
            if nnz > max_nnz:
                continue
            k = (cal.k_face, cal.k_edge, cal.k_vertex)[nnz - 1]
            g_layer += k * _shift_links(d1, s1, wrap_transverse) \
                         * _shift_links(d2, s2, wrap_transverse)
    resistance = 2.0 / g_term + (n_along - 1) / g_layer
    return 1.0 / resistance


def voxel_effective_conductivity(grid: VoxelGrid, cal: CalibrationConstants,
                                 wrap_transverse: bool = False,
                                 normalized: bool = False,
                                 connectivity: int = 26,
                                 method: str = "auto") -> np.ndarray:
    """Effective conductance along x, y and z via the shared solver.

    With ``normalized`` the values divide by the closed-form conductance
    of the fully occupied grid, giving 1 for a pure conductor.
    """
    out = np.zeros(3)
    for i, axis in enumerate(AXES):
        g = voxel_graph(grid, axis, cal, wrap_transverse, connectivity)
        val = effective_conductance(g, method=method)
        if normalized:
            val /= full_grid_conductance(grid.dims, axis, cal,
                                         wrap_transverse, connectivity)
        out[i] = val
    return out
