"""Voxel-grid mode: loading, voxelisation, graphs, homogenisation."""

import numpy as np
import pytest

from condnet.errors import BadSlice, SizeMismatch
from condnet.generator import GenerationSpec, Sample, generate_rsa, puff_up
from condnet.geometry import Sphere, UnitCell
from condnet.graph import CalibrationConstants, percolates
from condnet.solver import effective_conductance
from condnet.voxel import (
    VoxelGrid,
    full_grid_conductance,
    load_slice_stack,
    load_voxel_grid,
    voxel_effective_conductivity,
    voxel_graph,
    voxelize_sample,
    write_pgm,
)

CAL = CalibrationConstants()


# ---------------------------------------------------------------------------
# raw loading
# ---------------------------------------------------------------------------

def test_load_all_occupied():
    grid = load_voxel_grid(bytes([255] * 8), (2, 2, 2), threshold=128)
    assert grid.n_occupied == 8


def test_load_all_empty():
    grid = load_voxel_grid(bytes(8), (2, 2, 2), threshold=128)
    assert grid.n_occupied == 0


def test_load_threshold_exact():
    rng = np.random.default_rng(1)
    data = rng.integers(0, 256, size=24, dtype=np.uint8).tobytes()
    grid = load_voxel_grid(data, (2, 3, 4), threshold=100)
    flat = np.frombuffer(data, dtype=np.uint8)
    for z in range(4):
        for y in range(3):
            for x in range(2):
                expected = flat[x + 2 * (y + 3 * z)] >= 100
                assert grid.occupancy[x, y, z] == expected


def test_load_size_mismatch():
    with pytest.raises(SizeMismatch):
        load_voxel_grid(bytes(7), (2, 2, 2))


# ---------------------------------------------------------------------------
# PGM slice stacks
# ---------------------------------------------------------------------------

def test_slice_stack_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    vol = rng.integers(0, 256, size=(5, 4, 3), dtype=np.uint8)  # (z, y, x)
    for z in range(5):
        write_pgm(tmp_path / f"slice_{z:03d}.pgm", vol[z])
    grid = load_slice_stack(tmp_path, threshold=90)
    assert grid.dims == (3, 4, 5)
    for z in range(5):
        for y in range(4):
            for x in range(3):
                assert grid.occupancy[x, y, z] == (vol[z, y, x] >= 90)


def test_slice_stack_ascii_pgm(tmp_path):
    text = "P2\n# comment\n3 2\n255\n0 255 0\n255 0 255\n"
    (tmp_path / "a.pgm").write_text(text)
    grid = load_slice_stack(tmp_path, threshold=128)
    assert grid.dims == (3, 2, 1)
    assert grid.occupancy[1, 0, 0] and grid.occupancy[0, 1, 0]
    assert not grid.occupancy[0, 0, 0]


def test_slice_stack_inconsistent_shapes(tmp_path):
    write_pgm(tmp_path / "a.pgm", np.zeros((2, 2), dtype=np.uint8))
    write_pgm(tmp_path / "b.pgm", np.zeros((3, 2), dtype=np.uint8))
    with pytest.raises(BadSlice):
        load_slice_stack(tmp_path)


def test_bad_pgm_rejected(tmp_path):
    (tmp_path / "a.pgm").write_bytes(b"P7\n2 2\n255\n....")
    with pytest.raises(BadSlice):
        load_slice_stack(tmp_path)


# ---------------------------------------------------------------------------
# voxelisation of samples
# ---------------------------------------------------------------------------

def test_voxelize_empty_sample():
    sample = Sample(UnitCell(1.0), [], None, 0.0)
    grid = voxelize_sample(sample, 8)
    assert grid.n_occupied == 0


def test_voxelize_sphere_fraction():
    s = Sphere(np.array([0.5, 0.5, 0.5]), 0.25)
    grid = voxelize_sample(Sample(UnitCell(1.0), [s], None, 0.0), 64)
    expected = (4.0 / 3.0) * np.pi * 0.25 ** 3
    assert grid.occupied_fraction == pytest.approx(expected, rel=0.02)


def test_voxelize_periodic_sphere():
    # a sphere at the origin corner occupies all eight cell corners
    s = Sphere(np.array([0.0, 0.0, 0.0]), 0.2)
    grid = voxelize_sample(Sample(UnitCell(1.0), [s], None, 0.0), 16)
    assert grid.occupancy[0, 0, 0]
    assert grid.occupancy[15, 15, 15]
    expected = (4.0 / 3.0) * np.pi * 0.2 ** 3
    assert grid.occupied_fraction == pytest.approx(expected, rel=0.1)


def test_voxelize_puffed_fraction_monotone():
    spec = GenerationSpec(0.1, 25, 0, 0.1, 0.0, 0.0, seed=3)
    sample = generate_rsa(spec)
    base = voxelize_sample(sample, 32).n_occupied
    puffed = voxelize_sample(puff_up(sample, 1.2, fraction_probes=1000), 32).n_occupied
    assert puffed >= base


# ---------------------------------------------------------------------------
# voxel graphs
# ---------------------------------------------------------------------------

def test_single_voxel_graph():
    grid = VoxelGrid(np.ones((1, 1, 1), dtype=bool))
    g = voxel_graph(grid, "x", CAL)
    assert g.n_vertices == 3
    assert sorted((i, j) for i, j, _ in g.edges()) == [(0, 1), (0, 2)]
    assert effective_conductance(g) == pytest.approx(CAL.k_face / 2.0, rel=1e-12)


def test_column_series_formula():
    n = 9
    occ = np.zeros((1, 1, n), dtype=bool)
    occ[0, 0, :] = True
    g = voxel_graph(VoxelGrid(occ), "z", CAL)
    assert g.n_edges == (n - 1) + 2
    assert effective_conductance(g) == pytest.approx(CAL.k_face / (n + 1), rel=1e-10)


def test_corner_touching_voxels():
    occ = np.zeros((2, 2, 2), dtype=bool)
    occ[0, 0, 0] = occ[1, 1, 1] = True
    g = voxel_graph(VoxelGrid(occ), "x", CAL)
    inner = [(i, j, c) for i, j, c in g.edges() if j < 2]
    assert len(inner) == 1
    assert inner[0][2] == pytest.approx(CAL.k_vertex)
    assert percolates(g)


def test_connectivity_degradation():
    occ = np.zeros((2, 2, 2), dtype=bool)
    occ[0, 0, 0] = occ[1, 1, 1] = True
    g6 = voxel_graph(VoxelGrid(occ), "x", CAL, connectivity=6)
    assert not percolates(g6)
    g18 = voxel_graph(VoxelGrid(occ), "x", CAL, connectivity=18)
    assert not percolates(g18)


def test_edge_type_counts_full_grid():
    n = 4
    cal = CalibrationConstants(k_face=1.0, k_edge=0.25, k_vertex=0.0625)
    grid = VoxelGrid(np.ones((n, n, n), dtype=bool))
    g = voxel_graph(grid, "x", cal)
    inner = [(i, j, c) for i, j, c in g.edges() if max(i, j) < g.n_vertices - 2]
    counts = {1.0: 0, 0.25: 0, 0.0625: 0}
    for _, _, c in inner:
        counts[c] += 1
    assert counts[1.0] == 3 * n * n * (n - 1)
    assert counts[0.25] == 6 * n * (n - 1) ** 2
    assert counts[0.0625] == 4 * (n - 1) ** 3


def test_wrap_transverse_adds_edges():
    occ = np.zeros((3, 3, 3), dtype=bool)
    occ[0, 0, :] = True
    occ[0, 2, :] = True   # columns adjacent only through the y wrap
    g_open = voxel_graph(VoxelGrid(occ), "z", CAL, wrap_transverse=False)
    g_wrap = voxel_graph(VoxelGrid(occ), "z", CAL, wrap_transverse=True)
    assert g_wrap.n_edges > g_open.n_edges


# ---------------------------------------------------------------------------
# homogenisation oracles
# ---------------------------------------------------------------------------

def test_full_grid_matches_closed_form_wrapped():
    # with transverse wrap every voxel of a layer is equivalent and the
    # closed-form series reduction is exact
    for dims in [(4, 4, 4), (3, 5, 2), (8, 8, 8), (2, 2, 5)]:
        grid = VoxelGrid(np.ones(dims, dtype=bool))
        vals = voxel_effective_conductivity(grid, CAL, wrap_transverse=True)
        for i, axis in enumerate("xyz"):
            ref = full_grid_conductance(dims, axis, CAL, wrap_transverse=True)
            assert vals[i] == pytest.approx(ref, rel=1e-10)


def test_full_grid_closed_form_face_only():
    # with faces only the per-layer reduction is exact without wrapping too
    dims = (5, 4, 6)
    grid = VoxelGrid(np.ones(dims, dtype=bool))
    for axis, n in zip("xyz", dims):
        ref = full_grid_conductance(dims, axis, CAL, connectivity=6)
        g = voxel_graph(grid, axis, CAL, connectivity=6)
        assert effective_conductance(g) == pytest.approx(ref, rel=1e-10)
        d1, d2 = [d for a, d in zip("xyz", dims) if a != axis]
        assert ref == pytest.approx(d1 * d2 * CAL.k_face / (n + 1), rel=1e-12)


def test_full_cube_axes_equal():
    grid = VoxelGrid(np.ones((8, 8, 8), dtype=bool))
    vals = voxel_effective_conductivity(grid, CAL)
    assert vals[0] == pytest.approx(vals[1], rel=1e-8)
    assert vals[1] == pytest.approx(vals[2], rel=1e-8)
    normed = voxel_effective_conductivity(grid, CAL, normalized=True)
    np.testing.assert_allclose(normed, 1.0, rtol=1e-10)


def test_half_slab_parallel_resistors():
    # the cut face breaks some diagonal links, a boundary effect decaying
    # like 1/n; n = 48 brings the parallel-slab oracle under 1 percent
    n = 48
    occ = np.zeros((n, n, n), dtype=bool)
    occ[:, : n // 2, :] = True
    slab = effective_conductance(voxel_graph(VoxelGrid(occ), "x", CAL))
    full = effective_conductance(voxel_graph(VoxelGrid(np.ones((n, n, n), bool)), "x", CAL))
    assert slab == pytest.approx(full / 2.0, rel=0.01)


def test_half_slab_exact_with_faces_only():
    # with face links alone the parallel-resistor argument is exact
    n = 8
    occ = np.zeros((n, n, n), dtype=bool)
    occ[:, : n // 2, :] = True
    slab = effective_conductance(voxel_graph(VoxelGrid(occ), "x", CAL, connectivity=6))
    full = effective_conductance(voxel_graph(VoxelGrid(np.ones((n, n, n), bool)), "x",
                                             CAL, connectivity=6))
    assert slab == pytest.approx(full / 2.0, rel=1e-10)


def test_axis_swap_symmetry():
    rng = np.random.default_rng(5)
    occ = rng.random((6, 6, 6)) < 0.7
    base = voxel_effective_conductivity(VoxelGrid(occ), CAL)
    swaps = {(1, 0, 2): (1, 0, 2), (2, 1, 0): (2, 1, 0), (0, 2, 1): (0, 2, 1)}
    for perm in swaps:
        vals = voxel_effective_conductivity(VoxelGrid(occ.transpose(perm)), CAL)
        expected = base[list(perm)]
        np.testing.assert_allclose(vals, expected, rtol=1e-8, atol=1e-14)


def test_monotone_in_occupancy():
    rng = np.random.default_rng(7)
    occ = rng.random((5, 5, 5)) < 0.55
    base = voxel_effective_conductivity(VoxelGrid(occ), CAL)
    empty = np.argwhere(~occ)
    for k in range(min(5, len(empty))):
        occ2 = occ.copy()
        occ2[tuple(empty[k])] = True
        vals = voxel_effective_conductivity(VoxelGrid(occ2), CAL)
        assert np.all(vals >= base - 1e-12)


def test_empty_grid_conductivity():
    grid = VoxelGrid(np.zeros((4, 4, 4), dtype=bool))
    np.testing.assert_array_equal(voxel_effective_conductivity(grid, CAL), 0.0)


def test_resolution_convergence_two_spheres():
    incs = [Sphere(np.array([0.28, 0.5, 0.5]), 0.31),
            Sphere(np.array([0.72, 0.5, 0.5]), 0.31)]
    sample = Sample(UnitCell(1.0), incs, None, 0.0)
    vals = {}
    for res in (32, 64):
        grid = voxelize_sample(sample, res)
        vals[res] = voxel_effective_conductivity(grid, CAL, wrap_transverse=True,
                                                 normalized=True)[0]
    assert vals[64] > 0
    assert abs(vals[64] - vals[32]) / vals[64] < 0.10
