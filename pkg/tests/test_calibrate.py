"""Calibration fitting: closed-form checks, invariances, file formats."""

import numpy as np
import pytest

from condnet.calibrate import (
    ReferencePoint,
    fit_constants,
    load_constants,
    load_reference_points,
    parse_constants,
    parse_reference_points,
    save_constants,
    save_reference_points,
)
from condnet.errors import DegenerateFit, FormatError, InsufficientData
from condnet.generator import Sample
from condnet.geometry import Cylinder, Sphere, UnitCell
from condnet.graph import CalibrationConstants


def pt(kind, depth, g):
    return ReferencePoint(kind, depth, g)


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

def test_single_point_exact_fit():
    res = fit_constants([pt("sphere-sphere", 0.1, 0.05)])
    assert res.constants.k_ss == pytest.approx(0.5, abs=1e-16)
    assert res.residuals["sphere-sphere"] == pytest.approx(0.0, abs=1e-16)


def test_two_consistent_points():
    res = fit_constants([pt("sphere-sphere", 0.1, 0.2), pt("sphere-sphere", 0.2, 0.4)])
    assert res.constants.k_ss == pytest.approx(2.0, rel=1e-15)
    assert res.residuals["sphere-sphere"] <= 1e-15


def test_inconsistent_points_least_squares():
    res = fit_constants([pt("sphere-sphere", 0.1, 0.2), pt("sphere-sphere", 0.2, 0.3)])
    # k = (0.1*0.2 + 0.2*0.3) / (0.01 + 0.04) = 0.08 / 0.05
    assert res.constants.k_ss == pytest.approx(1.6, abs=1e-12)
    assert res.residuals["sphere-sphere"] > 1e-3


def test_unfitted_kinds_keep_defaults():
    defaults = CalibrationConstants(k_cc=7.0, k_face=2.0)
    res = fit_constants([pt("sphere-sphere", 0.1, 0.05)], defaults=defaults)
    assert res.constants.k_cc == 7.0
    assert res.constants.k_face == 2.0
    assert res.constants.k_ss == pytest.approx(0.5)


def test_requested_kind_without_data():
    with pytest.raises(InsufficientData):
        fit_constants([pt("sphere-sphere", 0.1, 0.05)],
                      kinds=["sphere-sphere", "cylinder-cylinder"])


def test_degenerate_fit_zero_depths():
    with pytest.raises(DegenerateFit):
        fit_constants([pt("sphere-sphere", 0.0, 0.05)])


def test_voxel_kind_fits_mean():
    res = fit_constants([pt("face", 0.0, 0.8), pt("face", 0.0, 1.2)])
    assert res.constants.k_face == pytest.approx(1.0, rel=1e-15)


def test_fit_reorder_invariant_exact():
    points = [pt("sphere-sphere", d, g) for d, g in
              [(0.11, 0.23), (0.07, 0.19), (0.29, 0.31), (0.17, 0.05)]]
    k1 = fit_constants(points).constants.k_ss
    k2 = fit_constants(points[::-1]).constants.k_ss
    k3 = fit_constants([points[2], points[0], points[3], points[1]]).constants.k_ss
    assert k1 == k2 == k3


def test_fit_scaling_power_of_two_exact():
    points = [pt("sphere-cylinder", d, g) for d, g in [(0.1, 0.3), (0.2, 0.5)]]
    scaled = [pt("sphere-cylinder", p.overlap_depth, 2.0 * p.measured_conductance)
              for p in points]
    assert fit_constants(scaled).constants.k_sc == 2.0 * fit_constants(points).constants.k_sc


def test_fit_scaling_general_lambda():
    lam = 1.7
    points = [pt("cylinder-cylinder", d, g) for d, g in [(0.1, 0.3), (0.2, 0.5), (0.15, 0.4)]]
    scaled = [pt("cylinder-cylinder", p.overlap_depth, lam * p.measured_conductance)
              for p in points]
    assert fit_constants(scaled).constants.k_cc == pytest.approx(
        lam * fit_constants(points).constants.k_cc, rel=1e-14)


def test_collinear_points_reproduced_exactly():
    k0 = 0.5
    depths = [0.1, 0.2, 0.4]
    points = [pt("sphere-sphere", d, k0 * d) for d in depths]
    res = fit_constants(points)
    assert res.constants.k_ss == k0
    for d in depths:
        assert res.constants.k_ss * d == k0 * d


def test_hertz_law_fit():
    k0 = 2.0
    depths = [0.04, 0.09, 0.16]
    points = [pt("sphere-sphere", d, k0 * d ** 1.5) for d in depths]
    res = fit_constants(points, law="hertz")
    assert res.constants.k_ss == pytest.approx(k0, rel=1e-12)
    assert res.constants.contact_law == "hertz"


# ---------------------------------------------------------------------------
# fixtures
# ---------------------------------------------------------------------------

def test_reference_point_from_fixture():
    incs = [Sphere(np.array([0.4, 0.5, 0.5]), 0.12),
            Sphere(np.array([0.6, 0.5, 0.5]), 0.12)]
    sample = Sample(UnitCell(1.0), incs, None, 0.0)
    p = ReferencePoint.from_fixture(sample, 0.05)
    assert p.kind == "sphere-sphere"
    assert p.overlap_depth == pytest.approx(0.04, abs=1e-14)


def test_fixture_must_have_one_contact():
    apart = Sample(UnitCell(1.0), [Sphere(np.array([0.2, 0.2, 0.2]), 0.05),
                                   Sphere(np.array([0.8, 0.8, 0.8]), 0.05)], None, 0.0)
    with pytest.raises(ValueError):
        ReferencePoint.from_fixture(apart, 0.05)


def test_fixture_mixed_kind():
    incs = [Sphere(np.array([0.5, 0.5, 0.5]), 0.1),
            Cylinder(np.array([0.5, 0.65, 0.5]), np.array([1.0, 0.0, 0.0]), 0.2, 0.1)]
    sample = Sample(UnitCell(1.0), incs, None, 0.0)
    p = ReferencePoint.from_fixture(sample, 0.3)
    assert p.kind == "sphere-cylinder"
    assert p.overlap_depth == pytest.approx(0.05, abs=1e-14)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def test_reference_roundtrip(tmp_path):
    points = [pt("sphere-sphere", 0.1, 0.05), pt("face", 0.0, 0.9),
              pt("boundary-cylinder", 0.03, 0.07)]
    path = tmp_path / "ref.txt"
    save_reference_points(points, path)
    back = load_reference_points(path)
    assert back == points


def test_constants_roundtrip(tmp_path):
    cal = CalibrationConstants(k_ss=0.5, k_sc=1.25, k_cc=2.0, k_boundary_s=0.75,
                               k_boundary_c=0.8, k_face=1.1, k_edge=0.3,
                               k_vertex=0.12, contact_law="hertz")
    path = tmp_path / "constants.txt"
    save_constants(cal, path)
    assert load_constants(path) == cal


def test_constants_parse_errors():
    with pytest.raises(FormatError):
        parse_constants("k_bogus 1.0\n")
    with pytest.raises(FormatError):
        parse_constants("k_ss not_a_number\n")
    with pytest.raises(FormatError):
        parse_constants("k_ss -1.0\n")


def test_reference_parse_errors():
    with pytest.raises(FormatError):
        parse_reference_points("point sphere-sphere 0.1\n")
    with pytest.raises(FormatError):
        parse_reference_points("point wedge 0.1 0.05\n")


def test_fit_then_save_then_use(tmp_path):
    points = [pt("sphere-sphere", 0.1, 0.2), pt("sphere-sphere", 0.2, 0.3),
              pt("cylinder-cylinder", 0.1, 0.5)]
    res = fit_constants(points)
    path = tmp_path / "cal.txt"
    save_constants(res.constants, path)
    cal = load_constants(path)
    assert cal.k_ss == pytest.approx(1.6, abs=1e-12)
    assert cal.k_cc == pytest.approx(5.0, rel=1e-12)
