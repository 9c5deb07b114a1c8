"""Fitting calibration constants to externally measured reference values.

Reference conductances come from a file (one simple two-body fixture per
line, measured by whatever trusted external solver the user ran once);
each contact kind gets a single-parameter least-squares fit through the
origin, since a vanishing overlap carries no conductance.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

from .errors import DegenerateFit, FormatError, InsufficientData
from .graph import CONTACT_LAWS, CalibrationConstants, overlap_measure

#: contact kinds accepted in reference files, mapped to constant fields
KIND_TO_CONSTANT = {
    "sphere-sphere": "k_ss",
    "sphere-cylinder": "k_sc",
    "cylinder-cylinder": "k_cc",
    "boundary-sphere": "k_boundary_s",
    "boundary-cylinder": "k_boundary_c",
    "face": "k_face",
    "edge": "k_edge",
    "vertex": "k_vertex",
}

#: voxel adjacency kinds carry one unit of overlap measure per contact
_UNIT_MEASURE_KINDS = ("face", "edge", "vertex")


@dataclass(frozen=True)
class ReferencePoint:
    """One measured fixture: contact kind, overlap depth, conductance."""

    kind: str
    overlap_depth: float
    measured_conductance: float

    def __post_init__(self):
        if self.kind not in KIND_TO_CONSTANT:
            raise ValueError(f"unknown contact kind {self.kind!r}")
        if self.kind not in _UNIT_MEASURE_KINDS and self.overlap_depth < 0:
            raise ValueError("overlap_depth must be non-negative")
        if not self.measured_conductance > 0:
            raise ValueError("measured_conductance must be positive")

    @classmethod
    def from_fixture(cls, sample, measured_conductance: float) -> "ReferencePoint":
        """Derive kind and depth from a two-inclusion sample.

        The sample must contain exactly one pairwise contact; its kind and
        overlap depth define the point.
        """
        from .geometry import pair_contacts
        incs = sample.inclusions
        contacts = []
        for i in range(len(incs)):
            for j in range(i + 1, len(incs)):
                contacts.extend(pair_contacts(incs[i], incs[j], sample.cell, ids=(i, j)))
        if len(contacts) != 1:
            raise ValueError(
                f"fixture must contain exactly one contact, found {len(contacts)}")
        c = contacts[0]
        return cls(c.kind, c.overlap_depth, measured_conductance)


def _measure(point: ReferencePoint, law: str) -> float:
    if point.kind in _UNIT_MEASURE_KINDS:
        return 1.0
    return overlap_measure(point.overlap_depth, law)


@dataclass(frozen=True)
class FitResult:
    """Fitted constants plus per-kind diagnostics."""

    constants: CalibrationConstants
    residuals: dict      # kind -> root-sum-square residual of the fit
    n_points: dict       # kind -> number of reference points used


def fit_constants(points: Sequence[ReferencePoint],
                  kinds: Optional[Iterable[str]] = None,
                  law: str = "linear",
                  defaults: Optional[CalibrationConstants] = None) -> FitResult:
    """Least-squares constants through the origin, one per contact kind.

    For each kind with data, k = sum(m_i * g_i) / sum(m_i^2) over that
    kind's points, where m is the overlap measure under ``law`` and g the
    measured conductance.  Kinds without data keep their default constant.
    Passing ``kinds`` demands data for each listed kind.  Sums use
    compensated summation, so the fit is independent of point order.
    """
    if law not in CONTACT_LAWS:
        raise ValueError(f"law must be one of {CONTACT_LAWS}")
    if defaults is None:
        defaults = CalibrationConstants(contact_law=law)

    by_kind: dict = {}
    for p in points:
        by_kind.setdefault(p.kind, []).append(p)

    if kinds is not None:
        missing = [k for k in kinds if k not in by_kind]
        if missing:
            raise InsufficientData(f"no reference points for kinds: {missing}")
        by_kind = {k: by_kind[k] for k in kinds}

    fitted = {}
    residuals = {}
    n_points = {}
    for kind, pts in by_kind.items():
        measures = [_measure(p, law) for p in pts]
        if all(m == 0.0 for m in measures):
            raise DegenerateFit(f"all overlap measures are zero for kind {kind!r}")
        num = math.fsum(m * p.measured_conductance for m, p in zip(measures, pts))
        den = math.fsum(m * m for m in measures)
        k = num / den
        fitted[KIND_TO_CONSTANT[kind]] = k
        residuals[kind] = math.sqrt(math.fsum(
            (p.measured_conductance - k * m) ** 2 for m, p in zip(measures, pts)))
        n_points[kind] = len(pts)

    constants = replace(defaults, contact_law=law, **fitted)
    return FitResult(constants, residuals, n_points)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

REFERENCE_MAGIC = "# condnet reference v1"
CONSTANTS_MAGIC = "# condnet constants v1"

_CONSTANT_FIELDS = ("k_ss", "k_sc", "k_cc", "k_boundary_s", "k_boundary_c",
                    "k_face", "k_edge", "k_vertex")


def format_reference_points(points: Sequence[ReferencePoint]) -> str:
    out = io.StringIO()
    out.write(REFERENCE_MAGIC + "\n")
    for p in points:
        out.write(f"point {p.kind} {p.overlap_depth:.17g} "
                  f"{p.measured_conductance:.17g}\n")
    return out.getvalue()


def save_reference_points(points: Sequence[ReferencePoint], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_reference_points(points))


def parse_reference_points(text: str) -> list[ReferencePoint]:
    points = []
    for ln in text.splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        parts = ln.split()
        if parts[0] != "point" or len(parts) != 4:
            raise FormatError(f"malformed reference record: {ln!r}")
        try:
            points.append(ReferencePoint(parts[1], float(parts[2]), float(parts[3])))
        except ValueError as exc:
            raise FormatError(f"bad reference record {ln!r}: {exc}") from exc
    return points


def load_reference_points(path) -> list[ReferencePoint]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_reference_points(fh.read())


def format_constants(cal: CalibrationConstants) -> str:
    out = io.StringIO()
    out.write(CONSTANTS_MAGIC + "\n")
    out.write(f"contact_law {cal.contact_law}\n")
    for name in _CONSTANT_FIELDS:
        out.write(f"{name} {getattr(cal, name):.17g}\n")
    return out.getvalue()


def save_constants(cal: CalibrationConstants, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_constants(cal))


def parse_constants(text: str) -> CalibrationConstants:
    values: dict = {}
    for ln in text.splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        parts = ln.split()
        if len(parts) != 2:
            raise FormatError(f"malformed constants line: {ln!r}")
        key, value = parts
        if key == "contact_law":
            values[key] = value
        elif key in _CONSTANT_FIELDS:
            try:
                values[key] = float(value)
            except ValueError as exc:
                raise FormatError(f"bad value in {ln!r}") from exc
        else:
            raise FormatError(f"unknown constants key {key!r}")
    try:
        return CalibrationConstants(**values)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"invalid constants file: {exc}") from exc


def load_constants(path) -> CalibrationConstants:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_constants(fh.read())
