"""Weighted contact graphs of samples and their matrix representations.

A CircuitGraph has one vertex per inclusion plus two terminal vertices
w1 and w2 standing for the chosen boundary faces.  Edges carry positive
conductances derived from overlap depths; parallel contacts between the
same vertex pair are merged by summing (parallel resistors).
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import FormatError
from .geometry import (
    FACES,
    Contact,
    ContactTable,
    Inclusion,
    Sphere,
    UnitCell,
    boundary_contact,
    contact_table,
    face_axis,
    pair_contacts,
)

CONTACT_LAWS = ("linear", "hertz")

#: linear fraction of the face edge kept as the terminal zone when the two
#: terminal faces are neighbours (off-diagonal tensor entries)
DEFAULT_CENTRAL_FRACTION = 0.5


@dataclass(frozen=True)
class CalibrationConstants:
    """Conductance per unit overlap measure for every contact kind.

    The contact law maps overlap depth to the overlap measure: ``linear``
    uses depth itself, ``hertz`` uses depth**1.5.  Voxel constants apply
    per contact (no depth): face, edge and vertex adjacency.
    """

    k_ss: float = 1.0
    k_sc: float = 1.0
    k_cc: float = 1.0
    k_boundary_s: float = 1.0
    k_boundary_c: float = 1.0
    k_face: float = 1.0
    k_edge: float = 0.35
    k_vertex: float = 0.15
    contact_law: str = "linear"

    def __post_init__(self):
        for name in ("k_ss", "k_sc", "k_cc", "k_boundary_s", "k_boundary_c",
                     "k_face", "k_edge", "k_vertex"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.contact_law not in CONTACT_LAWS:
            raise ValueError(f"contact_law must be one of {CONTACT_LAWS}")

    def scaled(self, factor: float) -> "CalibrationConstants":
        return CalibrationConstants(
            self.k_ss * factor, self.k_sc * factor, self.k_cc * factor,
            self.k_boundary_s * factor, self.k_boundary_c * factor,
            self.k_face * factor, self.k_edge * factor, self.k_vertex * factor,
            self.contact_law)


@dataclass(eq=False)
class CircuitGraph:
    """Vertices 0..n_vertices-1 with terminals w1, w2; weighted edge arrays."""

    n_vertices: int
    w1: int
    w2: int
    edge_i: np.ndarray
    edge_j: np.ndarray
    conductance: np.ndarray

    def __post_init__(self):
        self.edge_i = np.asarray(self.edge_i, dtype=np.int64).ravel()
        self.edge_j = np.asarray(self.edge_j, dtype=np.int64).ravel()
        self.conductance = np.asarray(self.conductance, dtype=float).ravel()
        if not (len(self.edge_i) == len(self.edge_j) == len(self.conductance)):
            raise ValueError("edge arrays must have equal length")
        if self.n_vertices < 2:
            raise ValueError("a graph needs at least the two terminals")
        if not (0 <= self.w1 < self.n_vertices and 0 <= self.w2 < self.n_vertices):
            raise ValueError("terminal ids out of range")
        if self.w1 == self.w2:
            raise ValueError("terminals must be distinct vertices")
        m = len(self.edge_i)
        if m:
            if self.edge_i.min() < 0 or max(self.edge_i.max(), self.edge_j.max()) >= self.n_vertices:
                raise ValueError("edge endpoint out of range")
            if np.any(self.edge_i == self.edge_j):
                raise ValueError("self-loops are not allowed")
            terminal_pair = ((self.edge_i == self.w1) & (self.edge_j == self.w2)) | \
                            ((self.edge_i == self.w2) & (self.edge_j == self.w1))
            if np.any(terminal_pair):
                raise ValueError("direct edge between the two terminals is not allowed")
            if not np.all(np.isfinite(self.conductance)) or np.any(self.conductance <= 0):
                raise ValueError("conductances must be finite and strictly positive")

    @classmethod
    def from_edges(cls, n_vertices: int, w1: int, w2: int,
                   triples: Iterable[tuple]) -> "CircuitGraph":
        triples = list(triples)
        if triples:
            i, j, c = zip(*triples)
        else:
            i, j, c = [], [], []
        return cls(n_vertices, w1, w2, np.array(i, dtype=np.int64),
                   np.array(j, dtype=np.int64), np.array(c, dtype=float))

    @property
    def n_edges(self) -> int:
        return len(self.edge_i)

    @property
    def n_internal(self) -> int:
        return self.n_vertices - 2

    def edges(self) -> Iterator[tuple[int, int, float]]:
        for i, j, c in zip(self.edge_i, self.edge_j, self.conductance):
            yield int(i), int(j), float(c)

    def merged(self) -> "CircuitGraph":
        """Sum parallel edges and order edges by (min id, max id)."""
        if self.n_edges == 0:
            return self
        lo = np.minimum(self.edge_i, self.edge_j)
        hi = np.maximum(self.edge_i, self.edge_j)
        keys = lo * self.n_vertices + hi
        uniq, inverse = np.unique(keys, return_inverse=True)
        c = np.zeros(len(uniq))
        np.add.at(c, inverse, self.conductance)
        return CircuitGraph(self.n_vertices, self.w1, self.w2,
                            uniq // self.n_vertices, uniq % self.n_vertices, c)

    def adjacency_sparse(self) -> sp.csr_matrix:
        """Symmetric weighted adjacency as a sparse matrix."""
        n = self.n_vertices
        data = np.concatenate([self.conductance, self.conductance])
        rows = np.concatenate([self.edge_i, self.edge_j])
        cols = np.concatenate([self.edge_j, self.edge_i])
        return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


@dataclass(eq=False)
class GraphMatrices:
    """Dense matrix bundle for small-graph analysis.

    adjacency: symmetric weighted (n, n); incidence: 0/1 (n, m) with two
    ones per column; conductance: diagonal (m, m); degree: diagonal (n, n)
    of weighted vertex degrees.
    """

    adjacency: np.ndarray
    incidence: np.ndarray
    conductance: np.ndarray
    degree: np.ndarray


def overlap_measure(depth: float, law: str):
    """Map overlap depth to the conductance measure for the given law."""
    if law == "linear":
        return depth
    if law == "hertz":
        return depth ** 1.5
    raise ValueError(f"unknown contact law {law!r}")


def conductance_from_contact(contact: Contact, cal: CalibrationConstants,
                             boundary_shape: Optional[str] = None) -> float:
    """Conductance of a contact: kind constant times the overlap measure.

    Boundary contacts use the touching inclusion's shape constant, so the
    caller must say whether that inclusion is a sphere or a cylinder.
    """
    if contact.overlap_depth <= 0:
        raise ValueError("contact must have positive overlap depth")
    if contact.kind == "sphere-sphere":
        k = cal.k_ss
    elif contact.kind == "sphere-cylinder":
        k = cal.k_sc
    elif contact.kind == "cylinder-cylinder":
        k = cal.k_cc
    elif contact.kind == "inclusion-boundary":
        if boundary_shape == "sphere":
            k = cal.k_boundary_s
        elif boundary_shape == "cylinder":
            k = cal.k_boundary_c
        else:
            raise ValueError("boundary contact needs boundary_shape='sphere'|'cylinder'")
    else:
        raise ValueError(f"unknown contact kind {contact.kind!r}")
    return k * overlap_measure(contact.overlap_depth, cal.contact_law)


# ---------------------------------------------------------------------------
# terminal-face bookkeeping
# ---------------------------------------------------------------------------

def resolve_terminals(spec: Union[str, Sequence[str]]) -> tuple[str, str]:
    """Normalise a terminal specification to an ordered face pair.

    An axis name ('x', 'y', 'z') means the opposite-face pair along that
    axis (w1 at the negative face).  An explicit pair of distinct faces is
    passed through; faces on different axes make a neighbouring pair.
    """
    if isinstance(spec, str):
        if spec in ("x", "y", "z"):
            return spec + "-", spec + "+"
        raise ValueError(f"unknown terminal axis {spec!r}")
    f1, f2 = spec
    if f1 not in FACES or f2 not in FACES or f1 == f2:
        raise ValueError(f"invalid terminal face pair {spec!r}")
    return f1, f2


def terminal_wrap_mask(f1: str, f2: str) -> tuple[bool, bool, bool]:
    """Periodic wrapping stays on except across the terminal-face axes."""
    wrap = [True, True, True]
    wrap[face_axis(f1)] = False
    wrap[face_axis(f2)] = False
    return tuple(wrap)


# ---------------------------------------------------------------------------
# graph construction from a sample
# ---------------------------------------------------------------------------

def build_contact_graph(sample, terminals, cal: CalibrationConstants,
                        central_fraction: float = DEFAULT_CENTRAL_FRACTION,
                        contacts: ContactTable = None) -> CircuitGraph:
    """Weighted contact graph of a sample for one terminal-face pair.

    Inclusion-inclusion contacts use periodic images on all axes except
    those cut by the terminal faces.  For a neighbouring-face pair only
    boundary contacts inside the central zone of each face count; opposite
    pairs use the whole face.  Parallel contacts (distinct periodic images
    of the same pair) are merged by conductance summation; edges come out
    sorted by (min id, max id) with the terminals as the last two ids.

    A precomputed ``contacts`` table (full periodic wrap) may be shared
    across directions: a tabulated contact belongs to this direction
    exactly when its image offset vanishes along the cut axes, and its
    depth is identical either way.
    """
    f1, f2 = resolve_terminals(terminals)
    neighbouring = face_axis(f1) != face_axis(f2)
    zone = central_fraction if neighbouring else None
    wrap = terminal_wrap_mask(f1, f2)
    cut_axes = [a for a in range(3) if not wrap[a]]

    cell: UnitCell = sample.cell
    inclusions: Sequence[Inclusion] = sample.inclusions
    n = len(inclusions)
    w1, w2 = n, n + 1

    if contacts is None:
        contacts = contact_table(inclusions, cell)

    kind_const = np.array([cal.k_ss, cal.k_sc, cal.k_cc])
    keep = np.all(contacts.offset[:, cut_axes] == 0, axis=1) \
        if contacts.pair_i.size else np.zeros(0, dtype=bool)
    ei = list(contacts.pair_i[keep])
    ej = list(contacts.pair_j[keep])
    ec = list(kind_const[contacts.kind[keep]]
              * overlap_measure(contacts.depth[keep], cal.contact_law))

    # pairs too large for the single-image shortcut: enumerate images
    for a, b in contacts.oversize_pairs:
        for c in pair_contacts(inclusions[a], inclusions[b], cell, wrap, (a, b)):
            ei.append(a)
            ej.append(b)
            ec.append(kind_const[_KIND_CODE[c.kind]]
                      * overlap_measure(c.overlap_depth, cal.contact_law))

    # inclusion-terminal contacts
    for k, inc in enumerate(inclusions):
        shape_const = cal.k_boundary_s if isinstance(inc, Sphere) else cal.k_boundary_c
        for face, w in ((f1, w1), (f2, w2)):
            c = boundary_contact(inc, face, cell, k, central_fraction=zone)
            if c is not None:
                ei.append(k)
                ej.append(w)
                ec.append(shape_const * overlap_measure(c.overlap_depth,
                                                        cal.contact_law))

    g = CircuitGraph(n + 2, w1, w2, np.array(ei, dtype=np.int64),
                     np.array(ej, dtype=np.int64), np.array(ec, dtype=float))
    return g.merged()


_KIND_CODE = {"sphere-sphere": 0, "sphere-cylinder": 1, "cylinder-cylinder": 2}


# ---------------------------------------------------------------------------
# matrices and percolation
# ---------------------------------------------------------------------------

def graph_matrices(g: CircuitGraph) -> GraphMatrices:
    """Dense adjacency/incidence/conductance/degree bundle for a graph.

    Satisfies adjacency == incidence @ conductance @ incidence.T - degree.
    Intended for small graphs; memory grows as n*m.
    """
    n, m = g.n_vertices, g.n_edges
    A = np.zeros((n, m))
    if m:
        A[g.edge_i, np.arange(m)] = 1.0
        A[g.edge_j, np.arange(m)] = 1.0
    C = np.diag(g.conductance)
    D = np.diag(A @ g.conductance if m else np.zeros(n))
    adj = np.zeros((n, n))
    if m:
        np.add.at(adj, (g.edge_i, g.edge_j), g.conductance)
        np.add.at(adj, (g.edge_j, g.edge_i), g.conductance)
    return GraphMatrices(adj, A, C, D)


def component_labels(g: CircuitGraph) -> np.ndarray:
    """Connected-component label per vertex (terminals included)."""
    _, labels = connected_components(g.adjacency_sparse(), directed=False)
    return labels


def percolates(g: CircuitGraph) -> bool:
    """True iff the two terminals lie in the same connected component."""
    if g.n_edges == 0:
        return False
    labels = component_labels(g)
    return bool(labels[g.w1] == labels[g.w2])


# ---------------------------------------------------------------------------
# interchange format
# ---------------------------------------------------------------------------

GRAPH_MAGIC = "# condnet graph v1"


def save_graph(g: CircuitGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_graph(g))


def format_graph(g: CircuitGraph) -> str:
    out = io.StringIO()
    out.write(GRAPH_MAGIC + "\n")
    out.write(f"vertices {g.n_vertices}\n")
    out.write(f"terminals {g.w1} {g.w2}\n")
    out.write(f"edges {g.n_edges}\n")
    for i, j, c in g.edges():
        out.write(f"{i} {j} {c:.17g}\n")
    return out.getvalue()


def load_graph(path) -> CircuitGraph:
    """Read a graph document; edge order is preserved exactly as written."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_graph(fh.read())


def parse_graph(text: str) -> CircuitGraph:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    try:
        if not lines[0].startswith("vertices"):
            raise FormatError("graph document must start with a 'vertices' line")
        n = int(lines[0].split()[1])
        w1, w2 = (int(t) for t in lines[1].split()[1:3])
        m = int(lines[2].split()[1])
        triples = []
        for ln in lines[3:3 + m]:
            i, j, c = ln.split()
            triples.append((int(i), int(j), float(c)))
        if len(triples) != m:
            raise FormatError(f"expected {m} edges, found {len(triples)}")
    except (IndexError, ValueError) as exc:
        raise FormatError(f"malformed graph document: {exc}") from exc
    return CircuitGraph.from_edges(n, w1, w2, triples)
