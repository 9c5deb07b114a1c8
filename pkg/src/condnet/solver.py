"""Ohm-Kirchhoff circuit solves and effective conductivity tensors.

Two equivalent formulations are implemented and cross-checked by the test
suite: the full square system in vertex potentials plus edge currents, and
its reduction to a weighted-graph-Laplacian system in the potentials alone.
Components not connected to either terminal carry no current; their
potentials are undefined up to a constant and are reported as absent
rather than as arbitrary numbers.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SingularSystem
from .geometry import contact_table
from .graph import (
    CalibrationConstants,
    CircuitGraph,
    build_contact_graph,
    component_labels,
    DEFAULT_CENTRAL_FRACTION,
)

#: boundary potentials pinned at the terminals
U_W1 = 1.0
U_W2 = 0.0

#: above this edge count the reduced system is solved iteratively
DIRECT_EDGE_LIMIT = 100_000

#: below this unknown count dense LAPACK beats sparse factorisation
_DENSE_LIMIT = 400

_RESIDUAL_TOL = 1e-10


@dataclass(eq=False)
class LinearSystem:
    """Assembled full system: unknowns [potentials..., currents...].

    Rows: one Ohm row per kept edge, one Kirchhoff row per kept internal
    vertex, two boundary rows.  Vertices and edges of components touching
    neither terminal are removed before assembly; ``vertex_keep`` and
    ``edge_keep`` map back to the original graph.
    """

    graph: CircuitGraph
    matrix: sp.csr_matrix
    rhs: np.ndarray
    vertex_keep: np.ndarray   # original vertex ids, in local order
    edge_keep: np.ndarray     # original edge indices, in local order
    n_ohm: int
    n_kirchhoff: int
    n_boundary: int

    @property
    def n_unknowns(self) -> int:
        return self.matrix.shape[1]

    @property
    def n_equations(self) -> int:
        return self.matrix.shape[0]


@dataclass(eq=False)
class CircuitSolution:
    """Potentials per vertex, currents per edge, and the total current.

    ``floating`` marks vertices whose potential is undefined (not connected
    to either terminal); their entries in ``potentials`` are placeholders
    and are skipped by ``potential_of`` and the text dump.  Edge currents
    are oriented from edge_i to edge_j; ``total_current`` is the current
    leaving the w1 terminal.
    """

    potentials: np.ndarray
    floating: np.ndarray
    currents: np.ndarray
    total_current: float

    def potential_of(self, vertex: int) -> Optional[float]:
        if self.floating[vertex]:
            return None
        return float(self.potentials[vertex])


def _terminal_components(g: CircuitGraph) -> tuple[np.ndarray, np.ndarray, bool]:
    """Masks of vertices/edges connected to a terminal, plus percolation."""
    labels = component_labels(g)
    keep_v = (labels == labels[g.w1]) | (labels == labels[g.w2])
    keep_e = keep_v[g.edge_i]  # an edge never straddles components
    return keep_v, keep_e, bool(labels[g.w1] == labels[g.w2])


def _pinned_solution(g: CircuitGraph) -> CircuitSolution:
    """Exact solution when the terminals are disconnected.

    Every vertex of a terminal's component sits at that terminal's pinned
    potential, so all currents vanish identically; no linear solve is
    needed (and none could improve on the exact constants).
    """
    labels = component_labels(g)
    potentials = np.zeros(g.n_vertices)
    floating = np.ones(g.n_vertices, dtype=bool)
    for w, u_w in ((g.w1, U_W1), (g.w2, U_W2)):
        mask = labels == labels[w]
        potentials[mask] = u_w
        floating[mask] = False
    return CircuitSolution(potentials, floating, np.zeros(g.n_edges), 0.0)


def assemble_system(g: CircuitGraph) -> LinearSystem:
    """Build the square Ohm+Kirchhoff+boundary system for a graph.

    For every kept edge k between vertices i and j the Ohm row reads
    I_k - c_k (u_i - u_j) = 0; every kept internal vertex contributes a
    vanishing signed current sum; the two boundary rows pin u_w1 = 1 and
    u_w2 = 0.  Unknowns and equations always balance: one per kept vertex
    plus one per kept edge.
    """
    keep_v, keep_e, _ = _terminal_components(g)
    vertex_keep = np.flatnonzero(keep_v)
    edge_keep = np.flatnonzero(keep_e)
    n_loc = len(vertex_keep)
    m_loc = len(edge_keep)

    local = -np.ones(g.n_vertices, dtype=np.int64)
    local[vertex_keep] = np.arange(n_loc)
    li = local[g.edge_i[edge_keep]]
    lj = local[g.edge_j[edge_keep]]
    c = g.conductance[edge_keep]

    rows, cols, vals = [], [], []

    def put(r, col, v):
        rows.append(r)
        cols.append(col)
        vals.append(v)

    # Ohm rows: -c u_i + c u_j + I_k = 0
    arange_m = np.arange(m_loc)
    rows.extend(arange_m)
    cols.extend(li)
    vals.extend(-c)
    rows.extend(arange_m)
    cols.extend(lj)
    vals.extend(c)
    rows.extend(arange_m)
    cols.extend(n_loc + arange_m)
    vals.extend(np.ones(m_loc))

    # Kirchhoff rows for kept internal vertices: sum of signed currents = 0
    internal = [v for v in range(n_loc) if vertex_keep[v] not in (g.w1, g.w2)]
    row_of_vertex = -np.ones(n_loc, dtype=np.int64)
    for r, v in enumerate(internal):
        row_of_vertex[v] = m_loc + r
    for k in range(m_loc):
        if row_of_vertex[li[k]] >= 0:
            put(row_of_vertex[li[k]], n_loc + k, 1.0)   # current leaves i
        if row_of_vertex[lj[k]] >= 0:
            put(row_of_vertex[lj[k]], n_loc + k, -1.0)  # current enters j
    n_kirch = len(internal)

    # boundary rows
    rhs = np.zeros(m_loc + n_kirch + 2)
    put(m_loc + n_kirch, local[g.w1], 1.0)
    rhs[m_loc + n_kirch] = U_W1
    put(m_loc + n_kirch + 1, local[g.w2], 1.0)
    rhs[m_loc + n_kirch + 1] = U_W2

    size = n_loc + m_loc
    matrix = sp.csr_matrix(
        (np.asarray(vals, dtype=float), (np.asarray(rows), np.asarray(cols))),
        shape=(size, size))
    return LinearSystem(g, matrix, rhs, vertex_keep, edge_keep,
                        n_ohm=m_loc, n_kirchhoff=n_kirch, n_boundary=2)


def solve_system(system: LinearSystem) -> CircuitSolution:
    """Directly solve the full system and package the circuit solution."""
    _, _, percolating = _terminal_components(system.graph)
    if not percolating:
        return _pinned_solution(system.graph)
    A, b = system.matrix, system.rhs
    size = A.shape[0]
    try:
        if size <= _DENSE_LIMIT:
            x = np.linalg.solve(A.toarray(), b)
        else:
            x = spla.spsolve(A.tocsc(), b)
    except (np.linalg.LinAlgError, RuntimeError) as exc:
        raise SingularSystem(f"direct solve failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystem("direct solve produced non-finite values")

    resid = np.max(np.abs(A @ x - b)) if size else 0.0
    scale = max(1.0, float(np.max(np.abs(x))) if size else 0.0)
    if resid > _RESIDUAL_TOL * scale:
        raise SingularSystem(f"residual {resid:.3e} exceeds tolerance")

    g = system.graph
    n_loc = len(system.vertex_keep)
    potentials = np.zeros(g.n_vertices)
    floating = np.ones(g.n_vertices, dtype=bool)
    potentials[system.vertex_keep] = x[:n_loc]
    floating[system.vertex_keep] = False
    currents = np.zeros(g.n_edges)
    currents[system.edge_keep] = x[n_loc:]
    total = _terminal_current(g, potentials, floating, g.w1)
    return CircuitSolution(potentials, floating, currents, total)


def _terminal_current(g: CircuitGraph, potentials, floating, w) -> float:
    """Signed current leaving terminal w, from potentials and Ohm's law."""
    total = 0.0
    at_i = (g.edge_i == w) & ~floating[g.edge_j]
    at_j = (g.edge_j == w) & ~floating[g.edge_i]
    if np.any(at_i):
        total += float(np.sum(g.conductance[at_i]
                              * (potentials[w] - potentials[g.edge_j[at_i]])))
    if np.any(at_j):
        total += float(np.sum(g.conductance[at_j]
                              * (potentials[w] - potentials[g.edge_i[at_j]])))
    return total


def solve_reduced(g: CircuitGraph, method: str = "direct",
                  cg_rtol: float = 1e-12) -> CircuitSolution:
    """Solve via the weighted-Laplacian reduction in potentials alone.

    Eliminating the currents from the full system leaves, for every kept
    internal vertex, sum_j c_ij (u_i - u_j) = 0 with the terminal
    potentials pinned.  ``method`` is 'direct' (dense or sparse LU) or
    'cg' (conjugate gradient with Jacobi preconditioning; the reduced
    matrix is symmetric positive definite).
    """
    keep_v, keep_e, percolating = _terminal_components(g)
    if not percolating:
        return _pinned_solution(g)
    vertex_keep = np.flatnonzero(keep_v)
    edge_keep = np.flatnonzero(keep_e)

    inner = vertex_keep[(vertex_keep != g.w1) & (vertex_keep != g.w2)]
    n_int = len(inner)
    local = -np.ones(g.n_vertices, dtype=np.int64)
    local[inner] = np.arange(n_int)

    potentials = np.zeros(g.n_vertices)
    floating = np.ones(g.n_vertices, dtype=bool)
    floating[vertex_keep] = False
    potentials[g.w1] = U_W1
    potentials[g.w2] = U_W2

    if n_int:
        ei = g.edge_i[edge_keep]
        ej = g.edge_j[edge_keep]
        c = g.conductance[edge_keep]
        rows, cols, vals = [], [], []
        rhs = np.zeros(n_int)
        li, lj = local[ei], local[ej]
        both = (li >= 0) & (lj >= 0)
        rows.extend(li[both]); cols.extend(lj[both]); vals.extend(-c[both])
        rows.extend(lj[both]); cols.extend(li[both]); vals.extend(-c[both])
        # diagonal accumulates every incident conductance
        diag = np.zeros(n_int)
        np.add.at(diag, li[li >= 0], c[li >= 0])
        np.add.at(diag, lj[lj >= 0], c[lj >= 0])
        rows.extend(range(n_int)); cols.extend(range(n_int)); vals.extend(diag)
        # pinned neighbours feed the right-hand side
        for w, u_w in ((g.w1, U_W1), (g.w2, U_W2)):
            if u_w == 0.0:
                continue
            sel_i = (ei == w) & (lj >= 0)
            np.add.at(rhs, lj[sel_i], c[sel_i] * u_w)
            sel_j = (ej == w) & (li >= 0)
            np.add.at(rhs, li[sel_j], c[sel_j] * u_w)
        lap = sp.csr_matrix((np.asarray(vals, dtype=float),
                             (np.asarray(rows), np.asarray(cols))),
                            shape=(n_int, n_int))
        u_int = _solve_spd(lap, rhs, method, cg_rtol)
        if not np.all(np.isfinite(u_int)):
            raise SingularSystem("reduced solve produced non-finite potentials")
        potentials[inner] = u_int

    currents = np.zeros(g.n_edges)
    ke = edge_keep
    currents[ke] = g.conductance[ke] * (potentials[g.edge_i[ke]] - potentials[g.edge_j[ke]])
    total = _terminal_current(g, potentials, floating, g.w1)
    return CircuitSolution(potentials, floating, currents, total)


def _solve_spd(lap: sp.csr_matrix, rhs: np.ndarray, method: str, cg_rtol: float):
    n = lap.shape[0]
    if method == "direct":
        try:
            if n <= _DENSE_LIMIT:
                return np.linalg.solve(lap.toarray(), rhs)
            return spla.splu(lap.tocsc()).solve(rhs)
        except (np.linalg.LinAlgError, RuntimeError) as exc:
            raise SingularSystem(f"Laplacian factorisation failed: {exc}") from exc
    if method == "cg":
        diag = lap.diagonal()
        if np.any(diag <= 0):
            raise SingularSystem("non-positive diagonal in reduced system")
        precond = spla.LinearOperator((n, n), matvec=lambda v: v / diag)
        x, info = spla.cg(lap, rhs, rtol=cg_rtol, atol=0.0,
                          maxiter=max(1000, 20 * n), M=precond)
        if info != 0:
            raise SingularSystem(f"conjugate gradient did not converge (info={info})")
        return x
    raise ValueError(f"unknown method {method!r}")


def solve(g: CircuitGraph, method: str = "auto") -> CircuitSolution:
    """Solve a graph, choosing the formulation and linear algebra by size."""
    if method == "auto":
        method = "direct" if g.n_edges <= DIRECT_EDGE_LIMIT else "cg"
    if method == "full":
        return solve_system(assemble_system(g))
    return solve_reduced(g, method=method)


def effective_conductance(g: CircuitGraph, method: str = "auto",
                          full_conductor_reference: float = 1.0) -> float:
    """Total current under unit potential difference, over the reference.

    Returns exactly 0 for a non-percolating graph (the solve degenerates
    to the pinned constants with identically zero currents).  The
    reference is the conductance of a fully conducting cell in the same
    units (default 1, i.e. raw circuit units).
    """
    sol = solve(g, method=method)
    return sol.total_current / full_conductor_reference


@dataclass(eq=False)
class ConductivityTensor:
    """Symmetric 3x3 effective conductivity in normalised units."""

    L: np.ndarray

    def __post_init__(self):
        self.L = np.asarray(self.L, dtype=float)
        if self.L.shape != (3, 3):
            raise ValueError("conductivity tensor must be 3x3")

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.L).copy()

    @property
    def mean_diagonal(self) -> float:
        return float(np.trace(self.L) / 3.0)


#: face pairs per tensor entry: diagonals from opposite faces, off-diagonals
#: from neighbouring faces restricted to their central zones
TENSOR_TERMINALS = {
    (0, 0): "x", (1, 1): "y", (2, 2): "z",
    (0, 1): ("x-", "y-"), (0, 2): ("x-", "z-"), (1, 2): ("y-", "z-"),
}


def conductivity_tensor(sample, cal: CalibrationConstants,
                        central_fraction: float = DEFAULT_CENTRAL_FRACTION,
                        full_conductor_reference: float = 1.0,
                        method: str = "auto") -> ConductivityTensor:
    """Assemble the full 3x3 tensor from six terminal-pair solves.

    Each off-diagonal entry is computed once from its neighbouring-face
    pair and mirrored, so the tensor is symmetric by construction.  The
    pairwise contact table is computed once and shared by all six
    direction builds.
    """
    contacts = contact_table(sample.inclusions, sample.cell)
    L = np.zeros((3, 3))
    for (a, b), terminals in TENSOR_TERMINALS.items():
        g = build_contact_graph(sample, terminals, cal, central_fraction,
                                contacts=contacts)
        val = effective_conductance(g, method=method,
                                    full_conductor_reference=full_conductor_reference)
        L[a, b] = val
        L[b, a] = val
    return ConductivityTensor(L)


# ---------------------------------------------------------------------------
# debugging dump
# ---------------------------------------------------------------------------

SOLUTION_MAGIC = "# condnet solution v1"


def format_solution(g: CircuitGraph, sol: CircuitSolution) -> str:
    """Structured-text dump: potentials per vertex, currents per edge.

    Floating vertices are listed with the word 'floating' in place of a
    number, so no undefined potential ever appears as a value.
    """
    out = io.StringIO()
    out.write(SOLUTION_MAGIC + "\n")
    out.write(f"total_current {sol.total_current:.17g}\n")
    out.write(f"vertices {g.n_vertices}\n")
    for v in range(g.n_vertices):
        u = sol.potential_of(v)
        if u is None:
            out.write(f"{v} floating\n")
        else:
            out.write(f"{v} {u:.17g}\n")
    out.write(f"edges {g.n_edges}\n")
    for k, (i, j, _) in enumerate(g.edges()):
        out.write(f"{i} {j} {sol.currents[k]:.17g}\n")
    return out.getvalue()


def save_solution(g: CircuitGraph, sol: CircuitSolution, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_solution(g, sol))
