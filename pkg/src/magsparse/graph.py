"""U(1)-connection graphs and their Laplacians.

Each stored edge ``e = (u, v)`` carries a weight ``w_e > 0`` and an angle
``theta(uv)`` in ``[0, 2*pi)``.  Traversing the edge from ``v`` to ``u`` sees
the angle ``-theta(uv)``, i.e. the phase ``exp(-1j*theta)`` is conjugated
under orientation flip.

Sign convention: the magnetic Laplacian has off-diagonal entries
``Delta[u, v] = -w_uv * exp(1j * theta(uv))`` so that, for ``f(u) = exp(1j*h(u))``,
``f^* Delta f = sum_uv w_uv |f(u) - exp(1j*theta(uv)) f(v)|^2`` and a
consistent connection ``theta(uv) = h(u) - h(v)`` has ``f`` in its kernel.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

TWO_PI = 2.0 * np.pi


class GraphFormatError(ValueError):
    """Raised when an edge list does not describe a simple weighted graph."""


def wrap_angle(theta):
    """Map angles to ``[0, 2*pi)``."""
    out = np.mod(theta, TWO_PI)
    # np.mod can return exactly 2*pi for tiny negative inputs
    return np.where(out >= TWO_PI, 0.0, out)


def centered_angle(theta):
    """Map angles to ``(-pi, pi]``."""
    out = np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), TWO_PI)
    return out


class ConnectionGraph:
    """Weighted simple undirected graph whose oriented edges carry phases.

    Parameters
    ----------
    n : int
        Number of nodes, labelled ``0..n-1``.
    heads, tails : array-like of int
        Stored orientation of each edge ``e = (heads[e], tails[e])``.
    weights : array-like of float, optional
        Positive edge weights (default all ones).
    angles : array-like of float, optional
        Edge angles ``theta(head, tail)`` in radians (default all zeros);
        reduced modulo ``2*pi``.

    Instances are immutable; all arrays are exposed read-only.
    """

    def __init__(self, n, heads, tails, weights=None, angles=None):
        n = int(n)
        if n < 1:
            raise GraphFormatError("a graph needs at least one node")
        heads = np.asarray(heads, dtype=np.int64).ravel()
        tails = np.asarray(tails, dtype=np.int64).ravel()
        if heads.shape != tails.shape:
            raise GraphFormatError("heads and tails differ in length")
        m = heads.size
        weights = np.ones(m) if weights is None else np.asarray(weights, dtype=float).ravel()
        angles = np.zeros(m) if angles is None else np.asarray(angles, dtype=float).ravel()
        if weights.size != m or angles.size != m:
            raise GraphFormatError("weights/angles must have one entry per edge")
        if m:
            if heads.min() < 0 or tails.min() < 0 or max(heads.max(), tails.max()) >= n:
                raise GraphFormatError("node id out of range")
            if np.any(heads == tails):
                e = int(np.flatnonzero(heads == tails)[0])
                raise GraphFormatError(f"self-loop at edge {e} (node {heads[e]})")
            if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
                raise GraphFormatError("edge weights must be finite and strictly positive")
            if not np.all(np.isfinite(angles)):
                raise GraphFormatError("edge angles must be finite")
            lo = np.minimum(heads, tails)
            hi = np.maximum(heads, tails)
            key = lo * n + hi
            uniq, first, counts = np.unique(key, return_index=True, return_counts=True)
            if np.any(counts > 1):
                dup = uniq[counts > 1][0]
                ids = np.flatnonzero(key == dup)
                raise GraphFormatError(
                    f"duplicate edge {{{dup // n}, {dup % n}}} at edges {ids.tolist()}"
                )

        self.n = n
        self.heads = heads
        self.tails = tails
        self.weights = weights
        self.angles = wrap_angle(angles)
        for arr in (self.heads, self.tails, self.weights, self.angles):
            arr.setflags(write=False)
        self._build_adjacency()

    def _build_adjacency(self):
        n, m = self.n, self.m
        # each undirected edge appears twice: once leaving its head, once leaving its tail
        src = np.concatenate([self.heads, self.tails])
        dst = np.concatenate([self.tails, self.heads])
        eid = np.concatenate([np.arange(m), np.arange(m)])
        sgn = np.concatenate([np.ones(m, dtype=np.int8), -np.ones(m, dtype=np.int8)])
        order = np.lexsort((dst, src))
        counts = np.bincount(src, minlength=n)
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.neighbors = dst[order].astype(np.int64)
        self.edge_of = eid[order].astype(np.int64)
        self.direction = sgn[order]
        # angle seen when leaving the slot's source node along the edge
        self.slot_angles = self.angles[self.edge_of] * self.direction
        for arr in (self.indptr, self.neighbors, self.edge_of, self.direction, self.slot_angles):
            arr.setflags(write=False)

    @property
    def m(self):
        return int(self.heads.size)

    def __repr__(self):
        return f"ConnectionGraph(n={self.n}, m={self.m})"

    def __eq__(self, other):
        if not isinstance(other, ConnectionGraph):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.heads, other.heads)
            and np.array_equal(self.tails, other.tails)
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.angles, other.angles)
        )

    __hash__ = None

    # -- queries ---------------------------------------------------------

    @cached_property
    def degrees(self):
        """Number of neighbours of each node (unweighted degree)."""
        return np.diff(self.indptr)

    @cached_property
    def weighted_degrees(self):
        return np.bincount(self.heads, self.weights, self.n) + np.bincount(
            self.tails, self.weights, self.n
        )

    @cached_property
    def _components(self):
        adj = sp.csr_matrix(
            (np.ones(2 * self.m), self.neighbors, self.indptr), shape=(self.n, self.n)
        )
        return connected_components(adj, directed=False)

    @property
    def n_components(self):
        return int(self._components[0])

    @property
    def component_labels(self):
        return self._components[1]

    @property
    def is_connected(self):
        return self.n_components == 1

    @cached_property
    def consistent(self):
        """Whether the connection is trivializable on every component."""
        return is_consistent(self)

    @cached_property
    def every_component_inconsistent(self):
        """Whether each component carries an inconsistent cycle (``Delta`` nonsingular)."""
        return bool(np.all(inconsistent_components(self)))

    @property
    def has_unit_weights(self):
        return bool(np.all(self.weights == 1.0))

    def edge_id(self, u, v):
        """Id of the edge joining ``u`` and ``v`` (either orientation)."""
        lo, hi = self.indptr[u], self.indptr[u + 1]
        k = lo + np.searchsorted(self.neighbors[lo:hi], v)
        if k < hi and self.neighbors[k] == v:
            return int(self.edge_of[k])
        raise KeyError(f"no edge between {u} and {v}")

    def angle(self, u, v):
        """Oriented angle ``theta(uv)`` in ``[0, 2*pi)``."""
        e = self.edge_id(u, v)
        a = self.angles[e] if self.heads[e] == u else -self.angles[e]
        return float(wrap_angle(a))

    def phase(self, u, v):
        """Phase ``exp(-1j*theta(uv))`` carried by the oriented edge ``uv``."""
        return np.exp(-1j * self.angle(u, v))

    # -- derived graphs ---------------------------------------------------

    def with_weights(self, weights):
        return ConnectionGraph(self.n, self.heads, self.tails, weights, self.angles)

    def with_unit_weights(self):
        return self.with_weights(np.ones(self.m))

    def with_angles(self, angles):
        return ConnectionGraph(self.n, self.heads, self.tails, self.weights, angles)

    def trivialized(self):
        """Same graph with the trivial connection (all angles zero)."""
        return self.with_angles(np.zeros(self.m))

    def subgraph(self, edge_ids, weights=None):
        """Spanning subgraph on the given edges (same node set)."""
        edge_ids = np.asarray(edge_ids, dtype=np.int64)
        w = self.weights[edge_ids] if weights is None else weights
        return ConnectionGraph(
            self.n, self.heads[edge_ids], self.tails[edge_ids], w, self.angles[edge_ids]
        )

    def largest_component(self):
        """Induced subgraph on the largest connected component, relabelled."""
        labels = self.component_labels
        big = np.argmax(np.bincount(labels))
        keep = labels == big
        new_id = -np.ones(self.n, dtype=np.int64)
        new_id[keep] = np.arange(keep.sum())
        ek = keep[self.heads]
        return ConnectionGraph(
            int(keep.sum()),
            new_id[self.heads[ek]],
            new_id[self.tails[ek]],
            self.weights[ek],
            self.angles[ek],
        )

    def to_array(self):
        """``(m, 4)`` array of ``u, v, weight, angle`` rows."""
        return np.column_stack([self.heads, self.tails, self.weights, self.angles])

    @classmethod
    def from_array(cls, edges, n=None):
        edges = np.asarray(edges, dtype=float)
        if edges.ndim != 2 or edges.shape[1] not in (2, 3, 4):
            raise GraphFormatError("edge array must have 2, 3 or 4 columns")
        uv = edges[:, :2]
        if not np.all(uv == np.round(uv)):
            raise GraphFormatError("node ids must be integers")
        uv = uv.astype(np.int64)
        if n is None:
            n = int(uv.max()) + 1 if uv.size else 1
        w = edges[:, 2] if edges.shape[1] > 2 else None
        a = edges[:, 3] if edges.shape[1] > 3 else None
        return cls(n, uv[:, 0], uv[:, 1], w, a)


# -- Laplacian assembly ---------------------------------------------------


@dataclass(frozen=True)
class MagneticLaplacian:
    """Hermitian Laplacian ``Delta`` (CSR, both triangles stored) and a shift ``q``.

    ``matrix`` is ``Delta`` itself; ``regularized`` gives ``Delta + q I``.
    """

    matrix: sp.csr_matrix
    q: float = 0.0

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def regularized(self):
        if self.q == 0:
            return self.matrix
        return (self.matrix + self.q * sp.identity(self.n, format="csr")).tocsr()

    def toarray(self, regularized=False):
        return (self.regularized if regularized else self.matrix).toarray()

    def with_q(self, q):
        return MagneticLaplacian(self.matrix, float(q))


def _assemble(n, heads, tails, weights, phases):
    # off-diagonal entries Delta[u, v] = -w * phase, Delta[v, u] = conj
    diag = np.bincount(heads, weights, n) + np.bincount(tails, weights, n)
    rows = np.concatenate([heads, tails, np.arange(n)])
    cols = np.concatenate([tails, heads, np.arange(n)])
    vals = np.concatenate([-weights * phases, -weights * np.conj(phases), diag.astype(phases.dtype)])
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def magnetic_laplacian(g: ConnectionGraph, q: float = 0.0, weights=None) -> MagneticLaplacian:
    """Assemble ``Delta = B^* W B`` of ``g``; ``q`` is kept alongside.

    ``weights`` overrides the graph's edge weights (used by sparsifiers).
    """
    if q < 0:
        raise ValueError("q must be nonnegative")
    w = g.weights if weights is None else np.asarray(weights, dtype=float)
    phases = np.exp(1j * g.angles)
    return MagneticLaplacian(_assemble(g.n, g.heads, g.tails, w, phases), float(q))


def combinatorial_laplacian(g: ConnectionGraph, q: float = 0.0, weights=None) -> MagneticLaplacian:
    """Assemble the real Laplacian ``Lambda = B0^T W B0`` (angles ignored)."""
    if q < 0:
        raise ValueError("q must be nonnegative")
    w = g.weights if weights is None else np.asarray(weights, dtype=float)
    return MagneticLaplacian(_assemble(g.n, g.heads, g.tails, w, np.ones(g.m)), float(q))


def incidence(g: ConnectionGraph) -> sp.csr_matrix:
    """Twisted incidence ``B`` (m x n, complex).

    Row ``e = uv`` holds ``exp(-1j*theta/2)`` at ``u`` and ``-exp(1j*theta/2)``
    at ``v``, so that ``B^* W B`` is :func:`magnetic_laplacian`.
    """
    m = g.m
    half = 0.5 * g.angles
    rows = np.concatenate([np.arange(m), np.arange(m)])
    cols = np.concatenate([g.heads, g.tails])
    vals = np.concatenate([np.exp(-1j * half), -np.exp(1j * half)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, g.n))


def oriented_incidence(g: ConnectionGraph) -> sp.csr_matrix:
    """Real oriented incidence ``B0``: +1 at the head, -1 at the tail."""
    m = g.m
    rows = np.concatenate([np.arange(m), np.arange(m)])
    cols = np.concatenate([g.heads, g.tails])
    vals = np.concatenate([np.ones(m), -np.ones(m)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, g.n))


# -- cycles -----------------------------------------------------------------


def holonomy(g: ConnectionGraph, cycle):
    """Holonomy angle and consistency weight of an oriented cycle.

    ``cycle`` is a sequence of distinct nodes ``v0, v1, ..., v_{k-1}``; the
    closing edge ``v_{k-1} v0`` is implied.  Returns ``(theta, 2 - 2 cos theta)``
    with ``theta`` the sum of oriented edge angles, reduced to ``[0, 2*pi)``.
    """
    nodes = [int(v) for v in cycle]
    if len(nodes) < 3:
        raise ValueError("a cycle of a simple graph has at least 3 nodes")
    if len(set(nodes)) != len(nodes):
        raise ValueError("cycle nodes must be distinct")
    total = 0.0
    for a, b in zip(nodes, nodes[1:] + nodes[:1]):
        try:
            e = g.edge_id(a, b)
        except KeyError:
            raise ValueError(f"cycle is not closed: no edge {a}-{b}") from None
        total += g.angles[e] if g.heads[e] == a else -g.angles[e]
    theta = float(wrap_angle(total))
    return theta, 2.0 - 2.0 * np.cos(total)


def _fundamental_cycles(g: ConnectionGraph):
    """Non-tree edges of a DFS spanning forest and the holonomy each one closes."""
    n = g.n
    pot = np.full(n, np.nan)
    parent_edge = -np.ones(n, dtype=np.int64)
    for s in range(n):
        if not np.isnan(pot[s]):
            continue
        pot[s] = 0.0
        stack = [s]
        while stack:
            u = stack.pop()
            for k in range(g.indptr[u], g.indptr[u + 1]):
                v = g.neighbors[k]
                if np.isnan(pot[v]):
                    # theta(uv) = pot(u) - pot(v) along tree edges
                    pot[v] = pot[u] - g.slot_angles[k]
                    parent_edge[v] = g.edge_of[k]
                    stack.append(v)
    tree = np.zeros(g.m, dtype=bool)
    tree[parent_edge[parent_edge >= 0]] = True
    non_tree = np.flatnonzero(~tree)
    theta = g.angles[non_tree] - (pot[g.heads[non_tree]] - pot[g.tails[non_tree]])
    return non_tree, theta


def cycle_basis_holonomies(g: ConnectionGraph):
    """Holonomy weights ``2 - 2 cos theta`` of a fundamental cycle basis.

    The connection restricted to a connected component is trivial iff every
    entry for that component vanishes.
    """
    return 2.0 - 2.0 * np.cos(_fundamental_cycles(g)[1])


def inconsistent_components(g: ConnectionGraph, tol=1e-12):
    """Boolean per connected component: does it carry an inconsistent cycle."""
    non_tree, theta = _fundamental_cycles(g)
    out = np.zeros(g.n_components, dtype=bool)
    bad = non_tree[2.0 - 2.0 * np.cos(theta) > tol]
    out[g.component_labels[g.heads[bad]]] = True
    return out


def is_consistent(g: ConnectionGraph, tol=1e-12) -> bool:
    """True when the connection is trivializable (every cycle consistent)."""
    return bool(np.all(cycle_basis_holonomies(g) <= tol))


# -- edge-list text format ---------------------------------------------------


def read_edgelist(path, n=None) -> ConnectionGraph:
    """Read ``u v weight angle`` lines; ``#`` starts a comment line.

    Duplicate unordered pairs and self-loops are reported with line numbers.
    """
    us, vs, ws, ths = [], [], [], []
    seen = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) not in (2, 3, 4):
                raise GraphFormatError(f"line {lineno}: expected 'u v [weight [angle]]'")
            try:
                u, v = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) > 2 else 1.0
                a = float(parts[3]) if len(parts) > 3 else 0.0
            except ValueError:
                raise GraphFormatError(f"line {lineno}: cannot parse {line!r}") from None
            if u == v:
                raise GraphFormatError(f"line {lineno}: self-loop at node {u}")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise GraphFormatError(
                    f"line {lineno}: duplicate edge {key} (first seen on line {seen[key]})"
                )
            seen[key] = lineno
            us.append(u)
            vs.append(v)
            ws.append(w)
            ths.append(a)
    if n is None:
        n = max(max(us, default=0), max(vs, default=0)) + 1
    return ConnectionGraph(n, us, vs, ws, ths)


def write_edgelist(g: ConnectionGraph, path, header=None):
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
    lines.append(f"# n={g.n} m={g.m}")
    lines.append("# u v weight angle")
    for u, v, w, a in zip(g.heads, g.tails, g.weights, g.angles):
        lines.append(f"{int(u)} {int(v)} {float(w)!r} {float(a)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


__all__ = [
    "ConnectionGraph",
    "GraphFormatError",
    "MagneticLaplacian",
    "centered_angle",
    "combinatorial_laplacian",
    "cycle_basis_holonomies",
    "holonomy",
    "incidence",
    "inconsistent_components",
    "is_consistent",
    "magnetic_laplacian",
    "oriented_incidence",
    "read_edgelist",
    "wrap_angle",
    "write_edgelist",
]
