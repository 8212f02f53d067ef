"""Random-walk samplers for multi-type spanning forests and spanning trees."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _walk
from .graph import ConnectionGraph, wrap_angle

ROOT = -1

DEFAULT_STEP_BUDGET = 10**9


class SamplingError(RuntimeError):
    """The random walk cannot produce a sample from the requested law."""


class StronglyInconsistentCycleError(SamplingError):
    """Exact mode met a cycle whose acceptance probability exceeds one."""

    def __init__(self, cycle, theta):
        self.cycle = tuple(int(v) for v in cycle)
        self.theta = float(theta)
        super().__init__(
            f"cycle {list(self.cycle)} has 1 - cos(theta) = {1 - np.cos(theta):.6g} > 1 "
            f"(theta = {self.theta:.6g}); use weight_mode='capped' with self-normalized weights"
        )


def stream_seed(seed, index=0):
    """32-bit seed for replicate ``index`` of the master ``seed``."""
    if seed is None:
        ss = np.random.SeedSequence()
    else:
        ss = np.random.SeedSequence([int(seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass(frozen=True)
class RootedTree:
    root: int
    nodes: tuple
    edges: tuple


@dataclass(frozen=True)
class CycleRootedTree:
    cycle: tuple  # oriented node sequence, closing edge implied
    theta: float
    nodes: tuple
    edges: tuple
    capped: bool = False


@dataclass(frozen=True)
class WalkStats:
    steps: int = 0
    cycles_popped: int = 0
    cycles_accepted: int = 0
    bernoulli_draws: int = 0


@dataclass(eq=False)
class Mtsf:
    """Unoriented multi-type spanning forest of a graph with ``n`` nodes.

    ``edges`` are sorted edge ids, ``roots`` the roots of the tree components
    and ``cycles`` the oriented node sequences of the cycle-rooted components
    with their holonomy angles ``thetas``.
    """

    graph: ConnectionGraph
    edges: np.ndarray
    roots: np.ndarray
    cycles: list = field(default_factory=list)
    thetas: np.ndarray = field(default_factory=lambda: np.zeros(0))
    q: float = 0.0

    def __len__(self):
        return int(self.edges.size)

    @property
    def n_trees(self):
        return int(self.roots.size)

    @property
    def n_cycles(self):
        return len(self.cycles)

    @property
    def capped(self):
        """Per-cycle flag: was ``1 - cos(theta)`` capped at one."""
        return 1.0 - np.cos(self.thetas) > 1.0

    @property
    def tree_sizes(self):
        """Node counts of the tree components."""
        return np.array(
            [len(c.nodes) for c in self.components if isinstance(c, RootedTree)], dtype=np.int64
        )

    @property
    def cycle_weights(self):
        """``2 - 2 cos(theta)`` for each cycle."""
        return 2.0 - 2.0 * np.cos(self.thetas)

    @property
    def importance_weight(self):
        """``prod max(1, 1 - cos(theta))`` over cycles (1 for weakly inconsistent ones)."""
        return float(np.prod(np.maximum(1.0, 1.0 - np.cos(self.thetas))))

    @cached_property
    def components(self):
        """Tree and cycle-rooted-tree components partitioning the nodes."""
        g = self.graph
        n = g.n
        label = -np.ones(n, dtype=np.int64)
        comps_nodes = []
        adj = [[] for _ in range(n)]
        for e in self.edges:
            u, v = int(g.heads[e]), int(g.tails[e])
            adj[u].append((v, int(e)))
            adj[v].append((u, int(e)))
        for s in range(n):
            if label[s] >= 0:
                continue
            cid = len(comps_nodes)
            label[s] = cid
            stack, nodes = [s], [s]
            while stack:
                u = stack.pop()
                for v, _ in adj[u]:
                    if label[v] < 0:
                        label[v] = cid
                        nodes.append(v)
                        stack.append(v)
            comps_nodes.append(sorted(nodes))
        comp_edges = [[] for _ in comps_nodes]
        for e in self.edges:
            comp_edges[label[g.heads[e]]].append(int(e))
        root_of = {int(label[r]): int(r) for r in self.roots}
        cyc_of = {}
        for k, cyc in enumerate(self.cycles):
            cyc_of[int(label[cyc[0]])] = k
        out = []
        for cid, nodes in enumerate(comps_nodes):
            edges = tuple(sorted(comp_edges[cid]))
            if cid in cyc_of:
                k = cyc_of[cid]
                out.append(
                    CycleRootedTree(
                        tuple(self.cycles[k]),
                        float(self.thetas[k]),
                        tuple(nodes),
                        edges,
                        bool(self.capped[k]),
                    )
                )
            else:
                out.append(RootedTree(root_of.get(cid, nodes[0]), tuple(nodes), edges))
        return out

    def check(self):
        """Raise ``AssertionError`` unless the structural invariants hold."""
        g = self.graph
        n_cyc = 0
        n_tree = 0
        covered = 0
        for c in self.components:
            covered += len(c.nodes)
            if isinstance(c, CycleRootedTree):
                assert len(c.edges) == len(c.nodes), "cycle-rooted tree edge count"
                assert len(c.cycle) >= 3, "cycles have at least three nodes"
                n_cyc += 1
            else:
                assert len(c.edges) == len(c.nodes) - 1, "tree edge count"
                n_tree += 1
        assert covered == g.n, "components must partition the nodes"
        assert n_tree == self.n_trees and n_cyc == self.n_cycles
        assert len(self) == g.n - self.n_trees
        assert np.unique(self.edges).size == self.edges.size

    @classmethod
    def from_edges(cls, g: ConnectionGraph, edges, q=0.0):
        """Decompose an edge set into components; raises if it is not an MTSF."""
        edges = np.unique(np.asarray(edges, dtype=np.int64))
        n = g.n
        adj = [dict() for _ in range(n)]
        for e in edges:
            u, v = int(g.heads[e]), int(g.tails[e])
            adj[u][v] = int(e)
            adj[v][u] = int(e)
        # peel leaves; what remains in each component is its cycle (if any)
        deg = np.array([len(a) for a in adj])
        alive = np.ones(n, dtype=bool)
        stack = [u for u in range(n) if deg[u] <= 1]
        while stack:
            u = stack.pop()
            if not alive[u] or deg[u] > 1:
                continue
            alive[u] = False
            for v in adj[u]:
                if alive[v]:
                    deg[v] -= 1
                    if deg[v] == 1:
                        stack.append(v)
        seen = np.zeros(n, dtype=bool)
        cycles, thetas = [], []
        for s in range(n):
            if not alive[s] or seen[s]:
                continue
            cyc = [s]
            seen[s] = True
            prev, cur = -1, s
            while True:
                if deg[cur] != 2:
                    raise ValueError("edge set has a component with more than one cycle")
                nxt = next(v for v in adj[cur] if alive[v] and v != prev)
                if nxt == s:
                    break
                if seen[nxt]:
                    raise ValueError("edge set has a component with more than one cycle")
                seen[nxt] = True
                cyc.append(nxt)
                prev, cur = cur, nxt
            total = 0.0
            for a, b in zip(cyc, cyc[1:] + cyc[:1]):
                e = adj[a][b]
                total += g.angles[e] if g.heads[e] == a else -g.angles[e]
            cycles.append(tuple(cyc))
            thetas.append(total)
        # one cycle per component at most; components without cycles are trees
        from scipy.sparse.csgraph import connected_components
        import scipy.sparse as sp

        a = sp.csr_matrix(
            (np.ones(edges.size), (g.heads[edges], g.tails[edges])), shape=(n, n)
        )
        ncomp, labels = connected_components(a, directed=False)
        cyc_comps = [labels[c[0]] for c in cycles]
        if len(set(cyc_comps)) != len(cyc_comps):
            raise ValueError("edge set has a component with more than one cycle")
        has_cycle = np.zeros(ncomp, dtype=bool)
        has_cycle[cyc_comps] = True
        roots = []
        for c in range(ncomp):
            if not has_cycle[c]:
                roots.append(int(np.flatnonzero(labels == c)[0]))
        f = cls(g, edges, np.array(roots, dtype=np.int64), cycles, np.array(thetas, dtype=float), q)
        if len(f) != n - f.n_trees:
            raise ValueError("edge set is not a multi-type spanning forest")
        return f


# -- samplers -------------------------------------------------------------------


def random_successor(g: ConnectionGraph, q, v, rng):
    """One step of the walk: ``ROOT`` w.p. ``q/(q+d(v))``, else a uniform neighbour.

    Edge weights are ignored; ``d(v)`` is the number of neighbours.
    """
    lo, hi = g.indptr[v], g.indptr[v + 1]
    d = hi - lo
    if d == 0 and q == 0:
        raise SamplingError(f"node {v} is isolated and q = 0: the walk cannot move")
    r = rng.random() * (q + d)
    if r < q:
        return ROOT
    return int(g.neighbors[lo + min(int(r - q), d - 1)])


def _require_dpp_graph(g, q):
    if q < 0:
        raise ValueError("q must be nonnegative")
    if not g.has_unit_weights:
        raise ValueError("DPP sampling assumes unit edge weights; pass g.with_unit_weights()")


def _run_kernel(g, q, mode, root, max_steps, seed):
    return _walk.cycle_popping_kernel(
        g.indptr, g.neighbors, g.edge_of, g.slot_angles, float(q), mode, int(root),
        int(max_steps), int(seed),
    )


def _to_mtsf(g, q, out):
    status, nxt, nxt_edge, cyc_nodes, cyc_ptr, cyc_theta, n_cyc, steps, popped, draws = out
    edges = np.sort(nxt_edge[nxt_edge >= 0])
    roots = np.flatnonzero(nxt == ROOT)
    cycles = [tuple(cyc_nodes[cyc_ptr[k]:cyc_ptr[k + 1]].tolist()) for k in range(n_cyc)]
    f = Mtsf(g, edges, roots, cycles, cyc_theta[:n_cyc].copy(), float(q))
    stats = WalkStats(int(steps), int(popped), int(n_cyc), int(draws))
    return f, stats


def cycle_popping(g: ConnectionGraph, q=0.0, weight_mode="exact", seed=None,
                  max_steps=DEFAULT_STEP_BUDGET):
    """Sample an MTSF with cycle-popping random walks.

    ``weight_mode='exact'`` accepts a cycle with probability ``1 - cos(theta)``
    and fails on a strongly inconsistent cycle; ``'capped'`` uses
    ``min(1, 1 - cos(theta))`` and so samples the capped law.  Branches start
    from the unspanned nodes in ascending order.

    Returns ``(Mtsf, WalkStats)``.
    """
    _require_dpp_graph(g, q)
    modes = {"exact": _walk.EXACT, "capped": _walk.CAPPED}
    if weight_mode not in modes:
        raise ValueError(f"weight_mode must be 'exact' or 'capped', got {weight_mode!r}")
    if q == 0 and not g.every_component_inconsistent:
        raise SamplingError(
            "q = 0 needs an inconsistent cycle in every component; with a trivial "
            "connection use wilson_st for spanning trees or take q > 0"
        )
    seed = stream_seed(seed) if seed is None else int(seed) & 0xFFFFFFFF
    out = _run_kernel(g, q, modes[weight_mode], -1, max_steps, seed)
    status = out[0]
    if status == _walk.STRONG_CYCLE:
        cyc_nodes, cyc_ptr, n_cyc = out[3], out[4], out[6]
        raise StronglyInconsistentCycleError(
            cyc_nodes[cyc_ptr[n_cyc - 1]:cyc_ptr[n_cyc]], out[5][n_cyc - 1]
        )
    if status == _walk.BUDGET:
        raise SamplingError(
            f"step budget of {max_steps} exhausted; check that q > 0 or that every "
            "component carries an inconsistent cycle"
        )
    if status == _walk.ISOLATED:
        raise SamplingError("isolated node with q = 0: the walk cannot move")
    return _to_mtsf(g, q, out)


def wilson_st(g: ConnectionGraph, seed=None, max_steps=DEFAULT_STEP_BUDGET):
    """Uniform spanning tree by Wilson's loop-erased walks (root drawn uniformly).

    Walk steps ignore edge weights, so the tree is uniform among spanning trees.
    Returns ``(Mtsf, WalkStats)``; the tree is a single rooted component.
    """
    if not g.is_connected:
        raise SamplingError("wilson_st needs a connected graph")
    seed = stream_seed(seed) if seed is None else int(seed) & 0xFFFFFFFF
    root = np.random.default_rng(seed).integers(g.n)
    out = _run_kernel(g, 0.0, _walk.NEVER, root, max_steps, seed)
    if out[0] != _walk.OK:
        raise SamplingError("Wilson walk did not terminate within the step budget")
    return _to_mtsf(g, 0.0, out)


def iid_edges(g: ConnectionGraph, ls, target_count, rng=None):
    """``target_count`` i.i.d. edge draws with probabilities proportional to ``ls``.

    Returns the sorted multiset of drawn edge ids.
    """
    scores = np.asarray(getattr(ls, "values", ls), dtype=float)
    if scores.shape != (g.m,):
        raise ValueError("one score per edge expected")
    if np.any(scores < 0) or scores.sum() <= 0:
        raise ValueError("scores must be nonnegative with a positive sum")
    rng = np.random.default_rng(rng)
    p = scores / scores.sum()
    return np.sort(rng.choice(g.m, size=int(target_count), replace=True, p=p))


def sample_batch(g: ConnectionGraph, t, q=0.0, mode="mtsf", weight_mode="capped", seed=None,
                 threads=1, max_steps=DEFAULT_STEP_BUDGET, return_stats=False):
    """``t`` independent samples; replicate ``l`` uses the stream ``(seed, l)``.

    ``mode`` is ``'mtsf'`` (cycle popping on ``g``), ``'sf'`` (cycle popping on
    the trivialized connection, needs ``q > 0``), ``'crsf'`` (``q`` forced to 0)
    or ``'st'`` (Wilson).  Results are ordered by replicate index whatever the
    number of worker threads.  Returns the list of forests, or
    ``(forests, stats)`` with ``return_stats=True``.
    """
    if t < 1:
        raise ValueError("batch size must be at least 1")
    if mode == "sf":
        if q <= 0:
            raise ValueError("spanning forests need q > 0")
        g = g.trivialized()
    elif mode == "crsf":
        q = 0.0
    elif mode not in ("mtsf", "st"):
        raise ValueError(f"unknown sampling mode {mode!r}")
    master = np.random.SeedSequence().entropy if seed is None else seed
    seeds = [stream_seed(master, ell) for ell in range(t)]

    def one(s):
        if mode == "st":
            return wilson_st(g, seed=s, max_steps=max_steps)
        return cycle_popping(g, q, weight_mode, seed=s, max_steps=max_steps)

    threads = threads or os.cpu_count() or 1
    if threads == 1 or t == 1:
        out = [one(s) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(one, seeds))
    forests = [f for f, _ in out]
    if return_stats:
        return forests, [st for _, st in out]
    return forests


@dataclass(frozen=True)
class IndicatorSample:
    """Many samples stored as an ``(N, m)`` boolean edge-indicator matrix."""

    indicators: np.ndarray
    importance_weights: np.ndarray
    steps: np.ndarray

    @property
    def sizes(self):
        return self.indicators.sum(axis=1)

    def frequencies(self):
        """Empirical inclusion frequency of each edge."""
        return self.indicators.mean(axis=0)


def sample_indicators(g: ConnectionGraph, n_samples, q=0.0, weight_mode="exact", seed=None,
                      max_steps=DEFAULT_STEP_BUDGET) -> IndicatorSample:
    """Draw ``n_samples`` MTSFs in one compiled loop, keeping only their edge sets.

    Per-sample seeds are the words of ``SeedSequence(seed).generate_state``,
    which is cheap for millions of samples; use :func:`sample_batch` when the
    forest structure is needed.
    """
    _require_dpp_graph(g, q)
    modes = {"exact": _walk.EXACT, "capped": _walk.CAPPED}
    if weight_mode not in modes:
        raise ValueError(f"weight_mode must be 'exact' or 'capped', got {weight_mode!r}")
    if q == 0 and not g.every_component_inconsistent:
        raise SamplingError("q = 0 needs an inconsistent cycle in every component")
    seeds = np.random.SeedSequence(seed).generate_state(int(n_samples), np.uint32).astype(np.int64)
    status, x, w, steps = _walk.edge_indicator_kernel(
        g.indptr, g.neighbors, g.edge_of, g.slot_angles, float(q), modes[weight_mode], g.m,
        seeds, int(max_steps),
    )
    if status == _walk.STRONG_CYCLE:
        # replay the failing sample to report its cycle
        cycle_popping(g, q, weight_mode, seed=int(seeds[x.shape[0]]), max_steps=max_steps)
    if status != _walk.OK:
        raise SamplingError(f"walk failed with status {status} after {x.shape[0]} samples")
    return IndicatorSample(x, w, steps)


def cycle_angle_sum(g: ConnectionGraph, cycle):
    """Signed angle sum around ``cycle`` (not wrapped)."""
    total = 0.0
    for a, b in zip(cycle, list(cycle[1:]) + [cycle[0]]):
        e = g.edge_id(a, b)
        total += g.angles[e] if g.heads[e] == a else -g.angles[e]
    return total


__all__ = [
    "ROOT",
    "CycleRootedTree",
    "IndicatorSample",
    "Mtsf",
    "RootedTree",
    "SamplingError",
    "StronglyInconsistentCycleError",
    "WalkStats",
    "cycle_popping",
    "iid_edges",
    "random_successor",
    "sample_batch",
    "sample_indicators",
    "stream_seed",
    "wilson_st",
    "wrap_angle",
]
