"""Sparsified Laplacians from batches of sampled forests, and MTSF Cholesky factors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numba import njit
from scipy import stats

from .graph import ConnectionGraph, MagneticLaplacian, magnetic_laplacian
from .leverage import LeverageScores
from .sampler import Mtsf

ESTIMATORS = ("plain", "self_normalized")


def _edge_ids(sample):
    return sample.edges if isinstance(sample, Mtsf) else np.asarray(sample, dtype=np.int64)


@dataclass(eq=False)
class SparsifierBatch:
    """``t`` samples with the scores used to reweight their edges.

    Each sample is an :class:`Mtsf` or an edge-id multiset.  ``ls`` is either
    one :class:`LeverageScores` shared by all samples or ``'uniform'``, in
    which case sample ``l`` uses the constant score ``|F_l| / m``.  The graph's
    own edge weights are the target: the estimator is unbiased for the
    Laplacian with those weights whenever ``ls`` are the inclusion
    probabilities of the sampling law.
    """

    graph: ConnectionGraph
    samples: list
    ls: object
    q: float = 0.0
    estimator: str = "plain"
    importance_weights: np.ndarray = field(default=None)

    def __post_init__(self):
        if len(self.samples) == 0:
            raise ValueError("a batch needs at least one sample")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        if self.importance_weights is None:
            self.importance_weights = np.array(
                [s.importance_weight if isinstance(s, Mtsf) else 1.0 for s in self.samples]
            )
        else:
            self.importance_weights = np.asarray(self.importance_weights, dtype=float)

    @property
    def t(self):
        return len(self.samples)

    def _scores_for(self, ell, ids):
        if isinstance(self.ls, str):
            if self.ls != "uniform":
                raise ValueError("ls must be LeverageScores or 'uniform'")
            return np.full(ids.size, ids.size / self.graph.m)
        vals = self.ls.values if isinstance(self.ls, LeverageScores) else np.asarray(self.ls)
        return vals[ids]

    def coefficients(self):
        """Per-sample mixing weights: ``1/t`` or ``w_l / sum w``."""
        if self.estimator == "plain":
            return np.full(self.t, 1.0 / self.t)
        w = self.importance_weights
        return w / w.sum()

    @property
    def multiplicity(self):
        """``n(e)``: number of times each edge was drawn over the batch."""
        ids = np.concatenate([_edge_ids(s) for s in self.samples])
        return np.bincount(ids, minlength=self.graph.m)

    def edge_weights(self):
        """``(union edge ids, sparsifier weights)``.

        The weight of ``e`` is ``sum_l c_l w_e / l_l(e)`` over samples holding
        ``e``, i.e. ``w_e n(e) / (t l(e))`` for the plain estimator with shared scores.
        """
        m = self.graph.m
        acc = np.zeros(m)
        for ell, (s, c) in enumerate(zip(self.samples, self.coefficients())):
            ids = _edge_ids(s)
            sc = self._scores_for(ell, ids)
            if np.any(sc <= 0):
                bad = ids[np.flatnonzero(sc <= 0)[0]]
                raise ValueError(f"edge {bad} was sampled but has zero leverage score")
            acc += np.bincount(ids, c / sc, minlength=m)
        union = np.flatnonzero(acc > 0)
        return union, self.graph.weights[union] * acc[union]

    def sparsified_graph(self):
        union, w = self.edge_weights()
        return self.graph.subgraph(union, w)


def build_sparsifier(batch: SparsifierBatch) -> MagneticLaplacian:
    """``(1/t) sum_l Delta~(F_l)`` with the batch's ``q`` (plain estimator)."""
    if batch.estimator != "plain":
        batch = SparsifierBatch(batch.graph, batch.samples, batch.ls, batch.q, "plain",
                                batch.importance_weights)
    return magnetic_laplacian(batch.sparsified_graph(), batch.q)


def build_self_normalized(batch: SparsifierBatch) -> MagneticLaplacian:
    """``sum_l w(F_l) Delta~(F_l) / sum_l w(F_l)`` for capped-law samples."""
    if batch.estimator != "self_normalized":
        batch = SparsifierBatch(batch.graph, batch.samples, batch.ls, batch.q,
                                "self_normalized", batch.importance_weights)
    return magnetic_laplacian(batch.sparsified_graph(), batch.q)


def iid_batch(g: ConnectionGraph, edges, ls, q=0.0) -> SparsifierBatch:
    """Batch holding one i.i.d. draw multiset; each draw gets weight ``w_e sum(l) / (s l_e)``."""
    edges = np.asarray(edges, dtype=np.int64)
    vals = np.asarray(getattr(ls, "values", ls), dtype=float)
    expected = edges.size * vals / vals.sum()  # expected number of draws of each edge
    return SparsifierBatch(g, [edges], LeverageScores(expected, "iid"), q, "plain")


def batch_size_bound(d_eff, kappa, eps, delta):
    """``ceil((37 kappa / eps^2) max(2 log(4 d_eff / (delta kappa)), sqrt 3))``."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if not 0 < kappa <= 1:
        raise ValueError("kappa must lie in (0, 1]")
    if d_eff < kappa:
        raise ValueError("d_eff must be at least kappa")
    branch = max(2.0 * math.log(4.0 * d_eff / (delta * kappa)), math.sqrt(3.0))
    return int(math.ceil(37.0 * kappa / eps**2 * branch))


def confidence_radius(batch: SparsifierBatch, d_eff, level=0.95):
    """Asymptotic Frobenius radius ``z sqrt(omega_t / t)`` around the self-normalized estimate.

    ``omega_t = mean(w^2) / mean(w)^2 (m + d_eff)^2`` and ``z`` is the
    ``level`` quantile of the chi distribution with ``n^2`` degrees of freedom.
    Loose by construction; reported as a diagnostic.
    """
    w = batch.importance_weights
    omega = np.mean(w**2) / np.mean(w) ** 2 * (batch.graph.m + d_eff) ** 2
    z = math.sqrt(stats.chi2.ppf(level, batch.graph.n**2))
    return z * math.sqrt(omega / batch.t)


# -- MTSF Cholesky -------------------------------------------------------------


class SingularFactorError(np.linalg.LinAlgError):
    """A zero pivot: a tree component with ``q = 0``."""


@dataclass(frozen=True)
class CholeskyFactor:
    """``R^H R = P A P^T`` with ``R`` upper triangular (CSR) and ``perm[k]`` the k-th eliminated node."""

    perm: np.ndarray
    R: sp.csr_matrix
    q: float
    ops: int = 0  # multiply-adds spent in the factorization

    @property
    def n(self):
        return self.perm.size

    @property
    def offdiag_nnz(self):
        return int(self.R.nnz - np.count_nonzero(self.R.diagonal()))

    def permuted(self, a):
        """``P A P^T`` for a matrix in original node order."""
        p = self.perm
        return a[p][:, p]


def mtsf_elimination_order(f: Mtsf):
    """Leaves peeled first (component by component), then each cycle walked in order."""
    g = f.graph
    n = g.n
    adj = [set() for _ in range(n)]
    for e in f.edges:
        u, v = int(g.heads[e]), int(g.tails[e])
        adj[u].add(v)
        adj[v].add(u)
    deg = np.array([len(a) for a in adj])
    done = np.zeros(n, dtype=bool)
    order = []
    stack = [u for u in range(n - 1, -1, -1) if deg[u] <= 1]
    while stack:
        u = stack.pop()
        if done[u] or deg[u] > 1:
            continue
        done[u] = True
        order.append(u)
        for v in adj[u]:
            if not done[v]:
                deg[v] -= 1
                if deg[v] <= 1:
                    stack.append(v)
    for cyc in f.cycles:
        order.extend(int(v) for v in cyc)
    if len(order) != n:
        raise ValueError("edge set is not a multi-type spanning forest")
    return np.array(order, dtype=np.int64)


def cholesky_mtsf(f: Mtsf, q=0.0, weights=None, pivot_tol=1e-14) -> CholeskyFactor:
    """Sparse Cholesky of ``Delta~ + q I`` for the Laplacian of the forest ``f``.

    ``weights`` are the edge weights on ``f.edges`` (default: the graph's).
    Elimination follows :func:`mtsf_elimination_order`, so the factor has at
    most ``n - r + sum(n_i - 3)`` off-diagonal nonzeros.
    """
    g = f.graph
    w = g.weights[f.edges] if weights is None else np.asarray(weights, dtype=float)
    sub = g.subgraph(f.edges, w)
    a = magnetic_laplacian(sub, q).regularized.tocsr()
    order = mtsf_elimination_order(f)
    return _sparse_cholesky(a, order, q, pivot_tol)


def _sparse_cholesky(a, order, q, pivot_tol=1e-14):
    """Right-looking elimination on dict rows; fill follows the given order."""
    n = a.shape[0]
    pos = np.empty(n, dtype=np.int64)
    pos[order] = np.arange(n)
    # permuted matrix, rows as dicts of column -> value
    rows = [dict() for _ in range(n)]
    a = a.tocoo()
    for i, j, v in zip(pos[a.row], pos[a.col], a.data):
        rows[i][j] = rows[i].get(j, 0) + v
    scale = max(abs(a.data).max(), 1.0) if a.nnz else 1.0
    r_rows, r_cols, r_vals = [], [], []
    ops = 0
    for k in range(n):
        row = rows[k]
        piv = row.pop(k, 0.0).real
        if piv <= pivot_tol * scale:
            raise SingularFactorError(
                f"zero pivot at node {int(order[k])}: a tree component needs q > 0"
            )
        d = math.sqrt(piv)
        r_rows.append(k)
        r_cols.append(k)
        r_vals.append(d)
        upper = [(j, v / d) for j, v in row.items() if j > k]
        ops += len(upper)
        for j, rkj in upper:
            r_rows.append(k)
            r_cols.append(j)
            r_vals.append(rkj)
        # Schur complement: a_ij -= conj(r_ki) r_kj
        for i, rki in upper:
            ri = rows[i]
            ri.pop(k, None)
            for j, rkj in upper:
                ri[j] = ri.get(j, 0) - np.conj(rki) * rkj
                ops += 1
        rows[k] = None
    r = sp.csr_matrix((np.array(r_vals, dtype=complex), (r_rows, r_cols)), shape=(n, n))
    r.sort_indices()
    return CholeskyFactor(np.asarray(order, dtype=np.int64), r, float(q), ops)


@njit(cache=True)
def _substitute(indptr, indices, data, b):
    n = b.size
    y = b.copy()
    ops = 0
    # R^H y = b, column-oriented on the rows of R
    for k in range(n):
        y[k] = y[k] / np.conj(data[indptr[k]])
        for p in range(indptr[k] + 1, indptr[k + 1]):
            y[indices[p]] -= np.conj(data[p]) * y[k]
            ops += 1
    # R x = y
    for k in range(n - 1, -1, -1):
        s = y[k]
        for p in range(indptr[k] + 1, indptr[k + 1]):
            s -= data[p] * y[indices[p]]
            ops += 1
        y[k] = s / data[indptr[k]]
    return y, ops


def solve_factored(factor: CholeskyFactor, b, return_ops=False):
    """Solve ``(Delta~ + q I) x = b`` by forward and back substitution."""
    b = np.asarray(b, dtype=complex)
    if b.shape[0] != factor.n:
        raise ValueError(f"right-hand side has length {b.shape[0]}, expected {factor.n}")
    r = factor.R
    if b.ndim == 2:
        cols = [solve_factored(factor, b[:, j], True) for j in range(b.shape[1])]
        x = np.column_stack([c[0] for c in cols])
        return (x, sum(c[1] for c in cols)) if return_ops else x
    y, ops = _substitute(r.indptr, r.indices, r.data, b[factor.perm])
    x = np.empty_like(y)
    x[factor.perm] = y
    return (x, int(ops)) if return_ops else x


__all__ = [
    "CholeskyFactor",
    "SingularFactorError",
    "SparsifierBatch",
    "batch_size_bound",
    "build_self_normalized",
    "build_sparsifier",
    "cholesky_mtsf",
    "confidence_radius",
    "iid_batch",
    "mtsf_elimination_order",
    "solve_factored",
]
