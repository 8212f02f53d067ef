"""scikit-learn style wrappers around the sparsifier, Sync-Rank and the SSL solver.

Graphs are passed as a :class:`ConnectionGraph` or an ``(m, 2..4)`` array of
``u, v[, weight[, angle]]`` rows; comparisons as ``(m, 3)`` rows ``u, v, kappa``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .graph import ConnectionGraph, magnetic_laplacian
from .leverage import leverage_scores
from .oracle import exact_kernel
from .sampler import sample_batch
from .solvers import Preconditioner, pcg_solve
from .sparsifier import SparsifierBatch, batch_size_bound
from .syncrank import embed_comparisons, kendall_tau, ranks_from_scores, sync_rank


def check_graph(X, n=None) -> ConnectionGraph:
    """Accept a graph or an edge array and return a :class:`ConnectionGraph`."""
    if isinstance(X, ConnectionGraph):
        return X
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] not in (2, 3, 4):
        raise ValueError(f"expected an (m, 2..4) edge array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("edge array contains NaN or infinite entries")
    return ConnectionGraph.from_array(X, n)


def check_comparisons(X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != 3:
        raise ValueError(f"expected (m, 3) comparisons u, v, kappa; got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("comparisons contain NaN or infinite entries")
    return X


class MagneticSparsifier(TransformerMixin, BaseEstimator):
    """Sparsify a connection graph with a batch of sampled forests.

    ``fit`` samples the batch; ``transform`` returns the reweighted edge array
    ``u, v, weight, angle`` of the sparsifier.  When ``t`` is None it is set
    from the batch-size bound with ``eps`` and ``delta`` (needs the exact kernel).
    """

    def __init__(self, q=0.0, t=None, mode="mtsf", weight_mode="capped", ls="uniform",
                 eps=0.5, delta=0.1, n_nodes=None, random_state=None, threads=1):
        self.q = q
        self.t = t
        self.mode = mode
        self.weight_mode = weight_mode
        self.ls = ls
        self.eps = eps
        self.delta = delta
        self.n_nodes = n_nodes
        self.random_state = random_state
        self.threads = threads

    def fit(self, X, y=None):
        g = check_graph(X, self.n_nodes)
        sample_graph = g.trivialized() if self.mode in ("sf", "st") else g
        unit = sample_graph.with_unit_weights()
        q = 0.0 if self.mode in ("st", "crsf") else float(self.q)
        t = self.t
        if t is None:
            k = exact_kernel(unit, q)
            t = batch_size_bound(k.d_eff, k.kappa, self.eps, self.delta)
        forests = sample_batch(unit, t, q, self.mode, self.weight_mode,
                               seed=self.random_state, threads=self.threads)
        if self.ls == "uniform":
            scores = "uniform"
        else:
            scores = leverage_scores(unit, q, self.ls, seed=self.random_state)
        kind = "self_normalized" if self.weight_mode == "capped" else "plain"
        self.graph_ = g
        self.batch_ = SparsifierBatch(sample_graph.with_weights(g.weights), forests, scores, q, kind)
        self.t_ = t
        self.sparsified_graph_ = self.batch_.sparsified_graph()
        self.laplacian_ = magnetic_laplacian(self.sparsified_graph_, q)
        self.n_edges_ = self.sparsified_graph_.m
        return self

    def transform(self, X=None):
        check_is_fitted(self, "sparsified_graph_")
        return self.sparsified_graph_.to_array()

    def preconditioner(self):
        check_is_fitted(self, "batch_")
        return Preconditioner.from_batch(self.batch_)


class SyncRank(BaseEstimator):
    """Spectral ranking from comparisons; ``predict`` gives ranks (1 = top)."""

    def __init__(self, mode="exact", t=3, ls="uniform", n_nodes=None, random_state=None,
                 threads=1):
        self.mode = mode
        self.t = t
        self.ls = ls
        self.n_nodes = n_nodes
        self.random_state = random_state
        self.threads = threads

    def fit(self, X, y=None):
        X = check_comparisons(X)
        n = self.n_nodes or int(X[:, :2].max()) + 1
        self.graph_ = embed_comparisons(X, n)
        self.result_ = sync_rank(self.graph_, y, self.mode, self.t, self.ls,
                                 self.random_state, self.threads)
        self.ranks_ = self.result_.ranks
        self.scores_ = self.result_.scores
        return self

    def predict(self, X=None):
        check_is_fitted(self, "ranks_")
        return self.ranks_

    def score(self, X, y):
        """Kendall tau between the fitted ranks and planted scores ``y``."""
        check_is_fitted(self, "ranks_")
        return kendall_tau(self.ranks_, ranks_from_scores(np.asarray(y, dtype=float)))


class TikhonovSmoother(RegressorMixin, BaseEstimator):
    """Semi-supervised smoothing ``(Delta + q I) f = q y`` on a fixed graph.

    ``fit(graph, y)`` solves for all nodes; ``predict(nodes)`` reads ``f``.
    ``y`` may be complex (phases); unlabelled nodes carry 0.
    """

    def __init__(self, q=1.0, t=1, tol=1e-10, random_state=None):
        self.q = q
        self.t = t
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y):
        g = check_graph(X, None if y is None else len(y))
        y = np.asarray(y, dtype=complex)
        if self.q <= 0:
            raise ValueError("q must be positive")
        forests = sample_batch(g.with_unit_weights(), self.t, self.q, "mtsf", "capped",
                               seed=self.random_state)
        batch = SparsifierBatch(g, forests, "uniform", self.q, "self_normalized")
        a = magnetic_laplacian(g, self.q).regularized
        f, it, hist = pcg_solve(a, Preconditioner.from_batch(batch), self.q * y, self.tol)
        self.f_ = f
        self.n_iter_ = it
        self.residuals_ = hist
        return self

    def predict(self, X=None):
        check_is_fitted(self, "f_")
        if X is None:
            return self.f_
        return self.f_[np.asarray(X, dtype=np.int64).ravel()]

    def score(self, X, y):
        # coefficient of determination with complex residuals
        pred = self.predict(X)
        y = np.asarray(y, dtype=complex)
        ss_res = np.sum(np.abs(y - pred) ** 2)
        ss_tot = np.sum(np.abs(y - y.mean()) ** 2)
        return float(1.0 - ss_res / ss_tot) if ss_tot > 0 else 0.0


__all__ = ["MagneticSparsifier", "SyncRank", "TikhonovSmoother", "check_comparisons",
           "check_graph"]
