"""Magnetic leverage scores: exact, uniform and Johnson-Lindenstrauss sketched."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy import linalg
from scipy.sparse.linalg import splu

from .graph import ConnectionGraph, incidence, magnetic_laplacian
from .oracle import check_nonsingular

DENSE_MAX_NODES = 3000
SPARSE_EXACT_MAX_EDGES = 5000
JL_CLIP = 1e-12


@dataclass(frozen=True)
class LeverageScores:
    """Per-edge scores with the method that produced them."""

    values: np.ndarray
    method: str  # exact | uniform | jl
    q: float = 0.0
    k: int | None = None
    n_clipped: int = 0

    def __len__(self):
        return self.values.size

    @property
    def total(self):
        return float(self.values.sum())


class _Solver:
    """Factor ``Delta + q I`` once; dense Cholesky at desk scale, sparse LU otherwise."""

    def __init__(self, g: ConnectionGraph, q):
        a = magnetic_laplacian(g, q).regularized
        self.n = g.n
        if g.n <= DENSE_MAX_NODES:
            self._cho = linalg.cho_factor(a.toarray(), lower=False, check_finite=False)
            self._lu = None
        else:
            self._cho = None
            self._lu = splu(sp.csc_matrix(a), permc_spec="COLAMD")

    def solve(self, rhs):
        if self._cho is not None:
            return linalg.cho_solve(self._cho, rhs, check_finite=False)
        return self._lu.solve(np.asarray(rhs, dtype=complex))

    def inverse(self):
        return self.solve(np.eye(self.n, dtype=complex))


def _edge_quadratic_forms(g: ConnectionGraph, inv):
    # K_ee = w (inv_uu + inv_vv - 2 Re(e^{-i theta} inv_uv)) for the half-angle rows of B
    u, v = g.heads, g.tails
    cross = np.real(np.exp(-1j * g.angles) * inv[u, v])
    return g.weights * (np.real(inv[u, u]) + np.real(inv[v, v]) - 2.0 * cross)


def exact_ls(g: ConnectionGraph, q=0.0) -> LeverageScores:
    """Diagonal of ``K = W^{1/2} B (Delta + q I)^{-1} B^* W^{1/2}``.

    Uses a dense inverse when ``n <= 3000``; otherwise ``m`` sparse solves,
    allowed only when ``m <= 5000``.
    """
    check_nonsingular(g, q)
    solver = _Solver(g, q)
    if g.n <= DENSE_MAX_NODES:
        vals = _edge_quadratic_forms(g, solver.inverse())
    else:
        if g.m > SPARSE_EXACT_MAX_EDGES:
            raise ValueError(
                f"exact leverage scores on n={g.n}, m={g.m} exceed the exact budget; "
                "use jl_ls or uniform_ls"
            )
        bh = (incidence(g).multiply(np.sqrt(g.weights)[:, None])).tocsr()
        vals = np.empty(g.m)
        for start in range(0, g.m, 256):
            stop = min(start + 256, g.m)
            rows = bh[start:stop]
            x = solver.solve(rows.conj().T.toarray())
            vals[start:stop] = np.real(np.sum(rows.toarray() * x.T, axis=1))
    return LeverageScores(np.clip(vals, 0.0, 1.0), "exact", float(q))


def uniform_ls(sample_size, m) -> LeverageScores:
    """Constant scores ``sample_size / m`` (they sum to the sample size)."""
    if not 0 < sample_size <= m:
        raise ValueError("need 0 < sample_size <= m")
    return LeverageScores(np.full(int(m), sample_size / m), "uniform")


def jl_width(m, n, q):
    """Sketch width ``ceil(40 log(m + n) + 1)`` (``log m`` when ``q = 0``), natural log."""
    size = m if q == 0 else m + n
    return int(math.ceil(40.0 * math.log(size) + 1.0))


def jl_ls(g: ConnectionGraph, q=0.0, seed=None, k=None) -> LeverageScores:
    """Sketched scores ``||row_e(W^{1/2} B T)||^2`` with ``(Delta + q I) T = [sqrt(q) I, B^* W^{1/2}] Q``.

    ``Q`` has i.i.d. entries ``+-1/sqrt(k)``.  Scores are clipped to
    ``(1e-12, 1]``; the number of clipped entries is recorded.
    """
    check_nonsingular(g, q)
    if k is None:
        k = jl_width(g.m, g.n, q)
    rng = np.random.default_rng(seed)
    bh = incidence(g).multiply(np.sqrt(g.weights)[:, None]).tocsr()
    signs = rng.integers(0, 2, size=(g.m, k)) * 2.0 - 1.0
    rhs = bh.conj().T @ signs
    if q > 0:
        rhs = rhs + math.sqrt(q) * (rng.integers(0, 2, size=(g.n, k)) * 2.0 - 1.0)
    rhs /= math.sqrt(k)
    t = _Solver(g, q).solve(np.asarray(rhs, dtype=complex))
    y = bh @ t
    vals = np.sum(np.abs(y) ** 2, axis=1)
    clipped = int(np.count_nonzero((vals <= JL_CLIP) | (vals > 1.0)))
    vals = np.clip(vals, JL_CLIP, 1.0)
    return LeverageScores(vals, "jl", float(q), int(k), clipped)


def leverage_scores(g: ConnectionGraph, q=0.0, method="exact", seed=None, sample_size=None):
    """Dispatch on ``method`` in {'exact', 'jl', 'uniform'}."""
    if method == "exact":
        return exact_ls(g, q)
    if method == "jl":
        return jl_ls(g, q, seed)
    if method == "uniform":
        return uniform_ls(g.n if sample_size is None else sample_size, g.m)
    raise ValueError(f"unknown leverage-score method {method!r}")


__all__ = [
    "LeverageScores",
    "exact_ls",
    "jl_ls",
    "jl_width",
    "leverage_scores",
    "uniform_ls",
]
