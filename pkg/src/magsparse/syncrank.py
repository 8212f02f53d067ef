"""Ranking from pairwise comparisons by angular synchronization (Sync-Rank)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .graph import ConnectionGraph, centered_angle, magnetic_laplacian
from .leverage import leverage_scores
from .sampler import sample_batch
from .solvers import Eigenpair, Preconditioner, least_eigenpair
from .sparsifier import SparsifierBatch, build_self_normalized

EIGEN_MODES = ("exact", "sparsify-and-eigensolve", "sparsify-and-precondition")


@dataclass(frozen=True)
class RankingResult:
    scores: np.ndarray  # angular scores in [0, 2 pi)
    ranks: np.ndarray  # induced ranking, 1 = top, after the best circular shift
    shift: int
    upsets: int
    tau: float | None = None
    degenerate: bool = False
    eigenvalue: float = float("nan")
    mode: str = "exact"
    tie_break: str = "node id"
    unshifted_ranks: np.ndarray | None = None


def embed_comparisons(comparisons, n) -> ConnectionGraph:
    """Rows ``(u, v, kappa_uv)`` become edges with angle ``pi kappa / (n - 1)``.

    Positive ``kappa_uv`` means ``u`` ranks above ``v``.
    """
    c = np.asarray(comparisons, dtype=float)
    if c.ndim != 2 or c.shape[1] != 3:
        raise ValueError("comparisons must be rows (u, v, kappa)")
    kappa = c[:, 2]
    if np.any(np.abs(kappa) > n - 1):
        bad = int(np.flatnonzero(np.abs(kappa) > n - 1)[0])
        raise ValueError(f"comparison {bad} has |kappa| = {abs(kappa[bad])} > n - 1 = {n - 1}")
    return ConnectionGraph(n, c[:, 0].astype(np.int64), c[:, 1].astype(np.int64),
                           angles=np.pi * kappa / (n - 1))


def comparison_signs(g: ConnectionGraph):
    """``sign(kappa_uv)`` recovered from the stored angles."""
    return np.sign(np.round(centered_angle(g.angles), 14)).astype(np.int64)


def normalized_weights(g: ConnectionGraph):
    """``1 / sqrt(d(u) d(v))`` with unweighted degrees."""
    d = g.degrees.astype(float)
    return 1.0 / np.sqrt(d[g.heads] * d[g.tails])


def sparsifier_batch(g: ConnectionGraph, t=3, q=0.0, ls="uniform", seed=None, threads=1):
    """``t`` CRSFs (MTSFs if ``q > 0``) sampled on the unit-weight graph, targeting ``g``'s weights."""
    unit = g.with_unit_weights()
    forests = sample_batch(unit, t, q, mode="mtsf", weight_mode="capped", seed=seed,
                           threads=threads)
    scores = "uniform" if ls == "uniform" else leverage_scores(unit, q, ls, seed=seed)
    return SparsifierBatch(g, forests, scores, q, "self_normalized")


def spectral_scores(g: ConnectionGraph, mode="exact", t=3, ls="uniform", seed=None,
                    threads=1, return_pair=False):
    """Angular scores ``arg f_1`` from the degree-normalized magnetic Laplacian.

    ``mode`` is one of ``'exact'`` (least eigenvector of the full Laplacian),
    ``'sparsify-and-eigensolve'`` (least eigenvector of a batch-of-CRSFs
    sparsifier) or ``'sparsify-and-precondition'`` (full Laplacian, inner solves
    preconditioned by the sparsifier).
    """
    if mode not in EIGEN_MODES:
        raise ValueError(f"mode must be one of {EIGEN_MODES}")
    if not g.is_connected:
        raise ValueError("spectral ranking needs a connected comparison graph")
    gw = g.with_weights(normalized_weights(g))
    lap = magnetic_laplacian(gw).matrix
    if mode == "exact":
        pair = least_eigenpair(lap)
    else:
        batch = sparsifier_batch(gw, t, 0.0, ls, seed, threads)
        sparse_lap = build_self_normalized(batch)
        if mode == "sparsify-and-eigensolve":
            pair = least_eigenpair(sparse_lap.matrix)
        else:
            pair = least_eigenpair(lap, precond=Preconditioner.from_matrix(sparse_lap.matrix, 1e-12))
    f = pair.vector
    h = np.where(np.abs(f) > 0, np.mod(np.angle(f), 2 * np.pi), 0.0)
    # constant scores carry no ranking information
    spread = np.ptp(centered_angle(h - h[0]))
    degenerate = pair.degenerate or bool(spread < 1e-9)
    pair = Eigenpair(pair.value, pair.vector, pair.residual, pair.iterations, degenerate)
    return (h, pair) if return_pair else h


def ranks_from_scores(h):
    """Rank 1 for the largest score; ties broken by node id."""
    h = np.asarray(h, dtype=float)
    order = np.lexsort((np.arange(h.size), -h))
    r = np.empty(h.size, dtype=np.int64)
    r[order] = np.arange(1, h.size + 1)
    return r


def shifted_ranks(r, s):
    """``1 + (r - 1 + s) mod n``."""
    r = np.asarray(r, dtype=np.int64)
    return 1 + np.mod(r - 1 + s, r.size)


def count_upsets(ranks, heads, tails, signs):
    """``sum |sign(kappa_uv) - sign(r_v - r_u)|``; a contradicted comparison costs 2."""
    return int(np.abs(signs - np.sign(ranks[tails] - ranks[heads])).sum())


def best_circular_shift(r, comparisons):
    """Minimize upsets over the ``n`` circular shifts of ``r``.

    ``comparisons`` is a :class:`ConnectionGraph` (signs read from its angles)
    or rows ``(u, v, kappa)``.  Returns ``(s*, upsets)``; the smallest
    minimizing shift wins.
    """
    r = np.asarray(r, dtype=np.int64)
    if isinstance(comparisons, ConnectionGraph):
        u, v, sg = comparisons.heads, comparisons.tails, comparison_signs(comparisons)
    else:
        c = np.asarray(comparisons, dtype=float)
        u, v, sg = c[:, 0].astype(np.int64), c[:, 1].astype(np.int64), np.sign(c[:, 2])
    n = r.size
    if not np.array_equal(np.sort(r), np.arange(1, n + 1)):
        raise ValueError("ranks must be a permutation of 1..n")
    best_s, best = 0, None
    for s in range(n):
        k = count_upsets(shifted_ranks(r, s), u, v, sg)
        if best is None or k < best:
            best_s, best = s, k
    return best_s, best


def kendall_tau(r1, r2):
    """``(concordant - discordant) / C(n, 2)`` for two permutations."""
    r1 = np.asarray(r1)
    r2 = np.asarray(r2)
    if r1.shape != r2.shape:
        raise ValueError("rankings differ in length")
    return float(stats.kendalltau(r1, r2).statistic)


def sync_rank(g: ConnectionGraph, reference=None, mode="exact", t=3, ls="uniform", seed=None,
              threads=1) -> RankingResult:
    """Full pipeline: scores, ranks, best circular shift, and tau against ``reference``.

    ``reference`` holds planted scores (larger is better) or is None.
    """
    h, pair = spectral_scores(g, mode, t, ls, seed, threads, return_pair=True)
    r0 = ranks_from_scores(h)
    s, ups = best_circular_shift(r0, g)
    r = shifted_ranks(r0, s)
    tau = None
    if reference is not None:
        tau = kendall_tau(r, ranks_from_scores(reference))
    return RankingResult(h, r, int(s), int(ups), tau, pair.degenerate, pair.value, mode,
                         unshifted_ranks=r0)


__all__ = [
    "RankingResult",
    "best_circular_shift",
    "count_upsets",
    "embed_comparisons",
    "kendall_tau",
    "normalized_weights",
    "ranks_from_scores",
    "shifted_ranks",
    "sparsifier_batch",
    "spectral_scores",
    "sync_rank",
]
