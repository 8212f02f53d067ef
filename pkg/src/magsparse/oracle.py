"""Dense ground truth for small graphs: DPP kernel, MTSF law and enumeration.

Everything here uses dense complex linear algebra built from an explicitly
assembled incidence matrix, independent of the sparse production path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .graph import ConnectionGraph
from .sampler import Mtsf

ENUMERATION_MAX_EDGES = 20


class SingularLaplacianError(np.linalg.LinAlgError):
    """``Delta + q I`` is singular: q = 0 and some component has no inconsistent cycle."""


def dense_incidence(g: ConnectionGraph):
    """Twisted incidence as a dense array (row ``e = uv``: ``e^{-i t/2}`` at u, ``-e^{i t/2}`` at v)."""
    b = np.zeros((g.m, g.n), dtype=complex)
    e = np.arange(g.m)
    b[e, g.heads] = np.exp(-0.5j * g.angles)
    b[e, g.tails] = -np.exp(0.5j * g.angles)
    return b


def dense_laplacian(g: ConnectionGraph, q=0.0):
    b = dense_incidence(g)
    return b.conj().T @ (g.weights[:, None] * b) + q * np.eye(g.n)


def check_nonsingular(g: ConnectionGraph, q):
    if q < 0:
        raise ValueError("q must be nonnegative")
    if q == 0 and not g.every_component_inconsistent:
        raise SingularLaplacianError(
            "Delta is singular: with q = 0 every connected component needs an "
            "inconsistent cycle (trees and trivial connections have none)"
        )


@dataclass(frozen=True)
class DppKernel:
    """Correlation kernel ``K = W^{1/2} B (Delta + q I)^{-1} B^* W^{1/2}`` and its summaries."""

    K: np.ndarray
    q: float
    eigenvalues: np.ndarray  # of Delta

    @property
    def ls(self):
        return np.clip(np.real(np.diag(self.K)), 0.0, None)

    @property
    def d_eff(self):
        """Expected sample size ``Tr K = Tr(Delta (Delta + q I)^{-1})``."""
        lam = self.eigenvalues
        return float(np.sum(lam / (lam + self.q)))

    @property
    def kappa(self):
        """Largest eigenvalue of ``K``."""
        lam = self.eigenvalues.max()
        return float(lam / (lam + self.q))

    @property
    def var_edges(self):
        """Variance of the sample size, ``q Tr(Delta (Delta + q I)^{-2})``."""
        lam = self.eigenvalues
        return float(np.sum(self.q * lam / (lam + self.q) ** 2))

    @property
    def intrinsic_ratio(self):
        return self.d_eff / self.kappa


def exact_kernel(g: ConnectionGraph, q=0.0) -> DppKernel:
    check_nonsingular(g, q)
    b = dense_incidence(g) * np.sqrt(g.weights)[:, None]
    lap = b.conj().T @ b
    lam = np.clip(linalg.eigvalsh(lap), 0.0, None)
    a = lap + q * np.eye(g.n)
    x = linalg.solve(a, b.conj().T, assume_a="her")
    k = b @ x
    k = 0.5 * (k + k.conj().T)
    return DppKernel(k, float(q), lam)


def inclusion_probability(kernel: DppKernel, edges):
    """``Pr(A subset of F) = det(K_AA)``."""
    edges = np.asarray(edges, dtype=np.int64)
    return float(np.real(linalg.det(kernel.K[np.ix_(edges, edges)])))


def mtsf_weight(g: ConnectionGraph, q, f: Mtsf, rooted=False):
    """Unnormalized mass ``q^{#trees} prod w_e prod (2 - 2 cos theta)`` of a rooted MTSF.

    With ``rooted=False`` the mass of the unrooted edge set is returned, i.e.
    summed over the ``prod |T|`` ways of choosing one root per tree.
    """
    if f.n_trees and q == 0:
        return 0.0
    w = q ** f.n_trees * np.prod(g.weights[f.edges]) * np.prod(f.cycle_weights)
    if not rooted:
        w *= np.prod(f.tree_sizes.astype(float))
    return float(w)


def log_det_regularized(g: ConnectionGraph, q):
    sign, logdet = np.linalg.slogdet(dense_laplacian(g, q))
    return float(logdet)


def mtsf_probability(g: ConnectionGraph, q, f, rooted=False) -> float:
    """Probability of the MTSF ``f`` (an :class:`Mtsf` or an edge-id set).

    By default this is the probability of the edge set, which is what the
    samplers return; ``rooted=True`` gives the mass of one choice of roots.
    """
    check_nonsingular(g, q)
    if not isinstance(f, Mtsf):
        f = Mtsf.from_edges(g, f, q)
    w = mtsf_weight(g, q, f, rooted)
    if w == 0.0:
        return 0.0
    return float(np.exp(np.log(w) - log_det_regularized(g, q)))


def _enumerate_edge_sets(g: ConnectionGraph, q):
    """Edge subsets are explored include/exclude with a union-find that tracks
    whether each component already holds a cycle; adding a second cycle to a
    component prunes the branch.
    """
    if g.m > ENUMERATION_MAX_EDGES:
        raise ValueError(f"enumeration is limited to m <= {ENUMERATION_MAX_EDGES} edges")
    check_nonsingular(g, q)
    n, m = g.n, g.m
    heads, tails = g.heads.tolist(), g.tails.tolist()
    parent = list(range(n))
    cyclic = [False] * n
    chosen = []
    found = []

    def find(x):
        while parent[x] != x:
            x = parent[x]
        return x

    def rec(e, n_trees):
        if e == m:
            if q == 0 and n_trees:
                return
            found.append(list(chosen))
            return
        if q == 0 and n_trees > m - e:
            return  # each remaining edge removes at most one tree
        rec(e + 1, n_trees)
        ru, rv = find(heads[e]), find(tails[e])
        if ru == rv:
            if cyclic[ru]:
                return
            cyclic[ru] = True
            chosen.append(e)
            rec(e + 1, n_trees - 1)
            chosen.pop()
            cyclic[ru] = False
        else:
            if cyclic[ru] and cyclic[rv]:
                return
            parent[rv] = ru
            was = cyclic[ru]
            cyclic[ru] = was or cyclic[rv]
            chosen.append(e)
            # merging two trees leaves one tree; merging into a cyclic one removes a tree
            rec(e + 1, n_trees - 1)
            chosen.pop()
            cyclic[ru] = was
            parent[rv] = rv

    rec(0, n)
    return [Mtsf.from_edges(g, edges, q) for edges in found]


def enumerate_mtsfs(g: ConnectionGraph, q=0.0):
    """All MTSFs with positive mass, as ``(Mtsf, probability)`` pairs."""
    logdet = log_det_regularized(g, q)
    out = []
    for f in _enumerate_edge_sets(g, q):
        w = mtsf_weight(g, q, f)
        if w > 0:
            out.append((f, float(np.exp(np.log(w) - logdet))))
    return out


def enumeration_mass(g: ConnectionGraph, q=0.0):
    """``sum q^{#trees} prod w prod (2 - 2 cos theta)`` over rooted MTSFs (equals ``det(Delta + q I)``)."""
    return float(sum(mtsf_weight(g, q, f) for f in _enumerate_edge_sets(g, q)))


def expected_walk_steps(g: ConnectionGraph, q=0.0) -> float:
    """Mean number of walk steps ``Tr((D + q I)(Delta + q I)^{-1})`` of cycle popping.

    ``D`` is the unweighted degree matrix.  Valid when cycles are accepted with
    probability ``1 - cos theta`` (weakly inconsistent graphs).
    """
    check_nonsingular(g, q)
    a = dense_laplacian(g.with_unit_weights(), q)
    inv = linalg.inv(a)
    return float(np.real(np.sum((g.degrees + q) * np.diag(inv))))


def expected_size(g: ConnectionGraph, q=0.0):
    """``(E|F|, Var|F|)`` from the spectrum of ``Delta``."""
    k = exact_kernel(g, q)
    return k.d_eff, k.var_edges


__all__ = [
    "DppKernel",
    "SingularLaplacianError",
    "dense_incidence",
    "dense_laplacian",
    "enumerate_mtsfs",
    "enumeration_mass",
    "exact_kernel",
    "expected_size",
    "expected_walk_steps",
    "inclusion_probability",
    "mtsf_probability",
    "mtsf_weight",
]
