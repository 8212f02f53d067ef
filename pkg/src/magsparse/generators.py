"""Random connection graphs with planted rankings (ER, MUN, ERO, Barbell)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import ConnectionGraph

MAX_ATTEMPTS = 100
CONNECTIVITY_POLICIES = ("resample", "largest", "accept")

# independent streams per attempt: edge coins, ranking, noise
_EDGES, _RANKING, _NOISE, _OUTLIERS = range(4)


class DisconnectedGraphError(RuntimeError):
    """No connected instance was drawn within the attempt budget."""


@dataclass(frozen=True)
class PlantedInstance:
    graph: ConnectionGraph
    h: np.ndarray  # planted scores, a permutation of 1..n
    model: str
    seed: int | None
    attempts: int = 1
    outliers: np.ndarray | None = None  # per-edge outlier flags, ERO-type models

    @property
    def n(self):
        return self.graph.n


def _stream(seed, attempt, purpose):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(attempt), purpose]))


def _er_pairs(n, p, rng):
    # one uniform per unordered pair, in the fixed order of np.triu_indices
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    return iu[keep], ju[keep]


def _with_policy(draw, connectivity, seed):
    if connectivity not in CONNECTIVITY_POLICIES:
        raise ValueError(f"connectivity must be one of {CONNECTIVITY_POLICIES}")
    if seed is None:
        seed = int(np.random.SeedSequence().generate_state(1)[0])
    attempts = MAX_ATTEMPTS if connectivity == "resample" else 1
    for k in range(attempts):
        inst = draw(seed, k)
        g = inst.graph
        if g.is_connected or connectivity == "accept":
            return _replace(inst, seed=seed, attempts=k + 1)
        if connectivity == "largest":
            keep = g.component_labels == np.argmax(np.bincount(g.component_labels))
            h = inst.h[keep]
            # re-rank the surviving nodes so h stays a permutation of 1..n'
            h = np.argsort(np.argsort(h)) + 1
            mask = keep[g.heads]
            out = None if inst.outliers is None else inst.outliers[mask]
            return PlantedInstance(g.largest_component(), h, inst.model, seed, 1, out)
    raise DisconnectedGraphError(
        f"no connected draw in {MAX_ATTEMPTS} attempts; increase p or use connectivity='largest'"
    )


def _replace(inst, **kw):
    d = dict(inst.__dict__)
    d.update(kw)
    return PlantedInstance(**d)


def _check_np(n, p):
    if n < 2:
        raise ValueError("n must be at least 2")
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")


def gen_er(n, p, seed=None, connectivity="resample") -> ConnectionGraph:
    """Erdos-Renyi graph with the trivial connection."""
    _check_np(n, p)

    def draw(s, k):
        u, v = _er_pairs(n, p, _stream(s, k, _EDGES))
        return PlantedInstance(ConnectionGraph(n, u, v), np.arange(1, n + 1), "ER", s)

    return _with_policy(draw, connectivity, seed).graph


def _ranking(n, s, k):
    return _stream(s, k, _RANKING).permutation(n) + 1


def gen_mun(n, p, eta, seed=None, connectivity="resample") -> PlantedInstance:
    """MUN(n, p, eta): ``theta(uv) = (h_u - h_v)(1 + eta eps)/(pi (n - 1))``, ``eps ~ U[0, 1]``."""
    _check_np(n, p)
    if eta < 0:
        raise ValueError("eta must be nonnegative")

    def draw(s, k):
        u, v = _er_pairs(n, p, _stream(s, k, _EDGES))
        h = _ranking(n, s, k)
        eps = _stream(s, k, _NOISE).random(u.size)
        theta = (h[u] - h[v]) * (1.0 + eta * eps) / (np.pi * (n - 1))
        return PlantedInstance(ConnectionGraph(n, u, v, angles=theta), h, f"MUN({n},{p},{eta})", s)

    return _with_policy(draw, connectivity, seed)


def _outlier_angles(u, v, h, n, eta, s, k):
    rng = _stream(s, k, _OUTLIERS)
    out = rng.random(u.size) < eta
    eps = rng.integers(-n + 1, n, size=u.size)
    theta = np.where(out, eps, h[u] - h[v]) / (np.pi * (n - 1))
    return theta, out


def gen_ero(n, p, eta, seed=None, connectivity="resample") -> PlantedInstance:
    """ERO(n, p, eta): planted angle w.p. ``1 - eta``, else ``eps/(pi (n - 1))``, ``eps`` uniform on ``{-n+1..n-1}``."""
    _check_np(n, p)
    if not 0 <= eta <= 1:
        raise ValueError("eta must lie in [0, 1]")

    def draw(s, k):
        u, v = _er_pairs(n, p, _stream(s, k, _EDGES))
        h = _ranking(n, s, k)
        theta, out = _outlier_angles(u, v, h, n, eta, s, k)
        g = ConnectionGraph(n, u, v, angles=theta)
        return PlantedInstance(g, h, f"ERO({n},{p},{eta})", s, outliers=out)

    return _with_policy(draw, connectivity, seed)


def barbell_edges(n):
    """Two cliques on ``0..n/2-1`` and ``n/2..n-1`` joined by the edge ``(n/2-1, n/2)``."""
    if n < 4 or n % 2:
        raise ValueError("Barbell(n) needs an even n >= 4")
    half = n // 2
    iu, ju = np.triu_indices(half, k=1)
    u = np.concatenate([iu, iu + half, [half - 1]])
    v = np.concatenate([ju, ju + half, [half]])
    return u, v


def gen_barbell(n, eta=0.0, seed=None) -> PlantedInstance:
    """Barbell(n, eta) with ERO-type outlier noise on the planted angles."""
    u, v = barbell_edges(n)
    if not 0 <= eta <= 1:
        raise ValueError("eta must lie in [0, 1]")
    s = int(np.random.SeedSequence().generate_state(1)[0]) if seed is None else seed
    h = _ranking(n, s, 0)
    theta, out = _outlier_angles(u, v, h, n, eta, s, 0)
    g = ConnectionGraph(n, u, v, angles=theta)
    return PlantedInstance(g, h, f"Barbell({n},{eta})", s, outliers=out)


def load_with_noise(g: ConnectionGraph, model, eta, seed=None) -> PlantedInstance:
    """Put a random connection on an external graph.

    ``model='mun'`` applies multiplicative uniform noise to planted
    comparisons; ``model='o'`` replaces each planted angle by a uniform phase
    in ``[0, 2 pi)`` with probability ``eta``.
    """
    n = g.n
    s = int(np.random.SeedSequence().generate_state(1)[0]) if seed is None else seed
    h = _ranking(n, s, 0)
    u, v = g.heads, g.tails
    planted = (h[u] - h[v]) / (np.pi * (n - 1))
    if model == "mun":
        eps = _stream(s, 0, _NOISE).random(g.m)
        theta, out = planted * (1.0 + eta * eps), None
        name = f"Loaded-MUN({eta})"
    elif model == "o":
        rng = _stream(s, 0, _OUTLIERS)
        out = rng.random(g.m) < eta
        theta = np.where(out, rng.uniform(0.0, 2.0 * np.pi, g.m), planted)
        name = f"Loaded-O({eta})"
    else:
        raise ValueError("model must be 'mun' or 'o'")
    return PlantedInstance(g.with_angles(theta), h, name, s, outliers=out)


__all__ = [
    "DisconnectedGraphError",
    "PlantedInstance",
    "barbell_edges",
    "gen_barbell",
    "gen_er",
    "gen_ero",
    "gen_mun",
    "load_with_noise",
]
