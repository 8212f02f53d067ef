"""Compiled random-walk kernels shared by the MTSF and spanning-tree samplers."""

import numpy as np
from numba import njit

# acceptance rule for a closed cycle
EXACT = 0  # alpha = 1 - cos(theta); error if alpha > 1
CAPPED = 1  # alpha = min(1, 1 - cos(theta))
NEVER = 2  # always pop (loop-erased walk, Wilson)

OK = 0
STRONG_CYCLE = 1
BUDGET = 2
ISOLATED = 3


@njit(cache=True)
def seed_kernel_rng(seed):
    np.random.seed(seed)


@njit(cache=True, nogil=True)
def cycle_popping_kernel(indptr, neighbors, edge_of, slot_angles, q, mode, root, max_steps, seed):
    """Sample an oriented MTSF rooted at the virtual absorbing node.

    Returns ``(status, nxt, nxt_edge, cyc_nodes, cyc_ptr, cyc_theta, n_cycles,
    steps, popped, draws)``.  ``nxt[u] == -1`` marks a link to the virtual
    root; accepted cycles are stored back to back in ``cyc_nodes`` with
    offsets ``cyc_ptr``.  When ``status == STRONG_CYCLE`` the offending cycle
    is the last entry of the cycle buffers.
    """
    np.random.seed(seed)
    n = indptr.size - 1
    nxt = np.full(n, -2, dtype=np.int64)
    nxt_edge = np.full(n, -1, dtype=np.int64)
    in_forest = np.zeros(n, dtype=np.bool_)
    stamp = np.zeros(n, dtype=np.int64)
    pos = np.zeros(n, dtype=np.int64)
    path = np.empty(n + 1, dtype=np.int64)
    path_e = np.empty(n + 1, dtype=np.int64)
    path_a = np.empty(n + 1, dtype=np.float64)
    cyc_nodes = np.empty(n, dtype=np.int64)
    cyc_ptr = np.zeros(n + 1, dtype=np.int64)
    cyc_theta = np.empty(n, dtype=np.float64)
    n_cycles = 0
    steps = 0
    popped = 0
    draws = 0
    if root >= 0:
        in_forest[root] = True
        nxt[root] = -1
    gen = 0
    for start in range(n):
        if in_forest[start]:
            continue
        gen += 1
        path[0] = start
        stamp[start] = gen
        pos[start] = 0
        length = 1
        while True:
            u = path[length - 1]
            if steps >= max_steps:
                return (BUDGET, nxt, nxt_edge, cyc_nodes, cyc_ptr, cyc_theta, n_cycles,
                        steps, popped, draws)
            steps += 1
            d = indptr[u + 1] - indptr[u]
            r = np.random.random() * (q + d)
            if r < q:
                # absorbed by the virtual root: u becomes a tree root
                for i in range(length - 1):
                    nxt[path[i]] = path[i + 1]
                    nxt_edge[path[i]] = path_e[i]
                    in_forest[path[i]] = True
                nxt[u] = -1
                in_forest[u] = True
                break
            if d == 0:
                return (ISOLATED, nxt, nxt_edge, cyc_nodes, cyc_ptr, cyc_theta, n_cycles,
                        steps, popped, draws)
            j = int(r - q)
            if j >= d:
                j = d - 1
            k = indptr[u] + j
            v = neighbors[k]
            path_e[length - 1] = edge_of[k]
            path_a[length - 1] = slot_angles[k]
            if in_forest[v]:
                for i in range(length - 1):
                    nxt[path[i]] = path[i + 1]
                    nxt_edge[path[i]] = path_e[i]
                    in_forest[path[i]] = True
                nxt[u] = v
                nxt_edge[u] = path_e[length - 1]
                in_forest[u] = True
                break
            if stamp[v] == gen:
                first = pos[v]
                theta = 0.0
                for i in range(first, length):
                    theta += path_a[i]
                if mode == NEVER:
                    alpha = 0.0
                else:
                    alpha = 1.0 - np.cos(theta)
                    if alpha > 1.0:
                        if mode == EXACT and alpha > 1.0 + 1e-12:
                            c0 = cyc_ptr[n_cycles]
                            for i in range(first, length):
                                cyc_nodes[c0 + i - first] = path[i]
                            cyc_ptr[n_cycles + 1] = c0 + length - first
                            cyc_theta[n_cycles] = theta
                            return (STRONG_CYCLE, nxt, nxt_edge, cyc_nodes, cyc_ptr, cyc_theta,
                                    n_cycles + 1, steps, popped, draws)
                        alpha = 1.0
                accept = False
                if alpha > 0.0:
                    draws += 1
                    accept = np.random.random() < alpha
                if accept:
                    for i in range(length - 1):
                        nxt[path[i]] = path[i + 1]
                        nxt_edge[path[i]] = path_e[i]
                        in_forest[path[i]] = True
                    nxt[u] = v
                    nxt_edge[u] = path_e[length - 1]
                    in_forest[u] = True
                    c0 = cyc_ptr[n_cycles]
                    for i in range(first, length):
                        cyc_nodes[c0 + i - first] = path[i]
                    cyc_ptr[n_cycles + 1] = c0 + length - first
                    cyc_theta[n_cycles] = theta
                    n_cycles += 1
                    break
                popped += 1
                for i in range(first + 1, length):
                    stamp[path[i]] = 0
                length = first + 1
            else:
                stamp[v] = gen
                pos[v] = length
                path[length] = v
                length += 1
    return (OK, nxt, nxt_edge, cyc_nodes, cyc_ptr, cyc_theta, n_cycles, steps, popped, draws)


@njit(cache=True, nogil=True)
def edge_indicator_kernel(indptr, neighbors, edge_of, slot_angles, q, mode, m, seeds, max_steps):
    """Run the walk once per seed; return edge indicators, importance weights and step counts.

    Returns ``(status, x, weights, steps)`` with ``x[s, e]`` set when edge ``e``
    is in sample ``s``; stops at the first sample whose status is not ``OK``.
    """
    n_samples = seeds.size
    x = np.zeros((n_samples, m), dtype=np.bool_)
    weights = np.ones(n_samples)
    steps = np.zeros(n_samples, dtype=np.int64)
    for s in range(n_samples):
        out = cycle_popping_kernel(indptr, neighbors, edge_of, slot_angles, q, mode, -1,
                                   max_steps, seeds[s])
        if out[0] != OK:
            return out[0], x[:s], weights[:s], steps[:s]
        nxt_edge = out[2]
        for u in range(nxt_edge.size):
            if nxt_edge[u] >= 0:
                x[s, nxt_edge[u]] = True
        w = 1.0
        for k in range(out[6]):
            a = 1.0 - np.cos(out[5][k])
            if a > 1.0:
                w *= a
        weights[s] = w
        steps[s] = out[7]
    return OK, x, weights, steps
