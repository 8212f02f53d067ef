"""Acceptance checks at their stated tolerances.

Each test records one ``[PASS]``/``[FAIL] criterion N: ...`` line; the lines
are printed together at the end of the session.  Run just these with

    pytest tests/test_acceptance.py -v -s
"""

import json
import time

import numpy as np
import pytest
from scipy import linalg

from conftest import ACCEPTANCE, chorded_ring
from magsparse import (
    ConnectionGraph,
    SparsifierBatch,
    batch_size_bound,
    cholesky_mtsf,
    exact_ls,
    gen_mun,
    jl_ls,
    magnetic_laplacian,
    sample_batch,
    sample_indicators,
    sync_rank,
)
from magsparse.cli import ExperimentConfig, run_experiment
from magsparse.oracle import (
    dense_laplacian,
    enumerate_mtsfs,
    enumeration_mass,
    exact_kernel,
    expected_walk_steps,
)
from magsparse.solvers import generalized_eigenvalues

pytestmark = pytest.mark.slow


def record(k, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {k}: {detail}"
    ACCEPTANCE[k] = line
    print(line)
    assert ok, line


def edge_laplacians(g):
    """``vec`` of each single-edge Laplacian, one row per edge."""
    return np.array([magnetic_laplacian(g.subgraph([e])).toarray().ravel() for e in range(g.m)])


def entry_z_scores(est, target):
    """|mean - target| / SE for the real and imaginary parts of every entry.

    ``est`` holds one estimate per row.  Entries with zero spread are exact
    and are skipped.
    """
    z = []
    for part, tp in ((est.real, target.real), (est.imag, target.imag)):
        se = part.std(axis=0, ddof=1) / np.sqrt(part.shape[0])
        ok = se > 1e-12
        z.append(np.abs(part.mean(axis=0)[ok] - tp[ok]) / se[ok])
    return np.concatenate(z)


# -- 1. determinantal identity -------------------------------------------------------


def test_criterion_1_determinantal_identity():
    t0 = time.monotonic()
    rng = np.random.default_rng(1)
    worst, count, graphs = 0.0, 0, 0
    while graphs < 60:
        n = int(rng.integers(3, 8))
        pairs = np.array([(a, b) for a in range(n) for b in range(a + 1, n)])
        m = int(rng.integers(n, min(12, len(pairs)) + 1))
        pick = pairs[rng.choice(len(pairs), m, replace=False)]
        g = ConnectionGraph(n, pick[:, 0], pick[:, 1], angles=rng.uniform(-np.pi, np.pi, m))
        if not g.is_connected:
            continue
        graphs += 1
        for q in (0.0, 0.5, 2.0):
            det = np.real(linalg.det(dense_laplacian(g, q)))
            worst = max(worst, abs(enumeration_mass(g, q) - det) / abs(det))
            count += 1
    elapsed = time.monotonic() - t0
    record(1, worst <= 1e-8 and elapsed < 60,
           f"{graphs} graphs x 3 values of q ({count} cases), max rel err {worst:.1e} "
           f"(tol 1e-8), {elapsed:.1f} s (limit 60 s)")


# -- 2 and 3. sampler law on a fixed 8-node graph ------------------------------------


def test_criterion_2_sampler_marginals_and_joint_law():
    g = chorded_ring()
    q, n_samples = 0.1, 100_000
    t0 = time.monotonic()
    s = sample_indicators(g, n_samples, q, "exact", seed=2)
    elapsed = time.monotonic() - t0
    kee = exact_kernel(g, q).ls
    freq = s.frequencies()
    within = np.abs(freq - kee) <= 3 * np.sqrt(kee * (1 - kee) / n_samples)
    share = within.mean()

    bits = 1 << np.arange(g.m)
    codes = s.indicators.astype(np.int64) @ bits
    empirical = dict(zip(*np.unique(codes, return_counts=True)))
    law = {int(bits[f.edges].sum()): p for f, p in enumerate_mtsfs(g, q)}
    tv = 0.5 * sum(abs(empirical.get(c, 0) / n_samples - law.get(c, 0.0))
                   for c in set(law) | set(empirical))
    record(2, share >= 0.99 and tv < 0.02 and elapsed < 120,
           f"q={q}, N={n_samples}: {within.sum()}/{g.m} edges within 3 sd (need 99%), "
           f"TV {tv:.4f} over {len(law)} forests (tol 0.02), sampling {elapsed:.1f} s")


def size_moment_z(sizes, mean, var):
    n = sizes.size
    d = sizes - sizes.mean()
    s2 = d.var(ddof=1)
    se_var = np.sqrt((np.mean(d**4) - s2**2) / n)
    return abs(sizes.mean() - mean) / np.sqrt(s2 / n), abs(s2 - var) / se_var


def test_criterion_3_cardinality_moments():
    g = chorded_ring()
    lam = linalg.eigvalsh(dense_laplacian(g))
    rows = []
    ok = True
    for q in (1.0, 0.1):
        sizes = sample_indicators(g, 100_000, q, "exact", seed=3).sizes.astype(float)
        mean = np.sum(lam / (lam + q))
        # q Tr(Delta (Delta + qI)^-2); equals Tr(Delta (Delta + qI)^-2) at q = 1
        var = np.sum(q * lam / (lam + q) ** 2)
        zm, zv = size_moment_z(sizes, mean, var)
        ok &= zm <= 3 and zv <= 3
        rows.append(f"q={q}: mean {sizes.mean():.4f} vs {mean:.4f} ({zm:.2f} SE), "
                    f"var {sizes.var(ddof=1):.4f} vs {var:.4f} ({zv:.2f} SE)")
    record(3, ok, "; ".join(rows))


# -- 4. walk length ----------------------------------------------------------------


def weakly_inconsistent_ring(n=20, chords=((0, 10), (3, 13), (6, 16), (9, 19), (12, 2), (15, 5)),
                             seed=2024):
    """Ring plus chords, angles = potential differences + noise below pi / (2 m).

    Every cycle has at most ``m`` edges, so its holonomy stays below pi / 2.
    """
    rng = np.random.default_rng(seed)
    u = list(range(n)) + [a for a, _ in chords]
    v = [(i + 1) % n for i in range(n)] + [b for _, b in chords]
    m = len(u)
    h = rng.uniform(0, 2 * np.pi, n)
    noise = rng.uniform(-1, 1, m) * np.pi / (2 * m)
    return ConnectionGraph(n, u, v, angles=np.mod(h[u] - h[v] + noise, 2 * np.pi))


def test_criterion_4_walk_length():
    g = weakly_inconsistent_ring()
    expected = expected_walk_steps(g, 0.0)
    steps = sample_indicators(g, 10_000, 0.0, "exact", seed=4).steps
    rel = abs(steps.mean() - expected) / expected
    record(4, rel <= 0.05,
           f"20-node graph, q=0: mean steps {steps.mean():.1f} vs {expected:.1f}, "
           f"rel err {rel:.3f} (tol 0.05)")


# -- 5. multiplicative bound ---------------------------------------------------------


def test_criterion_5_multiplicative_bound():
    t0 = time.monotonic()
    inst = gen_mun(200, 0.1, 0.1, seed=5)
    g, q, eps, delta = inst.graph, 0.1, 0.5, 0.1
    k = exact_kernel(g, q)
    t = batch_size_bound(k.d_eff, k.kappa, eps, delta)
    ls = exact_ls(g, q)
    target = magnetic_laplacian(g, q).regularized.toarray()
    trials = 100
    s = sample_indicators(g, trials * t, q, "capped", seed=5)
    hits = 0
    lo_all, hi_all = [], []
    for i in range(trials):
        rows = slice(i * t, (i + 1) * t)
        samples = [np.flatnonzero(x) for x in s.indicators[rows]]
        batch = SparsifierBatch(g, samples, ls, q, "self_normalized", s.importance_weights[rows])
        approx = magnetic_laplacian(batch.sparsified_graph(), q).regularized.toarray()
        ev = generalized_eigenvalues(approx, target)
        lo_all.append(ev[0])
        hi_all.append(ev[-1])
        hits += bool(ev[0] >= 1 - eps and ev[-1] <= 1 + eps)
    elapsed = time.monotonic() - t0
    record(5, hits >= 90 and elapsed < 600,
           f"MUN(200,0.1,0.1) m={g.m}, q={q}, t={t}: {hits}/{trials} trials in "
           f"[{1 - eps}, {1 + eps}] (need 90); eigenvalue range "
           f"[{min(lo_all):.3f}, {max(hi_all):.3f}], {elapsed:.0f} s (limit 600 s)")


# -- 6. Cholesky sparsity ------------------------------------------------------------


def test_criterion_6_cholesky_sparsity():
    g = gen_mun(500, 0.02, 0.1, seed=6).graph
    worst_err, worst_slack, checked, ok = 0.0, None, 0, True
    for q in (0.0, 0.1):
        for f in sample_batch(g, 50, q, "mtsf", "capped", seed=6):
            factor = cholesky_mtsf(f, q)
            bound = g.n - f.n_trees + sum(len(c) - 3 for c in f.cycles)
            a = factor.permuted(magnetic_laplacian(g.subgraph(f.edges), q).regularized.toarray())
            r = factor.R.toarray()
            err = np.linalg.norm(r.conj().T @ r - a) / np.linalg.norm(a)
            ok &= factor.offdiag_nnz <= bound and err <= 1e-9
            slack = bound - factor.offdiag_nnz
            worst_slack = slack if worst_slack is None else min(worst_slack, slack)
            worst_err = max(worst_err, err)
            checked += 1
    record(6, ok and checked == 100,
           f"{checked} forests of a 500-node graph (q in {{0, 0.1}}): nonzeros within bound "
           f"(min slack {worst_slack}), max rel reconstruction err {worst_err:.1e} (tol 1e-9)")


# -- 7. JL leverage scores ------------------------------------------------------------


def test_criterion_7_jl_scores():
    t0 = time.monotonic()
    g = gen_mun(500, 0.2, 0.1, seed=7).graph
    rows, ok = [], True
    for q in (0.0, 1.0):
        exact = exact_ls(g, q).values
        approx = jl_ls(g, q, seed=7)
        rel = (exact - approx.values) / exact
        below = np.mean(np.abs(rel) < 0.2)
        ok &= abs(rel.mean()) <= 0.01 and below >= 0.8
        rows.append(f"q={q} k={approx.k}: mean rel err {rel.mean():+.4f}, sd {rel.std():.3f}, "
                    f"{100 * below:.1f}% below 0.2")
    elapsed = time.monotonic() - t0
    ok &= elapsed < 180
    record(7, ok, f"MUN(500,0.2,0.1) m={g.m}: " + "; ".join(rows) + f", {elapsed:.0f} s")


# -- 8. preconditioning -------------------------------------------------------------


def test_criterion_8_preconditioning(tmp_path):
    t0 = time.monotonic()
    cfg = ExperimentConfig("precond", model="er", n=2000, p=0.01, q=0.1, q_values=[0.1],
                           mode="sf", ls="jl", iid=True, batch_sizes=[1, 2, 3, 4, 5, 6],
                           replicates=3, seed=8, out=str(tmp_path))
    run_experiment(cfg)
    report = json.loads((tmp_path / "report.json").read_text())
    elapsed = time.monotonic() - t0
    med = {}
    for r in report:
        med.setdefault((r["method"], r["t"]), []).append(r["cond"])
    rows, ok = [], True
    for t in cfg.batch_sizes:
        sf = np.median(med[("sf-jl", t)])
        iid = np.median(med[("iid-jl", t)])
        ok &= sf < iid
        rows.append(f"t={t} {sf:.1f}/{iid:.1f}")
    record(8, ok and elapsed < 900,
           "ER(2000,0.01), q=0.1, median cond forests/iid: " + ", ".join(rows)
           + f", {elapsed:.0f} s (limit 900 s)")


# -- 9. Sync-Rank --------------------------------------------------------------------


def test_criterion_9_sync_rank():
    gaps, taus = [], []
    for seed in range(3):
        inst = gen_mun(2000, 0.01, 0.1, seed=90 + seed)
        full = sync_rank(inst.graph, inst.h, "exact").tau
        sparse = sync_rank(inst.graph, inst.h, "sparsify-and-eigensolve", t=3, seed=seed).tau
        gaps.append(abs(full - sparse))
        taus.append((full, sparse))
    clean = gen_mun(2000, 0.01, 0.0, seed=99)
    clean_tau = sync_rank(clean.graph, clean.h, "exact").tau
    gap = float(np.median(gaps))
    detail = ", ".join(f"{a:.4f}/{b:.4f}" for a, b in taus)
    record(9, gap <= 0.02 and clean_tau == 1.0,
           f"MUN(2000,0.01,0.1) tau full/sparsified t=3: {detail}; median gap {gap:.4f} "
           f"(tol 0.02); noiseless tau {clean_tau}")


# -- 10. Barbell timing --------------------------------------------------------------


def test_criterion_10_barbell_timing(tmp_path):
    cfg = ExperimentConfig("bench", model="barbell", n=500, mode="sf",
                           q_values=[0.1, 1.0, 10.0], replicates=200, seed=10, out=str(tmp_path))
    run_experiment(cfg)
    bench = json.loads((tmp_path / "meta.json").read_text())["bench"]
    forest = [r["mean_seconds"] for r in bench if r["sampler"] == "forest"]
    tree = next(r["mean_seconds"] for r in bench if r["sampler"] == "spanning_tree")
    ok = all(a >= b for a, b in zip(forest, forest[1:])) and forest[-1] < tree
    record(10, ok,
           "Barbell(500), 200 runs, mean ms at q=0.1/1/10: "
           + "/".join(f"{1e3 * x:.2f}" for x in forest) + f", spanning tree {1e3 * tree:.2f}")


# -- 11. self-normalized importance sampling -----------------------------------------


def one_strong_cycle_graph(theta=2.5):
    """5 nodes, 3 cycles; only the triangle 0-1-2 (holonomy ``theta``) is strongly inconsistent.

    The square 1-3-4-2 has holonomy -1.2 and the outer 5-cycle ``theta - 1.2``.
    """
    u = [0, 1, 2, 1, 3, 4]
    v = [1, 2, 0, 3, 4, 2]
    angles = [0.0, theta, 0.0, 0.1, 0.1, theta - 1.4]
    return ConnectionGraph(5, u, v, angles=np.mod(angles, 2 * np.pi))


def batch_estimates(g, q, t, n_batches, seed):
    """Self-normalized and plain estimates of ``vec(Delta)`` over ``n_batches`` capped batches."""
    s = sample_indicators(g, t * n_batches, q, "capped", seed=seed)
    x = s.indicators.reshape(n_batches, t, g.m) / exact_ls(g, q).values
    w = s.importance_weights.reshape(n_batches, t)
    e = edge_laplacians(g)
    sn = np.einsum("bt,bte->be", w / w.sum(axis=1, keepdims=True), x) @ e
    plain = x.mean(axis=1) @ e
    return sn, plain


def ratio_bias(g, q):
    """Leading ``1/t`` bias of the self-normalized estimator, exactly from the capped law.

    With ``a = mean(w Y)`` and ``b = mean(w)`` over ``t`` samples,
    ``E[a / b] = A / B + (A Var w / B^3 - Cov(w, w Y) / B^2) / t + O(1/t^2)``.
    """
    ls = exact_ls(g, q).values
    e = edge_laplacians(g)
    forests = enumerate_mtsfs(g, q)
    p = np.array([pr for _, pr in forests])
    w = np.array([f.importance_weight for f, _ in forests])
    y = np.array([(np.bincount(f.edges, minlength=g.m) / ls) @ e for f, _ in forests])
    capped = p / w
    capped /= capped.sum()
    b = capped @ w
    a = capped @ (w[:, None] * y)
    var_w = capped @ (w - b) ** 2
    cov = capped @ ((w - b)[:, None] * (w[:, None] * y - a))
    return a * var_w / b**3 - cov / b**2


def test_criterion_11_self_normalized_consistency():
    g, q = one_strong_cycle_graph(), 0.5
    target = magnetic_laplacian(g).toarray().ravel()
    sn, plain = batch_estimates(g, q, t=50, n_batches=100_000, seed=11)
    z_sn = entry_z_scores(sn, target).max()
    z_plain = entry_z_scores(plain, target).max()
    # the O(1/t) ratio bias is resolvable at this batch count; see the next test
    predicted = entry_z_scores(sn - ratio_bias(g, q) / 50, target).max()
    record(11, z_sn <= 3 and z_plain > 5,
           f"one strong cycle (theta=2.5), q={q}, t=50, 1e5 batches: self-normalized max "
           f"{z_sn:.2f} SE (tol 3), plain max {z_plain:.1f} SE (need > 5); after removing "
           f"the exact 1/t ratio bias the self-normalized max is {predicted:.2f} SE")


def test_self_normalized_bias_vanishes_with_batch_size():
    g, q = one_strong_cycle_graph(), 0.5
    target = magnetic_laplacian(g).toarray().ravel()
    bias = ratio_bias(g, q)
    sn, plain = batch_estimates(g, q, t=500, n_batches=10_000, seed=12)
    assert entry_z_scores(sn, target).max() <= 4
    assert entry_z_scores(plain, target).max() > 5
    # at t = 5 the bias dominates and matches its leading-order value
    sn5, _ = batch_estimates(g, q, t=5, n_batches=100_000, seed=13)
    assert entry_z_scores(sn5, target).max() > 10
    assert entry_z_scores(sn5 - bias / 5, target).max() <= 4.5


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
