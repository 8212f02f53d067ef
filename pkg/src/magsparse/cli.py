"""Command-line entry point: ``magsparse <subcommand> [options]``.

Every run writes its resolved configuration (``config.json``), its data
files (deterministic under the seed) and ``meta.json`` (versions, timings).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import __version__
from .generators import gen_barbell, gen_er, gen_ero, gen_mun
from .graph import GraphFormatError, combinatorial_laplacian, magnetic_laplacian
from .graph import read_edgelist, write_edgelist
from .leverage import leverage_scores
from .oracle import exact_kernel
from .sampler import cycle_popping, iid_edges, sample_batch, stream_seed, wilson_st
from .solvers import SINGULAR_SHIFT, precondition_report, ssl_solve
from .sparsifier import SparsifierBatch, batch_size_bound, iid_batch
from .syncrank import embed_comparisons, sync_rank

log = logging.getLogger("magsparse")

COMMANDS = ("gen", "sample", "ls", "sparsify", "precond", "ssl", "syncrank", "bench")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Resolved options of one run; serializes to JSON and back unchanged."""

    command: str
    graph: str | None = None  # edge-list file
    model: str | None = None  # er | mun | ero | barbell
    n: int = 100
    p: float = 0.1
    eta: float = 0.0
    connectivity: str = "resample"
    q: float = 0.0
    mode: str = "mtsf"
    weight_mode: str = "capped"
    ls: str = "uniform"
    batch_sizes: list = field(default_factory=lambda: [1])
    replicates: int = 1
    eps: float | None = None
    delta: float | None = None
    q_values: list = field(default_factory=list)
    iid: bool = False
    labels: str | None = None
    comparisons: str | None = None
    reference: str | None = None
    eigen_mode: str = "exact"
    seed: int = 0
    out: str = "out"
    threads: int = 1

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; choose from {COMMANDS}")
        if self.q < 0:
            raise ConfigError("--q must be nonnegative")
        if self.mode not in ("st", "sf", "crsf", "mtsf"):
            raise ConfigError("--mode must be st, sf, crsf or mtsf")
        if self.mode == "sf" and self.q <= 0 and self.command in ("sample", "sparsify"):
            raise ConfigError("--mode sf needs --q > 0")
        if self.ls not in ("exact", "jl", "uniform"):
            raise ConfigError("--ls must be exact, jl or uniform")
        if self.replicates < 1 or any(int(t) < 1 for t in self.batch_sizes):
            raise ConfigError("--replicates and --t values must be positive")
        needs_graph = self.command not in ("syncrank",)
        if needs_graph and not (self.graph or self.model):
            raise ConfigError("give a graph: --graph FILE or --model {er,mun,ero,barbell}")
        if self.command == "ssl" and not self.labels:
            raise ConfigError("ssl needs --labels FILE with lines 'node re im'")
        if self.command == "syncrank" and not (self.comparisons or self.model):
            raise ConfigError("syncrank needs --comparisons FILE or a --model")
        return self


# -- helpers ----------------------------------------------------------------------


def _load_graph(cfg):
    """Return ``(graph, planted scores or None)``."""
    if cfg.graph:
        return read_edgelist(cfg.graph), None
    if cfg.model == "er":
        return gen_er(cfg.n, cfg.p, cfg.seed, cfg.connectivity), None
    gen = {"mun": gen_mun, "ero": gen_ero}
    if cfg.model in gen:
        inst = gen[cfg.model](cfg.n, cfg.p, cfg.eta, cfg.seed, cfg.connectivity)
        return inst.graph, inst.h
    if cfg.model == "barbell":
        inst = gen_barbell(cfg.n, cfg.eta, cfg.seed)
        return inst.graph, inst.h
    raise ConfigError(f"unknown model {cfg.model!r}")


def _write_csv(path, header_lines, columns, rows):
    with open(path, "w", newline="") as fh:
        for h in header_lines:
            fh.write(f"# {h}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)


def _fmt(x):
    return repr(float(x))


def _sampling_q(cfg):
    return 0.0 if cfg.mode in ("st", "crsf") else cfg.q


def _draw_batch(g, cfg, t, seed):
    """Sample ``t`` forests and wrap them with the configured scores."""
    q = _sampling_q(cfg)
    base = g.trivialized() if cfg.mode in ("sf", "st") else g
    unit = base.with_unit_weights()
    forests = sample_batch(unit, t, q, cfg.mode, cfg.weight_mode, seed=seed, threads=cfg.threads)
    if cfg.ls == "uniform":
        scores = "uniform"
    else:
        scores = leverage_scores(unit, q, cfg.ls, seed=seed)
    kind = "self_normalized" if cfg.weight_mode == "capped" else "plain"
    return SparsifierBatch(base.with_weights(g.weights), forests, scores, q, kind)


# -- subcommands --------------------------------------------------------------------


def cmd_gen(cfg, out, meta):
    g, h = _load_graph(cfg)
    write_edgelist(g, out / "graph.txt", header=f"model={cfg.model} seed={cfg.seed}")
    if h is not None:
        lines = ["# node h"] + [f"{u} {int(v)}" for u, v in enumerate(h)]
        (out / "ranking.txt").write_text("\n".join(lines) + "\n")
    meta.update(n=g.n, m=g.m, connected=g.is_connected)


def cmd_sample(cfg, out, meta):
    g, _ = _load_graph(cfg)
    q = _sampling_q(cfg)
    base = (g.trivialized() if cfg.mode in ("sf", "st") else g).with_unit_weights()
    t0 = time.monotonic()
    forests, st = sample_batch(base, cfg.replicates, q, cfg.mode, cfg.weight_mode,
                               seed=cfg.seed, threads=cfg.threads, return_stats=True)
    meta["sampling_seconds"] = time.monotonic() - t0
    lines = [" ".join(str(int(e)) for e in f.edges) for f in forests]
    (out / "samples.txt").write_text("\n".join(lines) + "\n")
    stats = [
        {"replicate": i, "edges": len(f), "trees": f.n_trees, "cycles": f.n_cycles,
         "steps": s.steps, "cycles_popped": s.cycles_popped, "bernoulli_draws": s.bernoulli_draws,
         "importance_weight": f.importance_weight}
        for i, (f, s) in enumerate(zip(forests, st))
    ]
    (out / "stats.json").write_text(json.dumps(stats, indent=2) + "\n")


def cmd_ls(cfg, out, meta):
    g, _ = _load_graph(cfg)
    ls = leverage_scores(g.with_unit_weights(), cfg.q, cfg.ls, seed=cfg.seed)
    lines = [f"# method={ls.method} q={cfg.q} k={ls.k} clipped={ls.n_clipped}", "# edge_id score"]
    lines += [f"{e} {_fmt(v)}" for e, v in enumerate(ls.values)]
    (out / "ls.txt").write_text("\n".join(lines) + "\n")
    meta.update(sum=float(ls.total))


def cmd_sparsify(cfg, out, meta):
    g, _ = _load_graph(cfg)
    t = int(cfg.batch_sizes[0])
    if cfg.eps is not None:
        base = g.trivialized() if cfg.mode in ("sf", "st") else g
        k = exact_kernel(base.with_unit_weights(), _sampling_q(cfg))
        t = batch_size_bound(k.d_eff, k.kappa, cfg.eps, cfg.delta or 0.1)
    t0 = time.monotonic()
    batch = _draw_batch(g, cfg, t, cfg.seed)
    meta["sampling_seconds"] = time.monotonic() - t0
    sg = batch.sparsified_graph()
    write_edgelist(sg, out / "sparsifier.txt", header=f"sparsifier t={t} q={cfg.q}")
    summary = {
        "t": t,
        "union_edges": sg.m,
        "total_sampled_edges": int(batch.multiplicity.sum()),
        "weight_min": float(sg.weights.min()),
        "weight_max": float(sg.weights.max()),
        "weight_mean": float(sg.weights.mean()),
        "importance_weights": [float(w) for w in batch.importance_weights],
    }
    (out / "sparsifier.json").write_text(json.dumps(summary, indent=2) + "\n")


def _report_row(target, batch, q, b):
    lap = magnetic_laplacian(batch.sparsified_graph(), q).regularized
    if q == 0:
        lap = lap + SINGULAR_SHIFT * sp.identity(lap.shape[0], format="csr")
    return precondition_report(target, lap, b)


def cmd_precond(cfg, out, meta):
    """Condition number against edge budget for each q, batch size and replicate.

    With ``--iid`` every forest batch is paired with an i.i.d. batch of JL-score
    draws of the same total edge count.
    """
    g, _ = _load_graph(cfg)
    trivial = cfg.mode in ("sf", "st")
    b = np.random.default_rng(cfg.seed).standard_normal(g.n) + 0j
    rows, reports = [], []
    for qi, q in enumerate(cfg.q_values or [cfg.q]):
        qcfg = ExperimentConfig(**{**asdict(cfg), "q": q})
        lap_fn = combinatorial_laplacian if trivial else magnetic_laplacian
        target = lap_fn(g, q).regularized
        jl = None
        if cfg.iid:
            base = g.trivialized() if trivial else g
            jl = leverage_scores(base.with_unit_weights(), q, "jl", seed=cfg.seed)
        for t in cfg.batch_sizes:
            for rep in range(cfg.replicates):
                seed = stream_seed(cfg.seed, 10**6 * qi + 1000 * int(t) + rep)
                batch = _draw_batch(g, qcfg, int(t), seed)
                budget = int(batch.multiplicity.sum())
                arms = [(f"{cfg.mode}-{cfg.ls}", batch)]
                if jl is not None:
                    base = g.trivialized() if trivial else g
                    edges = iid_edges(base, jl, budget, np.random.default_rng(seed))
                    arms.append(("iid-jl", iid_batch(base, edges, jl, q)))
                for name, bt in arms:
                    r = _report_row(target, bt, q, b)
                    rows.append([_fmt(q), name, int(t), rep, bt.sparsified_graph().m, budget,
                                 _fmt(r.cond), r.iterations, r.iterations_unpreconditioned])
                    reports.append({"q": q, "method": name, "t": int(t), "replicate": rep,
                                    **r.to_dict()})
    _write_csv(out / "precond.csv",
               ["cond = lambda_max / lambda_min of (S + qI)^-1 (L + qI); S = sparsifier",
                "sampled_edges = edge budget (draws counted with multiplicity)",
                "pcg_iters / cg_iters = iterations to relative residual 1e-8 with / without S"],
               ["q", "method", "t", "replicate", "union_edges", "sampled_edges", "cond",
                "pcg_iters", "cg_iters"], rows)
    (out / "report.json").write_text(json.dumps(reports, indent=2) + "\n")


def cmd_ssl(cfg, out, meta):
    g, _ = _load_graph(cfg)
    y = np.zeros(g.n, dtype=complex)
    with open(cfg.labels) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if len(parts) not in (2, 3):
                raise ConfigError(f"{cfg.labels}:{lineno}: expected 'node re [im]'")
            y[int(parts[0])] = float(parts[1]) + 1j * (float(parts[2]) if len(parts) == 3 else 0.0)
    f, it, hist = ssl_solve(g, cfg.q, y, seed=cfg.seed, return_info=True)
    _write_csv(out / "solution.csv", [f"(Delta + qI) f = q y with q={cfg.q}"],
               ["node", "re", "im", "abs", "arg"],
               [[u, _fmt(v.real), _fmt(v.imag), _fmt(abs(v)), _fmt(np.angle(v))]
                for u, v in enumerate(f)])
    meta.update(pcg_iterations=it, final_residual=float(hist[-1]))


def cmd_syncrank(cfg, out, meta):
    reference = None
    if cfg.comparisons:
        c = np.loadtxt(cfg.comparisons, comments="#", ndmin=2)
        n = int(c[:, :2].max()) + 1
        g = embed_comparisons(c, n)
    else:
        g, reference = _load_graph(cfg)
    if cfg.reference:
        ref = np.loadtxt(cfg.reference, comments="#", ndmin=2)
        reference = np.zeros(g.n)
        reference[ref[:, 0].astype(int)] = ref[:, 1]
    t0 = time.monotonic()
    res = sync_rank(g, reference, cfg.eigen_mode, int(cfg.batch_sizes[0]), cfg.ls, cfg.seed,
                    cfg.threads)
    meta["ranking_seconds"] = time.monotonic() - t0
    _write_csv(out / "ranking.csv", ["rank 1 is the top item; score = arg f_1 in [0, 2 pi)"],
               ["node", "score", "rank"],
               [[u, _fmt(h), int(r)] for u, (h, r) in enumerate(zip(res.scores, res.ranks))])
    metrics = {"shift": res.shift, "upsets": res.upsets, "tau": res.tau,
               "degenerate": res.degenerate, "eigenvalue": res.eigenvalue,
               "mode": res.mode, "tie_break": res.tie_break}
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n")


def cmd_bench(cfg, out, meta):
    """Mean sampling time of forests per q against uniform spanning trees.

    Only the sampler call is timed.  Timings vary between runs, so they go to
    ``meta.json`` rather than to a data file.
    """
    g, _ = _load_graph(cfg)
    unit = g.with_unit_weights()
    forest_graph = unit.trivialized() if cfg.mode in ("sf", "st") else unit
    tree_graph = unit.trivialized()
    qs = cfg.q_values or [cfg.q]

    def timed(fn, salt):
        ts = np.empty(cfg.replicates)
        for r in range(cfg.replicates):
            s = stream_seed(cfg.seed, salt + r)
            t0 = time.monotonic()
            fn(s)
            ts[r] = time.monotonic() - t0
        sem = ts.std(ddof=1) / np.sqrt(ts.size) if ts.size > 1 else 0.0
        return float(ts.mean()), float(sem)

    # compile the walk kernel before any measurement
    cycle_popping(forest_graph, max(qs[0], 1e-3), "capped", seed=0)
    rows = []
    for i, q in enumerate(qs):
        mean, sem = timed(lambda s: cycle_popping(forest_graph, q, "capped", seed=s),
                          10**6 * (i + 1))
        rows.append({"sampler": "forest", "q": float(q), "runs": cfg.replicates,
                     "mean_seconds": mean, "sem_seconds": sem})
    if tree_graph.is_connected:
        wilson_st(tree_graph, seed=0)
        mean, sem = timed(lambda s: wilson_st(tree_graph, seed=s), 0)
        rows.append({"sampler": "spanning_tree", "q": 0.0, "runs": cfg.replicates,
                     "mean_seconds": mean, "sem_seconds": sem})
    meta["bench"] = rows


HANDLERS = {
    "gen": cmd_gen,
    "sample": cmd_sample,
    "ls": cmd_ls,
    "sparsify": cmd_sparsify,
    "precond": cmd_precond,
    "ssl": cmd_ssl,
    "syncrank": cmd_syncrank,
    "bench": cmd_bench,
}


def run_experiment(cfg: ExperimentConfig):
    """Run one configured command; returns the output directory."""
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json())
    meta = {"versions": _versions()}
    t0 = time.monotonic()
    HANDLERS[cfg.command](cfg, out, meta)
    meta["total_seconds"] = time.monotonic() - t0
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
    return out


def _versions():
    import numba
    import scipy

    return {"magsparse": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__}


# -- argument parsing ---------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (replicate l uses stream (seed, l))")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="worker threads for replicate sampling")
    common.add_argument("--config", help="JSON config file; explicit flags override it")
    common.add_argument("-v", "--verbose", action="store_true")

    src = argparse.ArgumentParser(add_help=False)
    src.add_argument("--graph", help="edge-list file 'u v weight angle'")
    src.add_argument("--model", choices=["er", "mun", "ero", "barbell"])
    src.add_argument("--n", type=int)
    src.add_argument("--p", type=float)
    src.add_argument("--eta", type=float)
    src.add_argument("--connectivity", choices=["resample", "largest", "accept"])

    samp = argparse.ArgumentParser(add_help=False)
    samp.add_argument("--q", type=float)
    samp.add_argument("--mode", choices=["st", "sf", "crsf", "mtsf"])
    samp.add_argument("--weight-mode", dest="weight_mode", choices=["exact", "capped"])
    samp.add_argument("--ls", choices=["exact", "jl", "uniform"])
    samp.add_argument("--t", dest="batch_sizes", type=int, nargs="+", help="batch size(s)")
    samp.add_argument("--replicates", type=int)

    p = argparse.ArgumentParser(prog="magsparse",
                                description="Magnetic Laplacian sparsification by random forests.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", parents=[common, src], help="generate a random connection graph")
    sub.add_parser("sample", parents=[common, src, samp], help="sample spanning forests or trees")
    sub.add_parser("ls", parents=[common, src, samp], help="leverage scores per edge")
    sp_ = sub.add_parser("sparsify", parents=[common, src, samp], help="build a sparsifier")
    sp_.add_argument("--eps", type=float, help="set t from the batch-size bound")
    sp_.add_argument("--delta", type=float)
    pc = sub.add_parser("precond", parents=[common, src, samp], help="preconditioning report")
    pc.add_argument("--q-values", dest="q_values", type=float, nargs="+")
    pc.add_argument("--iid", action="store_true", default=None,
                    help="add an i.i.d. JL-score baseline at matched edge budgets")
    ssl = sub.add_parser("ssl", parents=[common, src, samp], help="Tikhonov smoothing of labels")
    ssl.add_argument("--labels", help="file with lines 'node re [im]'")
    sr = sub.add_parser("syncrank", parents=[common, src, samp], help="rank from comparisons")
    sr.add_argument("--comparisons", help="file with lines 'u v kappa'")
    sr.add_argument("--reference", help="planted scores 'node h' for Kendall tau")
    sr.add_argument("--eigen-mode", dest="eigen_mode",
                    choices=["exact", "sparsify-and-eigensolve", "sparsify-and-precondition"])
    bn = sub.add_parser("bench", parents=[common, src, samp], help="sampling-time benchmark")
    bn.add_argument("--q-values", dest="q_values", type=float, nargs="+")
    return p


def config_from_args(args) -> ExperimentConfig:
    base = {}
    if args.config:
        base = json.loads(Path(args.config).read_text())
    cfg = ExperimentConfig(command=args.command)
    known = {f.name for f in fields(ExperimentConfig)}
    for k, v in base.items():
        if k not in known:
            raise ConfigError(f"unknown config key {k!r} in {args.config}")
        setattr(cfg, k, v)
    cfg.command = args.command
    for k, v in vars(args).items():
        if k in known and v is not None and k != "command":
            setattr(cfg, k, v)
    if cfg.command == "sample" and getattr(args, "batch_sizes", None) and not args.replicates:
        cfg.replicates = int(cfg.batch_sizes[0])
    return cfg


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
        out = run_experiment(cfg)
    except (ConfigError, GraphFormatError, FileNotFoundError, ValueError) as exc:
        print(f"magsparse {args.command}: error: {exc}", file=sys.stderr)
        return 2
    log.info("wrote %s", out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
