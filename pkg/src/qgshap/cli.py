"""``qgshap`` command line: gen, train, explain, eval, pipeline."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .benchmarks import DatasetSpec, evaluate, generate, write_per_graph_csv, write_report_csv
from .gin import TrainConfig, TrainingDiverged, accuracy, load_model, model_from_dict, model_to_dict, save_model, train
from .graph import Graph, read_jsonl, write_jsonl
from .pipeline import MAX_QUANTUM_NODES, MODES, PREPS, Explanation, PipelineConfig, explain
from .statevector import BudgetExceeded

log = logging.getLogger("qgshap")


class CliError(RuntimeError):
    pass


def derive_seed(seed: int, label: str) -> int:
    ss = np.random.SeedSequence([int(seed), zlib.crc32(label.encode())])
    return int(ss.generate_state(1)[0])


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def append_manifest(directory: Path, entry: dict) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    entry = {"tool": "qgshap", "version": __version__, **entry}
    with open(directory / "manifest.jsonl", "a") as fh:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")


def _config(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


# --------------------------------------------------------------------------
# gen


def cmd_gen(args) -> dict:
    t0 = time.perf_counter()
    spec = DatasetSpec(args.kind, args.train_count, args.test_count, args.node_budget,
                       args.seed, args.feature_mode, args.bridge_configs)
    train_set, test_set = generate(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"train": out / f"{args.kind}_train.jsonl", "test": out / f"{args.kind}_test.jsonl"}
    write_jsonl(train_set, paths["train"])
    write_jsonl(test_set, paths["test"])
    append_manifest(out, {
        "command": "gen", "config": _config(args), "seed": args.seed,
        "outputs": [str(p) for p in paths.values()],
        "counts": {"train": len(train_set), "test": len(test_set)},
        "duration_s": time.perf_counter() - t0,
    })
    print(f"wrote {len(train_set)} train / {len(test_set)} test graphs to {out}")
    return paths


# --------------------------------------------------------------------------
# train


def _train_once(train_set, test_set, args, seed):
    cfg = TrainConfig(epochs=args.epochs, learning_rate=args.lr, seed=seed,
                      hidden_dim=args.hidden_dim, readout=args.readout)
    from .gin import init_model

    model = init_model(train_set[0].num_features, cfg.hidden_dim, seed=seed,
                       readout=cfg.readout, encoder_bias=args.encoder_bias)
    res = train(train_set, cfg, model=model)
    test_acc = accuracy(res.model, test_set) if test_set else float("nan")
    return res, test_acc


def cmd_train(args) -> dict:
    t0 = time.perf_counter()
    train_set = read_jsonl(args.train)
    test_set = read_jsonl(args.test) if args.test else []
    attempts = []
    best = None
    for attempt in range(args.max_seeds):
        seed = derive_seed(args.seed, f"train-attempt-{attempt}")
        try:
            res, test_acc = _train_once(train_set, test_set, args, seed)
        except TrainingDiverged as exc:
            raise CliError(f"training diverged: {exc}") from exc
        attempts.append({"attempt": attempt, "init_seed": seed, "train_accuracy": res.train_accuracy,
                         "test_accuracy": test_acc, "final_loss": res.losses[-1]})
        best = (res, test_acc, seed)
        if not test_set or test_acc >= args.min_test_acc:
            break
        log.warning("attempt %d: test accuracy %.3f below %.2f", attempt, test_acc, args.min_test_acc)
    res, test_acc, seed = best
    out = Path(args.out)
    atomic_write(out, json.dumps(model_to_dict(res.model), separators=(",", ":")) + "\n")
    line = {"train_accuracy": res.train_accuracy, "test_accuracy": test_acc,
            "final_loss": res.losses[-1], "init_seed": seed, "attempts": len(attempts)}
    append_manifest(out.parent, {
        "command": "train", "config": _config(args), "seed": args.seed,
        "inputs": [args.train, args.test], "outputs": [str(out)],
        "attempts": attempts, "duration_s": time.perf_counter() - t0,
    })
    print(json.dumps(line))
    if test_set and test_acc < args.min_test_acc:
        raise CliError(f"test accuracy {test_acc:.3f} below {args.min_test_acc} after {len(attempts)} seeds")
    return line


# --------------------------------------------------------------------------
# explain


def _explain_worker(payload):
    model_d, graph_d, cfg_d = payload
    t0 = time.perf_counter()
    e = explain(model_from_dict(model_d), Graph.from_dict(graph_d), PipelineConfig(**cfg_d))
    return e.to_dict(), time.perf_counter() - t0


def explanation_path(directory: Path, i: int) -> Path:
    return directory / f"graph_{i:04d}.json"


def cmd_explain(args) -> list:
    t0 = time.perf_counter()
    model = load_model(args.model)
    graphs = read_jsonl(args.dataset)
    cfg = PipelineConfig(mode=args.mode, prep=args.prep, partition_qubits=args.l,
                         eval_qubits=args.m, seed=args.seed)
    if cfg.mode != "classical":
        for i, g in enumerate(graphs):
            if g.num_nodes > MAX_QUANTUM_NODES:
                raise BudgetExceeded(f"graph {i} in {args.dataset} has {g.num_nodes} nodes; "
                                     f"quantum modes allow at most {MAX_QUANTUM_NODES}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model_d = model_to_dict(model)
    cfg_d = {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}
    payloads = [(model_d, g.to_dict(), cfg_d) for g in graphs]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_explain_worker, payloads))
    else:
        results = [_explain_worker(p) for p in payloads]
    paths, timings = [], []
    for i, (d, dt) in enumerate(results):
        p = explanation_path(out, i)
        atomic_write(p, json.dumps(d, indent=1) + "\n")
        paths.append(str(p))
        timings.append(dt)
        log.info("graph %d explained in %.3fs", i, dt)
    append_manifest(out, {
        "command": "explain", "config": _config(args), "seed": args.seed,
        "inputs": [args.model, args.dataset], "outputs": paths,
        "per_graph_seconds": timings, "duration_s": time.perf_counter() - t0,
    })
    print(f"wrote {len(paths)} explanations ({cfg.mode}) to {out}")
    return paths


# --------------------------------------------------------------------------
# eval


def load_explanations(directory: Path, count: int) -> list:
    directory = Path(directory)
    missing = [i for i in range(count) if not explanation_path(directory, i).exists()]
    if missing:
        raise CliError(f"explanations missing for graph(s) {missing} in {directory}")
    return [Explanation.from_dict(json.loads(explanation_path(directory, i).read_text())) for i in range(count)]


def plot_heatmaps(graphs, explanations, directory: Path) -> list:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import networkx as nx

    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, (g, e) in enumerate(zip(graphs, explanations)):
        G = nx.Graph()
        G.add_nodes_from(range(g.num_nodes))
        G.add_edges_from(g.edges)
        pos = nx.spring_layout(G, seed=0)
        fig, ax = plt.subplots(figsize=(3.2, 3.2))
        nx.draw_networkx_edges(G, pos, ax=ax)
        nodes = nx.draw_networkx_nodes(G, pos, node_color=e.scores, cmap="coolwarm", vmin=-1, vmax=1, ax=ax)
        nx.draw_networkx_labels(G, pos, ax=ax, font_size=8)
        if g.target_nodes:
            nx.draw_networkx_nodes(G, pos, nodelist=list(g.target_nodes), node_color="none",
                                   edgecolors="black", linewidths=2, ax=ax)
        fig.colorbar(nodes, ax=ax, shrink=0.7)
        ax.set_axis_off()
        p = directory / f"graph_{i:04d}.png"
        fig.savefig(p, dpi=100, bbox_inches="tight")
        plt.close(fig)
        paths.append(str(p))
    return paths


def cmd_eval(args):
    t0 = time.perf_counter()
    model = load_model(args.model)
    graphs = read_jsonl(args.dataset)
    exps = load_explanations(args.explanations, len(graphs))
    # only positive-class graphs carry a ground-truth explanation
    keep = [i for i, g in enumerate(graphs) if g.label == 1 and g.ground_truth]
    if not keep:
        raise CliError(f"no label-1 graphs with ground truth in {args.dataset}")
    sel_g = [graphs[i] for i in keep]
    sel_e = [exps[i] for i in keep]
    report = evaluate(model, sel_g, sel_e, k=args.k, gea_k=args.gea_k)
    for row, i in zip(report.per_graph, keep):
        row["graph"] = i
    out = Path(args.out_csv)
    out.parent.mkdir(parents=True, exist_ok=True)
    name = args.dataset_name or Path(args.dataset).stem.replace("_test", "")
    mode = sel_e[0].mode
    write_report_csv(report, out, name, mode)
    per_graph = out.with_name(out.stem + "_per_graph.csv")
    write_per_graph_csv(report, per_graph)
    outputs = [str(out), str(per_graph)]
    if args.plot_dir:
        outputs += plot_heatmaps(sel_g, sel_e, Path(args.plot_dir))
    append_manifest(out.parent, {
        "command": "eval", "config": _config(args), "inputs": [args.model, args.dataset, str(args.explanations)],
        "outputs": outputs, "duration_s": time.perf_counter() - t0,
    })
    for metric, (mu, sd) in report.summary().items():
        print(f"{metric:10s} {mu:.4f} ± {sd:.4f}")
    return report


# --------------------------------------------------------------------------
# pipeline


def cmd_pipeline(args):
    out = Path(args.out_dir)
    data = out / "data"
    gen_args = argparse.Namespace(kind=args.kind, out_dir=str(data), seed=args.seed,
                                  train_count=args.train_count, test_count=args.test_count,
                                  node_budget=args.node_budget, feature_mode=args.feature_mode,
                                  bridge_configs=args.bridge_configs)
    paths = cmd_gen(gen_args)
    model_path = out / "model.json"
    train_args = argparse.Namespace(train=str(paths["train"]), test=str(paths["test"]),
                                    hidden_dim=args.hidden_dim, epochs=args.epochs, lr=args.lr,
                                    seed=args.seed, out=str(model_path), readout=args.readout,
                                    encoder_bias=args.encoder_bias, min_test_acc=args.min_test_acc,
                                    max_seeds=args.max_seeds)
    cmd_train(train_args)
    exp_dir = out / "explanations"
    exp_args = argparse.Namespace(model=str(model_path), dataset=str(paths["test"]), mode=args.mode,
                                  prep=args.prep, l=args.l, m=args.m, seed=args.seed,
                                  out=str(exp_dir), jobs=args.jobs)
    cmd_explain(exp_args)
    eval_args = argparse.Namespace(model=str(model_path), dataset=str(paths["test"]),
                                   explanations=str(exp_dir), k=args.k, gea_k=args.gea_k,
                                   out_csv=str(out / "metrics.csv"), plot_dir=args.plot_dir,
                                   dataset_name=args.kind)
    return cmd_eval(eval_args)


# --------------------------------------------------------------------------
# parser


def _positive_int(s):
    v = int(s)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {v}")
    return v


def _add_gen_opts(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-count", type=_positive_int, default=None)
    p.add_argument("--test-count", type=_positive_int, default=None)
    p.add_argument("--node-budget", type=int, default=8)
    p.add_argument("--feature-mode", choices=("ones", "degree-onehot"), default="degree-onehot")
    p.add_argument("--bridge-configs", choices=("sum8", "literal"), default="sum8")


def _add_train_opts(p):
    p.add_argument("--hidden-dim", type=_positive_int, default=128)
    p.add_argument("--epochs", type=_positive_int, default=100)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--readout", choices=("sum", "mean"), default="sum")
    p.add_argument("--encoder-bias", action=argparse.BooleanOptionalAction, default=False)
    p.add_argument("--min-test-acc", type=float, default=0.95)
    p.add_argument("--max-seeds", type=_positive_int, default=3)


def _add_explain_opts(p):
    p.add_argument("--mode", choices=MODES, default="quantum-exact")
    p.add_argument("--prep", choices=PREPS, default="beta-quadrature")
    p.add_argument("--l", type=_positive_int, default=6, help="partition qubits")
    p.add_argument("--m", type=_positive_int, default=6, help="evaluation qubits (quantum-qae)")
    p.add_argument("--jobs", type=_positive_int, default=1)


def _add_eval_opts(p):
    p.add_argument("--k", type=_positive_int, default=2)
    p.add_argument("--gea-k", type=_positive_int, default=2,
                   help="size of the predicted node set for GEA")
    p.add_argument("--plot-dir", default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qgshap", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("kind", choices=("bridge", "ba2motif"))
    p.add_argument("--out-dir", required=True)
    _add_gen_opts(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a GIN classifier")
    p.add_argument("--train", required=True)
    p.add_argument("--test", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_train_opts(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("explain", help="Shapley explanations for every graph in a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_explain_opts(p)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("eval", help="score explanations against ground truth")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--explanations", required=True)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--dataset-name", default=None)
    _add_eval_opts(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="gen + train + explain + eval in one go")
    p.add_argument("kind", choices=("bridge", "ba2motif"))
    p.add_argument("--out-dir", required=True)
    _add_gen_opts(p)
    _add_train_opts(p)
    _add_explain_opts(p)
    _add_eval_opts(p)
    p.set_defaults(func=cmd_pipeline)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CliError, BudgetExceeded, ValueError, OSError) as exc:
        print(f"qgshap {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
