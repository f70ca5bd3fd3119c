"""Command-line interface: train, eval, sweep, ablate, synth.

Exit codes: 0 success, 2 configuration error, 3 data/parse error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .errors import AttrInferError, ConfigurationError
from .experiments import (
    DEFAULT_SPLIT,
    emit_report,
    run_ablations,
    run_param_sweep,
    run_sparsity_sweep,
    synthetic_benchmark,
)
from .graph import AttributeSchema, generate_synthetic, load_graph, split_labels, write_graph
from .metrics import evaluate, predict_labels
from .model import load_checkpoint, save_checkpoint
from .numerics import make_rng
from .training import MODES, TrainConfig, infer, prepare, seed_streams, train


def _csv(kind):
    def parse(text):
        try:
            return [kind(v) for v in text.split(",") if v.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"bad list {text!r}: {exc}") from exc
    return parse


def _add_graph_args(p, required=True):
    p.add_argument("--schema", required=required, help="schema JSON")
    p.add_argument("--nodes", required=required, help="TSV: user id then one label per attribute (0 = missing)")
    p.add_argument("--edges", required=required, help="TSV: one undirected edge per line")


def _add_train_args(p):
    p.add_argument("--mode", choices=MODES, default="full")
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--beta", type=float, default=0.3)
    p.add_argument("--lambda", dest="lam", type=float, default=0.2)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--disc-lr", type=float, default=0.001)
    p.add_argument("--seed", type=int, default=0)


def _add_experiment_graph(p):
    _add_graph_args(p, required=False)
    p.add_argument("--benchmark-seed", type=int, default=None,
                   help="use the built-in synthetic benchmark generated with this seed instead of files")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attrinfer", description=__doc__.splitlines()[0])
    parser.add_argument("--quiet", action="store_true", help="suppress progress messages")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on a graph and report test metrics")
    _add_graph_args(p)
    p.add_argument("--out", required=True)
    _add_train_args(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split it was trained with")
    p.add_argument("--checkpoint", required=True)
    _add_graph_args(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="accuracy over a swept parameter, averaged over seeds")
    p.add_argument("--axis", choices=("sparsity", "lambda", "beta"), required=True)
    p.add_argument("--values", type=_csv(float), required=True)
    p.add_argument("--seeds", type=_csv(int), required=True)
    p.add_argument("--out", required=True)
    _add_experiment_graph(p)
    _add_train_args(p)

    p = sub.add_parser("ablate", help="compare all model variants over seeds")
    p.add_argument("--seeds", type=_csv(int), required=True)
    p.add_argument("--modes", type=_csv(str), default=list(MODES))
    p.add_argument("--out", required=True)
    _add_experiment_graph(p)
    _add_train_args(p)

    p = sub.add_parser("synth", help="write a synthetic homophilous attributed graph")
    p.add_argument("--users", type=int, required=True)
    p.add_argument("--communities", type=int, required=True)
    p.add_argument("--homophily", type=float, required=True)
    p.add_argument("--missing", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--labels", type=_csv(int), default=[3, 4, 5], help="labels per attribute type")
    p.add_argument("--degree", type=float, default=10.0, help="expected degree")
    return parser


def _config(args) -> TrainConfig:
    return TrainConfig(iterations=args.iters, lr_model=args.lr, lr_disc=args.disc_lr, beta=args.beta,
                       lam=args.lam, seed=args.seed, mode=args.mode)


def _experiment_graph(args):
    files = (args.schema, args.nodes, args.edges)
    if args.benchmark_seed is not None:
        if any(files):
            raise ConfigurationError("give either --benchmark-seed or --schema/--nodes/--edges, not both")
        return synthetic_benchmark(args.benchmark_seed).graph
    if not all(files):
        raise ConfigurationError("--schema, --nodes and --edges are required unless --benchmark-seed is given")
    return load_graph(*files)


def _write_predictions(path: Path, pred: np.ndarray) -> None:
    path.write_text("".join("\t".join(map(str, [i, *row])) + "\n" for i, row in enumerate(pred.tolist())))


def cmd_train(args, log) -> None:
    graph = load_graph(args.schema, args.nodes, args.edges)
    config = _config(args)
    mask = split_labels(graph, DEFAULT_SPLIT, seed_streams(config.seed)["split"])
    data = prepare(graph, mask)
    result = train(config, data)
    x_hat = infer(result.params, data)
    report = evaluate(x_hat, graph.assignments, mask.test, graph.schema)
    out = Path(args.out)
    metrics = {**report.as_dict(graph.schema), "best_iteration": result.best_iteration, "mode": config.mode,
               "seed": config.seed, "mask_fingerprint": mask.fingerprint()}
    emit_report(out, metrics, history=result.history)
    save_checkpoint(out / "checkpoint.json", result.params, graph.schema, config.to_dict(),
                    extra={"split": list(DEFAULT_SPLIT), "best_iteration": result.best_iteration})
    _write_predictions(out / "predictions.tsv", predict_labels(x_hat, graph.schema))
    log(f"test accuracy {report.accuracy_cell:.4f}  macro-F1 {report.macro_f1:.4f}  -> {out}")


def cmd_eval(args, log) -> None:
    graph = load_graph(args.schema, args.nodes, args.edges)
    params, config_dict, payload = load_checkpoint(args.checkpoint, graph.schema)
    config = TrainConfig.from_dict(config_dict)
    split = tuple(payload.get("extra", {}).get("split", DEFAULT_SPLIT))
    mask = split_labels(graph, split, seed_streams(config.seed)["split"])
    data = prepare(graph, mask)
    x_hat = infer(params, data)
    report = evaluate(x_hat, graph.assignments, mask.test, graph.schema)
    out = Path(args.out)
    emit_report(out, {**report.as_dict(graph.schema), "checkpoint": str(args.checkpoint),
                      "mask_fingerprint": mask.fingerprint()})
    _write_predictions(out / "predictions.tsv", predict_labels(x_hat, graph.schema))
    log(f"test accuracy {report.accuracy_cell:.4f}  macro-F1 {report.macro_f1:.4f}  -> {out}")


def cmd_sweep(args, log) -> None:
    graph = _experiment_graph(args)
    config = _config(args)
    if args.axis == "sparsity":
        res = run_sparsity_sweep(graph, config, args.values, args.seeds, progress=log)
    else:
        res = run_param_sweep(graph, config, args.axis, args.values, args.seeds, progress=log)
    metrics = {"axis": res.axis, "seeds": res.seeds, "points": res.rows(),
               "accuracies": {str(v): res.accuracies[v] for v in res.values}}
    emit_report(args.out, metrics, sweep_rows=res.rows())
    for r in res.rows():
        log(f"{r['axis']}={r['value']}: {r['mean']:.4f} ± {r['std']:.4f}")


def cmd_ablate(args, log) -> None:
    unknown = [m for m in args.modes if m not in MODES]
    if unknown:
        raise ConfigurationError(f"unknown modes {unknown}; choose from {MODES}")
    graph = _experiment_graph(args)
    res = run_ablations(graph, _config(args), args.seeds, modes=args.modes, progress=log)
    metrics = {"seeds": res.seeds, "modes": res.rows(), "accuracies": res.accuracies,
               "mask_fingerprints": res.mask_fingerprints}
    emit_report(args.out, metrics, sweep_rows=res.rows())
    for r in res.rows():
        log(f"{r['value']:>13}: {r['mean']:.4f} ± {r['std']:.4f}")


def cmd_synth(args, log) -> None:
    schema = AttributeSchema.from_counts(args.labels)
    syn = generate_synthetic(args.users, schema, args.communities, args.homophily, args.missing,
                             make_rng(args.seed), avg_degree=args.degree)
    write_graph(syn.graph, args.out, ground_truth=syn.ground_truth)
    log(f"{syn.graph.n_users} users, {len(syn.graph.edges)} edges -> {args.out}")


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "sweep": cmd_sweep, "ablate": cmd_ablate, "synth": cmd_synth}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)

    def log(msg):
        if not args.quiet:
            print(msg, file=sys.stderr)

    try:
        COMMANDS[args.command](args, log)
    except AttrInferError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
