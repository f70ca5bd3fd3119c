"""Repeated-seed experiments and report files.

Every run derives its split, sparsification, initialisation and noise from
one integer seed (see :func:`attrinfer.training.seed_streams`), so runs that
share a seed share a split regardless of mode or swept value.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .graph import (
    AttributedGraph,
    AttributeSchema,
    LabelMask,
    SyntheticGraph,
    generate_synthetic,
    sparsify_train_labels,
    split_labels,
)
from .metrics import MetricsReport, evaluate
from .numerics import make_rng
from .training import MODES, TrainConfig, TrainResult, infer, prepare, seed_streams, train

DEFAULT_SPLIT = (0.8, 0.1, 0.1)
# the sparsity protocol holds out a fixed 20 % test set and sweeps the rest
SPARSITY_SPLIT = (0.8, 0.0, 0.2)

BENCHMARK = dict(n_users=300, label_counts=(3, 4, 5), n_communities=3, homophily=0.8, missing_rate=0.3)


def synthetic_benchmark(seed: int = 0) -> SyntheticGraph:
    """The fixed synthetic benchmark: 300 users, 3 communities, attributes with 3/4/5 labels."""
    b = BENCHMARK
    schema = AttributeSchema.from_counts(list(b["label_counts"]))
    return generate_synthetic(b["n_users"], schema, b["n_communities"], b["homophily"], b["missing_rate"],
                              make_rng(seed))


@dataclass
class RunResult:
    seed: int
    config: TrainConfig
    metrics: MetricsReport
    mask: LabelMask
    train_result: TrainResult

    @property
    def accuracy(self) -> float:
        return self.metrics.accuracy_cell


def run_once(graph: AttributedGraph, config: TrainConfig, split=DEFAULT_SPLIT, keep_fraction: float | None = None,
             truth: np.ndarray | None = None) -> RunResult:
    """Split with ``config.seed``, optionally sparsify, train and evaluate on the test cells."""
    streams = seed_streams(config.seed)
    mask = split_labels(graph, split, streams["split"])
    if keep_fraction is not None:
        mask = sparsify_train_labels(mask, keep_fraction, streams["sparsify"])
    data = prepare(graph, mask)
    result = train(config, data)
    truth = graph.assignments if truth is None else truth
    metrics = evaluate(infer(result.params, data), truth, mask.test, graph.schema)
    return RunResult(config.seed, config, metrics, mask, result)


def _mean_std(values) -> tuple:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std(ddof=1)) if arr.size > 1 else 0.0


@dataclass
class SweepResult:
    axis: str
    values: list
    seeds: list
    accuracies: dict = field(default_factory=dict)  # value -> [accuracy per seed]
    macro_f1: dict = field(default_factory=dict)

    def rows(self) -> list:
        out = []
        for v in self.values:
            mean, std = _mean_std(self.accuracies[v])
            f_mean, f_std = _mean_std(self.macro_f1[v])
            out.append({"axis": self.axis, "value": v, "mean": mean, "std": std, "n_seeds": len(self.accuracies[v]),
                        "macro_f1_mean": f_mean, "macro_f1_std": f_std})
        return out

    def mean(self, value) -> float:
        return _mean_std(self.accuracies[value])[0]


def _check_seeds(seeds):
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ConfigurationError("at least one seed is required")
    if len(set(seeds)) != len(seeds):
        raise ConfigurationError("seeds must be distinct")
    return seeds


def run_sparsity_sweep(graph, config: TrainConfig, fractions, seeds, split=SPARSITY_SPLIT, progress=None) -> SweepResult:
    """Train on a shrinking share of labelled cells against a fixed test set.

    ``fractions`` are shares of all observed cells kept for training. The
    test set for a seed is the same at every fraction. At small fractions
    no user may keep every attribute visible; such runs train without the
    adversarial and MI terms rather than failing.
    """
    config = replace(config, require_labeled=False)
    seeds = _check_seeds(seeds)
    fractions = [float(f) for f in fractions]
    for f in fractions:
        if not 0 < f <= 1:
            raise ConfigurationError(f"fraction {f} outside (0, 1]")
    res = SweepResult("sparsity", fractions, seeds)
    for f in fractions:
        res.accuracies[f], res.macro_f1[f] = [], []
        for s in seeds:
            run = run_once(graph, replace(config, seed=s), split, keep_fraction=f)
            res.accuracies[f].append(run.accuracy)
            res.macro_f1[f].append(run.metrics.macro_f1)
            if progress:
                progress(f"sparsity={f} seed={s} accuracy={run.accuracy:.4f}")
    return res


def run_param_sweep(graph, config: TrainConfig, axis: str, values, seeds, split=DEFAULT_SPLIT, progress=None) -> SweepResult:
    """Sensitivity of accuracy to ``lambda`` (MI weight) or ``beta`` (adversarial weight)."""
    fields = {"lambda": "lam", "beta": "beta"}
    if axis not in fields:
        raise ConfigurationError(f"unknown sweep axis {axis!r}")
    seeds = _check_seeds(seeds)
    res = SweepResult(axis, [float(v) for v in values], seeds)
    for v in res.values:
        res.accuracies[v], res.macro_f1[v] = [], []
        for s in seeds:
            run = run_once(graph, replace(config, seed=s, **{fields[axis]: v}), split)
            res.accuracies[v].append(run.accuracy)
            res.macro_f1[v].append(run.metrics.macro_f1)
            if progress:
                progress(f"{axis}={v} seed={s} accuracy={run.accuracy:.4f}")
    return res


@dataclass
class AblationResult:
    seeds: list
    modes: list
    accuracies: dict = field(default_factory=dict)  # mode -> [accuracy per seed]
    macro_f1: dict = field(default_factory=dict)
    mask_fingerprints: dict = field(default_factory=dict)  # mode -> [fingerprint per seed]

    def table(self) -> dict:
        return {m: _mean_std(self.accuracies[m]) for m in self.modes}

    def mean(self, mode) -> float:
        return _mean_std(self.accuracies[mode])[0]

    def rows(self) -> list:
        out = []
        for m in self.modes:
            mean, std = _mean_std(self.accuracies[m])
            f_mean, f_std = _mean_std(self.macro_f1[m])
            out.append({"axis": "mode", "value": m, "mean": mean, "std": std, "n_seeds": len(self.seeds),
                        "macro_f1_mean": f_mean, "macro_f1_std": f_std})
        return out


def run_ablations(graph, config: TrainConfig, seeds, modes=MODES, split=DEFAULT_SPLIT, progress=None) -> AblationResult:
    seeds = _check_seeds(seeds)
    res = AblationResult(seeds, list(modes))
    for m in res.modes:
        res.accuracies[m], res.macro_f1[m], res.mask_fingerprints[m] = [], [], []
        for s in seeds:
            run = run_once(graph, replace(config, seed=s, mode=m), split)
            res.accuracies[m].append(run.accuracy)
            res.macro_f1[m].append(run.metrics.macro_f1)
            res.mask_fingerprints[m].append(run.mask.fingerprint())
            if progress:
                progress(f"mode={m} seed={s} accuracy={run.accuracy:.4f}")
    return res


# ------------------------------------------------------------------ report


def _fmt(x) -> str:
    return format(float(x), ".10g")


def _round_floats(obj):
    if isinstance(obj, float):
        return float(_fmt(obj))
    if isinstance(obj, dict):
        return {str(k): _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    if isinstance(obj, np.generic):
        return _round_floats(obj.item())
    return obj


SWEEP_HEADER = ["axis", "value", "mean", "std", "n_seeds"]


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(r[h]) if isinstance(r.get(h), float) else r.get(h, "") for h in header])
    return buf.getvalue()


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def emit_report(out_dir, metrics: dict | None = None, sweep_rows=None, history=None) -> list:
    """Write metrics.json, sweep.csv, history.jsonl and plotdata/*.csv.

    ``metrics`` is a JSON-ready dict, ``sweep_rows`` a list of dicts with the
    :data:`SWEEP_HEADER` keys, ``history`` the per-iteration training log.
    Floats are written with 10 significant digits. Returns the paths written.
    """
    out = Path(out_dir)
    plot = out / "plotdata"
    try:
        plot.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {plot}: {exc.strerror}") from exc
    written = []

    path = out / "metrics.json"
    _write(path, json.dumps(_round_floats(metrics or {}), indent=2, sort_keys=True) + "\n")
    written.append(path)

    rows = list(sweep_rows or [])
    path = out / "sweep.csv"
    _write(path, _csv_text(SWEEP_HEADER, rows))
    written.append(path)

    history = list(history or [])
    path = out / "history.jsonl"
    _write(path, "".join(json.dumps(_round_floats(rec), sort_keys=True) + "\n" for rec in history))
    written.append(path)

    if history:
        keys = ["iteration", "l_recon", "l_kl", "l_vae", "l_d", "l_gnn", "l_mi", "total"]
        path = plot / "losses.csv"
        _write(path, _csv_text(keys, history))
        written.append(path)
        val = [r for r in history if "val_accuracy" in r]
        path = plot / "val_accuracy.csv"
        _write(path, _csv_text(["iteration", "val_accuracy"], val))
        written.append(path)
    if rows:
        axes = sorted({r["axis"] for r in rows})
        for axis in axes:
            path = plot / f"sweep_{axis}.csv"
            _write(path, _csv_text(SWEEP_HEADER, [r for r in rows if r["axis"] == axis]))
            written.append(path)
    per_attr = (metrics or {}).get("per_attribute_accuracy")
    if per_attr:
        path = plot / "per_attribute_accuracy.csv"
        _write(path, _csv_text(["attribute", "accuracy"], [{"attribute": k, "accuracy": v} for k, v in per_attr.items()]))
        written.append(path)
    return written
