"""Benchmark protocol: seeded runs, evaluation, and comparison tables.

A run trains one network with one method on one dataset condition:
60,000 single-sample iterations by default (one uniformly drawn training
row per iteration), from a seeded initialization that is identical across
methods, with the sample sequence drawn from a stream independent of the
init.  Test metrics are recorded every ``eval_interval`` iterations.

Reported units follow the benchmark convention: regression records carry
the mean test loss (0.5 * squared error) multiplied by 10,000,
classification records the accuracy percentage (fraction * 100), each on
the clean and the noise-perturbed test set.

Comparison tables come in two shapes: absolute values per
(dataset, layers, method) condition grid, and per-dataset relative
differences against the plain gradient-descent baseline, averaged over the
layer/sample-size grid, signed so that positive means better for both
task types:

    regression:     (baseline - method) / baseline
    classification: (method - baseline) / baseline
"""

import csv
import json
import math
import os
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .data import CLASSIFICATION, REGRESSION, DatasetSplit, load_named_dataset, make_split
from .errors import DivergenceError, UpdateRateOverflowError
from .network import DUAL, STANDARD, Network, backward, forward, init_network, predict_batch
from .numerics import Rng
from .updaters import StabilizerState, TrainHyper, dual_stabilized_step, dual_step, l2_step, sgd_step

LOSS_REPORT_SCALE = 10_000.0
ACC_REPORT_SCALE = 100.0

METHOD_OUR = "our"
METHOD_OUR_STAB = "our_stab"
METHOD_GD = "gd"
METHOD_L2 = "l2"
METHODS = (METHOD_OUR, METHOD_OUR_STAB, METHOD_GD, METHOD_L2)

ARCH_PRESETS = {2: (20,), 3: (64, 32)}  # hidden sizes for the 2- and 3-layer networks

# rng stream indices: 0 is the init stream consumed by init_network
_SAMPLE_STREAM = 1

DEFAULT_DATA_DIR_ENV = "DUALGRAD_DATA_DIR"


def default_data_dir() -> Path:
    return Path(os.environ.get(DEFAULT_DATA_DIR_ENV, "data"))


@dataclass
class ExperimentConfig:
    dataset: str
    layers: int  # 2 or 3, selecting the hidden-layer preset
    method: str
    n_train: int
    seed: int
    iterations: int = 60_000
    hyper: TrainHyper = field(default_factory=TrainHyper)
    noise_std: float = 0.3
    y_scale: float = 0.1
    eval_interval: int = 500

    def __post_init__(self):
        if self.layers not in ARCH_PRESETS:
            raise ValueError(f"layers must be one of {sorted(ARCH_PRESETS)}, got {self.layers}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.n_train <= 0:
            raise ValueError(f"n_train must be positive, got {self.n_train}")
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")

    @property
    def variant(self) -> str:
        return DUAL if self.method in (METHOD_OUR, METHOD_OUR_STAB) else STANDARD

    def arch(self, n_in: int, n_out: int) -> list[int]:
        return [n_in, *ARCH_PRESETS[self.layers], n_out]

    def method_label(self) -> str:
        if self.method == METHOD_L2:
            return f"l2 {self.hyper.lam:g}"
        return self.method

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        d["hyper"] = TrainHyper(**d["hyper"])
        return cls(**d)


@dataclass
class MetricsRecord:
    method: str
    dataset: str
    layers: int
    n_train: int
    seed: int
    task: str
    lam: float | None = None
    test_loss_clean: float | None = None
    test_loss_noisy: float | None = None
    accuracy_clean: float | None = None
    accuracy_noisy: float | None = None

    def __post_init__(self):
        for v in (self.test_loss_clean, self.test_loss_noisy):
            if v is not None and v < 0:
                raise ValueError(f"losses must be >= 0, got {v}")
        for v in (self.accuracy_clean, self.accuracy_noisy):
            if v is not None and not 0 <= v <= 100:
                raise ValueError(f"accuracy must be in [0, 100], got {v}")

    def method_label(self) -> str:
        if self.method == METHOD_L2:
            return f"l2 {self.lam:g}"
        return self.method

    def value(self, condition: str) -> float:
        """The reported metric for 'clean' or 'noisy'."""
        if condition not in ("clean", "noisy"):
            raise ValueError(f"condition must be 'clean' or 'noisy', got {condition!r}")
        if self.task == REGRESSION:
            v = self.test_loss_clean if condition == "clean" else self.test_loss_noisy
        else:
            v = self.accuracy_clean if condition == "clean" else self.accuracy_noisy
        if v is None:
            raise ValueError(f"record carries no {condition} value for task {self.task}")
        return v

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsRecord":
        return cls(**d)


@dataclass
class HistoryPoint:
    iteration: int
    clean: float
    noisy: float


def _test_metrics(net: Network, split: DatasetSplit) -> tuple[float, float]:
    """(clean, noisy) metric in reported units."""
    out = []
    for ds in (split.test_clean, split.test_noisy):
        pred = predict_batch(net, ds.x)
        if ds.task == REGRESSION:
            loss = float(np.mean(0.5 * np.sum((pred - ds.y) ** 2, axis=1)))
            out.append(loss * LOSS_REPORT_SCALE)
        else:
            acc = float(np.mean(np.argmax(pred, axis=1) == np.argmax(ds.y, axis=1)))
            out.append(acc * ACC_REPORT_SCALE)
    return out[0], out[1]


def run_training(cfg: ExperimentConfig, split: DatasetSplit) -> tuple[Network, list[HistoryPoint]]:
    """Train one network per ``cfg`` on an already-built split.

    The same seed yields the same initialization and the same sample
    sequence for every method, so method comparisons start from one
    function and see identical data.
    """
    train = split.train
    if cfg.n_train != train.n_samples:
        raise ValueError(
            f"config says n_train={cfg.n_train} but split has {train.n_samples} training rows"
        )
    net = init_network(cfg.arch(train.n_features, train.n_targets), cfg.variant, cfg.seed)
    stabs = None
    if cfg.method == METHOD_OUR_STAB:
        stabs = [StabilizerState.init(layer.out_size) for layer in net.layers]
    sample_rng = Rng(cfg.seed, _SAMPLE_STREAM)
    h = cfg.hyper
    history: list[HistoryPoint] = []

    for it in range(1, cfg.iterations + 1):
        idx = sample_rng.integers(train.n_samples)
        x, y = train.x[idx], train.y[idx]
        # divergence shows up as overflow before the finite check fires;
        # suppress the warning, the explicit error below reports it
        with np.errstate(over="ignore", invalid="ignore"):
            trace = forward(net, x)
            grads = backward(net, trace, y)
            sample_loss = 0.5 * float(np.sum((trace.output() - y) ** 2))
        if not math.isfinite(sample_loss):
            raise DivergenceError(iteration=it, loss=sample_loss)

        try:
            for k, layer in enumerate(net.layers):
                x_in = trace.layer_input(k)
                if cfg.method == METHOD_GD:
                    sgd_step(layer, grads[k], x_in, h)
                elif cfg.method == METHOD_L2:
                    l2_step(layer, grads[k], x_in, h)
                elif cfg.method == METHOD_OUR:
                    dual_step(layer, grads[k], x_in, h)
                else:
                    dual_stabilized_step(layer, stabs[k], grads[k], x_in, h)
        except UpdateRateOverflowError as e:
            raise UpdateRateOverflowError(e.rate, iteration=it) from None

        if cfg.eval_interval and it % cfg.eval_interval == 0:
            clean, noisy = _test_metrics(net, split)
            history.append(HistoryPoint(iteration=it, clean=clean, noisy=noisy))

    return net, history


def evaluate(net: Network, split: DatasetSplit, cfg: ExperimentConfig) -> MetricsRecord:
    """Test metrics on the clean and noisy sets, in reported units."""
    if net.layers[-1].out_size != split.test_clean.n_targets:
        raise ValueError(
            f"network outputs {net.layers[-1].out_size} values, targets have "
            f"{split.test_clean.n_targets}"
        )
    clean, noisy = _test_metrics(net, split)
    task = split.test_clean.task
    return MetricsRecord(
        method=cfg.method,
        dataset=cfg.dataset,
        layers=cfg.layers,
        n_train=cfg.n_train,
        seed=cfg.seed,
        task=task,
        lam=cfg.hyper.lam if cfg.method == METHOD_L2 else None,
        test_loss_clean=clean if task == REGRESSION else None,
        test_loss_noisy=noisy if task == REGRESSION else None,
        accuracy_clean=clean if task == CLASSIFICATION else None,
        accuracy_noisy=noisy if task == CLASSIFICATION else None,
    )


def build_split(cfg: ExperimentConfig, data_dir=None) -> DatasetSplit:
    pool, canonical_test = load_named_dataset(cfg.dataset, data_dir or default_data_dir())
    return make_split(
        pool, cfg.n_train, cfg.seed,
        noise_std=cfg.noise_std, y_scale=cfg.y_scale, test=canonical_test,
    )


def run_experiment(
    cfg: ExperimentConfig, data_dir=None, split: DatasetSplit | None = None
) -> tuple[Network, list[HistoryPoint], MetricsRecord]:
    """Load data, split, train, evaluate: the whole pipeline for one run."""
    if split is None:
        split = build_split(cfg, data_dir)
    net, history = run_training(cfg, split)
    record = evaluate(net, split, cfg)
    return net, history, record


def relative_difference(baseline: MetricsRecord, method: MetricsRecord, condition: str = "clean") -> float:
    """Improvement of ``method`` over the gradient-descent baseline on one
    condition, as a plain ratio (0.608 = 60.8%).  Positive is better for
    both task types."""
    if baseline.method != METHOD_GD:
        raise ValueError(f"baseline must be the gd method, got {baseline.method!r}")
    key = (baseline.dataset, baseline.layers, baseline.n_train, baseline.task)
    if key != (method.dataset, method.layers, method.n_train, method.task):
        raise ValueError(
            f"records are not from the same condition: {key} vs "
            f"{(method.dataset, method.layers, method.n_train, method.task)}"
        )
    b = baseline.value(condition)
    m = method.value(condition)
    if b == 0:
        raise ZeroDivisionError(
            f"baseline {condition} value is 0 for {baseline.dataset}/{baseline.layers}/{baseline.n_train}; "
            "relative difference undefined"
        )
    if baseline.task == REGRESSION:
        return (b - m) / b
    return (m - b) / b


@dataclass
class ReportTables:
    """Aggregated comparison tables plus a list of grid cells that could
    not be filled (missing runs are excluded from means, not imputed)."""

    absolute: list[dict]  # dataset, task, layers, method, n_seeds, cells {(cond, n_train): value}
    relative: list[dict]  # dataset, task, method, clean/noisy percent means, n_cells
    sizes: list[int]
    missing: list[str]


_CANON_METHOD_ORDER = {METHOD_OUR: 0, METHOD_OUR_STAB: 1, METHOD_GD: 2, METHOD_L2: 3}


def _method_sort_key(label: str):
    base = label.split()[0]
    lam = float(label.split()[1]) if " " in label else -1.0
    return (_CANON_METHOD_ORDER.get(base, 99), lam)


def aggregate_tables(records: list[MetricsRecord]) -> ReportTables:
    """Fold per-seed records into the two table shapes.

    Seeds are averaged first; relative differences are then computed from
    the seed-averaged cells and averaged over every (layers, n_train)
    condition of a dataset, clean and noisy columns separately.
    """
    if not records:
        raise ValueError("no records to aggregate")

    sizes = sorted({r.n_train for r in records})
    layer_counts = sorted({r.layers for r in records})

    # seed-averaged value per (dataset, layers, method_label, n_train, condition)
    groups: dict[tuple, list[MetricsRecord]] = {}
    tasks: dict[str, str] = {}
    for r in records:
        tasks.setdefault(r.dataset, r.task)
        if tasks[r.dataset] != r.task:
            raise ValueError(f"dataset {r.dataset!r} appears with two different tasks")
        groups.setdefault((r.dataset, r.layers, r.method_label()), []).append(r)

    def mean_record(rs: list[MetricsRecord], n_train: int) -> MetricsRecord | None:
        sub = [r for r in rs if r.n_train == n_train]
        if not sub:
            return None
        proto = sub[0]

        def mean_of(attr):
            vals = [getattr(r, attr) for r in sub]
            return None if vals[0] is None else float(np.mean(vals))

        return MetricsRecord(
            method=proto.method, dataset=proto.dataset, layers=proto.layers,
            n_train=n_train, seed=-1, task=proto.task, lam=proto.lam,
            test_loss_clean=mean_of("test_loss_clean"),
            test_loss_noisy=mean_of("test_loss_noisy"),
            accuracy_clean=mean_of("accuracy_clean"),
            accuracy_noisy=mean_of("accuracy_noisy"),
        )

    absolute = []
    averaged: dict[tuple, MetricsRecord] = {}
    for (dataset, layers, label), rs in sorted(
        groups.items(), key=lambda kv: (kv[0][0], kv[0][1], _method_sort_key(kv[0][2]))
    ):
        cells = {}
        for n in sizes:
            rec = mean_record(rs, n)
            if rec is None:
                continue
            averaged[(dataset, layers, label, n)] = rec
            for cond in ("clean", "noisy"):
                cells[(cond, n)] = rec.value(cond)
        absolute.append(
            {
                "dataset": dataset, "task": tasks[dataset], "layers": layers,
                "method": label, "cells": cells,
                "n_seeds": len({r.seed for r in rs}),
            }
        )

    method_labels = sorted({r.method_label() for r in records}, key=_method_sort_key)
    relative = []
    missing: list[str] = []
    for dataset in sorted(tasks):
        for label in method_labels:
            if label == METHOD_GD:
                continue
            per_cond = {"clean": [], "noisy": []}
            n_cells = 0
            for layers in layer_counts:
                for n in sizes:
                    base = averaged.get((dataset, layers, METHOD_GD, n))
                    meth = averaged.get((dataset, layers, label, n))
                    if base is None and meth is None:
                        continue
                    if base is None or meth is None:
                        missing.append(
                            f"{dataset}/{layers}-layer/{n}: missing "
                            + ("gd baseline" if base is None else label)
                        )
                        continue
                    n_cells += 1
                    for cond in ("clean", "noisy"):
                        per_cond[cond].append(relative_difference(base, meth, cond))
            if n_cells == 0:
                continue
            relative.append(
                {
                    "dataset": dataset, "task": tasks[dataset], "method": label,
                    "clean": 100.0 * float(np.mean(per_cond["clean"])) if per_cond["clean"] else None,
                    "noisy": 100.0 * float(np.mean(per_cond["noisy"])) if per_cond["noisy"] else None,
                    "n_cells": n_cells,
                }
            )

    return ReportTables(absolute=absolute, relative=relative, sizes=sizes, missing=missing)


def absolute_table_rows(tables: ReportTables) -> tuple[list[str], list[list[str]]]:
    """Header + string rows for the absolute table (CSV and text share them)."""
    header = ["dataset", "layers", "method"]
    for n in tables.sizes:
        header += [f"normal_{n}", f"noise_{n}"]
    rows = []
    for entry in tables.absolute:
        row = [entry["dataset"], str(entry["layers"]), entry["method"]]
        for n in tables.sizes:
            for cond in ("clean", "noisy"):
                v = entry["cells"].get((cond, n))
                row.append("" if v is None else f"{v:.1f}")
        rows.append(row)
    return header, rows


def relative_table_rows(tables: ReportTables) -> tuple[list[str], list[list[str]]]:
    header = ["dataset", "method", "normal_pct", "noise_pct", "n_cells"]
    rows = []
    for entry in tables.relative:
        rows.append(
            [
                entry["dataset"], entry["method"],
                "" if entry["clean"] is None else f"{entry['clean']:.1f}",
                "" if entry["noisy"] is None else f"{entry['noisy']:.1f}",
                str(entry["n_cells"]),
            ]
        )
    return header, rows


def _write_csv(path, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def _format_text(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(header, widths)),
        "  ".join("-" * w for w in widths),
    ]
    for r in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    return "\n".join(lines) + "\n"


def write_tables(tables: ReportTables, out_dir) -> list[Path]:
    """Emit absolute + relative tables as CSV and aligned text files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for stem, (header, rows) in {
        "absolute": absolute_table_rows(tables),
        "relative": relative_table_rows(tables),
    }.items():
        csv_path = out_dir / f"{stem}.csv"
        _write_csv(csv_path, header, rows)
        txt_path = out_dir / f"{stem}.txt"
        text = _format_text(header, rows)
        if stem == "relative" and tables.missing:
            text += "\nmissing cells (excluded from means):\n"
            text += "".join(f"  {m}\n" for m in tables.missing)
        txt_path.write_text(text)
        written += [csv_path, txt_path]
    return written


def _to_gray(row: np.ndarray) -> np.ndarray:
    """Min-max scale one weight row to 0..255; a constant row maps to the
    mid-gray 128 by convention."""
    lo, hi = float(row.min()), float(row.max())
    if hi == lo:
        return np.full(row.shape, 128, dtype=np.uint8)
    return np.clip(np.round((row - lo) / (hi - lo) * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path, img: np.ndarray) -> None:
    """Binary (P5) portable graymap."""
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValueError(f"expected a 2-D uint8 image, got {img.dtype} {img.shape}")
    with open(path, "wb") as f:
        f.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def receptive_field_variants(net: Network, layer_index: int) -> dict[str, np.ndarray]:
    """Weight matrices to visualize for one layer: {'w'} for standard
    networks, {'w1', 'w2', 'diff'} for dual ones."""
    layer = net.layers[layer_index]
    if net.variant == STANDARD:
        return {"w": layer.w}
    return {"w1": layer.w1, "w2": layer.w2, "diff": layer.effective_w()}


def export_receptive_fields(net: Network, layer_index: int, image_shape, out_dir) -> list[Path]:
    """One PGM per neuron (per weight variant for dual nets), min-max
    scaled to 0..255 each, plus a CSV of the raw unscaled weights per
    variant.  The layer's input size must equal prod(image_shape)."""
    h, w = (int(s) for s in image_shape)
    layer = net.layers[layer_index]
    if layer.in_size != h * w:
        raise ValueError(
            f"layer {layer_index} rows have {layer.in_size} weights; image shape {h}x{w} needs {h * w}"
        )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    written = []
    for variant, matrix in receptive_field_variants(net, layer_index).items():
        for i, row in enumerate(matrix):
            path = out_dir / f"neuron_{i:03d}_{variant}.pgm"
            write_pgm(path, _to_gray(row).reshape(h, w))
            written.append(path)
        csv_path = out_dir / f"weights_{variant}.csv"
        with open(csv_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["neuron"] + [f"p{j}" for j in range(h * w)])
            for i, row in enumerate(matrix):
                writer.writerow([i] + [repr(float(v)) for v in row])
        written.append(csv_path)
    return written


def write_run_jsonl(path, cfg: ExperimentConfig, record: MetricsRecord, history: list[HistoryPoint]) -> None:
    """One JSON-lines file per run: a config line, one line per history
    point, and a final metrics line."""
    with open(path, "w") as f:
        f.write(json.dumps({"kind": "config", **cfg.to_dict()}) + "\n")
        for p in history:
            f.write(
                json.dumps(
                    {"kind": "history", "iteration": p.iteration, "clean": p.clean, "noisy": p.noisy}
                )
                + "\n"
            )
        f.write(json.dumps({"kind": "metrics", **record.to_dict()}) + "\n")


def read_run_jsonl(path) -> tuple[ExperimentConfig | None, MetricsRecord | None, list[HistoryPoint]]:
    cfg = record = None
    history = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            kind = doc.pop("kind", None)
            if kind == "config":
                cfg = ExperimentConfig.from_dict(doc)
            elif kind == "metrics":
                record = MetricsRecord.from_dict(doc)
            elif kind == "history":
                history.append(HistoryPoint(**doc))
    return cfg, record, history
