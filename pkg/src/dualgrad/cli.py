"""Command-line entry point.

    dualgrad train          one training run -> JSONL record + network JSON
    dualgrad grid           run every config in a JSON manifest
    dualgrad compare        aggregate a results directory into tables + figures
    dualgrad export-fields  receptive-field PGMs/CSV (+ grid PNG) from a saved network

Exit codes: 0 success, 2 usage or data errors, 3 training divergence
(non-finite loss or update-rate overflow).  The dataset root defaults to
$DUALGRAD_DATA_DIR, then ./data.

All commands are deterministic given their inputs and seeds; re-running a
command overwrites its outputs with identical bytes.
"""

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .data import dataset_paths, dataset_registry, load_named_dataset, make_split
from .errors import DataFormatError, DivergenceError, UpdateRateOverflowError
from .experiment import (
    ExperimentConfig,
    METHOD_L2,
    MetricsRecord,
    aggregate_tables,
    default_data_dir,
    evaluate,
    export_receptive_fields,
    read_run_jsonl,
    run_training,
    write_run_jsonl,
    write_tables,
)
from .network import load_network, save_network
from .updaters import TrainHyper

_METHOD_FLAGS = {"our": "our", "our-stab": "our_stab", "gd": "gd", "l2": "l2"}


def _parse_shape(text: str) -> tuple[int, int]:
    try:
        h, w = text.lower().split("x")
        h, w = int(h), int(w)
        if h <= 0 or w <= 0:
            raise ValueError
        return h, w
    except ValueError:
        raise argparse.ArgumentTypeError(f"shape must look like 28x28, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualgrad", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run one training configuration")
    train.add_argument("--dataset", required=True, choices=sorted(dataset_registry()))
    train.add_argument("--method", required=True, choices=sorted(_METHOD_FLAGS))
    train.add_argument("--lambda", dest="lam", type=float, default=None,
                       help="L2 strength (required for --method l2)")
    train.add_argument("--layers", type=int, choices=(2, 3), default=2)
    train.add_argument("--samples", type=int, choices=(100, 500, 1000), default=100)
    train.add_argument("--iters", type=int, default=60_000)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--eta", type=float, default=0.01)
    train.add_argument("--noise-std", type=float, default=0.3)
    train.add_argument("--y-scale", type=float, default=0.1)
    train.add_argument("--eval-interval", type=int, default=500)
    train.add_argument("--data-dir", type=Path, default=None)
    train.add_argument("--out", type=Path, default=Path("runs"))
    train.set_defaults(func=cmd_train)

    grid = sub.add_parser("grid", help="run every configuration in a manifest")
    grid.add_argument("--manifest", required=True, type=Path)
    grid.add_argument("--jobs", type=int, default=1)
    grid.add_argument("--data-dir", type=Path, default=None)
    grid.add_argument("--out", type=Path, default=None)
    grid.set_defaults(func=cmd_grid)

    compare = sub.add_parser("compare", help="aggregate run records into comparison tables")
    compare.add_argument("--results", required=True, type=Path)
    compare.add_argument("--out", type=Path, default=None, help="defaults to the results directory")
    compare.add_argument("--no-figures", action="store_true")
    compare.set_defaults(func=cmd_compare)

    fields = sub.add_parser("export-fields", help="export first-layer receptive fields")
    fields.add_argument("--model", required=True, type=Path)
    fields.add_argument("--shape", required=True, type=_parse_shape, help="image shape, e.g. 28x28")
    fields.add_argument("--layer", type=int, default=0)
    fields.add_argument("--out", required=True, type=Path)
    fields.add_argument("--no-figure", action="store_true")
    fields.set_defaults(func=cmd_export_fields)

    return parser


def _config_from_args(args) -> ExperimentConfig:
    return ExperimentConfig(
        dataset=args.dataset,
        layers=args.layers,
        method=_METHOD_FLAGS[args.method],
        n_train=args.samples,
        seed=args.seed,
        iterations=args.iters,
        hyper=TrainHyper(eta=args.eta, lam=args.lam if args.lam is not None else 0.0),
        noise_std=args.noise_std,
        y_scale=args.y_scale,
        eval_interval=args.eval_interval,
    )


def run_id(cfg: ExperimentConfig) -> str:
    tag = cfg.method if cfg.method != METHOD_L2 else f"l2-{cfg.hyper.lam:g}"
    return f"{cfg.dataset}_l{cfg.layers}_n{cfg.n_train}_{tag}_s{cfg.seed}"


# per-process cache so grid workers load each dataset once
_POOL_CACHE: dict = {}


def _load_pool(dataset: str, data_dir: str):
    key = (dataset, str(data_dir))
    if key not in _POOL_CACHE:
        _POOL_CACHE[key] = load_named_dataset(dataset, data_dir)
    return _POOL_CACHE[key]


def _execute_run(cfg: ExperimentConfig, data_dir: Path, out_dir: Path) -> str:
    """Train one config and persist its outputs.  Returns a status line."""
    pool, canonical = _load_pool(cfg.dataset, data_dir)
    split = make_split(pool, cfg.n_train, cfg.seed,
                       noise_std=cfg.noise_std, y_scale=cfg.y_scale, test=canonical)
    rid = run_id(cfg)
    try:
        net, history = run_training(cfg, split)
    except (DivergenceError, UpdateRateOverflowError) as e:
        with open(out_dir / f"{rid}.jsonl", "w") as f:
            f.write(json.dumps({"kind": "config", **cfg.to_dict()}) + "\n")
            f.write(json.dumps({"kind": "failed", "error": str(e)}) + "\n")
        raise
    record = evaluate(net, split, cfg)
    write_run_jsonl(out_dir / f"{rid}.jsonl", cfg, record, history)
    save_network(net, out_dir / f"{rid}.network.json")
    clean, noisy = record.value("clean"), record.value("noisy")
    kind = "loss x10k" if record.task == "regression" else "accuracy %"
    return f"{rid}: {kind} clean={clean:.1f} noisy={noisy:.1f}"


def cmd_train(args, parser) -> int:
    if args.method == "l2" and args.lam is None:
        parser.error("--method l2 requires --lambda")
    if args.method != "l2" and args.lam is not None:
        parser.error("--lambda only applies to --method l2")
    cfg = _config_from_args(args)
    data_dir = args.data_dir or default_data_dir()
    args.out.mkdir(parents=True, exist_ok=True)
    print(_execute_run(cfg, data_dir, args.out))
    return 0


@dataclass
class RunManifest:
    """A parsed grid manifest: where the outputs go and the full list of
    configurations to run."""

    config_path: Path
    out_dir: Path
    data_dir: Path
    configs: list

    @classmethod
    def load(cls, path: Path, out_override: Path | None, data_override: Path | None) -> "RunManifest":
        with open(path) as f:
            doc = json.load(f)
        out_dir = out_override or Path(doc.get("out_dir", "runs"))
        data_dir = data_override or Path(doc.get("data_dir", default_data_dir()))
        hyper_base = dict(eta=doc.get("eta", 0.01))
        configs = []
        for dataset in doc["datasets"]:
            for layers in doc.get("layers", [2, 3]):
                for n_train in doc.get("samples", [100, 500, 1000]):
                    for method in doc["methods"]:
                        name = _METHOD_FLAGS.get(method["name"], method["name"])
                        lam = method.get("lambda", 0.0)
                        if name == METHOD_L2 and "lambda" not in method:
                            raise ValueError("manifest l2 methods need a 'lambda' value")
                        for seed in doc.get("seeds", [0]):
                            configs.append(
                                ExperimentConfig(
                                    dataset=dataset,
                                    layers=layers,
                                    method=name,
                                    n_train=n_train,
                                    seed=seed,
                                    iterations=doc.get("iterations", 60_000),
                                    hyper=TrainHyper(lam=lam, **hyper_base),
                                    noise_std=doc.get("noise_std", 0.3),
                                    y_scale=doc.get("y_scale", 0.1),
                                    eval_interval=doc.get("eval_interval", 500),
                                )
                            )
        return cls(config_path=path, out_dir=out_dir, data_dir=data_dir, configs=configs)

    def check_datasets(self) -> None:
        """Every referenced dataset file must resolve before any run starts."""
        for dataset in sorted({c.dataset for c in self.configs}):
            dataset_paths(dataset, self.data_dir)


def _grid_worker(payload) -> str:
    cfg_dict, data_dir, out_dir = payload
    cfg = ExperimentConfig.from_dict(cfg_dict)
    try:
        return _execute_run(cfg, Path(data_dir), Path(out_dir))
    except (DivergenceError, UpdateRateOverflowError) as e:
        return f"{run_id(cfg)}: FAILED ({e})"


def cmd_grid(args, parser) -> int:
    manifest = RunManifest.load(args.manifest, args.out, args.data_dir)
    manifest.check_datasets()
    manifest.out_dir.mkdir(parents=True, exist_ok=True)
    payloads = [(c.to_dict(), str(manifest.data_dir), str(manifest.out_dir)) for c in manifest.configs]
    print(f"running {len(payloads)} configurations with {args.jobs} worker(s)")
    if args.jobs <= 1:
        for p in payloads:
            print(_grid_worker(p))
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for line in pool.map(_grid_worker, payloads):
                print(line)
    return 0


def cmd_compare(args, parser) -> int:
    results_dir = args.results
    files = sorted(results_dir.glob("*.jsonl")) if results_dir.is_dir() else []
    records: list[MetricsRecord] = []
    histories: dict = {}  # (dataset, layers, n_train) -> {label: {seed: history}}
    tasks: dict = {}
    for path in files:
        try:
            cfg, record, history = read_run_jsonl(path)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            print(f"warning: {path.name} is malformed ({e}); skipping", file=sys.stderr)
            continue
        if record is None:
            print(f"warning: {path.name} has no metrics (failed run?); skipping", file=sys.stderr)
            continue
        records.append(record)
        if cfg is not None and history:
            key = (record.dataset, record.layers, record.n_train)
            tasks[key] = record.task
            histories.setdefault(key, {}).setdefault(record.method_label(), {})[record.seed] = history
    if not records:
        print(f"error: no usable run records in {results_dir}", file=sys.stderr)
        return 2

    tables = aggregate_tables(records)
    out_dir = args.out or results_dir
    written = write_tables(tables, out_dir)
    for m in tables.missing:
        print(f"warning: missing cell: {m}", file=sys.stderr)

    if not args.no_figures:
        from . import figures
        from .experiment import HistoryPoint
        import numpy as np

        for task in ("regression", "classification"):
            path = Path(out_dir) / f"relative_{task}.png"
            if figures.save_relative_difference_chart(tables, task, path):
                written.append(path)
        for key, by_label in sorted(histories.items()):
            dataset, layers, n_train = key
            merged = {}
            for label, by_seed in by_label.items():
                runs = list(by_seed.values())
                n = min(len(hs) for hs in runs)
                merged[label] = [
                    HistoryPoint(
                        iteration=runs[0][i].iteration,
                        clean=float(np.mean([hs[i].clean for hs in runs])),
                        noisy=float(np.mean([hs[i].noisy for hs in runs])),
                    )
                    for i in range(n)
                ]
            path = Path(out_dir) / f"history_{dataset}_l{layers}_n{n_train}.png"
            if figures.save_history_curves(merged, tasks[key], f"{dataset}, {layers}-layer, {n_train} samples", path):
                written.append(path)

    print((Path(out_dir) / "relative.txt").read_text(), end="")
    print("wrote: " + ", ".join(str(p) for p in written))
    return 0


def cmd_export_fields(args, parser) -> int:
    net = load_network(args.model)
    if not 0 <= args.layer < net.n_layers:
        parser.error(f"--layer must be in 0..{net.n_layers - 1}")
    args.out.mkdir(parents=True, exist_ok=True)
    written = export_receptive_fields(net, args.layer, args.shape, args.out)
    if not args.no_figure:
        from . import figures

        grid_path = args.out / "fields_grid.png"
        figures.save_receptive_field_grid(net, args.layer, args.shape, grid_path)
        written.append(grid_path)
    print(f"wrote {len(written)} files to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except (DivergenceError, UpdateRateOverflowError) as e:
        print(f"error: training diverged: {e}", file=sys.stderr)
        return 3
    except (DataFormatError, FileNotFoundError, ValueError, json.JSONDecodeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
