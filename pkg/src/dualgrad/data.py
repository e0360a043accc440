"""Dataset ingestion and the preprocessing pipeline.

Loaders produce a ``Dataset``; ``make_split`` turns one into the
train / clean-test / noisy-test triple the benchmark consumes:

* subsample ``n_train`` rows without replacement (seeded); the rest (or
  the format's canonical test file, when one exists) becomes the test set
* tabular features are z-scored with statistics fitted on the training
  rows only; image features arrive from their loaders already scaled to
  [0, 1] and are left alone (per-pixel z-scoring of near-constant border
  pixels would be degenerate)
* regression targets are z-scored on train and then multiplied by
  ``y_scale`` (default 0.1) so they fit inside the bounded output range of
  dual networks; classification targets are one-hot and untouched
* the noisy test set adds per-entry Gaussian noise (std ``noise_std``,
  default 0.3) to the normalized features; labels stay identical

File formats: delimited text with a header row for tabular data, the
big-endian IDX layout for image/label pairs (magics 0x00000803 and
0x00000801, ``.gz`` accepted), and 3073-byte binary records (1 label byte
+ 3072 pixel bytes) for CIFAR-10 batches.
"""

import csv
import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .numerics import NormStats, Rng, zscore_apply, zscore_fit

REGRESSION = "regression"
CLASSIFICATION = "classification"

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 3073
N_IMAGE_CLASSES = 10

# rng streams used by make_split, derived from its seed
_SUBSAMPLE_STREAM = 0
_NOISE_STREAM = 1


@dataclass
class Dataset:
    x: np.ndarray  # (samples, features)
    y: np.ndarray  # (samples, targets); one-hot rows for classification
    task: str
    name: str = ""
    x_prescaled: bool = False  # image loaders scale to [0,1]; skip z-scoring

    def __post_init__(self):
        if self.x.ndim != 2 or self.y.ndim != 2:
            raise ValueError(f"x and y must be 2-D, got {self.x.shape} and {self.y.shape}")
        if self.x.shape[0] != self.y.shape[0] or self.x.shape[0] == 0:
            raise ValueError(
                f"x and y must have the same positive row count, got {self.x.shape[0]} and {self.y.shape[0]}"
            )
        if self.task not in (REGRESSION, CLASSIFICATION):
            raise ValueError(f"unknown task {self.task!r}")

    @property
    def n_samples(self) -> int:
        return self.x.shape[0]

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    @property
    def n_targets(self) -> int:
        return self.y.shape[1]


@dataclass
class DatasetSplit:
    train: Dataset
    test_clean: Dataset
    test_noisy: Dataset
    norm: NormStats  # fitted on train features only
    y_scale: float


def _one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _open_maybe_gzip(path):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def load_csv_regression(path, target_column: str, delimiter: str = ",", name: str = "") -> Dataset:
    """Delimited text with a header row; every non-target column is a
    feature, in file order.  Values must parse as decimal numbers."""
    with open(path, newline="") as f:
        reader = csv.reader(f, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: file is empty") from None
        header = [h.strip().strip('"') for h in header]
        if target_column not in header:
            raise DataFormatError(f"{path}: no column named {target_column!r} in header {header}")
        target_idx = header.index(target_column)

        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"{path}: line {line_no} has {len(row)} fields, header has {len(header)}"
                )
            parsed = []
            for col, value in zip(header, row):
                try:
                    number = float(value)
                except ValueError:
                    raise DataFormatError(
                        f"{path}: line {line_no}, column {col!r}: cannot parse {value!r} as a number"
                    ) from None
                if not np.isfinite(number):
                    raise DataFormatError(
                        f"{path}: line {line_no}, column {col!r}: non-finite value {value!r}"
                    )
                parsed.append(number)
            rows.append(parsed)

    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    data = np.asarray(rows, dtype=np.float64)
    y = data[:, target_idx : target_idx + 1]
    x = np.delete(data, target_idx, axis=1)
    return Dataset(x=x, y=y, task=REGRESSION, name=name)


def save_csv_regression(dataset: Dataset, path, delimiter: str = ",", target_column: str = "target") -> None:
    """Write a regression dataset back to the delimited fixture format.
    Floats are written with shortest round-trip precision, so reloading
    reproduces x and y exactly."""
    if dataset.task != REGRESSION or dataset.n_targets != 1:
        raise ValueError("only single-target regression datasets serialize to this format")
    header = [f"f{j}" for j in range(dataset.n_features)] + [target_column]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, delimiter=delimiter)
        writer.writerow(header)
        for xi, yi in zip(dataset.x, dataset.y):
            writer.writerow([repr(float(v)) for v in xi] + [repr(float(yi[0]))])


def dataset_registry() -> dict:
    """Named datasets the CLI knows about: file layout under the data root,
    loader arguments, and whether the format ships a canonical test set."""
    idx_files = {
        "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
        "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
    }
    return {
        "wine": {
            "kind": "csv",
            "path": "winequality-white.csv",
            "target": "quality",
            "delimiter": ";",
        },
        "house": {
            "kind": "csv",
            "path": "california_housing.csv",
            "target": "MedHouseVal",
            "delimiter": ",",
        },
        "mnist": {"kind": "idx", "dir": "mnist", "files": idx_files},
        "fashion": {"kind": "idx", "dir": "fashion", "files": idx_files},
        "cifar10": {
            "kind": "cifar",
            "dir": "cifar10",
            "train": [f"data_batch_{i}.bin" for i in range(1, 6)],
            "test": ["test_batch.bin"],
        },
    }


def _resolve(path: Path) -> Path:
    """Accept either the plain file or a .gz sibling."""
    if path.exists():
        return path
    gz = path.with_name(path.name + ".gz")
    if gz.exists():
        return gz
    raise FileNotFoundError(f"dataset file not found: {path} (nor {gz.name})")


def dataset_paths(name: str, data_dir) -> dict[str, list[Path]]:
    """Resolve a registry dataset's files under ``data_dir`` without
    reading them.  Raises FileNotFoundError when anything is missing."""
    registry = dataset_registry()
    if name not in registry:
        raise ValueError(f"unknown dataset {name!r}; known: {sorted(registry)}")
    entry = registry[name]
    root = Path(data_dir)

    if entry["kind"] == "csv":
        return {"train": [_resolve(root / entry["path"])]}
    if entry["kind"] == "idx":
        base = root / entry["dir"]
        return {
            "train": [_resolve(base / p) for p in entry["files"]["train"]],
            "test": [_resolve(base / p) for p in entry["files"]["test"]],
        }
    base = root / entry["dir"]
    return {
        "train": [_resolve(base / p) for p in entry["train"]],
        "test": [_resolve(base / p) for p in entry["test"]],
    }


def load_named_dataset(name: str, data_dir) -> tuple[Dataset, Dataset | None]:
    """Load a registry dataset from ``data_dir``.  Returns the training
    pool and, for formats that define one, the canonical test set."""
    paths = dataset_paths(name, data_dir)  # validates the name and the files
    entry = dataset_registry()[name]

    if entry["kind"] == "csv":
        return load_csv_regression(paths["train"][0], entry["target"], entry["delimiter"], name=name), None
    if entry["kind"] == "idx":
        return (
            load_idx_images(*paths["train"], name=name),
            load_idx_images(*paths["test"], name=name),
        )
    return load_cifar_binary(paths["train"], name=name), load_cifar_binary(paths["test"], name=name)


def _read_exact(f, n: int, path, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise DataFormatError(f"{path}: truncated {what} (wanted {n} bytes, got {len(data)})")
    return data


def load_idx_images(images_path, labels_path, name: str = "") -> Dataset:
    """IDX image/label pair.  Pixels are flattened row-major and scaled to
    [0, 1]; labels become one-hot rows over 10 classes."""
    with _open_maybe_gzip(images_path) as f:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(f, 16, images_path, "header"))
        if magic != IDX_IMAGE_MAGIC:
            raise DataFormatError(
                f"{images_path}: bad image magic 0x{magic:08x} (expected 0x{IDX_IMAGE_MAGIC:08x})"
            )
        pixels = _read_exact(f, count * rows * cols, images_path, "pixel data")
    with _open_maybe_gzip(labels_path) as f:
        magic, label_count = struct.unpack(">II", _read_exact(f, 8, labels_path, "header"))
        if magic != IDX_LABEL_MAGIC:
            raise DataFormatError(
                f"{labels_path}: bad label magic 0x{magic:08x} (expected 0x{IDX_LABEL_MAGIC:08x})"
            )
        labels = np.frombuffer(_read_exact(f, label_count, labels_path, "label data"), dtype=np.uint8)

    if count != label_count:
        raise DataFormatError(
            f"{images_path} has {count} images but {labels_path} has {label_count} labels"
        )
    if labels.size and labels.max() >= N_IMAGE_CLASSES:
        raise DataFormatError(f"{labels_path}: label {labels.max()} out of range 0..9")

    x = np.frombuffer(pixels, dtype=np.uint8).astype(np.float64).reshape(count, rows * cols) / 255.0
    return Dataset(
        x=x, y=_one_hot(labels.astype(np.intp), N_IMAGE_CLASSES),
        task=CLASSIFICATION, name=name, x_prescaled=True,
    )


def load_cifar_binary(paths, name: str = "cifar10") -> Dataset:
    """One or more CIFAR-10 binary batch files (3073-byte records)."""
    if isinstance(paths, (str, bytes)) or not hasattr(paths, "__iter__"):
        paths = [paths]
    xs, labels = [], []
    for path in paths:
        with _open_maybe_gzip(path) as f:
            raw = f.read()
        if len(raw) == 0 or len(raw) % CIFAR_RECORD_BYTES != 0:
            raise DataFormatError(
                f"{path}: size {len(raw)} is not a positive multiple of {CIFAR_RECORD_BYTES}"
            )
        records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        batch_labels = records[:, 0]
        if batch_labels.max() >= N_IMAGE_CLASSES:
            raise DataFormatError(f"{path}: label {batch_labels.max()} out of range 0..9")
        labels.append(batch_labels.astype(np.intp))
        xs.append(records[:, 1:].astype(np.float64) / 255.0)
    return Dataset(
        x=np.concatenate(xs), y=_one_hot(np.concatenate(labels), N_IMAGE_CLASSES),
        task=CLASSIFICATION, name=name, x_prescaled=True,
    )


def make_split(
    d: Dataset,
    n_train: int,
    seed: int,
    noise_std: float = 0.3,
    y_scale: float = 0.1,
    test: Dataset | None = None,
) -> DatasetSplit:
    """Build the train / clean-test / noisy-test triple used by every run.

    When ``test`` is given (a format's canonical test file) the training
    rows are subsampled from ``d`` and the test set is used as is;
    otherwise the rows not sampled into training form the test set.
    """
    if not 0 < n_train <= d.n_samples:
        raise ValueError(f"n_train must be in 1..{d.n_samples}, got {n_train}")
    if test is None and n_train == d.n_samples:
        raise ValueError("no rows left for the test set; pass a canonical test set or lower n_train")
    if noise_std < 0:
        raise ValueError(f"noise_std must be >= 0, got {noise_std}")
    if test is not None and (test.task != d.task or test.n_features != d.n_features):
        raise ValueError("canonical test set does not match the training pool")

    idx = Rng(seed, _SUBSAMPLE_STREAM).permutation(d.n_samples)
    train_idx = idx[:n_train]
    if test is None:
        test_x, test_y = d.x[idx[n_train:]], d.y[idx[n_train:]]
    else:
        test_x, test_y = test.x.copy(), test.y.copy()
    train_x, train_y = d.x[train_idx], d.y[train_idx]

    if d.x_prescaled:
        norm = NormStats.identity(d.n_features)
    else:
        norm = zscore_fit(train_x)
    train_x = zscore_apply(norm, train_x)
    test_x = zscore_apply(norm, test_x)

    if d.task == REGRESSION:
        y_norm = zscore_fit(train_y)
        train_y = zscore_apply(y_norm, train_y) * y_scale
        test_y = zscore_apply(y_norm, test_y) * y_scale
        applied_scale = y_scale
    else:
        applied_scale = 1.0

    if noise_std == 0:
        noisy_x = test_x.copy()
    else:
        noise_rng = Rng(seed, _NOISE_STREAM)
        noisy_x = test_x + noise_rng.normal(0.0, noise_std, test_x.shape)

    def _mk(x, y):
        return Dataset(x=x, y=y, task=d.task, name=d.name, x_prescaled=d.x_prescaled)

    return DatasetSplit(
        train=_mk(train_x, train_y),
        test_clean=_mk(test_x, test_y),
        test_noisy=_mk(noisy_x, test_y),
        norm=norm,
        y_scale=applied_scale,
    )


def make_synthetic_two_class(n_per_class, dim: int, means, seed: int, std: float = 1.0) -> Dataset:
    """Two Gaussian blobs with one-hot labels.  ``n_per_class`` may be a
    single count or a (n0, n1) pair for imbalanced fixtures."""
    if np.isscalar(n_per_class):
        counts = (int(n_per_class), int(n_per_class))
    else:
        counts = tuple(int(n) for n in n_per_class)
    if len(counts) != 2 or any(c <= 0 for c in counts):
        raise ValueError(f"n_per_class must be one or two positive counts, got {n_per_class}")
    means = np.asarray(means, dtype=np.float64)
    if means.shape != (2, dim):
        raise ValueError(f"means must have shape (2, {dim}), got {means.shape}")

    rng = Rng(seed, stream=0)
    xs, labels = [], []
    for cls, (count, mean) in enumerate(zip(counts, means)):
        xs.append(mean + rng.normal(0.0, std, (count, dim)))
        labels.append(np.full(count, cls, dtype=np.intp))
    return Dataset(
        x=np.concatenate(xs), y=_one_hot(np.concatenate(labels), 2),
        task=CLASSIFICATION, name="synthetic-two-class",
    )
