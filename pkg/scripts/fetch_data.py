#!/usr/bin/env python3
"""Download the benchmark datasets into a data directory.

    python scripts/fetch_data.py --out data --datasets wine house mnist fashion cifar10

Layout produced (what the CLI's dataset registry expects):

    data/winequality-white.csv          wine   (semicolon CSV, target "quality")
    data/california_housing.csv        house  (comma CSV, target "MedHouseVal")
    data/mnist/{train,t10k}-{images,labels}-idx?-ubyte.gz
    data/fashion/  same four IDX files
    data/cifar10/data_batch_{1..5}.bin + test_batch.bin

The housing table comes through scikit-learn's fetcher when available;
everything else is a plain HTTP download.
"""

import argparse
import shutil
import sys
import tarfile
import urllib.request
from pathlib import Path

WINE_URL = "https://archive.ics.uci.edu/ml/machine-learning-databases/wine-quality/winequality-white.csv"
MNIST_BASE = "https://storage.googleapis.com/cvdf-datasets/mnist/"
FASHION_BASE = "https://github.com/zalandoresearch/fashion-mnist/raw/master/data/fashion/"
CIFAR_URL = "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz"
IDX_FILES = [
    "train-images-idx3-ubyte.gz",
    "train-labels-idx1-ubyte.gz",
    "t10k-images-idx3-ubyte.gz",
    "t10k-labels-idx1-ubyte.gz",
]


def download(url: str, dest: Path) -> None:
    if dest.exists():
        print(f"  {dest} already present")
        return
    print(f"  {url} -> {dest}")
    dest.parent.mkdir(parents=True, exist_ok=True)
    tmp = dest.with_suffix(dest.suffix + ".part")
    with urllib.request.urlopen(url) as r, open(tmp, "wb") as f:
        shutil.copyfileobj(r, f)
    tmp.rename(dest)


def fetch_wine(root: Path) -> None:
    download(WINE_URL, root / "winequality-white.csv")


def fetch_house(root: Path) -> None:
    dest = root / "california_housing.csv"
    if dest.exists():
        print(f"  {dest} already present")
        return
    try:
        from sklearn.datasets import fetch_california_housing
    except ImportError:
        sys.exit("the house dataset needs scikit-learn (pip install scikit-learn)")
    bundle = fetch_california_housing(as_frame=False)
    header = list(bundle.feature_names) + ["MedHouseVal"]
    with open(dest, "w") as f:
        f.write(",".join(header) + "\n")
        for row, target in zip(bundle.data, bundle.target):
            f.write(",".join(repr(float(v)) for v in row) + f",{float(target)!r}\n")
    print(f"  wrote {dest}")


def fetch_idx(root: Path, name: str, base_url: str) -> None:
    for fname in IDX_FILES:
        download(base_url + fname, root / name / fname)


def fetch_cifar10(root: Path) -> None:
    target = root / "cifar10"
    if all((target / f"data_batch_{i}.bin").exists() for i in range(1, 6)):
        print(f"  {target} already present")
        return
    archive = root / "cifar-10-binary.tar.gz"
    download(CIFAR_URL, archive)
    with tarfile.open(archive) as tar:
        for member in tar.getmembers():
            if member.name.endswith(".bin"):
                member.name = Path(member.name).name
                tar.extract(member, target)
    archive.unlink()
    print(f"  extracted binaries into {target}")


FETCHERS = {
    "wine": fetch_wine,
    "house": fetch_house,
    "mnist": lambda root: fetch_idx(root, "mnist", MNIST_BASE),
    "fashion": lambda root: fetch_idx(root, "fashion", FASHION_BASE),
    "cifar10": fetch_cifar10,
}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=Path("data"))
    parser.add_argument("--datasets", nargs="+", choices=sorted(FETCHERS), default=sorted(FETCHERS))
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for name in args.datasets:
        print(f"fetching {name}")
        FETCHERS[name](args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
