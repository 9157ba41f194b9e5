"""Write the 5000-image MNIST sample bundled with mlxtend as IDX files.

Gives a small offline stand-in for the full dataset: 400 train / 100 test
images per digit, shuffled with a fixed seed.

    python scripts/make_mnist_subset.py DATA_DIR
    export ASMLEARN_MNIST_DIR=DATA_DIR
"""
import argparse
from pathlib import Path

import numpy as np

from asmlearn.stimuli import MNIST_FILES, write_idx_images, write_idx_labels


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir")
    ap.add_argument("--test-per-class", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    try:
        from mlxtend.data import mnist_data
    except ImportError:
        raise SystemExit("needs mlxtend: pip install 'asmlearn[mnist-sample]'")
    X, y = mnist_data()
    X = np.clip(np.rint(X), 0, 255).astype(np.uint8)
    rng = np.random.default_rng(args.seed)
    train, test = [], []
    for c in range(10):
        idx = rng.permutation(np.flatnonzero(y == c))
        test.append(idx[:args.test_per_class])
        train.append(idx[args.test_per_class:])
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for split, parts in (("train", train), ("test", test)):
        idx = rng.permutation(np.concatenate(parts))
        img, lab = MNIST_FILES[split]
        write_idx_images(out / img, X[idx])
        write_idx_labels(out / lab, y[idx])
        print(f"{split}: {idx.size} images -> {out}")


if __name__ == "__main__":
    main()
