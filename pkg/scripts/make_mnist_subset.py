"""Build the desk-scale MNIST subset (6000 train / 1000 test) as IDX files.

Source: the ``mnist`` npm package (``npm pack mnist@1.1.0``), which ships
10,000 MNIST digits as JSON arrays of pixel/255 values rounded to three
decimals.  Rounding back to bytes is exact (step 1/255 > 0.001).

    npm pack mnist@1.1.0
    python scripts/make_mnist_subset.py mnist-1.1.0.tgz data/mnist-subset
"""
import argparse
import json
import os
import tarfile

import numpy as np

from locality_ml.data import make_rng, write_mnist_idx


def read_digits(tgz_path):
    images, labels = [], []
    with tarfile.open(tgz_path) as tar:
        for digit in range(10):
            member = tar.extractfile(f"package/src/digits/{digit}.json")
            flat = np.asarray(json.load(member)["data"], dtype=np.float64)
            pixels = np.rint(flat * 255.0).astype(np.uint8).reshape(-1, 28, 28)
            images.append(pixels)
            labels.append(np.full(len(pixels), digit, dtype=np.uint8))
    return np.concatenate(images), np.concatenate(labels)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("tarball")
    ap.add_argument("out_dir")
    ap.add_argument("--train", type=int, default=6000)
    ap.add_argument("--test", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=20190101)
    args = ap.parse_args()

    images, labels = read_digits(args.tarball)
    order = make_rng(args.seed).permutation(len(labels))
    if args.train + args.test > len(order):
        ap.error(f"only {len(order)} digits available")
    train, test = order[:args.train], order[args.train:args.train + args.test]
    os.makedirs(args.out_dir, exist_ok=True)
    for name, idx in (("train", train), ("t10k", test)):
        write_mnist_idx(images[idx], labels[idx],
                        os.path.join(args.out_dir, f"{name}-images-idx3-ubyte.gz"),
                        os.path.join(args.out_dir, f"{name}-labels-idx1-ubyte.gz"))
        print(name, len(idx), np.bincount(labels[idx], minlength=10).tolist())


if __name__ == "__main__":
    main()
