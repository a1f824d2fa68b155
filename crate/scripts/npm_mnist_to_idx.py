#!/usr/bin/env python3
"""Convert the digits shipped in the npm `mnist` package into gzipped IDX files.

The npm package (https://www.npmjs.com/package/mnist) bundles 10000 MNIST
digits as JSON arrays of pixel/255 values rounded to three decimals, which is
enough precision to recover the original bytes exactly.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/npm_mnist_to_idx.py package/src/digits data/mnist

Writes train-{images-idx3,labels-idx1}-ubyte.gz (8000 items) and
t10k-{images-idx3,labels-idx1}-ubyte.gz (2000 items), split by a fixed
seeded shuffle.
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path

TEST_COUNT = 2000
SEED = 20220407


def load(digits_dir):
    items = []
    for label in range(10):
        data = json.loads((digits_dir / f"{label}.json").read_text())["data"]
        assert len(data) % 784 == 0
        for i in range(len(data) // 784):
            px = bytes(int(round(v * 255.0)) for v in data[i * 784:(i + 1) * 784])
            items.append((px, label))
    return items


def write(out_dir, prefix, items):
    with gzip.GzipFile(out_dir / f"{prefix}-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, len(items), 28, 28))
        for px, _ in items:
            f.write(px)
    with gzip.GzipFile(out_dir / f"{prefix}-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, len(items)))
        f.write(bytes(label for _, label in items))


def main():
    digits_dir, out_dir = Path(sys.argv[1]), Path(sys.argv[2])
    out_dir.mkdir(parents=True, exist_ok=True)
    items = load(digits_dir)
    random.Random(SEED).shuffle(items)
    write(out_dir, "t10k", items[:TEST_COUNT])
    write(out_dir, "train", items[TEST_COUNT:])
    print(f"wrote {len(items) - TEST_COUNT} train / {TEST_COUNT} test items to {out_dir}")


if __name__ == "__main__":
    main()
