#!/usr/bin/env python3
"""Builds the MNIST IDX fixture under crates/core/tests/data/mnist-subset.

Input is the `src/digits/<k>.json` files of the npm package `mnist` 1.1.0
(MIT), which hold a subset of the MNIST test images as floats v = byte/255
rounded to three decimals. Pixels are restored with round(255 v).

usage: make_mnist_fixture.py <package-dir> <out-dir> [--others N]
"""
import argparse
import json
import random
import struct
from pathlib import Path


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("package")
    ap.add_argument("out")
    ap.add_argument("--keep", type=int, default=2, help="digit kept in full")
    ap.add_argument("--others", type=int, default=50, help="images per other digit")
    args = ap.parse_args()

    items = []
    for k in range(10):
        flat = json.loads((Path(args.package) / "src" / "digits" / f"{k}.json").read_text())["data"]
        imgs = [flat[i : i + 784] for i in range(0, len(flat), 784)]
        if k != args.keep:
            imgs = imgs[: args.others]
        items += [(k, bytes(round(v * 255) for v in img)) for img in imgs]
    random.Random(0).shuffle(items)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "images.idx", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(items), 28, 28))
        for _, img in items:
            f.write(img)
    with open(out / "labels.idx", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(items)))
        f.write(bytes(k for k, _ in items))
    print(f"{len(items)} images written to {out}")


if __name__ == "__main__":
    main()
