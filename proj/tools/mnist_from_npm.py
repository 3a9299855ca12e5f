#!/usr/bin/env python3
"""Convert the MNIST subset shipped in the npm `mnist` package (cazala/mnist,
version 1.1.0) into big-endian IDX files.

The npm package embeds 10,000 genuine MNIST digits as JSON
(src/digits/<d>.json, each a flat list of 784-pixel images normalized to
[0,1]). This script splits them into a 5,000-image training file and a
5,000-image test file, stratified per class, and writes the four canonical
IDX files.

Usage:
    npm pack mnist && tar xzf mnist-1.1.0.tgz
    python3 tools/mnist_from_npm.py package/src/digits data/mnist
"""

import json
import os
import struct
import sys


def read_digits(src_dir):
    per_class = []
    for d in range(10):
        with open(os.path.join(src_dir, f"{d}.json")) as f:
            flat = json.load(f)["data"]
        assert len(flat) % 784 == 0
        n = len(flat) // 784
        imgs = [
            bytes(min(255, max(0, round(v * 255))) for v in flat[i * 784 : (i + 1) * 784])
            for i in range(n)
        ]
        per_class.append(imgs)
    return per_class


def write_idx(images, labels, img_path, lbl_path):
    with open(img_path, "wb") as f:
        f.write(struct.pack(">iiii", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(img)
    with open(lbl_path, "wb") as f:
        f.write(struct.pack(">ii", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    src = sys.argv[1] if len(sys.argv) > 1 else "package/src/digits"
    out = sys.argv[2] if len(sys.argv) > 2 else "data/mnist"
    os.makedirs(out, exist_ok=True)

    per_class = read_digits(src)

    # Even positions within each class go to train, odd to test; then move
    # surplus train images (classes with odd counts) to test until both
    # halves hold exactly 5,000.
    train, test = [], []
    for d, imgs in enumerate(per_class):
        for i, img in enumerate(imgs):
            (train if i % 2 == 0 else test).append((img, d))
    train.sort(key=lambda t: t[1])
    while len(train) > 5000:
        test.append(train.pop())
    assert len(train) == 5000 and len(test) == 5000

    # Round-robin across classes so any prefix is roughly balanced.
    def interleave(pairs):
        buckets = [[] for _ in range(10)]
        for img, d in pairs:
            buckets[d].append((img, d))
        order = []
        i = 0
        while any(buckets):
            for b in buckets:
                if i < len(b):
                    order.append(b[i])
            i += 1
            if all(i >= len(b) for b in buckets):
                break
        return order

    train = interleave(train)
    test = interleave(test)

    write_idx(
        [p[0] for p in train],
        [p[1] for p in train],
        os.path.join(out, "train-images-idx3-ubyte"),
        os.path.join(out, "train-labels-idx1-ubyte"),
    )
    write_idx(
        [p[0] for p in test],
        [p[1] for p in test],
        os.path.join(out, "test-images-idx3-ubyte"),
        os.path.join(out, "test-labels-idx1-ubyte"),
    )
    print(f"wrote {len(train)} train / {len(test)} test images to {out}")


if __name__ == "__main__":
    main()
