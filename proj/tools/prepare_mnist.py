#!/usr/bin/env python3
"""Build the 10,000-image MNIST subset used by the image experiments.

The digits come from the `mnist` npm package (1.1.0), which ships 10,000
real MNIST digits as per-class JSON files. They are shuffled with a fixed
seed and written as IDX files:

    <out>/images-idx3-ubyte
    <out>/labels-idx1-ubyte
"""

import argparse
import json
import random
import shutil
import struct
import subprocess
import sys
import tarfile
import tempfile
from pathlib import Path


def fetch_package(workdir: Path) -> Path:
    subprocess.run(["npm", "pack", "mnist@1.1.0", "--silent"], cwd=workdir, check=True,
                   stdout=subprocess.DEVNULL)
    tarball = next(workdir.glob("mnist-*.tgz"))
    with tarfile.open(tarball) as tf:
        tf.extractall(workdir, filter="data")
    return workdir / "package" / "src" / "digits"


def load_digits(digits_dir: Path):
    samples = []
    for label in range(10):
        values = json.loads((digits_dir / f"{label}.json").read_text())["data"]
        if len(values) % 784:
            sys.exit(f"{label}.json: {len(values)} values is not a multiple of 784")
        for start in range(0, len(values), 784):
            pixels = bytes(round(min(max(v, 0.0), 1.0) * 255) for v in values[start:start + 784])
            samples.append((pixels, label))
    return samples


def write_idx(out: Path, samples):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(samples), 28, 28))
        for pixels, _ in samples:
            f.write(pixels)
    with open(out / "labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(samples)))
        f.write(bytes(label for _, label in samples))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "data" / "mnist")
    ap.add_argument("--digits-dir", type=Path, help="existing package src/digits directory (skips npm)")
    ap.add_argument("--seed", type=int, default=2019)
    args = ap.parse_args()

    tmp = None
    try:
        digits_dir = args.digits_dir
        if digits_dir is None:
            tmp = Path(tempfile.mkdtemp())
            digits_dir = fetch_package(tmp)
        samples = load_digits(digits_dir)
    finally:
        if tmp is not None:
            shutil.rmtree(tmp, ignore_errors=True)

    random.Random(args.seed).shuffle(samples)
    write_idx(args.out, samples)
    print(f"wrote {len(samples)} images to {args.out}")


if __name__ == "__main__":
    main()
