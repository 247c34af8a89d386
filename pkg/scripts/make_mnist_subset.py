"""Write the 5000-image MNIST sample shipped with mlxtend as gzipped IDX files.

The sample is class-sorted, so it is shuffled once with a fixed seed, then
split into 4000 training and 1000 test images:

    python scripts/make_mnist_subset.py data/mnist5k
"""

import gzip
import sys
from pathlib import Path

import numpy as np
from mlxtend.data import mnist_data

from basinprobe.data import encode_idx

SEED = 20170621
N_TRAIN = 4000


def main(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    x, y = mnist_data()
    order = np.random.default_rng(SEED).permutation(len(y))
    images = x[order].astype(np.uint8).reshape(-1, 28, 28)
    labels = y[order].astype(np.uint8)
    parts = {
        "train-images-idx3-ubyte.gz": images[:N_TRAIN],
        "train-labels-idx1-ubyte.gz": labels[:N_TRAIN],
        "t10k-images-idx3-ubyte.gz": images[N_TRAIN:],
        "t10k-labels-idx1-ubyte.gz": labels[N_TRAIN:],
    }
    for name, arr in parts.items():
        # mtime=0 keeps the archives byte-reproducible
        (out / name).write_bytes(gzip.compress(encode_idx(arr), mtime=0))
        print(name, arr.shape)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/mnist5k")
