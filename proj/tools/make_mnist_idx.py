"""Convert the 5000-image MNIST subset shipped inside an mlxtend wheel into gzip'd IDX files.

usage: python3 tools/make_mnist_idx.py path/to/mlxtend-*.whl data/

The CSV has one row per image: 784 pixel values then the label, sorted by class. Within each
class the first 80% of rows go to the train pool and the rest to the test pool.
"""
import gzip
import io
import struct
import sys
import zipfile

import numpy as np

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def write_idx(path, arr):
    if arr.ndim == 3:
        header = struct.pack(">IIII", 0x803, *arr.shape)
    else:
        header = struct.pack(">II", 0x801, arr.shape[0])
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header + arr.astype(np.uint8).tobytes())


def main():
    wheel, out = sys.argv[1], sys.argv[2].rstrip("/")
    with zipfile.ZipFile(wheel) as z:
        raw = gzip.decompress(z.read(MEMBER))
    data = np.loadtxt(io.BytesIO(raw), delimiter=",", dtype=np.int64)
    X, y = data[:, :784], data[:, 784]
    assert X.min() >= 0 and X.max() <= 255 and set(np.unique(y)) == set(range(10))
    X = X.reshape(-1, 28, 28)
    train, test = [], []
    for c in range(10):
        idx = np.flatnonzero(y == c)
        cut = int(round(0.8 * len(idx)))
        train.extend(idx[:cut])
        test.extend(idx[cut:])
    for name, sel in (("train", np.array(train)), ("test", np.array(test))):
        write_idx(f"{out}/mnist5k-{name}-images-idx3-ubyte.gz", X[sel])
        write_idx(f"{out}/mnist5k-{name}-labels-idx1-ubyte.gz", y[sel])
        print(name, len(sel), "images, min class count", np.bincount(y[sel]).min())


if __name__ == "__main__":
    main()
