"""Build the bundled MNIST fixture from the 5,000-digit sample shipped in mlxtend.

    pip download --no-deps mlxtend
    python scripts/make_mnist_fixture.py mlxtend-*.whl tests/fixtures/mnist5k

Each digit class contributes its first 400 samples to the train split and the
remaining 100 to the test split; files are written as gzipped IDX.
"""

import gzip
import io
import sys
import zipfile
from pathlib import Path

import numpy as np

from unlearnkit.data.idx import IMAGE_MAGIC, LABEL_MAGIC, MNIST_FILES, encode_idx

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"
TRAIN_PER_CLASS = 400


def main(wheel: str, out: str) -> None:
    with zipfile.ZipFile(wheel) as zf:
        raw = gzip.decompress(zf.read(MEMBER))
    table = np.loadtxt(io.BytesIO(raw), delimiter=",")
    pixels = table[:, :-1].astype(np.uint8).reshape(-1, 28, 28)
    labels = table[:, -1].astype(np.uint8)
    train, test = [], []
    for c in range(10):
        idx = np.flatnonzero(labels == c)
        train.append(idx[:TRAIN_PER_CLASS])
        test.append(idx[TRAIN_PER_CLASS:])
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for split, sel in (("train", np.concatenate(train)), ("test", np.concatenate(test))):
        img_name, lab_name = MNIST_FILES[split]
        blobs = {img_name: encode_idx(pixels[sel], IMAGE_MAGIC), lab_name: encode_idx(labels[sel], LABEL_MAGIC)}
        for name, blob in blobs.items():
            (out_dir / f"{name}.gz").write_bytes(gzip.compress(blob, compresslevel=9, mtime=0))
        print(split, sel.size, np.bincount(labels[sel]))


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
