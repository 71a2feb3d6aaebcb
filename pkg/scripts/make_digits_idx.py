"""Write an MNIST-shaped IDX proxy built from scikit-learn's 8x8 digits.

The 1797 8x8 images are upsampled to 20x20 and centred in a 28x28 frame,
mirroring MNIST's layout. This is a smoke-test stand-in, not MNIST: the
accuracy numbers it yields are not comparable to the MNIST gates.

    python scripts/make_digits_idx.py OUT_DIR
"""

import argparse
from pathlib import Path

import numpy as np
from scipy.ndimage import zoom
from sklearn.datasets import load_digits

from uconv.idx import MNIST_FILES, write_images, write_labels


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", type=Path)
    ap.add_argument("--test-fraction", type=float, default=0.25)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    d = load_digits()
    imgs = np.zeros((len(d.images), 28, 28))
    for i, im in enumerate(d.images):
        imgs[i, 4:24, 4:24] = np.clip(zoom(im / 16.0, 2.5, order=1), 0, 1)
    order = np.random.default_rng(args.seed).permutation(len(imgs))
    n_test = int(len(imgs) * args.test_fraction)
    test, train = order[:n_test], order[n_test:]
    args.out.mkdir(parents=True, exist_ok=True)
    write_images(args.out / MNIST_FILES["train_images"], imgs[train])
    write_labels(args.out / MNIST_FILES["train_labels"], d.target[train])
    write_images(args.out / MNIST_FILES["test_images"], imgs[test])
    write_labels(args.out / MNIST_FILES["test_labels"], d.target[test])
    print(f"wrote {len(train)} train / {len(test)} test images to {args.out}")


if __name__ == "__main__":
    main()
