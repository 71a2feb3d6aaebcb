"""Small fixtures shared by the experiment and CLI tests."""

import numpy as np

from uconv.idx import MNIST_FILES, write_images, write_labels


def write_fake_mnist(directory, n_train=60, n_test=30, seed=0):
    """MNIST-shaped IDX files whose class is a bright horizontal band position."""
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for split, n in (("train", n_train), ("test", n_test)):
        labels = rng.integers(0, 10, n)
        imgs = rng.uniform(0, 0.2, (n, 28, 28))
        for k, y in enumerate(labels):
            imgs[k, 2 + 2 * y : 4 + 2 * y, 4:24] = 1.0
        write_images(directory / MNIST_FILES[f"{split}_images"], np.round(imgs * 255) / 255)
        write_labels(directory / MNIST_FILES[f"{split}_labels"], labels)
    return directory


# one "criterion N: PASS/FAIL ..." line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []
