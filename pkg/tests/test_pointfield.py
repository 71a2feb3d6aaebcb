import gzip
import math
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from uconv.idx import (
    IdxFormatError,
    image_header,
    load_mnist,
    parse_images,
    parse_labels,
    write_images,
    write_labels,
)
from uconv.nn import make_rng
from uconv.pointfield import (
    PointField,
    SnapshotSeries,
    bed_of_nails,
    drop_pixels,
    keep_indices,
    read_pointfield,
    read_series,
    to_image,
    write_pointfield,
    write_series,
)
from uconv.tensor import ContractError, DimensionError

images = arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=st.floats(-9, 9))


@given(images)
def test_bed_of_nails_round_trip(img):
    pf = bed_of_nails(img)
    assert pf.n == img.size and pf.channels == 1
    np.testing.assert_array_equal(to_image(pf, *img.shape), img)


def test_bed_of_nails_axis_convention():
    pf = bed_of_nails(np.arange(6.0).reshape(2, 3))
    # pixel (i, j) sits at x = i, y = j
    k = np.flatnonzero((pf.coords[:, 0] == 1) & (pf.coords[:, 1] == 2))[0]
    assert pf.values[k, 0] == 5.0


def test_to_image_fills_absent_with_zero_and_mask():
    pf = drop_pixels(bed_of_nails(np.ones((4, 4))), 50, seed=3)
    img, mask = to_image(pf, 4, 4, with_mask=True)
    assert mask.sum() == 8 and img.sum() == 8 and np.all(img[~mask] == 0)


def test_to_image_rejects_fractional_coords():
    with pytest.raises(ContractError):
        to_image(PointField([[0.5, 0.0]], [1.0]), 2, 2)


def test_pointfield_is_immutable_and_checks_shapes():
    pf = PointField(np.zeros((2, 2)), np.ones(2))
    with pytest.raises(ValueError):
        pf.values[0, 0] = 3.0
    with pytest.raises(DimensionError):
        PointField(np.zeros((2, 2)), np.ones(3))


def test_check_distinct():
    with pytest.raises(ContractError):
        PointField([[0.0, 0.0], [0.0, 0.0]], [1.0, 2.0]).check_distinct()


def _fisher_yates_oracle(n, k, seed):
    draws = make_rng(seed).integers(np.arange(k), n) if k else []
    perm = list(range(n))
    for i in range(k):
        j = int(draws[i])
        perm[i], perm[j] = perm[j], perm[i]
    return sorted(perm[:k])


@given(st.integers(1, 200), st.floats(0, 100), st.integers(0, 2**32))
def test_keep_indices_matches_scalar_oracle(n, pct, seed):
    got = keep_indices(n, pct, seed)
    k = math.ceil(n * pct / 100 - 1e-9)
    assert len(got) == min(k, n)
    assert len(set(got.tolist())) == len(got)
    if k < n:
        assert got.tolist() == _fisher_yates_oracle(n, k, seed)


def test_keep_percent_examples():
    assert len(keep_indices(784, 20, 0)) == 157
    assert len(keep_indices(784, 100, 0)) == 784
    assert len(keep_indices(784, 0, 0)) == 0
    with pytest.raises(ContractError):
        keep_indices(10, 101, 0)


def test_keep_indices_roughly_uniform():
    hits = np.zeros(20)
    for s in range(2000):
        hits[keep_indices(20, 25, s)] += 1
    # each index is kept with probability 5/20
    assert np.all(np.abs(hits / 2000 - 0.25) < 0.05)


def test_drop_pixels_is_deterministic():
    pf = bed_of_nails(np.arange(100.0).reshape(10, 10))
    assert drop_pixels(pf, 30, 7) == drop_pixels(pf, 30, 7)
    assert drop_pixels(pf, 30, 7) != drop_pixels(pf, 30, 8)


@given(arrays(np.float64, (5, 3), elements=st.floats(allow_nan=False, allow_infinity=False, width=64)))
def test_csv_round_trip_is_exact(tmp_path_factory, block):
    pf = PointField(block[:, :2], block[:, 2:])
    path = tmp_path_factory.mktemp("pf") / "f.csv"
    write_pointfield(path, pf)
    back = read_pointfield(path)
    assert back.coords.tobytes() == pf.coords.tobytes() and back.values.tobytes() == pf.values.tobytes()


def test_csv_rejects_foreign_file(tmp_path):
    (tmp_path / "x.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_pointfield(tmp_path / "x.csv")


def test_series_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    s = SnapshotSeries(rng.uniform(size=(6, 2)), [0.0, 0.5, 1.0], rng.normal(size=(3, 6, 1)))
    write_series(tmp_path / "m.csv", s)
    back = read_series(tmp_path / "m.csv")
    np.testing.assert_array_equal(back.values, s.values)
    np.testing.assert_array_equal(back.times, s.times)
    assert s.matrix().shape == (6, 3)


def test_series_times_must_increase():
    with pytest.raises(ContractError):
        SnapshotSeries(np.zeros((2, 2)), [0.0, 0.0], np.zeros((2, 2, 1)))


def test_idx_round_trip_and_gzip(tmp_path):
    rng = np.random.default_rng(0)
    px = rng.integers(0, 256, (3, 28, 28)).astype(np.float64) / 255.0
    write_images(tmp_path / "img", px)
    write_labels(tmp_path / "lab", [7, 0, 3])
    assert image_header(tmp_path / "img") == (3, 28, 28)
    x, y = load_mnist(tmp_path / "img", tmp_path / "lab")
    np.testing.assert_array_equal(x, px)
    assert y.tolist() == [7, 0, 3]
    (tmp_path / "g-idx3-ubyte.gz").write_bytes(gzip.compress((tmp_path / "img").read_bytes()))
    np.testing.assert_array_equal(parse_images(gzip.decompress((tmp_path / "g-idx3-ubyte.gz").read_bytes())), px)


def test_idx_pixel_scaling():
    buf = struct.pack(">IIII", 0x803, 1, 1, 2) + bytes([0, 255])
    assert parse_images(buf).tolist() == [[[0.0, 1.0]]]


def test_idx_bad_magic_and_truncation():
    with pytest.raises(IdxFormatError):
        parse_images(struct.pack(">IIII", 0x801, 1, 28, 28) + bytes(784))
    with pytest.raises(IdxFormatError):
        parse_labels(struct.pack(">II", 0x803, 1) + bytes(1))
    with pytest.raises(IdxFormatError):
        parse_images(struct.pack(">IIII", 0x803, 2, 28, 28) + bytes(784))
