import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from uconv import tensor as T
from uconv.checks import continuous_conv_image, continuous_transpose_image
from uconv.conv import (
    ContConv,
    ContConvTranspose,
    FilterSpec,
    Learned,
    StrideSet,
    Tabulated,
    gen_stride_grid,
)
from uconv.nn import Mlp, make_rng
from uconv.oracles import discrete_conv, discrete_conv_transpose
from uconv.pointfield import bed_of_nails
from uconv.tensor import ContractError, DimensionError


def smooth_kernel(p):
    return np.sin(3 * p[:, 0]) + p[:, 1] ** 2 - 0.3


@st.composite
def conv_cases(draw):
    k = draw(st.integers(1, 4))
    stride = draw(st.integers(1, 3))
    h = draw(st.integers(k, 9))
    w = draw(st.integers(k, 9))
    img = draw(arrays(np.float64, (h, w), elements=st.floats(-2, 2)))
    kern = draw(arrays(np.float64, (k, k), elements=st.floats(-2, 2)))
    return img, kern, stride


@given(conv_cases(), st.sampled_from(["grid", "linear"]))
def test_bed_of_nails_matches_discrete(case, backend):
    img, kern, stride = case
    got = continuous_conv_image(img, kern, stride, backend=backend)
    np.testing.assert_allclose(got, discrete_conv(img, kern, stride), rtol=0, atol=1e-12)


@given(conv_cases())
def test_transpose_matches_discrete(case):
    x, kern, stride = case
    np.testing.assert_allclose(
        continuous_transpose_image(x, kern, stride), discrete_conv_transpose(x, kern, stride), atol=1e-12
    )


def _cloud_and_spec(rng, n=40, overlapping=True):
    pts = rng.uniform(0, 4, (n, 2))
    step = 0.5 if overlapping else 1.0
    spec = FilterSpec([1.0, 1.0], gen_stride_grid([0, 0], [4, 4], 1.0, step))
    return pts, spec


@given(st.integers(0, 10**6), st.integers(1, 3), st.integers(1, 3))
def test_adjoint_identity(seed, cin, cout):
    rng = np.random.default_rng(seed)
    pts, spec = _cloud_and_spec(rng)
    kernels = [[Tabulated(lambda p, a=a: smooth_kernel(p) * a) for a in rng.normal(size=cin)]
               for _ in range(cout)]
    conv = ContConv(cin, cout, spec, kernels, empty_policy="zero")
    # the adjoint maps cout -> cin with the transposed kernel table
    kt = [[kernels[co][ci] for co in range(cout)] for ci in range(cin)]
    convt = ContConvTranspose(cout, cin, spec, kt)
    x = rng.normal(size=(1, len(pts), cin))
    y = rng.normal(size=(1, len(spec.strides), cout))
    lhs = np.sum(conv(pts, x).data * y)
    rhs = np.sum(x * convt(y, pts).data)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


@given(st.integers(0, 10**6), st.randoms())
def test_permutation_invariance(seed, r):
    rng = np.random.default_rng(seed)
    pts, spec = _cloud_and_spec(rng)
    conv = ContConv(1, 1, spec, [[Tabulated(smooth_kernel)]], empty_policy="zero")
    vals = rng.normal(size=(2, len(pts), 1))
    perm = np.array(r.sample(range(len(pts)), len(pts)))
    np.testing.assert_allclose(conv(pts[perm], vals[:, perm]).data, conv(pts, vals).data, atol=1e-12)


@given(st.integers(0, 10**6), st.integers(-8, 8), st.integers(-8, 8))
def test_translation_equivariance(seed, dx, dy):
    # dyadic coordinates and shifts keep every subtraction exact
    rng = np.random.default_rng(seed)
    pts = rng.integers(0, 256, (50, 2)) / 64.0
    shift = np.array([dx, dy]) / 4.0
    spec = FilterSpec([1.0, 0.5], gen_stride_grid([0, 0], [4, 4], [1.0, 0.5], [0.5, 0.5]))
    moved = FilterSpec(spec.size, StrideSet(spec.strides.origins + shift))
    kern = [[Tabulated(smooth_kernel)]]
    vals = rng.normal(size=(1, 50, 1))
    a = ContConv(1, 1, spec, kern, empty_policy="zero")(pts, vals).data
    b = ContConv(1, 1, moved, kern, empty_policy="zero")(pts + shift, vals).data
    np.testing.assert_array_equal(a, b)


def test_drop_policy_removes_empty_windows():
    pts = np.array([[0.5, 0.5], [2.5, 0.5]])
    spec = FilterSpec([1.0, 1.0], StrideSet([[0, 0], [1, 0], [2, 0]]))
    drop = ContConv(1, 1, spec, [[Tabulated.constant(1.0)]], empty_policy="drop")
    zero = ContConv(1, 1, spec, [[Tabulated.constant(1.0)]], empty_policy="zero")
    vals = np.array([[[2.0], [3.0]]])
    assert drop(pts, vals).data.ravel().tolist() == [2.0, 3.0]
    assert zero(pts, vals).data.ravel().tolist() == [2.0, 0.0, 3.0]
    np.testing.assert_array_equal(drop.output_coords(pts), [[0.5, 0.5], [2.5, 0.5]])


def test_normalize_gives_window_mean():
    pts = np.array([[0.1, 0.1], [0.2, 0.7], [0.9, 0.3]])
    spec = FilterSpec([1.0, 1.0], StrideSet([[0.0, 0.0]]))
    conv = ContConv(1, 1, spec, [[Tabulated.constant(1.0)]], normalize=True)
    assert conv(pts, np.array([[[1.0], [2.0], [6.0]]])).data.item() == pytest.approx(3.0)


def test_shared3d_equals_independent_with_sliced_kernel():
    rng = np.random.default_rng(0)
    pts, spec = _cloud_and_spec(rng)

    def f3(p):
        return np.cos(2 * p[:, 0]) * (1 + p[:, 2]) - p[:, 1]

    cin = 3
    shared = ContConv(cin, 1, spec, [Tabulated(f3, 3)], strategy="shared3d", empty_policy="zero")
    per = [[Tabulated(lambda p, c=c: f3(np.column_stack([p, np.full(len(p), c / (cin - 1))])))
            for c in range(cin)]]
    indep = ContConv(cin, 1, spec, per, empty_policy="zero")
    vals = rng.normal(size=(2, len(pts), cin))
    np.testing.assert_allclose(shared(pts, vals).data, indep(pts, vals).data, atol=1e-12)


def test_transpose_overlap_policies_and_uncovered_points():
    spec = FilterSpec([2.0, 1.0], StrideSet([[0.0, 0.0], [1.0, 0.0]]))
    pts = np.array([[0.5, 0.5], [1.5, 0.5], [5.0, 5.0]])
    lat = np.array([[[2.0], [4.0]]])
    s = ContConvTranspose(1, 1, spec, [[Tabulated.constant(1.0)]], overlap="sum")(lat, pts)
    m = ContConvTranspose(1, 1, spec, [[Tabulated.constant(1.0)]], overlap="mean")(lat, pts)
    assert s.data.ravel().tolist() == [2.0, 6.0, 0.0]
    assert m.data.ravel().tolist() == [2.0, 3.0, 0.0]


def test_learned_kernel_receives_gradient():
    rng = make_rng(0)
    pts, spec = _cloud_and_spec(np.random.default_rng(0))
    conv = ContConv(1, 1, spec, [[Learned(Mlp([2, 5, 1], "tanh", rng))]], bias=True)
    T.sum(T.square(conv(pts, np.ones((1, len(pts), 1))))).backward()
    assert all(p.grad is not None and np.any(p.grad != 0) for p in conv.parameters())


def test_stride_grid_is_lexicographic():
    g = gen_stride_grid([0, 0], [28, 28], 4, 4)
    assert len(g) == 49
    np.testing.assert_array_equal(g.origins[:2], [[0, 0], [0, 4]])
    np.testing.assert_array_equal(g.origins[7], [4, 0])
    with pytest.raises(ContractError):
        gen_stride_grid([0, 0], [3, 3], 4, 1)


def test_shape_errors():
    spec = FilterSpec([1.0, 1.0], StrideSet([[0.0, 0.0]]))
    conv = ContConv(2, 1, spec, [[Tabulated.constant(1.0)] * 2])
    with pytest.raises(DimensionError):
        conv(np.zeros((3, 2)), np.zeros((1, 3, 1)))
    with pytest.raises(DimensionError):
        conv(np.zeros((3, 3)), np.zeros((1, 3, 2)))
    with pytest.raises(ValueError):
        ContConv(1, 1, spec, [[Tabulated.constant(1.0)]], empty_policy="skip")


def test_bed_of_nails_multichannel_independent():
    rng = np.random.default_rng(1)
    img = rng.normal(size=(2, 6, 6))
    ks = rng.normal(size=(3, 2, 2, 2))
    spec = FilterSpec([2, 2], gen_stride_grid([0, 0], [6, 6], 2, 2))
    conv = ContConv(2, 3, spec, [[Tabulated.from_grid(ks[o, i]) for i in range(2)] for o in range(3)],
                    empty_policy="zero")
    pf = bed_of_nails(img)
    out = conv(pf.coords, pf.values[None]).data[0]
    for o in range(3):
        want = sum(discrete_conv(img[i], ks[o, i], 2) for i in range(2))
        np.testing.assert_allclose(out[:, o].reshape(3, 3), want, atol=1e-12)
