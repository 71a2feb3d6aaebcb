import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from uconv.checks import fixture_checks
from uconv.oracles import (
    CONV_FIXTURE_IMAGE,
    CONV_FIXTURE_KERNEL,
    CONV_FIXTURE_OUTPUT,
    TRANSPOSE_FIXTURE_INPUT,
    TRANSPOSE_FIXTURE_KERNEL,
    TRANSPOSE_FIXTURE_OUTPUT,
    GaussianRbf,
    discrete_conv,
    discrete_conv_transpose,
    pod_fit,
    pod_predict,
)
from uconv.tensor import ContractError


def test_worked_examples():
    np.testing.assert_array_equal(discrete_conv(CONV_FIXTURE_IMAGE, CONV_FIXTURE_KERNEL), CONV_FIXTURE_OUTPUT)
    np.testing.assert_array_equal(discrete_conv_transpose(TRANSPOSE_FIXTURE_INPUT, TRANSPOSE_FIXTURE_KERNEL), TRANSPOSE_FIXTURE_OUTPUT)
    assert all(ok for ok, _ in fixture_checks().values())


@given(arrays(np.float64, (5, 6), elements=st.floats(-3, 3)),
       arrays(np.float64, (5, 6), elements=st.floats(-3, 3)),
       st.floats(-2, 2), st.integers(1, 2))
def test_discrete_conv_is_linear(a, b, c, stride):
    k = np.array([[1.0, -2.0], [0.5, 3.0]])
    lhs = discrete_conv(a + c * b, k, stride)
    rhs = discrete_conv(a, k, stride) + c * discrete_conv(b, k, stride)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


@given(st.integers(0, 10**6), st.integers(1, 3), st.integers(1, 3))
def test_discrete_transpose_is_adjoint(seed, k, stride):
    rng = np.random.default_rng(seed)
    kern = rng.normal(size=(k, k))
    x = rng.normal(size=(4, 3))
    out_shape = discrete_conv_transpose(x, kern, stride).shape
    y = rng.normal(size=out_shape)
    assert np.sum(discrete_conv(y, kern, stride) * x) == pytest.approx(
        np.sum(y * discrete_conv_transpose(x, kern, stride)), rel=1e-10, abs=1e-10)


def _snapshots(seed, n_space=60, n=25, rank=None):
    rng = np.random.default_rng(seed)
    if rank is None:
        return rng.normal(size=(n_space, n))
    return rng.normal(size=(n_space, rank)) @ rng.normal(size=(rank, n))


@given(st.integers(0, 10**6), st.integers(1, 20))
def test_pod_modes_orthonormal(seed, r):
    m = pod_fit(_snapshots(seed), np.linspace(0, 1, 25), r)
    np.testing.assert_allclose(m.modes.T @ m.modes, np.eye(m.rank), atol=1e-10)


@given(st.integers(0, 10**6), st.integers(1, 20))
def test_eckart_young(seed, r):
    x = _snapshots(seed)
    m = pod_fit(x, np.linspace(0, 1, 25), r)
    xc = x - x.mean(axis=1, keepdims=True)
    s = np.linalg.svd(xc, compute_uv=False)
    # squared values: the Gram route resolves sigma only to about sqrt(eps) * sigma_max
    np.testing.assert_allclose(m.singular_values[: len(s)] ** 2, s**2, rtol=1e-8, atol=1e-12 * s[0] ** 2)
    resid = np.linalg.norm(xc - m.modes @ (m.modes.T @ xc)) ** 2
    assert resid == pytest.approx(np.sum(s[r:] ** 2), rel=1e-8, abs=1e-8 * s[0] ** 2)


def test_error_is_monotone_in_rank():
    x = _snapshots(3)
    errs = []
    for r in range(0, 25):
        m = pod_fit(x, np.linspace(0, 1, 25), r)
        errs.append(np.linalg.norm(m.project(x) - x))
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))


def test_rank_deficient_data_truncates():
    x = _snapshots(1, rank=4)
    m = pod_fit(x, np.linspace(0, 1, 25), 10, center=False)
    assert m.rank == 4
    np.testing.assert_allclose(m.project(x), x, atol=1e-9)


def test_rank_bounds():
    with pytest.raises(ContractError):
        pod_fit(_snapshots(0), np.linspace(0, 1, 25), 26)
    with pytest.raises(ContractError):
        pod_fit(_snapshots(0), np.linspace(0, 1, 3), 2)


def test_pod_predict_at_training_times_equals_projection():
    # few centres keep the Gaussian system well conditioned, so interpolation is exact
    x = _snapshots(5, n=4)
    t = np.linspace(0, 1, 4)
    m = pod_fit(x, t, 3)
    np.testing.assert_allclose(pod_predict(m, t), m.project(x), atol=1e-8)
    assert pod_predict(m, 0.5).shape == (60,)


def test_pod_predict_on_many_smooth_snapshots():
    # 60 equispaced centres with median width: the system is numerically singular and
    # the ridge dominates; smooth coefficient histories are still reproduced closely
    t = np.linspace(0, 1, 60)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(50, 3)) @ np.stack([np.sin(3 * t), np.cos(2 * t), t**2])
    m = pod_fit(x, t, 3)
    p = m.project(x)
    assert np.linalg.norm(pod_predict(m, t) - p) / np.linalg.norm(p) < 1e-3


def test_pod_degenerate_cases():
    t = np.linspace(0, 1, 5)
    const = np.repeat(np.arange(8.0)[:, None], 5, axis=1)
    m = pod_fit(const, t, 2)
    assert m.rank == 0
    np.testing.assert_allclose(pod_predict(m, [0.1, 0.7]), const[:, :2])
    x = _snapshots(2, n=5)
    m0 = pod_fit(x, t, 0)
    np.testing.assert_array_equal(pod_predict(m0, 0.3), x.mean(axis=1))
    rank1 = np.outer(np.arange(1.0, 9.0), [1.0, -2.0, 0.5, 3.0, 1.5])
    m1 = pod_fit(rank1, t, 1, center=False)
    assert np.max(np.abs(m1.project(rank1) - rank1)) < 1e-10
    full = pod_fit(x, t, 5)
    assert np.max(np.abs(full.project(x) - x)) < 1e-8


def test_rbf_interpolates_centers_and_uses_median_width():
    c = np.array([0.0, 0.1, 0.3, 0.7])
    y = np.array([[1.0, 0.0], [2.0, 1.0], [0.5, -1.0], [3.0, 2.0]])
    f = GaussianRbf.fit(c, y)
    np.testing.assert_allclose(f(c), y, atol=1e-8)
    assert f.width == pytest.approx(np.median([0.1, 0.3, 0.7, 0.2, 0.6, 0.4]))


def test_rbf_reproduces_smooth_function():
    c = np.linspace(0, 1, 30)
    f = GaussianRbf.fit(c, np.sin(2 * np.pi * c))
    t = np.linspace(0.05, 0.95, 11)
    np.testing.assert_allclose(f(t)[:, 0], np.sin(2 * np.pi * t), atol=1e-3)
