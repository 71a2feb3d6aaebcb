import pytest

from uconv.gradcheck import ccnn_toy, check, op_cases

CASES = op_cases(0)


@pytest.mark.parametrize("name", sorted(CASES))
def test_op_matches_finite_differences(name):
    f, inputs = CASES[name]
    assert check(f, inputs) < 1e-5


def test_ccnn_toy_matches_finite_differences():
    f, inputs = ccnn_toy(0)
    assert check(f, inputs) < 1e-5
