import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radapt import dual as ad
from radapt.dual import Dual, DomainError


def test_product_rule():
    r = Dual(2.0, 1.0) * Dual(3.0, 0.0)
    assert (r.primal, r.tangent) == (6.0, 3.0)


def test_self_subtraction():
    u = Dual(1.7, 0.3)
    r = u - u
    assert (r.primal, r.tangent) == (0.0, 0.0)


def test_sqrt():
    r = ad.sqrt(Dual(4.0, 1.0))
    assert r.primal == 2.0
    assert r.tangent == pytest.approx(0.25)
    fd = (np.sqrt(4.0 + 1e-6) - np.sqrt(4.0 - 1e-6)) / 2e-6
    assert r.tangent == pytest.approx(fd, rel=1e-8)


def test_division_by_zero_primal():
    with pytest.raises(DomainError):
        Dual(1.0, 1.0) / Dual(0.0, 1.0)
    with pytest.raises(DomainError):
        1.0 / Dual(0.0, 0.0)


def test_domain_errors():
    with pytest.raises(DomainError):
        ad.sqrt(Dual(-1.0, 1.0))
    with pytest.raises(DomainError):
        ad.log(Dual(0.0, 1.0))


def test_pow_and_mixed_operands():
    x = Dual(1.5, 1.0)
    assert (x ** 3).tangent == pytest.approx(3 * 1.5 ** 2)
    assert (2.0 - x).tangent == -1.0
    assert (2.0 / x).tangent == pytest.approx(-2.0 / 1.5 ** 2)
    assert (x ** Dual(2.0, 0.0)).tangent == pytest.approx(3.0)


def test_array_lanes_and_seed_axes():
    # tangent with a leading seed axis: one pass gives two directional derivatives
    x = Dual(np.array([1.0, 2.0]), np.array([[1.0, 0.0], [0.0, 1.0]]))
    y = x * x
    assert np.allclose(y.tangent, [[2.0, 0.0], [0.0, 4.0]])
    s = y.sum()
    assert np.allclose(s.tangent, [2.0, 4.0])


def _kernel(x, y):
    # a scalar kernel built from every supported primitive
    r = ad.sqrt(x * x + y * y + 1.0)
    return ad.atan(x / r) * ad.exp(0.1 * y) + ad.sin(x * y) - ad.cos(y) / r + ad.log(r) * x ** 3


@settings(max_examples=100, deadline=None)
@given(st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
def test_tangent_matches_fd(x, y):
    h = 1e-6
    for seed_x in (True, False):
        d = _kernel(Dual(x, 1.0 if seed_x else 0.0), Dual(y, 0.0 if seed_x else 1.0))
        if seed_x:
            fd = (_kernel(x + h, y) - _kernel(x - h, y)) / (2 * h)
        else:
            fd = (_kernel(x, y + h) - _kernel(x, y - h)) / (2 * h)
        assert d.tangent == pytest.approx(fd, rel=1e-6, abs=1e-8)
        assert d.primal == pytest.approx(_kernel(x, y), rel=1e-15)
