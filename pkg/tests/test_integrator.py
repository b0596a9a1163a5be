import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tracksim.errors import ImplicitNonconvergence
from tracksim.integrator import BACKWARD_EULER, EULER, HEUN, RK3, RK4, TABLEAUS, ButcherTableau, integrate, step


def decay(x, t):
    return -x


def observed_order(tab, rhs, x0, t1, exact, n=(20, 40, 80)):
    errs = [np.max(np.abs(integrate(tab, rhs, x0, 0.0, t1, k) - exact)) for k in n]
    return np.log2(errs[0] / errs[1]), np.log2(errs[1] / errs[2])


@pytest.mark.parametrize("name,order", [("euler", 1), ("heun", 2), ("rk3", 3), ("rk4", 4)])
def test_explicit_orders(name, order):
    p1, p2 = observed_order(TABLEAUS[name], decay, np.array([1.0]), 1.0, np.exp(-1.0))
    assert p2 == pytest.approx(order, abs=0.15)


def test_backward_euler_order_one():
    _, p = observed_order(BACKWARD_EULER, decay, np.array([1.0]), 1.0, np.exp(-1.0))
    assert p == pytest.approx(1.0, abs=0.1)


def test_backward_euler_damps_stiff_decay():
    stiff = lambda x, t: -50.0 * x
    # fixed-point stage iteration needs h*L < 1
    x_be = integrate(BACKWARD_EULER, stiff, np.array([1.0]), 0.0, 1.0, 200)
    assert x_be[0] == pytest.approx(1.25 ** -200, rel=1e-6)
    x_fe = integrate(EULER, stiff, np.array([1.0]), 0.0, 1.0, 20)
    assert abs(x_fe[0]) > 1.0


def test_implicit_nonconvergence_is_raised():
    with pytest.raises(ImplicitNonconvergence):
        step(BACKWARD_EULER, lambda x, t: -1e4 * x, np.array([1.0]), 0.0, 1.0)


def test_time_dependent_rhs_uses_stage_times():
    # x' = 3 t^2 integrates exactly under RK4 (cubic in t)
    x = integrate(RK4, lambda x, t: np.array([3.0 * t * t]), np.array([0.0]), 0.0, 2.0, 3)
    assert x[0] == pytest.approx(8.0, rel=1e-13)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 3.0), st.integers(1, 5))
def test_rk4_batched_equals_scalar(omega, n):
    rhs = lambda s, t: np.stack([s[..., 1], -omega**2 * s[..., 0]], axis=-1)
    x0 = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, -0.2]])
    batch = integrate(RK4, rhs, x0, 0.0, 1.0, n)
    for i in range(3):
        assert np.allclose(batch[i], integrate(RK4, rhs, x0[i], 0.0, 1.0, n), rtol=0, atol=1e-15)


def test_tableau_validation():
    with pytest.raises(ValueError):
        ButcherTableau(a=[[0.0]], b=[0.5], c=[0.0])
    with pytest.raises(ValueError):
        ButcherTableau(a=[[0.0, 1.0], [0.0, 0.0]], b=[0.5, 0.5], c=[0.0, 1.0])
    with pytest.raises(ValueError):
        step(RK4, decay, np.array([1.0]), 0.0, 0.0)
    assert RK4.stages == 4 and HEUN.stages == 2 and RK3.order == 3
