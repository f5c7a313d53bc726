import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conveyor.errors import DomainRangeError, UsageError
from conveyor.protocols import (FINAL, INITIAL, ConstantA, Cos, Poly5, ShiftedSin, Sin, TaylorCustom,
                                amplitude_from_constraint, protocol_from_dict)

L_st = st.floats(10.0, 20000.0)
tau_st = st.floats(50.0, 5000.0)


@settings(max_examples=40, deadline=None)
@given(L=L_st, tau=tau_st, cls=st.sampled_from([Cos, Sin, Poly5]))
def test_families_transport_L_and_stop(L, tau, cls):
    p = cls(L=L, tau=tau)
    assert p.position(0.0) == 0.0 and p.velocity(0.0) == 0.0
    assert p.distance() == pytest.approx(L, rel=1e-9)
    assert abs(p.velocity(tau)) <= 1e-9 * L / tau


@settings(max_examples=30, deadline=None)
@given(L=L_st, tau=tau_st, cls=st.sampled_from([Cos, Sin, Poly5]))
def test_kinematics_consistent_with_numerical_integration(L, tau, cls):
    p = cls(L=L, tau=tau)
    t = np.linspace(0, tau, 2001)
    v_num = np.concatenate([[0], np.cumsum(0.5 * (p.acceleration(t[1:]) + p.acceleration(t[:-1])) * np.diff(t))])
    assert np.max(np.abs(v_num - p.velocity(t))) <= 1e-5 * np.max(np.abs(p.velocity(t))) + 1e-15


def test_amplitudes():
    assert amplitude_from_constraint("cos", 8000, 500) == pytest.approx(math.pi**2 * 8000 / 2 / 500**2)
    assert Sin(L=8000, tau=500).c == pytest.approx(2 * math.pi * 8000 / 500**2)
    assert Poly5(L=125, tau=100).a0 == pytest.approx(840 * 125 * 100.0**-7)
    with pytest.raises(UsageError):
        amplitude_from_constraint("const", 1, 1)
    with pytest.raises(UsageError):
        Cos(L=-1, tau=10)


def test_leading_discontinuities():
    cos = Cos(L=5000, tau=500)
    assert cos.leading_discontinuity(INITIAL) == (0, pytest.approx(cos.c))
    n, v = cos.leading_discontinuity(FINAL)
    assert n == 0 and v == pytest.approx(-cos.c)
    sin = Sin(L=8000, tau=500)
    n, v = sin.leading_discontinuity(INITIAL)
    assert n == 1 and v == pytest.approx(2.52662e-3, rel=1e-5)
    n, v = sin.leading_discontinuity(FINAL)
    assert n == 1 and v == pytest.approx(2.52662e-3, rel=1e-5)
    poly = Poly5(L=125, tau=100)
    for end in (INITIAL, FINAL):
        n, v = poly.leading_discontinuity(end)
        assert n == 2 and abs(v) == pytest.approx(1.05e-3, rel=1e-9)


def test_smooth_endpoint_returns_none():
    # a(t) = t^7 has every derivative up to 6 zero at t = 0
    p = TaylorCustom(coeffs=(0, 0, 0, 0, 0, 0, 0, 1e-20), tau=100)
    assert p.leading_discontinuity(INITIAL) is None
    assert p.leading_discontinuity(FINAL)[0] == 0


def test_taylor_final_derivatives():
    p = TaylorCustom(coeffs=(1.0, -2.0, 0.5), tau=3.0)
    # a(3) = 1 - 6 + 4.5, a'(3) = -2 + 3, a'' = 1
    assert p.endpoint_derivative(0, FINAL) == pytest.approx(-0.5)
    assert p.endpoint_derivative(1, FINAL) == pytest.approx(1.0)
    assert p.endpoint_derivative(2, FINAL) == pytest.approx(1.0)
    assert p.endpoint_derivative(3, FINAL) == 0.0


def test_shifted_sin():
    p = ShiftedSin(c=0.91, phi=math.pi / 2, tau=500)
    assert p.acceleration(0.0) == pytest.approx(0.91)
    assert p.leading_discontinuity(INITIAL)[0] == 0
    z = ShiftedSin(c=0.91, phi=0.0, tau=500)
    assert z.acceleration(0.0) == 0.0 and z.leading_discontinuity(INITIAL)[0] == 1
    t = np.linspace(0, 500, 11)
    assert np.allclose(z.acceleration(t), Sin(L=0.91 * 500**2 / (2 * math.pi), tau=500).acceleration(t))


def test_time_range_checked():
    p = Cos(L=100, tau=10)
    with pytest.raises(DomainRangeError):
        p.acceleration(10.5)
    with pytest.raises(DomainRangeError):
        p.position(-1.0)
    assert p.acceleration(10.0 + 1e-12) == pytest.approx(-p.c)


def test_constant():
    p = ConstantA(a=0.145, tau=500)
    assert p.acceleration(123.0) == 0.145
    assert p.distance() == pytest.approx(0.5 * 0.145 * 500**2)
    assert p.leading_discontinuity(INITIAL) == (0, 0.145)


@pytest.mark.parametrize("desc", [
    {"variant": "cos", "L": 1.0, "tau": 2.0},
    {"variant": "sin", "L": 1.0, "tau": 2.0},
    {"variant": "poly5", "L": 1.0, "tau": 2.0},
    {"variant": "const", "a": 0.1, "tau": 2.0},
    {"variant": "shifted_sin", "c": 0.5, "phi": 0.3, "tau": 2.0},
    {"variant": "taylor", "coeffs": [0.0, 1.0], "tau": 2.0},
])
def test_descriptor_round_trip(desc):
    assert protocol_from_dict(desc).to_dict() == desc


@pytest.mark.parametrize("desc", [
    {"variant": "cos", "L": 1.0},
    {"variant": "cos", "L": 1.0, "tau": 2.0, "c": 3.0},
    {"variant": "wobble", "tau": 1.0},
    {"L": 1.0, "tau": 2.0},
])
def test_bad_descriptors(desc):
    with pytest.raises(UsageError):
        protocol_from_dict(desc)
