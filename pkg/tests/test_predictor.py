import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conveyor.disturbance import reference_model
from conveyor.errors import DomainRangeError, UsageError
from conveyor.predictor import (CSV_COLUMNS, Prediction, compare, predict, predict_escape_large_tau,
                                predict_survival)
from conveyor.propagator import SurvivalSeries
from conveyor.protocols import ConstantA, Cos, Poly5, ShiftedSin, Sin, TaylorCustom
from conveyor.tunneling import GammaEntry, GammaTable


def wkb_rate(a):
    return 1.75 * math.exp(-0.665 / a)


@pytest.fixture(scope="module")
def table():
    a = np.round(np.arange(0.03, 1.0001, 0.01), 10)
    return GammaTable([GammaEntry(float(x), wkb_rate(x), 0.9, 1.0) for x in a])


def test_zero_acceleration_survives(table):
    pred = predict(ConstantA(a=0.0, tau=100), np.linspace(0, 100, 11), table, reference_model())
    assert np.all(pred.p_fit == 1.0)


def test_constant_acceleration(table):
    m = reference_model()
    d = 2.64477 * 0.15**2
    p = predict_survival(ConstantA(a=0.15, tau=500), 400.0, table, m)
    assert p == pytest.approx((1 - d) ** 2 * math.exp(-wkb_rate(0.15) * 400), rel=1e-5)


def test_initial_value_is_product_of_factors(table):
    m = reference_model()
    cos = Cos(L=5000, tau=500)
    d = 2.64477 * cos.c**2
    assert predict_survival(cos, 0.0, table, m) == pytest.approx((1 - d) ** 2, rel=1e-12)
    sin = Sin(L=8000, tau=500)
    # a(0) = 0: only the first-order endpoint factor remains, ~5.5e-5
    assert predict_survival(sin, 0.0, table, m) == pytest.approx(1.0, abs=1e-4)


def test_final_factor_switches_to_endpoint_order(table):
    m = reference_model()
    sin = Sin(L=8000, tau=500)
    pred = predict(sin, [250.0, 500.0 - 1e-6, 500.0], table, m)
    d1 = 8.60949 * (4 * math.pi**2 * 8000 / 500**3) ** 2
    assert pred.d_inst[0] == pytest.approx(0.0, abs=1e-20)
    assert pred.d_inst[2] == pytest.approx(d1, rel=1e-4)
    assert pred.d_ini[0] == pytest.approx(d1, rel=1e-4)


@settings(max_examples=30, deadline=None)
@given(c=st.floats(0.0, 0.95), phi=st.floats(0, 2 * math.pi), frac=st.floats(0, 1))
def test_prediction_is_a_probability(table, c, phi, frac):
    p = ShiftedSin(c=c, phi=phi, tau=500)
    assert 0.0 <= predict_survival(p, frac * 500, table, reference_model()) <= 1.0


def test_escape_routes_agree():
    m = reference_model()
    tau = 2000.0
    via_b = predict_escape_large_tau(Sin(L=8000, tau=tau), m)
    assert via_b == pytest.approx(2 * 8.60949 * (4 * math.pi**2 * 8000 / tau**3) ** 2, rel=1e-6)
    assert via_b == pytest.approx(1.7175e12 * tau**-6, rel=1e-4)
    poly = predict_escape_large_tau(Poly5(L=125, tau=300), m)
    assert poly == pytest.approx(2 * 840**2 * m.coefficient(2) ** 2 * 125**2 * 300.0**-8, rel=1e-6)


def test_smooth_endpoints_escape_nothing():
    p = TaylorCustom(coeffs=(0,) * 7 + (1e-30,), tau=10)
    assert predict_escape_large_tau(p, reference_model()) == pytest.approx(0.0, abs=1e-30)


def test_escape_decreases_with_tau(table):
    m = reference_model()
    for cls in (Cos, Sin, Poly5):
        esc = [predict_escape_large_tau(cls(L=125, tau=t), m, table) for t in (300, 400, 600, 900)]
        assert all(a > b for a, b in zip(esc, esc[1:]))


def test_range_error_propagates():
    tab = GammaTable([GammaEntry(x, wkb_rate(x), 0.9, 1.0) for x in (0.05, 0.1, 0.15, 0.2)])
    with pytest.raises(DomainRangeError):
        predict(Cos(L=8000, tau=300), [0, 300], tab, reference_model())


def test_compare():
    t = np.linspace(0, 10, 11)
    sim = SurvivalSeries(t, np.exp(-0.1 * t), np.ones_like(t), {})
    same = Prediction(t, np.exp(-0.1 * t), 0 * t, 0 * t, 0.1 * t)
    r = compare(sim, same)
    assert r.max_abs_dev == 0 and r.mean_abs_dev == 0 and r.rel_dev_at_tau == 0 and r.n_samples == 11
    shifted = Prediction(t, np.exp(-0.1 * t) + 0.01 * (t < 3), 0 * t, 0 * t, 0 * t)
    assert compare(sim, shifted).max_abs_dev == pytest.approx(0.01)
    assert compare(sim, shifted, t_min=3).max_abs_dev == 0.0
    with pytest.raises(UsageError):
        compare(sim, Prediction(t + 0.5, t, t, t, t))


def test_csv_output(tmp_path, table):
    pred = predict(Cos(L=5000, tau=500), np.linspace(0, 500, 6), table, reference_model())
    path = tmp_path / "pred.csv"
    pred.write_csv(path)
    rows = list(csv.reader(open(path)))
    assert tuple(rows[0]) == CSV_COLUMNS and len(rows) == 7
    assert b"\r" not in path.read_bytes()
