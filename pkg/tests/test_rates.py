import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ionheat import io, rates
from ionheat.config import MG25
from ionheat.errors import DataQualityError, FitError

W = 2 * math.pi * 1e6
TRIPLE = [(W * 2.86, 1470.0, 150.0), (W * 4.02, 690.0, 60.0), (W * 5.25, 300.0, 30.0)]


def ds(points, method="recool"):
    return rates.HeatingDataset(points, W * 4.02, method)


def test_through_origin_trivial():
    r = rates.fit_rate(ds([(1.0, 2.0, 1.0), (2.0, 4.0, 1.0)]))
    assert r.rate == pytest.approx(2.0, rel=1e-14)
    assert r.rate_stderr == pytest.approx(1 / math.sqrt(5), rel=1e-14)
    assert r.reduced_chi2 == pytest.approx(0.0, abs=1e-28)


def test_free_intercept_trivial():
    r = rates.fit_rate(ds([(0.0, 0.3, 0.1), (1e-3, 1.3, 0.1), (2e-3, 2.3, 0.1)]),
                       through_origin=False)
    assert r.rate == pytest.approx(1000.0, rel=1e-12)
    assert r.intercept == pytest.approx(0.3, rel=1e-12)


def test_single_point_exactly_determined():
    r = rates.fit_rate(ds([(5.0, 3100.0, 50.0)]))
    assert r.rate == pytest.approx(620.0)
    assert r.rate_stderr == pytest.approx(10.0)
    assert r.reduced_chi2 == 0.0


def test_degenerate_designs():
    with pytest.raises(FitError):
        rates.fit_rate(ds([(0.0, 1.0, 1.0), (0.0, 2.0, 1.0)]))
    with pytest.raises(FitError):
        rates.fit_rate(ds([(1.0, 1.0, 1.0), (1.0, 2.0, 1.0)]), through_origin=False)
    with pytest.raises(DataQualityError):
        ds([(1.0, 1.0, 0.0)])
    with pytest.raises(DataQualityError):
        rates.fit_rate(ds([]))


def test_weighted_fit_matches_numpy_polyfit():
    rng = np.random.default_rng(0)
    t = np.linspace(1, 25, 9)
    s = rng.uniform(20, 80, t.size)
    n = 620 * t + 3 + rng.normal(0, s)
    r = rates.fit_rate(ds(list(zip(t, n, s))), through_origin=False)
    p = np.polyfit(t, n, 1, w=1 / s)
    assert r.rate == pytest.approx(p[0], rel=1e-10)
    assert r.intercept == pytest.approx(p[1], rel=1e-8)


@settings(max_examples=40)
@given(scale=st.floats(1e-3, 1e3), shift=st.floats(0.1, 10.0))
def test_rate_fit_equivariance(scale, shift):
    pts = [(1.0, 700.0, 30.0), (2.0, 1290.0, 40.0), (3.0, 2100.0, 60.0)]
    base = rates.fit_rate(ds(pts), through_origin=False)
    scaled = rates.fit_rate(ds([(t, n * scale, s * scale) for t, n, s in pts]),
                            through_origin=False)
    assert scaled.rate == pytest.approx(base.rate * scale, rel=1e-9)
    assert scaled.rate_stderr == pytest.approx(base.rate_stderr * scale, rel=1e-9)
    assert scaled.reduced_chi2 == pytest.approx(base.reduced_chi2, rel=1e-9)
    # stretching time divides the rate
    stretched = rates.fit_rate(ds([(t * shift, n, s) for t, n, s in pts]), through_origin=False)
    assert stretched.rate == pytest.approx(base.rate / shift, rel=1e-9)


def test_noise_hand_value():
    p = rates.electric_field_noise(300.0, MG25, W * 5.25)
    assert p.S_E == pytest.approx(6.74697739414908e-12, rel=1e-12)
    assert 6.5e-12 < p.S_E < 7.0e-12


@given(rate=st.floats(0.0, 1e6), f=st.floats(0.1, 20.0), err=st.floats(0.0, 1e4))
def test_noise_inverse(rate, f, err):
    p = rates.electric_field_noise(rate, MG25, W * f, err)
    back, back_err = rates.heating_rate_from_noise(p, MG25)
    assert back == pytest.approx(rate, rel=1e-12, abs=1e-300)
    assert back_err == pytest.approx(err, rel=1e-12, abs=1e-300)


def test_noise_rejects_bad_input():
    with pytest.raises(DataQualityError):
        rates.electric_field_noise(-1.0, MG25, W)
    with pytest.raises(DataQualityError):
        rates.electric_field_noise(1.0, MG25, 0.0)


def test_exact_power_law_recovered():
    x = np.array([1.0, 2.0, 5.0, 9.0])
    pts = [(xi, 3.0 * xi**-2.5, 0.1 * 3.0 * xi**-2.5) for xi in x]
    f = rates.power_law_fit(pts, x_ref=1.0)
    assert f.exponent == pytest.approx(-2.5, abs=1e-12)
    assert f.prefactor == pytest.approx(3.0, rel=1e-12)
    assert f.reduced_chi2 == pytest.approx(0.0, abs=1e-20)


def test_power_law_on_measured_triple():
    k = rates.power_law_fit(TRIPLE)
    assert -2.8 <= k.exponent <= -2.0
    assert k.exponent == pytest.approx(-2.5985, abs=1e-4)
    noise = [rates.electric_field_noise(r, MG25, w, s) for w, r, s in TRIPLE]
    ks = rates.power_law_fit([(p.omega, p.S_E, p.S_E_stderr) for p in noise])
    # S_E = rate * omega * const, so the exponent moves by exactly one
    assert ks.exponent == pytest.approx(k.exponent + 1, abs=1e-12)
    assert ks.exponent_stderr == pytest.approx(k.exponent_stderr, rel=1e-12)


def test_bundled_rate_table(tmp_path):
    got = io.read_rate_table(rates.bundled_rates_path())
    assert [r for _, r, _ in got] == [1470.0, 690.0, 300.0]
    p = io.write_rate_table(tmp_path / "r.csv", got)
    assert io.read_rate_table(p) == got


def test_power_law_rejects():
    with pytest.raises(DataQualityError):
        rates.power_law_fit([(1.0, 1.0, 0.1)])
    with pytest.raises(DataQualityError):
        rates.power_law_fit([(1.0, -1.0, 0.1), (2.0, 1.0, 0.1)])
    with pytest.raises(FitError):
        rates.power_law_fit([(1.0, 1.0, 0.1), (1.0, 2.0, 0.1)])


def test_z_scores():
    z1 = rates.compare_methods(rates.RateResult(620, 50, 1), rates.RateResult(690, 60, 1))
    z2 = rates.compare_methods(rates.RateResult(1260, 130, 1), rates.RateResult(1470, 150, 1))
    assert z1.z == pytest.approx(70 / math.hypot(50, 60), rel=1e-14)
    assert z2.z == pytest.approx(210 / math.hypot(130, 150), rel=1e-14)
    assert z1.consistent and z2.consistent
    assert z1.z == pytest.approx(0.8963, abs=1e-4)
    assert z2.z == pytest.approx(1.0580, abs=1e-4)


def test_compare_rejects_mismatched_frequency():
    a = rates.RateResult(1, 1, 1, trap_frequency=W * 4.02)
    b = rates.RateResult(1, 1, 1, trap_frequency=W * 2.86)
    with pytest.raises(DataQualityError):
        rates.compare_methods(a, b)


def test_dataset_csv_round_trip(tmp_path):
    d = rates.HeatingDataset([(0.0, 0.3, 0.05), (1e-3, 1.0, 0.07)], W * 4.02, "raman")
    p = io.write_dataset(tmp_path / "d.csv", d)
    back = io.read_dataset(p)
    assert back.points == d.points
    assert back.method == "raman"
    assert back.trap_frequency == pytest.approx(d.trap_frequency, rel=1e-12)
