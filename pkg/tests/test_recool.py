import math
from dataclasses import replace

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ionheat import recool, simlab
from ionheat.config import MG25, TrapLaserConfig
from ionheat.errors import ConfigError, DataQualityError

CFG = TrapLaserConfig.for_species(MG25, 4.02)
HBAR_W = recool.HBAR * CFG.motional_frequency


def lorentzian(cfg):
    g, s, d = MG25.gamma, cfg.saturation, cfg.detuning
    return 0.5 * g * s / (1 + s + (2 * d / g) ** 2)


def mp_rate(e, cfg):
    """Phase average with mpmath at 30 digits (independent of scipy)."""
    mpmath.mp.dps = 30
    g, s, d = (mpmath.mpf(MG25.gamma), mpmath.mpf(cfg.saturation), mpmath.mpf(cfg.detuning))
    k = mpmath.mpf(MG25.wavenumber)
    kv0 = k * mpmath.sqrt(2 * mpmath.mpf(e) / mpmath.mpf(MG25.mass))
    f = lambda phi: g * s / 2 / (1 + s + (2 * (d - kv0 * mpmath.cos(phi)) / g) ** 2)
    pts = [0, mpmath.pi]
    if kv0 > abs(d):
        pts = [0, mpmath.acos(d / kv0), mpmath.pi]
    return float(mpmath.quad(f, pts) / mpmath.pi)


def test_rest_rate_is_lorentzian():
    r = recool.scattering_rate_at_energy(0.0, MG25, CFG)
    assert abs(r / lorentzian(CFG) - 1) <= 1e-10
    assert recool.scattering_rate_at_energy(0.0, MG25, CFG, "closed") == pytest.approx(
        lorentzian(CFG), rel=1e-12)


@pytest.mark.parametrize("nbar", [1.0, 10.0, 300.0, 1e4, 1e6])
def test_quad_and_closed_form_match_mpmath(nbar):
    e = HBAR_W * nbar
    ref = mp_rate(e, CFG)
    assert recool.scattering_rate_at_energy(e, MG25, CFG) == pytest.approx(ref, rel=1e-7)
    assert recool.scattering_rate_at_energy(e, MG25, CFG, "closed") == pytest.approx(ref,
                                                                                   rel=1e-10)


def test_hot_ion_scatters_less():
    rates = [recool.scattering_rate_at_energy(HBAR_W * n, MG25, CFG) for n in
             (1e3, 1e4, 1e5, 1e6)]
    assert all(a > b for a, b in zip(rates, rates[1:]))
    # far above the Doppler velocity the average falls like 1/v, i.e. E^-1/2
    assert rates[-1] / rates[-2] == pytest.approx(math.sqrt(0.1), rel=0.05)


def test_negative_energy_rejected():
    with pytest.raises(DataQualityError):
        recool.scattering_rate_at_energy(-1.0, MG25, CFG)


def test_blue_detuning_rejected():
    with pytest.raises(ConfigError):
        recool.steady_state_energy(MG25, replace(CFG, detuning=-CFG.detuning))


def test_steady_state_is_doppler_scale():
    # textbook Doppler limit hbar Gamma/2 in 1D, modified by saturation and recoil geometry
    nb = recool.doppler_nbar(MG25, CFG)
    e_textbook = recool.HBAR * MG25.gamma / 2
    assert 0.3 < recool.steady_state_energy(MG25, CFG) / e_textbook < 3
    assert recool.energy_rate(recool.steady_state_energy(MG25, CFG), MG25, CFG) == \
        pytest.approx(0.0, abs=1e-12 * e_textbook * MG25.gamma)
    assert 1 < nb < 20


def test_steady_state_curve_is_flat():
    e_ss = recool.steady_state_energy(MG25, CFG)
    t = np.linspace(0, 1e-3, 50)
    rho = recool.recool_curve(e_ss, MG25, CFG, t, ensemble="single")
    assert np.ptp(rho) <= 1e-12 * rho[0]


def test_curve_scales_linearly_with_efficiency():
    t = np.linspace(0, 2e-3, 40)
    a = recool.recool_curve(HBAR_W * 1e4, MG25, CFG, t)
    b = recool.recool_curve(HBAR_W * 1e4, MG25, replace(CFG, detection_efficiency=2e-3), t)
    assert np.allclose(b, 2 * a, rtol=1e-12)


def test_hot_start_monotone_thermal():
    t = np.linspace(0, 20e-3, 2001)
    rho = recool.recool_curve(HBAR_W * 15500, MG25, CFG, t)
    steps = np.diff(rho)
    assert steps.min() >= -1e-6 * rho[-1]
    assert rho[-1] > 2 * rho[0]


def test_hot_start_monotone_single_at_moderate_detuning():
    cfg = replace(CFG, detuning=-0.25 * MG25.gamma)
    t = np.linspace(0, 20e-3, 2001)
    rho = recool.recool_curve(HBAR_W * 15500, MG25, cfg, t, ensemble="single")
    assert np.diff(rho).min() >= -1e-9 * rho[-1]


def test_master_trajectory_matches_direct_integration():
    dyn = recool.dynamics(MG25, CFG)
    t = np.linspace(0, 5e-3, 300)
    for nbar in (0.0, 2.0, 1e3, 5e4):
        e0 = HBAR_W * nbar
        # reference at the masters' tolerance
        direct = recool._single_trajectory_rate(e0, MG25, replace(CFG, ode_rtol=1e-11), t)
        assert np.allclose(dyn.rate([e0], t)[0], direct, rtol=1e-8, atol=0)


def test_cumulative_is_integral_of_rate():
    dyn = recool.dynamics(MG25, CFG)
    t = np.linspace(0, 3e-3, 30001)
    e0 = HBAR_W * 8000
    rho = dyn.rate([e0], t)[0]
    trap = np.concatenate([[0], np.cumsum(0.5 * (rho[1:] + rho[:-1]) * np.diff(t))])
    assert np.allclose(dyn.cumulative([e0], t)[0], trap, rtol=1e-6)


def _noiseless(nbar0, scale=2000.0, repeats=1000, n_bins=400, window=6e-3):
    dyn = recool.dynamics(MG25, CFG)
    edges = np.linspace(0, window, n_bins + 1)
    mu = recool.expected_counts(nbar0, scale, 0.0, edges, repeats, dyn, CFG.motional_frequency)
    return recool.RecoolTrace(1.0, edges, mu, repeats)


@pytest.mark.parametrize("nbar0", [3000.0, 15500.0])
def test_noiseless_fit_inverts_model(nbar0):
    f = recool.fit_recool(_noiseless(nbar0), MG25, CFG)
    assert abs(f.nbar0 / nbar0 - 1) < 1e-6
    assert abs(f.scale / 2000.0 - 1) < 1e-6
    assert f.reduced_chi2 < 1e-6


def test_zero_count_trace_rejected():
    tr = recool.RecoolTrace(1.0, np.linspace(0, 1e-3, 101), np.zeros(100), 100)
    with pytest.raises(DataQualityError) as err:
        recool.fit_recool(tr, MG25, CFG)
    assert err.value.exit_code == 3


def test_trace_shape_checks():
    with pytest.raises(DataQualityError):
        recool.RecoolTrace(1.0, np.linspace(0, 1, 5), np.zeros(5), 1)
    with pytest.raises(DataQualityError):
        recool.RecoolTrace(1.0, np.linspace(0, 1, 5), -np.ones(4), 1)


def test_noisy_fit_covers_truth_and_shrinks_with_repeats():
    proc = simlab.HeatingProcess(620.0, seed=21)
    edges = np.linspace(0, 6e-3, 401)
    errs = []
    for repeats in (500, 2000):
        tr, n = simlab.synth_recool_trace(10.0, MG25, CFG, proc, repeats, edges,
                                          simlab.rng_for(21, 2, repeats))
        f = recool.fit_recool(tr, MG25, CFG)
        # the fit estimates the sampled ensemble's mean
        assert abs(f.nbar0 - n.mean()) < 4 * f.nbar0_stderr
        errs.append(f.total_stderr)
    assert errs[1] < errs[0]


@settings(max_examples=20, deadline=None)
@given(nbar=st.floats(0.0, 1e6))
def test_closed_form_rate_bounded_by_rest_peak(nbar):
    r = recool.scattering_rate_at_energy(HBAR_W * nbar, MG25, CFG, "closed")
    s = CFG.saturation
    assert 0 < r <= 0.5 * MG25.gamma * s / (1 + s) * (1 + 1e-12)
