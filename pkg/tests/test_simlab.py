import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ionheat import recool, sideband, simlab
from ionheat.config import MG25, DelaySchedule, RamanConfig, TrapLaserConfig
from ionheat.errors import ConfigError

CFG = TrapLaserConfig.for_species(MG25, 4.02)


def test_zero_rate_walk_is_frozen():
    rec = simlab.simulate_heating_walk(7, simlab.HeatingProcess(0.0), 1.0)
    assert rec.final_n == 7
    rng = np.random.default_rng(0)
    n0 = np.arange(50)
    assert np.array_equal(simlab.heat_occupations(n0, 0.0, 1.0, rng), n0)
    assert np.array_equal(simlab.gillespie_ensemble(n0, 0.0, 1.0, rng), n0)


def test_negative_rate_rejected():
    with pytest.raises(ConfigError):
        simlab.HeatingProcess(-1.0)


def test_thermal_start_mean_after_5ms():
    # nbar 0.34 + 300/s * 5 ms = 1.84 for the event-by-event walk
    rng = simlab.rng_for(3, 0)
    n0 = simlab.thermal_sample(0.34, 20_000, rng)
    n = simlab.gillespie_ensemble(n0, 300.0, 5e-3, rng)
    se = n.std(ddof=1) / math.sqrt(n.size)
    assert abs(n.mean() - 1.84) < 4 * se
    assert simlab.thermality_pvalue(n) > 0.01


def test_exact_propagator_long_delay():
    # 620/s for 25 s from the Doppler limit: ~15500 quanta, still thermal
    rng = simlab.rng_for(4, 0)
    nbar_d = recool.doppler_nbar(MG25, CFG)
    n0 = simlab.thermal_sample(nbar_d, 20_000, rng)
    n = simlab.heat_occupations(n0, 620.0, 25.0, rng)
    target = nbar_d + 15500.0
    se = target / math.sqrt(n.size)
    assert abs(n.mean() - target) < 4 * se
    assert simlab.thermality_pvalue(n) > 0.01


@pytest.mark.parametrize("n0", [0, 3, 20])
def test_exact_propagator_matches_gillespie(n0):
    rate, t, size = 500.0, 4e-3, 20_000
    a = simlab.heat_occupations(np.full(size, n0), rate, t, simlab.rng_for(5, n0, 0))
    b = simlab.gillespie_ensemble(np.full(size, n0), rate, t, simlab.rng_for(5, n0, 1))
    # same law: means agree and a two-sample KS on the integers does not reject
    se = math.hypot(a.std(), b.std()) / math.sqrt(size)
    assert abs(a.mean() - b.mean()) < 4 * se
    assert abs(a.mean() - (n0 + rate * t)) < 4 * a.std() / math.sqrt(size)
    assert stats.ks_2samp(a, b).pvalue > 1e-3


def test_single_walk_agrees_with_ensemble():
    proc = simlab.HeatingProcess(1000.0, seed=9)
    finals = [simlab.simulate_heating_walk(0, proc, 2e-3, simlab.rng_for(9, i)).final_n
              for i in range(2000)]
    assert abs(np.mean(finals) - 2.0) < 4 * np.std(finals) / math.sqrt(len(finals))


def test_thermality_detects_non_thermal():
    rng = np.random.default_rng(1)
    assert simlab.thermality_pvalue(rng.poisson(2.0, 10_000)) < 1e-6
    assert simlab.thermality_pvalue(simlab.thermal_sample(2.0, 10_000, rng)) > 0.01
    assert simlab.thermality_pvalue(np.zeros(10, dtype=int)) == 1.0


@settings(max_examples=25, deadline=None)
@given(n0=st.integers(0, 50), rate=st.floats(1.0, 5e3), t=st.floats(1e-4, 1e-2),
       seed=st.integers(0, 2**16))
def test_propagator_stays_non_negative_and_unbiased(n0, rate, t, seed):
    n = simlab.heat_occupations(np.full(4000, n0), rate, t, np.random.default_rng(seed))
    assert n.min() >= 0
    # Var n(t) = (2 n0 + 1) At (1 + At) + (At)^2 ... bound the mean loosely by 6 sigma
    at = rate * t
    var = (2 * n0 + 1) * at * (1 + at) + at**2
    assert abs(n.mean() - (n0 + at)) < 6 * math.sqrt(var / n.size) + 1e-9


def test_streams_are_deterministic_and_independent():
    a = simlab.rng_for(11, 2, 0).random(5)
    assert np.array_equal(a, simlab.rng_for(11, 2, 0).random(5))
    assert not np.array_equal(a, simlab.rng_for(11, 2, 1).random(5))
    assert not np.array_equal(a, simlab.rng_for(12, 2, 0).random(5))


def test_sequence_validation():
    raman = RamanConfig()
    ok = simlab.standard_sequence(1e-3, 0.0, raman)
    assert ok.steps[-1].kind == "detect"
    with pytest.raises(ConfigError):
        simlab.PulseSequence((simlab.detect(1e-6), simlab.delay(1e-3))).validate()
    with pytest.raises(ConfigError):
        simlab.PulseSequence((simlab.detect(1e-6), simlab.detect(1e-6))).validate()
    with pytest.raises(ConfigError):
        simlab.PulseSequence((simlab.delay(-1.0),)).validate()
    with pytest.raises(ConfigError):
        simlab.PulseSequence((simlab.Step("teleport"),)).validate()


def test_zero_length_detection_gives_no_counts():
    seq = simlab.PulseSequence((simlab.doppler_cool(300e-6), simlab.detect(0.0)))
    res = simlab.run_sequence(seq, MG25, CFG, RamanConfig(), simlab.HeatingProcess(0.0), 500)
    assert res.counts.sum() == 0


def test_sideband_cooling_reaches_below_one_quantum():
    cfg = TrapLaserConfig.for_species(MG25, 5.25)
    seq = simlab.PulseSequence((simlab.doppler_cool(300e-6), simlab.repump(20e-6),
                                simlab.sideband_cool_cycles(30)))
    res = simlab.run_sequence(seq, MG25, cfg, RamanConfig(), simlab.HeatingProcess(0.0),
                              20_000, simlab.rng_for(2, 0))
    assert res.n_after_cooling.mean() <= 1.0
    assert res.n_after_cooling.mean() < recool.doppler_nbar(MG25, cfg) / 5


def test_cooling_law_literal():
    raman = RamanConfig()
    p = simlab.cooling_flip_probability(np.array([0, 0.25, 1, 4, 100]), raman)
    assert p[0] == 0.0
    assert p[1] == pytest.approx(math.sin(math.pi / 4) ** 2)
    assert np.allclose(p[2:], 1.0)


def test_scan_from_sequences_matches_expectation():
    # with no delay heating the sequence scan is a sample of the thermal-state expectation
    raman = RamanConfig()
    proc = simlab.HeatingProcess(0.0, seed=5)
    scan, nbar = simlab.simulate_scan(0.0, MG25, CFG, raman, proc, shots=1400, seed=5)
    ref = sideband.synth_scan(sideband.ThermalState(nbar), MG25, CFG, raman,
                              detuning_grid=scan.detunings, shots=1400)
    # cooled state is not exactly thermal, so only the blue sideband peak is compared tightly
    z = (scan.signal - ref.signal) / np.hypot(scan.stderr, ref.stderr)
    assert np.mean(np.abs(z) < 4) > 0.9


def test_recool_trace_at_doppler_limit_is_flat():
    proc = simlab.HeatingProcess(0.0, seed=1)
    dyn = recool.dynamics(MG25, CFG)
    edges = np.linspace(0, 200e-6, 101)
    trace, n = simlab.synth_recool_trace(0.0, MG25, CFG, proc, 20_000, edges,
                                         simlab.rng_for(1, 2, 0))
    mu = CFG.detection_efficiency * dyn.rho_ss * np.diff(edges) * 20_000
    chi2 = np.sum((trace.counts - mu) ** 2 / mu) / trace.counts.size
    assert 0.6 < chi2 < 1.5


def test_recool_dataset_deterministic_across_workers():
    proc = simlab.HeatingProcess(620.0, seed=3)
    sched = DelaySchedule((1.0, 2.0), 200)
    a = simlab.synth_recool_dataset(sched, MG25, CFG, proc, workers=1)
    b = simlab.synth_recool_dataset(sched, MG25, CFG, proc, workers=2)
    for x, y in zip(a, b):
        assert np.array_equal(x.counts, y.counts)
        assert np.array_equal(x.bin_edges, y.bin_edges)
    assert len(a[0].counts) == 400
