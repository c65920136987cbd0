import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ionheat.config import (MG25, TWO_PI, IonSpecies, TrapLaserConfig, config_from_dict,
                            config_to_dict, default_run_config, lamb_dicke, load_config,
                            validate_config)
from ionheat.errors import ConfigError


def hand_eta(f_mhz):
    # literal CODATA 2018 numbers, 280 nm, Raman k difference sqrt(2) * 2pi / lambda
    m = (24.98583696 - 5.48579909065e-4) * 1.66053906660e-27
    k = math.sqrt(2) * 2 * math.pi / 280e-9
    return k * math.sqrt(1.054571817e-34 / (2 * m * 2 * math.pi * f_mhz * 1e6))


def test_mass_is_ion_not_atom():
    assert MG25.mass == pytest.approx((24.98583696 - 5.48579909065e-4) * 1.66053906660e-27,
                                      rel=1e-15)
    assert MG25.gamma == pytest.approx(TWO_PI * 41.4e6)


@pytest.mark.parametrize("f_mhz, approx", [(4.02, 0.2251), (5.25, 0.197), (2.86, 0.2669)])
def test_lamb_dicke_hand_values(f_mhz, approx):
    eta = lamb_dicke(MG25, TrapLaserConfig.for_species(MG25, f_mhz))
    assert eta == pytest.approx(hand_eta(f_mhz), rel=1e-12)
    assert eta == pytest.approx(approx, abs=5e-4)


@given(f=st.floats(0.5, 9.0), scale=st.floats(1.01, 5.0))
def test_lamb_dicke_falls_with_frequency_and_mass(f, scale):
    cfg = TrapLaserConfig.for_species(MG25, f)
    heavy = IonSpecies("heavy", MG25.mass * scale, MG25.transition_wavelength,
                       MG25.natural_linewidth)
    eta = lamb_dicke(MG25, cfg)
    assert lamb_dicke(MG25, cfg.with_frequency_mhz(f * scale)) < eta
    assert lamb_dicke(heavy, cfg) < eta
    # eta^2 * omega * m is fixed by the geometry
    assert lamb_dicke(heavy, cfg) == pytest.approx(eta / math.sqrt(scale), rel=1e-12)


def test_default_config_is_valid():
    run = default_run_config()
    assert validate_config(run.trap, run.species) == []
    assert run.trap.detuning == pytest.approx(-0.5 * MG25.gamma)


@pytest.mark.parametrize("field, value", [
    ("motional_frequency", 0.0),
    ("motional_frequency", -1.0),
    ("saturation", -0.1),
    ("beam_axis_cosine", 1.5),
    ("detection_efficiency", 0.0),
    ("background_rate", -1.0),
])
def test_validate_flags_bad_fields(field, value):
    from dataclasses import replace
    cfg = replace(TrapLaserConfig.for_species(MG25, 4.02), **{field: value})
    bad = validate_config(cfg, MG25)
    assert [v.field for v in bad] == [field]


def test_weak_binding_violation_reported():
    # 20 MHz is not small against a 41.4 MHz linewidth
    bad = validate_config(TrapLaserConfig.for_species(MG25, 20.0), MG25)
    assert any("weak binding" in v.bound for v in bad)


def test_lamb_dicke_rejects_zero_frequency():
    with pytest.raises(ConfigError):
        lamb_dicke(MG25, TrapLaserConfig(0.0, -1.0))


def test_json_round_trip_and_hash(tmp_path):
    run = default_run_config(5.25, heating_rate=300.0, delays=(0.0, 1e-3), method="raman",
                             bin_width=2e-7)
    p = tmp_path / "c.json"
    p.write_text(json.dumps(config_to_dict(run)))
    back = load_config(p)
    assert config_to_dict(back) == config_to_dict(run)
    assert back.config_hash() == run.config_hash()
    assert back.trap.detuning == pytest.approx(run.trap.detuning, rel=1e-12)
    assert back.experiment == run.experiment


def test_hash_ignores_workers_only():
    a = default_run_config(workers=1)
    assert a.config_hash() == default_run_config(workers=8).config_hash()
    assert a.config_hash() != default_run_config(heating_rate=621.0).config_hash()


def test_missing_trap_field_is_config_error():
    d = config_to_dict(default_run_config())
    del d["trap"]["motional_frequency_mhz"]
    with pytest.raises(ConfigError) as err:
        config_from_dict(d)
    assert err.value.exit_code == 2
    assert err.value.code == "config.config"


@pytest.mark.parametrize("patch", [
    {"experiment": {"method": "thermometer"}},
    {"experiment": {"delays_s": [1.0, -1.0]}},
    {"trap": {"motional_frequency_mhz": "fast"}},
    {"species": {"preset": "40Ca+"}},
])
def test_bad_config_values(patch):
    d = config_to_dict(default_run_config())
    for sec, vals in patch.items():
        d[sec].update(vals)
    with pytest.raises(ConfigError):
        config_from_dict(d)


def test_invalid_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)


@settings(max_examples=30)
@given(f=st.floats(0.5, 9.0), rate=st.floats(0.0, 1e5), sat=st.floats(0.0, 10.0))
def test_round_trip_property(f, rate, sat):
    from dataclasses import replace
    run = default_run_config(f, heating_rate=rate)
    run = replace(run, trap=replace(run.trap, saturation=sat))
    back = config_from_dict(json.loads(json.dumps(config_to_dict(run))))
    assert back.trap.motional_frequency == pytest.approx(run.trap.motional_frequency, rel=1e-11)
    # one trip through the file format reaches a fixed point
    assert config_to_dict(back) == config_to_dict(run)
    assert back.config_hash() == run.config_hash()
    assert back.trap.saturation == sat
    assert back.experiment.heating_rate == rate
