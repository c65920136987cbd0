import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ionheat import survey
from ionheat.errors import DataQualityError, FitError

W = 2 * math.pi * 1e6


def entries_on_law(ds_um, exponent=-4.0, level=1e-11, omega=W):
    return [survey.SurveyEntry("x", d * 1e-6, omega, level * (d / 40.0) ** exponent)
            for d in ds_um]


def test_exact_inverse_fourth_power():
    f = survey.distance_scaling_fit(entries_on_law([40, 75, 120, 300, 900]))
    assert f.exponent == pytest.approx(-4.0, abs=1e-10)
    assert f.exponent_stderr == pytest.approx(0.0, abs=1e-8)
    assert np.allclose(f.residuals, 0.0, atol=1e-10)
    assert not f.below_trend.any()


@settings(max_examples=30)
@given(k=st.floats(-6.0, -1.0), unit=st.floats(1e-3, 1e3))
def test_exponent_invariant_to_units(k, unit):
    ents = entries_on_law([30, 60, 100, 250, 500], exponent=k)
    scaled = [survey.SurveyEntry(e.species, e.d, e.omega, e.S_E * unit) for e in ents]
    a = survey.distance_scaling_fit(ents)
    b = survey.distance_scaling_fit(scaled)
    assert a.exponent == pytest.approx(k, abs=1e-9)
    assert b.exponent == pytest.approx(a.exponent, abs=1e-9)


def test_common_frequency_moves_level_not_exponent():
    a = survey.distance_scaling_fit(entries_on_law([40, 80, 160], omega=W), "S_E")
    b = survey.distance_scaling_fit(entries_on_law([40, 80, 160], omega=W), "omega_S_E")
    assert b.exponent == pytest.approx(a.exponent, abs=1e-12)
    assert b.prefactor == pytest.approx(W * a.prefactor, rel=1e-12)


def test_spread_identity():
    ents = entries_on_law([40, 80, 160, 320])
    assert survey.spread([e.S_E for e in ents]) == pytest.approx(8.0**4, rel=1e-12)
    # same omega everywhere: multiplying by omega leaves the spread unchanged
    assert survey.spread([e.omega_S_E for e in ents]) == pytest.approx(
        survey.spread([e.S_E for e in ents]), rel=1e-12)


def test_outlier_flagged_against_others():
    ents = entries_on_law([40, 60, 90, 150, 250, 400])
    low = ents[2]
    ents[2] = survey.SurveyEntry("x", low.d, low.omega, low.S_E * 10**-1.5)
    f = survey.distance_scaling_fit(ents)
    assert f.below_trend.tolist() == [False, False, True, False, False, False]
    # leave-one-out: the outlier sits 1.5 decades under the others, which each
    # see it dragging their reference down by 1.5 / 5
    assert f.residuals[2] == pytest.approx(-1.5, rel=1e-9)
    assert np.delete(f.residuals, 2) == pytest.approx(np.full(5, 0.3), rel=1e-9)


def test_span_and_size_checks():
    with pytest.raises(DataQualityError):
        survey.distance_scaling_fit(entries_on_law([40, 400]))
    with pytest.raises(FitError):
        survey.distance_scaling_fit(entries_on_law([40, 45, 50]))


def test_malformed_rows_reported_with_line_numbers(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("# digitized values\n"
                 "species,d_um,omega_mhz,se_v2m2hz,source\n"
                 "A,40,1,1e-11,ok\n"
                 "B,abc,1,1e-11,bad number\n"
                 "C,50,1,-1e-11,negative\n"
                 "\n"
                 "D,60,1\n"
                 "E,70,1,2e-12,ok\n")
    ents, problems = survey.ingest_report(p)
    assert [e.species for e in ents] == ["A", "E"]
    assert [pr.line for pr in problems] == [4, 5, 7]
    assert "line 4" in str(problems[0])


def test_empty_and_headerless_files(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("# nothing yet\n")
    assert survey.ingest_report(p) == ([], [])
    q = tmp_path / "nohead.csv"
    q.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(DataQualityError):
        survey.ingest(q)


def test_write_and_read_round_trip(tmp_path):
    ents = entries_on_law([40, 80, 160])
    p = tmp_path / "s.csv"
    survey.write_survey(ents, p, comment="synthetic")
    back = survey.ingest(p)
    for a, b in zip(ents, back):
        assert b.d == pytest.approx(a.d, rel=1e-14)
        assert b.S_E == a.S_E
        assert b.omega == pytest.approx(a.omega, rel=1e-14)


def test_bundled_survey_parses():
    ents, problems = survey.ingest_report(survey.bundled_survey_path())
    assert problems == []
    assert len(ents) >= 1
    assert ents[0].species == "25Mg+"
    assert ents[0].S_E == pytest.approx(6.74697739414908e-12, rel=1e-12)


def test_synthetic_survey_recovers_scaling():
    rng = np.random.default_rng(3)
    ents, off = survey.synthetic_survey(rng, n=40, scatter_decades=0.3)
    f = survey.distance_scaling_fit(ents)
    assert abs(f.exponent + 4.0) < 3 * f.exponent_stderr + 0.05


def test_panel_rows_band():
    rows = survey.panel_rows(entries_on_law([40, 80]), band_decades=1.0)
    assert len(rows) == 4
    for r in rows:
        assert r["band_low"] < r["band_centre"] < r["band_high"]
        assert r["value"] == pytest.approx(r["band_centre"], rel=1e-10)
