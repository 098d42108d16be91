import json
import math

import pytest
from numpy.testing import assert_allclose

from geomprobe.survey import (DerivedSpanRule, Feature, FeatureKind, InvariantError, Level, Measurement,
                              MissingMeasurementError, SurveyFormatError, SurveySite, Unit, UnitMismatchError,
                              dumps_site, evaluate_derived_span, load_site, loads_site, resolve_measurement,
                              site_to_dict, sun_temple, sun_temple_path)


def _minimal(**extra):
    data = {
        "site": "toy",
        "features": [
            {"id": "a", "kind": "span", "measurements": {"aerial": {"value": 100, "sigma": 3}}},
            {"id": "b", "kind": "span", "measurements": {"aerial": {"value": 40, "sigma": 4}}},
        ],
    }
    data.update(extra)
    return data


def test_shipped_site_has_every_table_row():
    site = sun_temple()
    assert len(site.features) == 19
    sources = {s for f in site.features for s in f.measurements}
    assert sources == {"aerial", "ground"}
    two_source = [f for f in site.features if len(f.measurements) == 2]
    assert len(two_source) == 17


def test_round_trip_is_lossless(tmp_path):
    site = sun_temple()
    text = dumps_site(site)
    again = loads_site(text)
    assert site_to_dict(again) == site_to_dict(site)
    path = tmp_path / "copy.survey"
    path.write_text(text, encoding="utf-8")
    assert site_to_dict(load_site(path)) == site_to_dict(load_site(sun_temple_path()))


def test_negative_sigma_names_the_feature():
    data = _minimal()
    data["features"][1]["measurements"]["aerial"]["sigma"] = -1
    with pytest.raises(InvariantError) as exc:
        loads_site(json.dumps(data))
    assert exc.value.feature_id == "b"
    assert "b" in str(exc.value)


def test_dangling_span_reference_is_rejected():
    data = _minimal(derived=[{"id": "c", "expr": "a - missing"}])
    with pytest.raises(InvariantError, match="missing"):
        loads_site(json.dumps(data))


def test_duplicate_identifier():
    data = _minimal()
    data["features"][1]["id"] = "a"
    with pytest.raises(InvariantError, match="duplicate"):
        loads_site(json.dumps(data))


def test_parse_error_reports_location():
    with pytest.raises(SurveyFormatError) as exc:
        loads_site('{"site": "x",\n "features": [,]}')
    assert "line 2" in str(exc.value)
    data = _minimal()
    data["features"][0]["colour"] = "red"
    with pytest.raises(SurveyFormatError, match=r"features\[0\]"):
        loads_site(json.dumps(data))


@pytest.mark.parametrize("fid, source, level, expected", [
    ("kiva_a_inner", "aerial", Level.AT_GROUND, (270, 2)),
    ("kiva_a_inner", "aerial", Level.AS_MEASURED, (265, 2)),
    ("kiva_b_outer", "ground", Level.AT_GROUND, (382, 3)),
    ("kiva_a_outer", "ground", Level.AT_GROUND, (360, 3)),
])
def test_resolve_measurement(fid, source, level, expected):
    m = resolve_measurement(sun_temple(), fid, source, level)
    assert (m.value, m.sigma) == expected


def test_missing_source_raises():
    with pytest.raises(MissingMeasurementError):
        resolve_measurement(sun_temple(), "sun_shrine_to_kiva_a", "ground")


def test_derived_span_quadrature():
    site = sun_temple()
    rule = DerivedSpanRule("b_to_south", "kiva_b_center_to_south", "-", "kiva_b_outer")
    aerial = evaluate_derived_span(site, rule, "aerial")
    ground = evaluate_derived_span(site, rule, "ground")
    assert_allclose([aerial.value, aerial.sigma], [658, math.hypot(10, 3)])
    assert_allclose([ground.value, ground.sigma], [668, math.hypot(10, 3)])
    assert_allclose(aerial.sigma, 10.44, atol=0.005)


def test_shipped_derived_span_keeps_first_operand_sigma():
    m = resolve_measurement(sun_temple(), "kiva_b_outer_to_south", "aerial", Level.AT_GROUND)
    assert (m.value, m.sigma) == (658, 10)


def test_self_subtraction():
    f = Feature("a", FeatureKind.SPAN, {"aerial": Measurement(12.5, 0.7)})
    site = SurveySite("s", [f], derived=[DerivedSpanRule("z", "a", "-", "a")])
    m = resolve_measurement(site, "z", "aerial")
    assert m.value == 0
    assert_allclose(m.sigma, 0.7 * math.sqrt(2))


def test_unit_mismatch():
    with pytest.raises(UnitMismatchError):
        Measurement(1, 0, Unit.CM) + Measurement(1, 0, Unit.DEG)
    feats = [Feature("a", FeatureKind.SPAN, {"aerial": Measurement(1, 0)}),
             Feature("b", FeatureKind.SPAN, {"aerial": Measurement(1, 0, Unit.DEG)})]
    with pytest.raises(InvariantError, match="units"):
        SurveySite("s", feats, derived=[DerivedSpanRule("c", "a", "+", "b")])


def test_measurement_validation():
    with pytest.raises(ValueError):
        Measurement(math.nan, 1)
    with pytest.raises(ValueError):
        Measurement(1, -0.1)
    m = Measurement(10, 2) * -3
    assert (m.value, m.sigma) == (-30, 6)
