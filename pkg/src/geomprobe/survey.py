"""Survey measurements, site model and the survey file format.

A survey file is UTF-8 JSON::

    {"site": "...", "scale_cm_per_px": null,
     "features": [{"id": "kiva_a_inner", "kind": "circle", "label": "...",
                   "measurements": {"aerial": {"value": 265, "sigma": 2, "unit": "cm"},
                                    "ground": null},
                   "xy_cm": null, "xy_sigma_cm": null}],
     "adjustments": [{"id": "kiva_a_inner", "delta_cm": 5, "note": "..."}],
     "derived": [{"id": "span", "expr": "a - b", "sigma_rule": "quadrature"}]}

``label`` and ``sigma_rule`` are optional.
"""
from __future__ import annotations

import enum
import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

SOURCES = ("aerial", "ground")


class SurveyError(ValueError):
    """Base class for survey loading and lookup problems."""


class SurveyFormatError(SurveyError):
    """Malformed survey text. ``location`` names the offending field."""

    def __init__(self, message, location=None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


class InvariantError(SurveyError):
    def __init__(self, message, feature_id=None):
        self.feature_id = feature_id
        if feature_id is not None:
            message = f"feature {feature_id!r}: {message}"
        super().__init__(message)


class MissingMeasurementError(SurveyError, KeyError):
    def __str__(self):
        return str(self.args[0])


class UnitMismatchError(ValueError):
    pass


class Unit(str, enum.Enum):
    CM = "cm"
    DEG = "deg"
    DIMENSIONLESS = "1"


class Level(str, enum.Enum):
    AS_MEASURED = "asMeasured"
    AT_GROUND = "atGround"


class FeatureKind(str, enum.Enum):
    POINT = "point"
    CIRCLE = "circle"
    SPAN = "span"


@dataclass(frozen=True)
class Measurement:
    """A value with a 1-sigma Gaussian uncertainty.

    Errors are treated as independent: sums and differences combine
    sigmas in quadrature.
    """

    value: float
    sigma: float = 0.0
    unit: Unit = Unit.CM

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "unit", Unit(self.unit))
        if not math.isfinite(self.value):
            raise ValueError(f"measurement value must be finite, got {self.value}")
        if not math.isfinite(self.sigma) or self.sigma < 0:
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")

    def _check_unit(self, other):
        if not isinstance(other, Measurement):
            return NotImplemented
        if other.unit != self.unit:
            raise UnitMismatchError(f"cannot combine {self.unit.value} with {other.unit.value}")
        return other

    def __add__(self, other):
        if self._check_unit(other) is NotImplemented:
            return NotImplemented
        return Measurement(self.value + other.value, math.hypot(self.sigma, other.sigma), self.unit)

    def __sub__(self, other):
        if self._check_unit(other) is NotImplemented:
            return NotImplemented
        return Measurement(self.value - other.value, math.hypot(self.sigma, other.sigma), self.unit)

    def __neg__(self):
        return Measurement(-self.value, self.sigma, self.unit)

    def __mul__(self, k):
        if isinstance(k, Measurement):
            return NotImplemented
        k = float(k)
        return Measurement(self.value * k, self.sigma * abs(k), self.unit)

    __rmul__ = __mul__

    def __truediv__(self, k):
        if isinstance(k, Measurement):
            return NotImplemented
        return self * (1.0 / float(k))

    @property
    def relative_sigma(self):
        return self.sigma / abs(self.value) if self.value else math.inf

    def __str__(self):
        unit = "" if self.unit is Unit.DIMENSIONLESS else f" {self.unit.value}"
        return f"{self.value:g} ± {self.sigma:g}{unit}"


@dataclass(frozen=True)
class Feature:
    id: str
    kind: FeatureKind
    measurements: Mapping[str, Measurement] = field(default_factory=dict)
    label: str = ""
    xy: tuple[float, float] | None = None
    xy_sigma: float | None = None


@dataclass(frozen=True)
class Adjustment:
    """Additive correction applied at ground level to every source of a feature."""

    feature_id: str
    delta: Measurement
    note: str = ""


@dataclass(frozen=True)
class DerivedSpanRule:
    """``left op right`` over two features, op in {"+", "-"}.

    ``sigma_rule`` is "quadrature" (independent errors) or "first" (only the
    left operand's sigma is carried, the convention some published span
    uncertainties follow).
    """

    id: str
    left: str
    op: str
    right: str
    sigma_rule: str = "quadrature"
    label: str = ""

    def __post_init__(self):
        if self.op not in "+-" or len(self.op) != 1:
            raise ValueError(f"derived span {self.id!r}: operator must be + or -")
        if self.sigma_rule not in ("quadrature", "first"):
            raise ValueError(f"derived span {self.id!r}: unknown sigma_rule {self.sigma_rule!r}")

    @property
    def expr(self):
        return f"{self.left} {self.op} {self.right}"


_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")


@dataclass(frozen=True)
class SurveySite:
    """Immutable collection of surveyed features for one site."""

    name: str
    features: tuple[Feature, ...] = ()
    adjustments: tuple[Adjustment, ...] = ()
    derived: tuple[DerivedSpanRule, ...] = ()
    scale_cm_per_px: float | None = None
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "adjustments", tuple(self.adjustments))
        object.__setattr__(self, "derived", tuple(self.derived))
        index = {}
        for f in self.features:
            if not _IDENT.match(f.id):
                raise InvariantError("identifier is not an ASCII token", f.id)
            if f.id in index:
                raise InvariantError("duplicate identifier", f.id)
            index[f.id] = f
            for source, m in f.measurements.items():
                if source not in SOURCES:
                    raise InvariantError(f"unknown source {source!r}", f.id)
                if m.sigma < 0:
                    raise InvariantError("negative sigma", f.id)
            if f.xy is not None:
                if len(f.xy) != 2 or not all(math.isfinite(c) for c in f.xy):
                    raise InvariantError("coordinates must be two finite numbers", f.id)
                if f.xy_sigma is not None and not f.xy_sigma >= 0:
                    raise InvariantError("negative positional sigma", f.id)
            if f.kind is FeatureKind.POINT and f.xy is None:
                raise InvariantError("point feature without coordinates", f.id)
        for adj in self.adjustments:
            if adj.feature_id not in index:
                raise InvariantError("adjustment references a missing feature", adj.feature_id)
        for rule in self.derived:
            if rule.id in index:
                raise InvariantError("derived span id collides with a feature", rule.id)
            for ref in (rule.left, rule.right):
                if ref not in index:
                    raise InvariantError(f"derived span references missing feature {ref!r}", rule.id)
            units = {m.unit for ref in (rule.left, rule.right) for m in index[ref].measurements.values()}
            if len(units) > 1:
                raise InvariantError("derived span mixes units", rule.id)
            index[rule.id] = rule
        object.__setattr__(self, "_index", index)

    def __contains__(self, ident):
        return ident in self._index

    def feature(self, ident) -> Feature:
        f = self._index.get(ident)
        if not isinstance(f, Feature):
            raise MissingMeasurementError(f"no feature {ident!r} in site {self.name!r}")
        return f

    def rule(self, ident) -> DerivedSpanRule:
        r = self._index.get(ident)
        if not isinstance(r, DerivedSpanRule):
            raise MissingMeasurementError(f"no derived span {ident!r} in site {self.name!r}")
        return r

    def adjustments_for(self, ident):
        return [a for a in self.adjustments if a.feature_id == ident]

    def has(self, ident, source) -> bool:
        """True when ``ident`` resolves for ``source``."""
        entry = self._index.get(ident)
        if isinstance(entry, DerivedSpanRule):
            return self.has(entry.left, source) and self.has(entry.right, source)
        return isinstance(entry, Feature) and source in entry.measurements

    def point(self, ident):
        f = self.feature(ident)
        if f.xy is None:
            raise MissingMeasurementError(f"feature {ident!r} has no coordinates")
        return f.xy, (f.xy_sigma or 0.0)


def resolve_measurement(site: SurveySite, feature_id, source, level=Level.AS_MEASURED) -> Measurement:
    """Look up one feature's measurement from one source.

    With ``level="atGround"`` every declared adjustment for the feature is
    added (sigmas in quadrature). Derived span ids are evaluated on the fly.
    """
    level = Level(level)
    if feature_id in site and isinstance(site._index[feature_id], DerivedSpanRule):
        return evaluate_derived_span(site, site.rule(feature_id), source, level)
    f = site.feature(feature_id)
    m = f.measurements.get(source)
    if m is None:
        raise MissingMeasurementError(f"feature {feature_id!r} has no {source} measurement")
    if level is Level.AT_GROUND:
        for adj in site.adjustments_for(feature_id):
            m = m + adj.delta
    return m


def evaluate_derived_span(site, rule: DerivedSpanRule, source, level=Level.AS_MEASURED) -> Measurement:
    a = resolve_measurement(site, rule.left, source, level)
    b = resolve_measurement(site, rule.right, source, level)
    out = a + b if rule.op == "+" else a - b
    if rule.sigma_rule == "first":
        out = Measurement(out.value, a.sigma, out.unit)
    return out


# --- file format -----------------------------------------------------------

_UNITS = {"cm": Unit.CM, "deg": Unit.DEG, "degrees": Unit.DEG, "1": Unit.DIMENSIONLESS,
          "dimensionless": Unit.DIMENSIONLESS}
_TOP_KEYS = {"site", "scale_cm_per_px", "features", "adjustments", "derived"}
_FEATURE_KEYS = {"id", "kind", "label", "measurements", "xy_cm", "xy_sigma_cm"}
_EXPR = re.compile(r"^\s*(\S+)\s*([+-])\s*(\S+)\s*$")


def _check_keys(obj, allowed, where, required=()):
    if not isinstance(obj, dict):
        raise SurveyFormatError("expected an object", where)
    for key in obj:
        if key not in allowed:
            raise SurveyFormatError(f"unknown field {key!r}", where)
    for key in required:
        if key not in obj:
            raise SurveyFormatError(f"missing field {key!r}", where)


def _number(x, where):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise SurveyFormatError(f"expected a number, got {x!r}", where)
    return float(x)


def _parse_measurement(obj, where, fid):
    _check_keys(obj, {"value", "sigma", "unit"}, where, required=("value", "sigma"))
    unit = obj.get("unit", "cm")
    if unit not in _UNITS:
        raise SurveyFormatError(f"unknown unit {unit!r}", where)
    value = _number(obj["value"], where + ".value")
    sigma = _number(obj["sigma"], where + ".sigma")
    if sigma < 0 or not math.isfinite(sigma):
        raise InvariantError(f"sigma must be >= 0 (got {sigma})", fid)
    if not math.isfinite(value):
        raise InvariantError("value must be finite", fid)
    return Measurement(value, sigma, _UNITS[unit])


def site_from_dict(data) -> SurveySite:
    _check_keys(data, _TOP_KEYS, "<root>", required=("site", "features"))
    name = data["site"]
    if not isinstance(name, str):
        raise SurveyFormatError("site name must be a string", "site")
    scale = data.get("scale_cm_per_px")
    if scale is not None:
        scale = _number(scale, "scale_cm_per_px")
    features = []
    for i, fobj in enumerate(data["features"]):
        where = f"features[{i}]"
        _check_keys(fobj, _FEATURE_KEYS, where, required=("id", "kind"))
        fid = fobj["id"]
        if not isinstance(fid, str):
            raise SurveyFormatError("id must be a string", where)
        try:
            kind = FeatureKind(fobj["kind"])
        except ValueError:
            raise SurveyFormatError(f"unknown kind {fobj['kind']!r}", where + ".kind") from None
        meas = {}
        mobj = fobj.get("measurements") or {}
        _check_keys(mobj, set(SOURCES), where + ".measurements")
        for source in SOURCES:
            if mobj.get(source) is not None:
                meas[source] = _parse_measurement(mobj[source], f"{where}.measurements.{source}", fid)
        xy = fobj.get("xy_cm")
        if xy is not None:
            if not isinstance(xy, list) or len(xy) != 2:
                raise SurveyFormatError("xy_cm must be [x, y]", where + ".xy_cm")
            xy = (_number(xy[0], where + ".xy_cm"), _number(xy[1], where + ".xy_cm"))
        xy_sigma = fobj.get("xy_sigma_cm")
        if xy_sigma is not None:
            xy_sigma = _number(xy_sigma, where + ".xy_sigma_cm")
        features.append(Feature(fid, kind, meas, fobj.get("label", ""), xy, xy_sigma))
    adjustments = []
    for i, aobj in enumerate(data.get("adjustments") or []):
        where = f"adjustments[{i}]"
        _check_keys(aobj, {"id", "delta_cm", "note"}, where, required=("id", "delta_cm"))
        adjustments.append(Adjustment(aobj["id"], Measurement(_number(aobj["delta_cm"], where), 0.0),
                                      aobj.get("note", "")))
    derived = []
    for i, dobj in enumerate(data.get("derived") or []):
        where = f"derived[{i}]"
        _check_keys(dobj, {"id", "expr", "sigma_rule", "label"}, where, required=("id", "expr"))
        match = _EXPR.match(dobj["expr"])
        if not match:
            raise SurveyFormatError(f"cannot parse expression {dobj['expr']!r}", where + ".expr")
        try:
            derived.append(DerivedSpanRule(dobj["id"], match[1], match[2], match[3],
                                           dobj.get("sigma_rule", "quadrature"), dobj.get("label", "")))
        except ValueError as exc:
            raise SurveyFormatError(str(exc), where) from None
    return SurveySite(name, features, adjustments, derived, scale)


def loads_site(text) -> SurveySite:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SurveyFormatError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    return site_from_dict(data)


def load_site(path) -> SurveySite:
    return loads_site(Path(path).read_text(encoding="utf-8"))


def _measurement_dict(m):
    return {"value": m.value, "sigma": m.sigma, "unit": m.unit.value}


def site_to_dict(site: SurveySite) -> dict:
    features = []
    for f in site.features:
        entry = {"id": f.id, "kind": f.kind.value}
        if f.label:
            entry["label"] = f.label
        entry["measurements"] = {s: (_measurement_dict(f.measurements[s]) if s in f.measurements else None)
                                 for s in SOURCES}
        entry["xy_cm"] = list(f.xy) if f.xy is not None else None
        entry["xy_sigma_cm"] = f.xy_sigma
        features.append(entry)
    derived = []
    for r in site.derived:
        entry = {"id": r.id, "expr": r.expr}
        if r.sigma_rule != "quadrature":
            entry["sigma_rule"] = r.sigma_rule
        if r.label:
            entry["label"] = r.label
        derived.append(entry)
    return {
        "site": site.name,
        "scale_cm_per_px": site.scale_cm_per_px,
        "features": features,
        "adjustments": [{"id": a.feature_id, "delta_cm": a.delta.value, "note": a.note}
                        for a in site.adjustments],
        "derived": derived,
    }


def dumps_site(site: SurveySite) -> str:
    return json.dumps(site_to_dict(site), indent=2, ensure_ascii=False) + "\n"


def save_site(site: SurveySite, path):
    Path(path).write_text(dumps_site(site), encoding="utf-8")


def sun_temple_path():
    return resources.files("geomprobe") / "data" / "sun_temple.survey"


def sun_temple() -> SurveySite:
    """The shipped Sun Temple aerial/ground survey."""
    return loads_site(sun_temple_path().read_text(encoding="utf-8"))
