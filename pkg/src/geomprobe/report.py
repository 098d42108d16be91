"""Table reports (markdown / csv) and SVG construct overlays."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from .constructs import (KNOWN_UNIT_TABLE_DEVIATIONS, BatteryReport, UnitEstimate, compare_unit_terms,
                         published_reference)
from .geometry import construct_equilateral, construct_golden_rectangle
from .stats import test_equal
from .survey import SOURCES, FeatureKind, Level, MissingMeasurementError, SurveySite, resolve_measurement

log = logging.getLogger(__name__)

P_TOL = 0.01
RATIO_TOL = 0.002


def rnd(x, places) -> str:
    """Round half away from zero and render with a period decimal point."""
    if x is None:
        return ""
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    q = Decimal(1).scaleb(-places)
    return str(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_UP))


def _pm(m, places):
    return f"{rnd(m.value, places)}±{rnd(m.sigma, places)}"


def _close(computed, printed, places, tol):
    return abs(float(rnd(computed, places)) - printed) <= tol + 1e-9


@dataclass
class Section:
    title: str
    header: list
    rows: list
    notes: list


def consistency_section(site: SurveySite, published=None):
    pub = (published or {}).get("consistency_p", {})
    rows, deviations = [], []
    for f in site.features:
        if not all(s in f.measurements for s in SOURCES):
            continue
        a, g = (resolve_measurement(site, f.id, s) for s in SOURCES)
        r = test_equal(a, g)
        printed = pub.get(f.id)
        status = ""
        if printed is not None:
            ok = _close(r.p, printed, 2, P_TOL)
            status = "match" if ok else "MISMATCH"
            if not ok:
                deviations.append(f"consistency {f.id}: p {rnd(r.p, 2)} vs printed {printed:.2f}")
        rows.append([f.id, f.label, _pm(a, 0), _pm(g, 0), rnd(r.chi2, 3), rnd(r.p, 2),
                     "" if printed is None else f"{printed:.2f}", status])
    header = ["feature", "label", "aerial_cm", "ground_cm", "chi2", "p", "printed_p", "status"]
    return Section("Aerial vs ground consistency", header, rows, []), deviations


def _battery_compare(o, printed):
    r = o.result
    if r.dof == 1 and r.observed.unit.value == "1":
        v_ok = _close(r.observed.value, printed[0], 3, RATIO_TOL)
    else:
        v_ok = abs(r.observed.value - printed[0]) <= 1.0
    p_ok = _close(r.p, printed[2], 2, P_TOL)
    return v_ok, p_ok


def battery_section(battery: BatteryReport, published=None, only=None, title="Construct battery"):
    pub = (published or {}).get("battery", {})
    rows, deviations, notes = [], [], []
    if battery.plan is not None:
        notes.append(f"k = {battery.k}, alpha = {battery.alpha:g}, alpha' = alpha/k = {battery.plan.alpha_prime:.6f}")
        notes.append(f"rejections: {len(battery.rejections)}")
    else:
        notes.append("empty battery: no hypothesis could be evaluated")
    for o in battery.outcomes:
        if only is not None and o.hypothesis_id not in only:
            continue
        if o.result is None:
            notes.append(f"skipped {o.hypothesis_id} ({o.source}): {o.skipped}")
            continue
        r = o.result
        places = 3 if r.observed.unit.value == "1" else 0
        printed = pub.get(o.hypothesis_id, {}).get(o.source)
        status = ""
        if printed is not None:
            v_ok, p_ok = _battery_compare(o, printed)
            status = "match" if (v_ok and p_ok) else "MISMATCH"
            if not v_ok:
                deviations.append(f"{o.hypothesis_id} ({o.source}): value {rnd(r.observed.value, places)} "
                                  f"vs printed {printed[0]}")
            if not p_ok:
                deviations.append(f"{o.hypothesis_id} ({o.source}): p {rnd(r.p, 2)} vs printed {printed[2]:.2f}")
        target = "" if r.target is None else str(r.target)
        rows.append([o.hypothesis_id, o.source, _pm(r.observed, places), target, rnd(r.chi2, 3), r.dof,
                     rnd(r.p, 2), "" if printed is None else f"{printed[2]:.2f}",
                     battery.decision(o).value, status])
    header = ["hypothesis", "source", "observed", "target", "chi2", "dof", "p", "printed_p", "decision", "status"]
    return Section(title, header, rows, notes), deviations


def unit_section(est: UnitEstimate, published=None, tolerance=0.02):
    printed = (published or {}).get("unit_terms", {}).get(est.source, {})
    comps = {c.key: c for c in compare_unit_terms(est, printed, tolerance)} if printed else {}
    rows, deviations = [], []
    for t in est.terms:
        c = comps.get(t.key)
        if c is None:
            rows.append([t.key, str(t.multiplier), _pm(t.value, 0), "", "", ""])
            continue
        flag = "FLAG" if c.flagged else ""
        rows.append([t.key, str(t.multiplier), _pm(t.value, 0), f"{c.printed[0]:g}±{c.printed[1]:g}",
                     rnd(100 * c.relative_deviation, 1), flag])
        if c.flagged:
            known = (est.source, t.key) in KNOWN_UNIT_TABLE_DEVIATIONS
            where = f"; printed value matches computed {c.printed_matches}" if c.printed_matches else ""
            deviations.append(f"unit table {est.source} {t.key}: computed {rnd(t.value.value, 0)} vs printed "
                              f"{c.printed[0]:g} ({rnd(100 * c.relative_deviation, 1)}%)"
                              f"{' [documented]' if known else ' [UNEXPECTED]'}{where}")
    notes = [f"X = {_pm(est.X, 1)} cm ({est.weighting.value} mean, scatter as sigma)",
             f"L = X/64 = {_pm(est.L, 2)} cm"]
    pub_x = (published or {}).get("module_width", {}).get(est.source)
    pub_l = (published or {}).get("base_unit", {}).get(est.source)
    if pub_x:
        notes.append(f"printed X = {pub_x[0]}±{pub_x[1]} cm, printed L = {pub_l[0]}±{pub_l[1]} cm")
    header = ["term", "multiplier", "computed_cm", "printed_cm", "deviation_pct", "flag"]
    return Section(f"Module width terms ({est.source})", header, rows, notes), deviations


def build_sections(site, battery=None, units=(), published=None, null=None):
    """Assemble report sections and the deviations list."""
    sections, deviations = [], []
    if battery is not None:
        s, d = consistency_section(site, published)
        sections.append(s)
        deviations += d
        walls = {"kiva_a_wall_ratio", "kiva_b_wall_ratio", "kiva_c_wall_ratio", "kiva_d_wall_ratio"}
        s, _ = battery_section(battery, published, only=walls, title="Kiva wall ratios")
        s.notes = []
        sections.append(s)
        s, d = battery_section(battery, published)
        sections.append(s)
        deviations += d
    for est in units:
        s, d = unit_section(est, published)
        sections.append(s)
        deviations += d
    if null is not None:
        sections.append(Section("Null model", ["hits", "trials"], [[k, v] for k, v in null.histogram().items()],
                                [f"hit rule: {null.hit_rule}", f"observed hits: {null.observed_hits}",
                                 f"P(hits >= observed) = {null.tail_probability:.6g} "
                                 f"({null.confidence:g} CI {null.ci[0]:.6g} .. {null.ci[1]:.6g})",
                                 "the prior is a modelling choice of this toolkit"]))
    sections.append(Section("Deviations", ["deviation"], [[d] for d in deviations], []))
    return sections, deviations


def render_sections(sections, fmt="markdown") -> str:
    if fmt == "markdown":
        out = []
        for s in sections:
            out.append(f"## {s.title}")
            out.append("")
            out.append("| " + " | ".join(s.header) + " |")
            out.append("|" + "|".join("---" for _ in s.header) + "|")
            for row in s.rows:
                out.append("| " + " | ".join(str(c) for c in row) + " |")
            if s.notes:
                out.append("")
                out.extend(f"- {n}" for n in s.notes)
            out.append("")
        return "\n".join(out)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for s in sections:
            w.writerow([f"# {s.title}"])
            w.writerow(s.header)
            w.writerows(s.rows)
            for n in s.notes:
                w.writerow([f"# {n}"])
            w.writerow([])
        return buf.getvalue()
    raise ValueError(f"unknown format {fmt!r}")


def emit_tables(site, battery=None, units=(), fmt="markdown", published=None, null=None) -> str:
    """Render the consistency, ratio, battery and unit tables.

    ``published`` defaults to the printed Sun Temple values when the site
    is the shipped survey; pass ``{}`` to skip comparisons.
    """
    if published is None:
        published = published_reference() if site.name.startswith("Sun Temple") else {}
    sections, _ = build_sections(site, battery, units, published, null)
    return render_sections(sections, fmt)


# --- SVG overlays ---------------------------------------------------------------

LAYERS = ("circles", "golden_rectangle", "triangles", "unit_lines")
_COLORS = {"circles": "#d62728", "golden_rectangle": "#1f77b4", "triangles": "#2ca02c", "unit_lines": "#9467bd"}


def _f(x):
    return rnd(x, 3)


class _Canvas:
    def __init__(self):
        self.items = {name: [] for name in LAYERS}
        self.xs, self.ys = [], []

    def extend(self, x, y):
        self.xs.append(x)
        self.ys.append(y)

    def circle(self, layer, cx, cy, r, title=""):
        self.extend(cx - r, cy - r)
        self.extend(cx + r, cy + r)
        t = f"<title>{title}</title>" if title else ""
        self.items[layer].append(f'<circle cx="{_f(cx)}" cy="{_f(cy)}" r="{_f(r)}">{t}</circle>')

    def polyline(self, layer, pts, closed=False, dashed=False):
        for x, y in pts:
            self.extend(x, y)
        tag = "polygon" if closed else "polyline"
        dash = ' stroke-dasharray="4 3"' if dashed else ""
        coords = " ".join(f"{_f(x)},{_f(y)}" for x, y in pts)
        self.items[layer].append(f'<{tag} points="{coords}"{dash}/>')

    def arc(self, layer, center, radius, start, end):
        (cx, cy) = center
        x0, y0 = cx + radius * math.cos(start), cy + radius * math.sin(start)
        x1, y1 = cx + radius * math.cos(end), cy + radius * math.sin(end)
        self.extend(x0, y0)
        self.extend(x1, y1)
        sweep = 0 if end < start else 1
        self.items[layer].append(f'<path d="M {_f(x0)} {_f(y0)} A {_f(radius)} {_f(radius)} 0 0 {sweep} '
                                 f'{_f(x1)} {_f(y1)}" stroke-dasharray="2 2"/>')


def _radius(site, fid, source):
    for s in (source,) + tuple(x for x in SOURCES if x != source):
        try:
            return resolve_measurement(site, fid, s, Level.AT_GROUND).value
        except MissingMeasurementError:
            continue
    return None


def render_overlay(site: SurveySite, constructs=LAYERS, out=None, *, source="aerial", px_per_m=10.0,
                   width_feature="outer_d_width", length_feature="outer_d_length",
                   triangle_bases=(("sw_corner", "se_corner"),)):
    """Draw construct overlays as SVG.

    Survey coordinates are cm in a y-up frame; the document flips to the
    y-down screen convention through one group transform, written into the
    file along with the scale. Constructs that lack inputs are skipped with
    a warning (logged and left as an SVG comment). Returns (svg, warnings).
    """
    for c in constructs:
        if c not in LAYERS:
            raise ValueError(f"unknown construct layer {c!r}")
    canvas = _Canvas()
    warnings = []

    def warn(msg):
        warnings.append(msg)
        log.warning(msg)

    if "circles" in constructs:
        for f in site.features:
            if f.kind is not FeatureKind.CIRCLE:
                continue
            if f.xy is None:
                warn(f"circles: {f.id} has no centre coordinates")
                continue
            r = _radius(site, f.id, source)
            if r is None:
                warn(f"circles: {f.id} has no radius measurement")
                continue
            canvas.circle("circles", f.xy[0], f.xy[1], r, f.id)

    width = _radius(site, width_feature, source) if width_feature in site else None
    length = _radius(site, length_feature, source) if length_feature in site else None
    origin = (0.0, 0.0)
    if "sw_corner" in site and site.feature("sw_corner").xy is not None:
        origin = site.feature("sw_corner").xy

    if "golden_rectangle" in constructs:
        if width is None:
            warn(f"golden_rectangle: no {width_feature} measurement")
        else:
            ox, oy = origin
            if length is not None:
                canvas.polyline("golden_rectangle", [(ox, oy), (ox + length, oy), (ox + length, oy + width),
                                                     (ox, oy + width)], closed=True)
            g = construct_golden_rectangle(width, origin)
            canvas.polyline("golden_rectangle", [tuple(p) for p in g.square], closed=True, dashed=True)
            canvas.polyline("golden_rectangle", [tuple(p) for p in g.corners], closed=True, dashed=True)
            start = math.atan2(g.square[2][1] - g.arc_center[1], g.square[2][0] - g.arc_center[0])
            canvas.arc("golden_rectangle", tuple(g.arc_center), g.arc_radius, start, 0.0)

    if "triangles" in constructs:
        for a, b in triangle_bases:
            try:
                pa, pb = site.point(a)[0], site.point(b)[0]
            except MissingMeasurementError:
                warn(f"triangles: base {a}-{b} needs coordinates")
                continue
            apex = construct_equilateral(pa, pb)
            canvas.polyline("triangles", [pa, pb, (apex.x, apex.y)], closed=True)

    if "unit_lines" in constructs:
        if width is None:
            warn(f"unit_lines: no {width_feature} measurement")
        else:
            ox, oy = origin
            for i, frac in enumerate((1.0, 0.5, 1.0 / 3.0, 3.0 / 8.0)):
                y = oy - (0.08 + 0.04 * i) * width
                canvas.polyline("unit_lines", [(ox, y), (ox + frac * width, y)])
            unit = width / 64
            y = oy - 0.26 * width
            ticks = [(ox + k * unit, y) for k in range(65)]
            canvas.polyline("unit_lines", ticks)
            for x, _ in ticks[::8]:
                canvas.polyline("unit_lines", [(x, y - 0.01 * width), (x, y + 0.01 * width)])

    svg = _svg_document(canvas, constructs, warnings, px_per_m)
    if out is not None:
        Path(out).write_text(svg, encoding="utf-8")
    return svg, warnings


def _svg_document(canvas, constructs, warnings, px_per_m):
    s = px_per_m / 100.0  # px per cm
    if canvas.xs:
        xmin, xmax, ymin, ymax = min(canvas.xs), max(canvas.xs), min(canvas.ys), max(canvas.ys)
    else:
        xmin = xmax = ymin = ymax = 0.0
    pad = 0.05 * max(xmax - xmin, ymax - ymin, 100.0)
    xmin, xmax, ymin, ymax = xmin - pad, xmax + pad, ymin - pad, ymax + pad
    width_px, height_px = (xmax - xmin) * s, (ymax - ymin) * s
    transform = f"translate({_f(-xmin * s)} {_f(ymax * s)}) scale({_f(s)} {_f(-s)})"
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_f(width_px)}" height="{_f(height_px)}" '
        f'viewBox="0 0 {_f(width_px)} {_f(height_px)}">',
        f"<desc>survey frame: cm, y up; document: px, y down; scale {_f(px_per_m)} px per m; "
        f"transform {transform}</desc>",
    ]
    for w in warnings:
        lines.append(f"<!-- warning: {w.replace('--', '- -')} -->")
    lines.append(f'<g id="site" transform="{transform}" fill="none" stroke-width="{_f(1.5 / s)}">')
    for name in LAYERS:
        if name not in constructs:
            continue
        lines.append(f'<g id="{name}" stroke="{_COLORS[name]}">')
        lines.extend(canvas.items[name])
        lines.append("</g>")
    lines.append("</g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
