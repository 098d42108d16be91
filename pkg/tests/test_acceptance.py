"""Acceptance suite.

Each criterion is a ``check_*`` function returning a list of
(sub-check, passed, detail) triples. The pytest wrappers assert on them
and ``conftest.py`` prints one PASS/FAIL line per criterion at the end of
the run. ``python3 tests/test_acceptance.py`` runs the same checks
without pytest.
"""
import math
import subprocess
import sys
import time

import mpmath
import numpy as np

from geomprobe import stats
from geomprobe.circlefit import fit_circle
from geomprobe.constructs import (KNOWN_UNIT_TABLE_DEVIATIONS, builtin_catalog, compare_unit_terms,
                                  estimate_unit, evaluate_hypothesis, published_reference, quantogram_null,
                                  quantogram_scan, run_battery)
from geomprobe.geometry import PHI, construct_equilateral, construct_golden_rectangle, inscribed_circumscribed
from geomprobe.nullmodel import HitRule, NullPrior, clopper_pearson, count_hits, estimate_fpr, sample_null_site
from geomprobe.survey import SOURCES, resolve_measurement, sun_temple

RESULTS = {}

WALL_RATIOS = ("kiva_a_wall_ratio", "kiva_b_wall_ratio", "kiva_c_wall_ratio", "kiva_d_wall_ratio")
# rows expected to be flagged against the printed unit tables: the Kiva A
# outer-radius rows and the Kiva D inner-radius rows of both tables
EXPECTED_UNIT_FLAGS = frozenset((s, k) for s in SOURCES for k in ("kiva_a_outer", "kiva_d_inner"))


def _half_up(x, places):
    return math.floor(x * 10 ** places + 0.5) / 10 ** places


def _record(name, checks):
    RESULTS[name] = checks
    return checks


def _assert_all(checks):
    failed = [f"{label}: {detail}" for label, ok, detail in checks if not ok]
    assert not failed, "; ".join(failed)


def check_table1():
    site, pub = sun_temple(), published_reference()["consistency_p"]
    out = []
    start = time.perf_counter()
    for f in site.features:
        if len(f.measurements) != 2:
            continue
        a, g = (resolve_measurement(site, f.id, s) for s in SOURCES)
        p = _half_up(stats.test_equal(a, g).p, 2)
        out.append((f.id, abs(p - pub[f.id]) <= 0.01 + 1e-9, f"p {p:.2f} vs {pub[f.id]:.2f}"))
    elapsed = time.perf_counter() - start
    out.append(("row count", len(out) == 17, f"{len(out)} rows"))
    out.append(("runtime", elapsed < 0.5, f"{elapsed * 1e3:.1f} ms"))
    return _record("1 aerial vs ground consistency p-values", out)


def _battery_checks(ids):
    site, pub = sun_temple(), published_reference()["battery"]
    catalog = {h.id: h for h in builtin_catalog()}
    out = []
    for hid in ids:
        for source, (value, sigma, p) in sorted(pub[hid].items()):
            r = evaluate_hypothesis(site, catalog[hid], source).result
            if r.dof == 1:
                v = _half_up(r.observed.value, 3)
                s = _half_up(r.observed.sigma, 3)
                v_ok = abs(v - value) <= 0.002 + 1e-9 and abs(s - sigma) <= 0.002 + 1e-9
            else:
                v, s = r.observed.value, r.observed.sigma
                v_ok = abs(v - value) <= 1
            pr = _half_up(r.p, 2)
            ok = v_ok and abs(pr - p) <= 0.01 + 1e-9
            out.append((f"{hid}/{source}", ok, f"{v:g}±{s:g} p {pr:.2f} vs {value}±{sigma} p {p:.2f}"))
    return out


def check_table2():
    out = _battery_checks(WALL_RATIOS)
    out.append(("ratio count", len(out) == 8, f"{len(out)} ratios"))
    return _record("2 kiva wall ratios", out)


def check_battery():
    pub = published_reference()["battery"]
    ids = sorted(h for h in pub if h not in WALL_RATIOS)
    out = _battery_checks(ids)
    named = {("golden_rectangle", "aerial"), ("width_over_kiva_a_outer", "aerial"),
             ("width_over_b_outer_to_sw", "aerial"), ("width_over_bc_gap", "aerial"),
             ("width_over_shrine_to_kiva_a", "aerial")}
    covered = {tuple(label.split("/")) for label, _, _ in out}
    out.append(("named examples covered", named <= covered, f"{len(covered)} checks"))
    return _record("3 construct battery ratios and p-values", out)


def check_unit():
    site = sun_temple()
    a, g = estimate_unit(site, "aerial"), estimate_unit(site, "ground")
    out = [
        ("aerial X", abs(a.X.value - 1952) <= 10, f"{a.X.value:.2f}"),
        ("aerial scatter", abs(a.X.sigma - 26) <= 5, f"{a.X.sigma:.2f}"),
        ("aerial L", abs(a.L.value - 30.50) <= 0.15, f"{a.L.value:.3f}"),
        ("ground X", abs(g.X.value - 1945) <= 10, f"{g.X.value:.2f}"),
        ("ground L", abs(g.L.value - 30.39) <= 0.15, f"{g.L.value:.3f}"),
    ]
    rows = compare_unit_terms(a) + compare_unit_terms(g)
    out.append(("per-row comparison", len(rows) == 34, f"{len(rows)} rows compared"))
    flagged = {(r.source, r.key): r for r in rows if r.flagged}
    for key in sorted(EXPECTED_UNIT_FLAGS):
        dev = next(r.relative_deviation for r in rows if (r.source, r.key) == key)
        out.append((f"{key[0]} {key[1]} flagged", key in flagged, f"deviation {100 * dev:+.2f}%"))
    return _record("4 unit estimate and printed unit-table rows", out)


def check_chi2_kernel():
    grid = np.linspace(0, 30, 100)
    worst = 0.0
    with mpmath.workdps(30):
        for x in grid:
            # chi-square(1) tail with t = u^2 to remove the singular density at 0
            tail = 1 - mpmath.quad(lambda u: mpmath.sqrt(2 / mpmath.pi) * mpmath.exp(-u * u / 2),
                                   [0, mpmath.sqrt(x)])
            worst = max(worst, abs(stats.chi2_sf_1dof(float(x)) - float(tail)))
    return _record("5 chi-square kernel vs quadrature", [("max abs error", worst <= 1e-8, f"{worst:.2e}")])


def _ring(rng, n, r, c, noise, arc=2 * math.pi):
    t = rng.uniform(0, arc, n)
    pts = np.column_stack([c[0] + r * np.cos(t), c[1] + r * np.sin(t)])
    return pts + rng.normal(0, noise, pts.shape) if noise else pts


def check_circle_fit():
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(200):
        r, c = rng.uniform(1, 2000), rng.uniform(-5e3, 5e3, 2)
        est = fit_circle(_ring(rng, int(rng.integers(3, 100)), r, c, 0, rng.uniform(0.5, 2 * math.pi)))
        worst = max(worst, abs(est.radius - r) / r, *np.abs(np.array([est.center.x, est.center.y]) - c) / r)
    out = [("noiseless recovery", worst <= 1e-9, f"max relative error {worst:.1e}")]
    covered = 0
    for seed in range(1000):
        g = np.random.default_rng([6, seed])
        est = fit_circle(_ring(g, 200, 385.0, (0.0, 0.0), 3.85))
        covered += abs(est.radius - 385.0) <= 3 * est.radius_se
    out.append(("3-SE coverage", covered >= 990, f"{covered}/1000"))
    worst = 0.0
    for seed in range(100):
        g = np.random.default_rng([7, seed])
        pts = _ring(g, 60, 300, (40, -20), 3)
        theta, shift = g.uniform(0, 2 * math.pi), g.uniform(-1e3, 1e3, 2)
        rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
        a, b = fit_circle(pts), fit_circle(pts @ rot.T + shift)
        moved = rot @ [a.center.x, a.center.y] + shift
        err = max(abs(a.radius - b.radius), *np.abs(moved - [b.center.x, b.center.y])) / a.radius
        worst = max(worst, err)
    out.append(("rigid-motion equivariance", worst <= 1e-9, f"max relative error {worst:.1e}"))
    return _record("6 circle fitting", out)


def check_constructions():
    rng = np.random.default_rng(8)
    g_err = e_err = s_err = 0.0
    for _ in range(1000):
        side = float(rng.uniform(1e-3, 1e4))
        g = construct_golden_rectangle(side, tuple(rng.uniform(-1e3, 1e3, 2)), float(rng.uniform(0, 2 * math.pi)))
        g_err = max(g_err, abs(g.length / g.width - PHI))
        a, b = rng.uniform(-1e3, 1e3, 2), rng.uniform(-1e3, 1e3, 2)
        base = float(np.hypot(*(b - a)))
        apex = construct_equilateral(a, b)
        da, db = math.hypot(apex.x - a[0], apex.y - a[1]), math.hypot(apex.x - b[0], apex.y - b[1])
        e_err = max(e_err, abs(da - db) / base, abs(da - base) / base)
        inner, outer = inscribed_circumscribed(side)
        s_err = max(s_err, abs((outer / inner) ** 2 - 2))
    return _record("7 exact constructions", [
        ("golden rectangle length/width = phi", g_err <= 1e-12, f"{g_err:.1e}"),
        ("equilateral apex equidistant", e_err <= 1e-12, f"{e_err:.1e}"),
        ("circumscribed/inscribed squared = 2", s_err <= 1e-12, f"{s_err:.1e}"),
    ])


def check_null_model():
    out = []
    serial = estimate_fpr(n_trials=200, seed=12, workers=1)
    pooled = estimate_fpr(n_trials=200, seed=12, workers=4)
    out.append(("parallel determinism", serial.to_csv() == pooled.to_csv(), "1 vs 4 workers"))
    cat = builtin_catalog()
    monotone = True
    for t in range(50):
        site = sample_null_site(NullPrior(), [13, t])
        counts = [count_hits(site, cat, HitRule.within_sigma(z)) for z in (0.5, 1, 1.5, 2, 3, 4)]
        monotone &= counts == sorted(counts)
    out.append(("hits monotone in tolerance", monotone, "50 sites, z in 0.5..4"))
    scaled = [(hi - lo) * math.sqrt(n) for n in (250, 1000, 4000, 16000) for lo, hi in [clopper_pearson(n // 10, n)]]
    spread = max(scaled) / min(scaled) - 1
    out.append(("CI width ~ 1/sqrt(n)", spread < 0.05, f"sqrt(n)*width spread {100 * spread:.1f}%"))
    start = time.perf_counter()
    big = estimate_fpr(n_trials=10_000, seed=0)
    elapsed = time.perf_counter() - start
    curve = big.tail_curve()
    out.append(("10^4 trials under 60 s", elapsed < 60, f"{elapsed:.1f} s"))
    out.append(("tail non-increasing", bool(np.all(np.diff(curve) <= 0)),
                f"P(hits >= {big.observed_hits}) = {big.tail_probability:g}, CI {big.ci[0]:.2g}..{big.ci[1]:.2g}"))
    return _record("8 null model", out)


def check_quantogram():
    out = []
    rng = np.random.default_rng(9)
    lengths = 30.5 * rng.integers(2, 70, 20)
    qg = quantogram_scan(lengths, 20, 40, 2001)
    step = qg.q[1] - qg.q[0]
    out.append(("exact multiples recover q", abs(qg.q_best - 30.5) <= step, f"q_best {qg.q_best:.4f}"))
    noise = rng.uniform(100, 2000, 25)
    quantal = 30.5 * rng.integers(4, 65, 25) + rng.normal(0, 0.5, 25)
    p95_noise = np.quantile(quantogram_null(noise, 20, 40, 1000, n_sims=200, seed=3), 0.95)
    p95_quantal = np.quantile(quantogram_null(quantal, 20, 40, 1000, n_sims=200, seed=3), 0.95)
    s_noise = quantogram_scan(noise, 20, 40, 1000).score_best
    s_quantal = quantogram_scan(quantal, 20, 40, 1000).score_best
    ok = s_noise < p95_noise and s_quantal > p95_quantal
    out.append(("null separation", ok, f"random {s_noise:.2f} < {p95_noise:.2f}; quantal {s_quantal:.2f} > "
                                       f"{p95_quantal:.2f}"))
    terms = [t.value.value for t in estimate_unit(sun_temple(), "aerial").terms]
    best = quantogram_scan(terms, 20, 40, 2000).q_best
    out.append(("aerial unit terms peak in [29.5, 31.5]", 29.5 <= best <= 31.5, f"q_best {best:.2f} cm"))
    return _record("9 quantogram", out)


def check_end_to_end():
    cmd = [sys.executable, "-m", "geomprobe.cli"]
    runs = [subprocess.run(cmd + [c], capture_output=True, text=True) for c in ("battery", "battery", "unit", "unit")]
    out = [("exit 0", all(r.returncode == 0 for r in runs), str([r.returncode for r in runs])),
           ("deterministic", runs[0].stdout == runs[1].stdout and runs[2].stdout == runs[3].stdout, "two runs each")]
    text = runs[0].stdout
    section = text.split("## Deviations", 1)[1] if "## Deviations" in text else ""
    rows = [line for line in section.splitlines() if line.startswith("| ") and line != "| deviation |"]
    listed = set()
    for row in rows:
        words = row.strip("| ").split()
        if words[:2] == ["unit", "table"]:
            listed.add((words[2], words[3].rstrip(":")))
    others = [r for r in rows if not r.startswith("| unit table")]
    out.append(("no consistency, ratio or battery mismatches", not others, f"{len(others)} other rows"))
    out.append(("every listed row explained", all("printed value matches computed" in r for r in rows),
                f"{len(rows)} rows"))
    out.append(("artifact deviation list stable", listed == set(KNOWN_UNIT_TABLE_DEVIATIONS), str(sorted(listed))))
    out.append(("listed == expected Kiva A outer / Kiva D inner rows", listed == EXPECTED_UNIT_FLAGS,
                f"extra {sorted(listed - EXPECTED_UNIT_FLAGS)}, missing {sorted(EXPECTED_UNIT_FLAGS - listed)}"))
    return _record("10 end-to-end battery and unit", out)


def test_criterion_1_table1():
    _assert_all(check_table1())


def test_criterion_2_table2():
    _assert_all(check_table2())


def test_criterion_3_battery():
    _assert_all(check_battery())


def test_criterion_4_unit():
    _assert_all(check_unit())


def test_criterion_5_chi2_kernel():
    _assert_all(check_chi2_kernel())


def test_criterion_6_circle_fit():
    _assert_all(check_circle_fit())


def test_criterion_7_constructions():
    _assert_all(check_constructions())


def test_criterion_8_null_model():
    _assert_all(check_null_model())


def test_criterion_9_quantogram():
    _assert_all(check_quantogram())


def test_criterion_10_end_to_end():
    _assert_all(check_end_to_end())


def summary_lines():
    lines = []
    for name, checks in sorted(RESULTS.items(), key=lambda kv: int(kv[0].split()[0])):
        ok = all(c[1] for c in checks)
        failed = [f"{label} ({detail})" for label, good, detail in checks if not good]
        tail = f"  failing: {'; '.join(failed)}" if failed else ""
        lines.append(f"{'PASS' if ok else 'FAIL'}  criterion {name}{tail}")
    return lines


if __name__ == "__main__":
    for fn in (check_table1, check_table2, check_battery, check_unit, check_chi2_kernel, check_circle_fit,
               check_constructions, check_null_model, check_quantogram, check_end_to_end):
        fn()
    print("\n".join(summary_lines()))
    sys.exit(0 if all(all(c[1] for c in v) for v in RESULTS.values()) else 1)
