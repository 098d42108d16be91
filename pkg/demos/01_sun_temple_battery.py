"""Walk through the Sun Temple survey: consistency, constructs, common unit.

Run with ``python3 demos/01_sun_temple_battery.py``.
"""
from geomprobe import builtin_catalog, estimate_unit, run_battery, sun_temple
from geomprobe.stats import test_equal
from geomprobe.survey import SOURCES, resolve_measurement

site = sun_temple()
print(f"{site.name}: {len(site.features)} surveyed features")

# %% Do the aerial and ground surveys agree?
# Each feature measured both ways gets a two-sided chi-square test with one
# degree of freedom. Small p would mean one of the surveys is off.
for f in site.features:
    if len(f.measurements) < 2:
        continue
    a, g = (resolve_measurement(site, f.id, s) for s in SOURCES)
    print(f"  {f.id:24s} {a.value:6.0f} vs {g.value:6.0f}   p = {test_equal(a, g).p:.2f}")

# %% The construct battery
# Every hypothesis compares a measured ratio with an exact target. With k
# tests run, a single rejection needs p below 0.05 / k.
battery = run_battery(site, builtin_catalog())
print(f"\n{battery.k} tests, alpha' = {battery.plan.alpha_prime:.5f}, rejections: {len(battery.rejections)}")
for o in battery.tested[:6]:
    r = o.result
    print(f"  {o.hypothesis_id:34s} {o.source:6s} {r.observed.value:7.3f} vs {str(r.target or "-"):5s} p = {r.p:.2f}")
print("  ...")
for o in battery.skipped:
    print(f"  skipped {o.hypothesis_id}: {o.skipped}")

# %% One module width, one base unit
# Each construct predicts the width of the enclosing rectangle from a
# different feature. Their spread is the uncertainty on X, and L = X / 64.
for source in SOURCES:
    est = estimate_unit(site, source)
    print(f"\n{source}: X = {est.X.value:.0f} ± {est.X.sigma:.0f} cm from {len(est.terms)} terms, "
          f"L = {est.L.value:.2f} ± {est.L.sigma:.2f} cm")
