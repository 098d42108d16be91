"""How often does a random layout look as "designed" as the real site?

Random sites with the same feature list are scored with the same
catalog. A test is a hit when the measured ratio lands within two sigma
of its target. The tail probability is the fraction of random sites with
at least as many hits as the surveyed one.
"""
from geomprobe.nullmodel import NullPrior, estimate_fpr

report = estimate_fpr(NullPrior(), n_trials=2000, seed=1)
print(f"hit rule: {report.hit_rule}")
print(f"real site: {report.observed_hits} hits")
print(f"random sites: median {int(sorted(report.hits)[len(report.hits) // 2])}, max {report.hits.max()}")
print(f"P(hits >= {report.observed_hits}) = {report.tail_probability:g} "
      f"(95% CI {report.ci[0]:.2g} .. {report.ci[1]:.2g})")

# %% The whole tail
for h, p in enumerate(report.tail_curve()):
    if p < 1e-3:
        break
    print(f"  P(hits >= {h:2d}) = {p:.3f}")
