"""Does a free scan for a common quantum find the 30.5 cm unit?

The unit estimate divides X by a fixed 64. A cosine quantogram asks a
looser question: which quantum makes a set of lengths look most like
integer multiples? Here it is run on synthetic lengths and on the site.
"""
import numpy as np

from geomprobe import estimate_unit, quantogram_scan, sun_temple
from geomprobe.constructs import quantogram_null

rng = np.random.default_rng(5)

# %% Lengths built from a 30.5 cm quantum, with a little noise
quantal = 30.5 * rng.integers(4, 65, 25) + rng.normal(0, 0.5, 25)
qg = quantogram_scan(quantal, 20, 40, 2000)
peaks = quantogram_null(quantal, 20, 40, 2000, n_sims=200, seed=0)
print(f"synthetic: peak at {qg.q_best:.2f} cm, score {qg.score_best:.2f}, "
      f"null 95th percentile {np.quantile(peaks, 0.95):.2f}")

# %% The eighteen aerial unit terms
# Every term is an estimate of the same width X (about 1950 cm), so their
# quantogram is dominated by that one length and its divisors.
terms = [t.value.value for t in estimate_unit(sun_temple(), "aerial").terms]
qg = quantogram_scan(terms, 20, 40, 2000)
print(f"unit terms: peak at {qg.q_best:.2f} cm (score {qg.score_best:.2f})")
