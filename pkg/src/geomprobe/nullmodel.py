"""Monte Carlo false-positive rate of the construct battery on random layouts.

A synthetic site is a rectangle (south wall along +x from the SW corner at
the origin, north along +y) holding four walled circles and a shrine point on
the south wall. Positions and sizes are drawn independently of each other, so
any agreement with the catalog targets is chance. Each synthetic site carries
the same feature ids as the shipped survey, so the real catalog applies
unchanged.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats as sps

from .constructs import builtin_catalog, evaluate_hypothesis
from .stats import chi2_sf_1dof
from .survey import SOURCES, DerivedSpanRule, Feature, FeatureKind, Measurement, SurveySite, sun_temple

KIVAS = ("a", "b", "c", "d")


class InfeasiblePriorError(ValueError):
    pass


def _range(pair, name):
    lo, hi = (float(v) for v in pair)
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
        raise InfeasiblePriorError(f"{name}: empty range [{lo}, {hi}]")
    return lo, hi


@dataclass(frozen=True)
class NullPrior:
    """Ranges for random site layouts.

    Defaults bracket the Sun Temple dimensions by +-30%. Kivas live in an
    envelope: the rectangle's north-south extent, and its east-west extent
    stretched by ``x_extension * width`` at both ends (room for an annex and
    outlying kivas). Centres are drawn uniformly over the ``center_box``
    fractions of that envelope and rejected unless each kiva fits inside with
    ``margin_cm`` to spare and no two kivas come closer than ``margin_cm``.
    Measured values get Gaussian noise with relative sigma drawn from
    ``sigma_fraction`` unless ``jitter`` is off, in which case they are exact.
    """

    width_cm: tuple[float, float] = (1948 * 0.7, 1948 * 1.3)
    aspect: tuple[float, float] = (1.643 * 0.7, 1.643 * 1.3)
    inner_radius_cm: dict = field(default_factory=lambda: {
        "a": (270 * 0.7, 270 * 1.3), "b": (271 * 0.7, 271 * 1.3),
        "c": (268 * 0.7, 268 * 1.3), "d": (233 * 0.7, 233 * 1.3)})
    wall_cm: dict = field(default_factory=lambda: {
        "a": (95 * 0.7, 95 * 1.3), "b": (114 * 0.7, 114 * 1.3),
        "c": (114 * 0.7, 114 * 1.3), "d": (99 * 0.7, 99 * 1.3)})
    center_box: dict = field(default_factory=lambda: {k: ((0.0, 1.0), (0.0, 1.0)) for k in KIVAS})
    x_extension: float = 0.3
    shrine_fraction: tuple[float, float] = (0.0, 0.5)
    margin_cm: float = 50.0
    sigma_fraction: tuple[float, float] = (0.005, 0.01)
    jitter: bool = True
    max_attempts: int = 10_000

    def validate(self):
        """Range checks plus a worst-case fit test so rejection can terminate."""
        wlo, _ = _range(self.width_cm, "width_cm")
        alo, _ = _range(self.aspect, "aspect")
        _range(self.shrine_fraction, "shrine_fraction")
        slo, shi = _range(self.sigma_fraction, "sigma_fraction")
        if wlo <= 0 or alo <= 0 or slo < 0:
            raise InfeasiblePriorError("widths, aspects and sigma fractions must be positive")
        if self.margin_cm < 0 or self.max_attempts < 1 or self.x_extension < 0:
            raise InfeasiblePriorError("margin must be >= 0 and max_attempts >= 1")
        for k in KIVAS:
            ilo, ihi = _range(self.inner_radius_cm[k], f"inner_radius_cm[{k}]")
            tlo, thi = _range(self.wall_cm[k], f"wall_cm[{k}]")
            if ilo <= 0 or tlo <= 0:
                raise InfeasiblePriorError(f"kiva {k}: radii and wall thickness must be positive")
            if 2 * (ihi + thi + self.margin_cm) > wlo:
                raise InfeasiblePriorError(f"kiva {k} cannot fit inside the smallest rectangle")
            for axis in self.center_box[k]:
                lo, hi = _range(axis, f"center_box[{k}]")
                if lo < 0 or hi > 1:
                    raise InfeasiblePriorError(f"center_box[{k}] must lie within [0, 1]")
        return self

    @classmethod
    def from_dict(cls, data):
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise InfeasiblePriorError(f"unknown prior fields {sorted(extra)}")
        kwargs = {}
        for key, value in data.items():
            if key in ("inner_radius_cm", "wall_cm"):
                value = {k: tuple(v) for k, v in value.items()}
            elif key == "center_box":
                value = {k: tuple(tuple(a) for a in v) for k, v in value.items()}
            elif isinstance(value, list):
                value = tuple(value)
            kwargs[key] = value
        return cls(**kwargs).validate()

    def to_dict(self):
        return json.loads(json.dumps(asdict(self)))


def load_prior(path) -> NullPrior:
    return NullPrior.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class Layout:
    """True geometry of one synthetic site (cm)."""

    width: float
    length: float
    centers: dict
    inner: dict
    outer: dict
    shrine_x: float
    x_extension: float = 0.0

    def spans(self):
        c, R = self.centers, self.outer
        sw = np.zeros(2)
        se = np.array([self.length, 0.0])
        shrine = np.array([self.shrine_x, 0.0])

        def dist(p, q):
            return float(np.hypot(*(np.asarray(p) - np.asarray(q))))

        return {
            "kiva_a_inner": self.inner["a"], "kiva_a_outer": R["a"],
            "kiva_b_inner": self.inner["b"], "kiva_b_outer": R["b"],
            "kiva_c_inner": self.inner["c"], "kiva_c_outer": R["c"],
            "kiva_d_inner": self.inner["d"], "kiva_d_outer": R["d"],
            "outer_d_length": self.length, "outer_d_width": self.width,
            "kiva_bc_gap": dist(c["b"], c["c"]) - R["b"] - R["c"],
            "kiva_bc_centers": dist(c["b"], c["c"]),
            "kiva_b_center_to_south": float(c["b"][1]),
            "kiva_b_outer_to_sw": dist(c["b"], sw) - R["b"],
            "kiva_c_outer_to_se": dist(c["c"], se) - R["c"],
            "kiva_d_outer_to_se": dist(c["d"], se) - R["d"],
            "kiva_d_center_to_se": dist(c["d"], se),
            "sun_shrine_to_kiva_a": dist(shrine, c["a"]),
            "kiva_a_center_to_south": float(c["a"][1]),
        }

    def satisfies(self, margin):
        for k in KIVAS:
            x, y = self.centers[k]
            R = self.outer[k]
            ext = self.x_extension
            if min(x + ext, y, self.length + ext - x, self.width - y) < R + margin - 1e-9:
                return False
            if not self.inner[k] < R:
                return False
        for i, a in enumerate(KIVAS):
            for b in KIVAS[i + 1:]:
                gap = float(np.hypot(*(np.asarray(self.centers[a]) - self.centers[b])))
                if gap < self.outer[a] + self.outer[b] + margin - 1e-9:
                    return False
        return True


def _uniform(rng, pair):
    lo, hi = pair
    return lo if lo == hi else float(rng.uniform(lo, hi))


def sample_layout(prior: NullPrior, rng) -> Layout:
    """Rejection-sample a layout; every attempt redraws all quantities."""
    for _ in range(prior.max_attempts):
        width = _uniform(rng, prior.width_cm)
        length = width * _uniform(rng, prior.aspect)
        ext = prior.x_extension * width
        inner = {k: _uniform(rng, prior.inner_radius_cm[k]) for k in KIVAS}
        outer = {k: inner[k] + _uniform(rng, prior.wall_cm[k]) for k in KIVAS}
        shrine_x = length * _uniform(rng, prior.shrine_fraction)
        centers = {}
        for k in KIVAS:
            (x0, x1), (y0, y1) = prior.center_box[k]
            R = outer[k] + prior.margin_cm
            span = length + 2 * ext
            # restrict the draw to where the kiva fits inside the envelope
            xlo, xhi = max(R - ext, x0 * span - ext), min(length + ext - R, x1 * span - ext)
            ylo, yhi = max(R, y0 * width), min(width - R, y1 * width)
            if xlo > xhi or ylo > yhi:
                break
            centers[k] = (_uniform(rng, (xlo, xhi)), _uniform(rng, (ylo, yhi)))
        else:
            layout = Layout(width, length, centers, inner, outer, shrine_x, ext)
            if layout.satisfies(prior.margin_cm):
                return layout
    raise InfeasiblePriorError(f"no admissible layout after {prior.max_attempts} attempts")


def _site_from_layout(layout: Layout, prior: NullPrior, rng, name) -> SurveySite:
    spans = layout.spans()
    features = []
    for fid, true in spans.items():
        meas = {}
        for source in SOURCES:
            if source == "ground" and fid in ("sun_shrine_to_kiva_a", "kiva_a_center_to_south"):
                continue
            frac = _uniform(rng, prior.sigma_fraction)
            sigma = frac * abs(true)
            value = float(rng.normal(true, sigma)) if prior.jitter and sigma > 0 else true
            meas[source] = Measurement(value, sigma)
        kind = FeatureKind.CIRCLE if fid.endswith(("_inner", "_outer")) else FeatureKind.SPAN
        features.append(Feature(fid, kind, meas))
    derived = (DerivedSpanRule("kiva_b_outer_to_south", "kiva_b_center_to_south", "-", "kiva_b_outer"),)
    return SurveySite(name, features, (), derived)


def sample_null_site(prior: NullPrior, seed) -> SurveySite:
    """One random site; identical for identical (prior, seed)."""
    prior.validate()
    rng = np.random.default_rng(seed)
    layout = sample_layout(prior, rng)
    return _site_from_layout(layout, prior, rng, f"null-{seed}")


@dataclass(frozen=True)
class HitRule:
    """A test counts as a hit when its p-value is at least ``p_threshold``."""

    p_threshold: float
    label: str = ""

    @classmethod
    def within_sigma(cls, z=2.0):
        # |measured - target| / sigma <= z  <=>  p >= erfc(z / sqrt 2) for 1 dof
        return cls(chi2_sf_1dof(z * z), f"|measured - target|/sigma <= {z:g}")

    def describe(self):
        return self.label or f"p >= {self.p_threshold:g}"

    def is_hit(self, p):
        return p >= self.p_threshold


DEFAULT_HIT_RULE = HitRule.within_sigma(2.0)


def count_hits(site, catalog, rule: HitRule, sources=SOURCES):
    hits = 0
    for h in catalog:
        for s in sources:
            if s not in h.sources:
                continue
            o = evaluate_hypothesis(site, h, s)
            if o.result is not None and rule.is_hit(o.result.p):
                hits += 1
    return hits


def _trial_seed(seed, trial):
    return [int(seed), int(trial)]


def _run_chunk(args):
    prior, catalog, rule, seed, trials = args
    return [count_hits(sample_null_site(prior, _trial_seed(seed, t)), catalog, rule) for t in trials]


@dataclass(frozen=True)
class NullReport:
    n_trials: int
    seed: int
    hit_rule: str
    p_threshold: float
    hits: np.ndarray
    observed_hits: int
    tail_probability: float
    ci: tuple[float, float]
    confidence: float
    prior: dict

    def tail_curve(self):
        """P(hits >= h) for h = 0 .. max possible."""
        top = int(self.hits.max()) + 1 if len(self.hits) else 1
        return np.array([(self.hits >= h).mean() for h in range(top + 1)])

    def histogram(self):
        values, counts = np.unique(self.hits, return_counts=True)
        return dict(zip(values.tolist(), counts.tolist()))

    def to_csv(self) -> str:
        lines = ["trial,hits"]
        lines += [f"{i},{int(h)}" for i, h in enumerate(self.hits)]
        lines.append("")
        lines.append("# summary")
        lines.append(f"# n_trials,{self.n_trials}")
        lines.append(f"# seed,{self.seed}")
        lines.append(f"# hit_rule,{self.hit_rule}")
        lines.append(f"# p_threshold,{self.p_threshold:.10g}")
        lines.append(f"# observed_hits,{self.observed_hits}")
        lines.append(f"# tail_probability,{self.tail_probability:.10g}")
        lines.append(f"# ci_{self.confidence:g},{self.ci[0]:.10g},{self.ci[1]:.10g}")
        lines.append(f"# prior,{json.dumps(self.prior, sort_keys=True)}")
        return "\n".join(lines) + "\n"


def clopper_pearson(k, n, confidence=0.95):
    a = 1 - confidence
    lo = 0.0 if k == 0 else float(sps.beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(sps.beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


def estimate_fpr(prior: NullPrior = None, catalog=None, n_trials=10_000, seed=0, rule: HitRule = DEFAULT_HIT_RULE,
                 observed_hits=None, workers=1, confidence=0.95) -> NullReport:
    """Hit-count distribution over random sites and the tail beyond the real site.

    ``observed_hits`` defaults to the hit count of the shipped survey under
    the same rule and catalog. Trial t uses the RNG stream seeded by
    (seed, t), so the report does not depend on ``workers``.
    """
    prior = (prior or NullPrior()).validate()
    catalog = list(catalog) if catalog is not None else builtin_catalog()
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if observed_hits is None:
        observed_hits = count_hits(sun_temple(), catalog, rule)
    trials = list(range(n_trials))
    if workers and workers > 1:
        chunks = [trials[i::workers] for i in range(workers)]
        hits = np.empty(n_trials, dtype=int)
        with ProcessPoolExecutor(workers) as pool:
            for chunk, res in zip(chunks, pool.map(_run_chunk, [(prior, catalog, rule, seed, c) for c in chunks])):
                hits[chunk] = res
    else:
        hits = np.array(_run_chunk((prior, catalog, rule, seed, trials)), dtype=int)
    k = int((hits >= observed_hits).sum())
    return NullReport(n_trials, int(seed), rule.describe(), rule.p_threshold, hits, int(observed_hits),
                      k / n_trials, clopper_pearson(k, n_trials, confidence), confidence, prior.to_dict())
