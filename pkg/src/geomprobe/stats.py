"""Chi-square consistency tests, Bonferroni thresholds and scatter averages."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .geometry import TargetConstant
from .survey import Measurement, UnitMismatchError


class Decision(str, enum.Enum):
    REJECTED = "rejected"
    NOT_REJECTED = "notRejected"


class Weighting(str, enum.Enum):
    UNWEIGHTED = "unweighted"
    INVERSE_VARIANCE = "inverseVariance"


def chi2_sf_1dof(x) -> float:
    """Survival function of chi-square with one degree of freedom.

    Equal to the two-sided normal tail at sqrt(x), i.e. erfc(sqrt(x/2)).
    """
    x = float(x)
    if x < 0 or math.isnan(x):
        raise ValueError(f"chi-square statistic must be >= 0, got {x}")
    return math.erfc(math.sqrt(x / 2.0))


def chi2_sf(x, dof) -> float:
    if dof == 1:
        return chi2_sf_1dof(x)
    if x < 0:
        raise ValueError(f"chi-square statistic must be >= 0, got {x}")
    if dof == 2:
        return math.exp(-x / 2.0)
    return float(special.gammaincc(dof / 2.0, x / 2.0))


@dataclass(frozen=True)
class TestResult:
    chi2: float
    dof: int
    p: float
    observed: Measurement
    target: TargetConstant | Measurement | None = None
    degenerate: bool = False

    __test__ = False  # not a pytest class

    def decision(self, alpha_prime) -> Decision:
        return Decision.REJECTED if self.p < alpha_prime else Decision.NOT_REJECTED

    @property
    def pull(self):
        """Signed deviation in sigmas; only meaningful for one-dof tests."""
        return math.copysign(math.sqrt(self.chi2), self.observed.value - float(_target_value(self.target)))


def _target_value(target):
    if target is None:
        return 0.0
    return target.value if isinstance(target, (TargetConstant, Measurement)) else float(target)


def _degenerate(observed, target, diff):
    p = 1.0 if diff == 0 else 0.0
    return TestResult(0.0 if diff == 0 else math.inf, 1, p, observed, target, degenerate=True)


def test_equal(m1: Measurement, m2: Measurement) -> TestResult:
    """Are two measurements of the same quantity consistent?"""
    if m1.unit != m2.unit:
        raise UnitMismatchError(f"cannot compare {m1.unit.value} with {m2.unit.value}")
    var = m1.sigma ** 2 + m2.sigma ** 2
    diff = m1.value - m2.value
    if var == 0:
        return _degenerate(m1, m2, diff)
    chi2 = diff * diff / var
    return TestResult(chi2, 1, chi2_sf_1dof(chi2), m1, m2)


def test_against_constant(m: Measurement, c: TargetConstant) -> TestResult:
    if m.unit != c.unit:
        raise UnitMismatchError(f"cannot test {m.unit.value} against a {c.unit.value} target")
    diff = m.value - c.value
    if m.sigma == 0:
        return _degenerate(m, c, diff)
    chi2 = (diff / m.sigma) ** 2
    return TestResult(chi2, 1, chi2_sf_1dof(chi2), m, c)


def test_common_value(values: Sequence[Measurement]) -> TestResult:
    """Chi-square test that n measurements share one true value (n - 1 dof).

    The observed value is the inverse-variance mean with its standard error.
    """
    if len(values) < 2:
        raise ValueError("need at least two measurements")
    units = {m.unit for m in values}
    if len(units) != 1:
        raise UnitMismatchError("measurements have mixed units")
    v = np.array([m.value for m in values])
    s = np.array([m.sigma for m in values])
    unit = values[0].unit
    if np.any(s == 0):
        spread = float(v.max() - v.min())
        return TestResult(0.0 if spread == 0 else math.inf, len(values) - 1, 1.0 if spread == 0 else 0.0,
                          Measurement(float(v.mean()), 0.0, unit), None, degenerate=True)
    w = 1.0 / s ** 2
    mean = float((w * v).sum() / w.sum())
    chi2 = float((w * (v - mean) ** 2).sum())
    dof = len(values) - 1
    return TestResult(chi2, dof, chi2_sf(chi2, dof), Measurement(mean, float(1 / np.sqrt(w.sum())), unit))


@dataclass(frozen=True)
class BonferroniPlan:
    alpha: float
    k: int

    @property
    def alpha_prime(self) -> float:
        return self.alpha / self.k


def bonferroni(alpha, k) -> BonferroniPlan:
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if int(k) != k or k < 1:
        raise ValueError(f"number of tests must be a positive integer, got {k}")
    return BonferroniPlan(float(alpha), int(k))


def scatter_average(values: Sequence[Measurement], weighting=Weighting.UNWEIGHTED, ddof=0) -> Measurement:
    """Mean of several estimates of one quantity, with their scatter as sigma.

    The sigma is the (weighted) standard deviation of the values, not the
    standard error of the mean. ``ddof=0`` gives the population form.
    """
    weighting = Weighting(weighting)
    if len(values) < 2:
        raise ValueError("scatter needs at least two values")
    if len({m.unit for m in values}) != 1:
        raise UnitMismatchError("values have mixed units")
    v = np.array([m.value for m in values])
    if weighting is Weighting.UNWEIGHTED:
        w = np.ones_like(v)
    else:
        s = np.array([m.sigma for m in values])
        if np.any(s == 0):
            raise ValueError("inverse-variance weighting needs non-zero sigmas")
        w = 1.0 / s ** 2
        if np.all(s == s[0]):
            w = np.ones_like(v)
    mean = float((w * v).sum() / w.sum())
    n = len(v)
    var = float((w * (v - mean) ** 2).sum() / w.sum()) * n / (n - ddof)
    return Measurement(mean, math.sqrt(max(var, 0.0)), values[0].unit)


# keep pytest from collecting these when imported into test modules
test_equal.__test__ = False
test_against_constant.__test__ = False
test_common_value.__test__ = False
