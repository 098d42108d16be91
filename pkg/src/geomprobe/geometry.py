"""Uncertainty-carrying 2D primitives and straightedge-and-cord constructions."""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .survey import Measurement, Unit, UnitMismatchError

SQRT5 = math.sqrt(5.0)
PHI = (1.0 + SQRT5) / 2.0


@dataclass(frozen=True)
class Point2D:
    x: float
    y: float
    sigma: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("point coordinates must be finite")
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise ValueError("point sigma must be finite and >= 0")

    @property
    def xy(self):
        return np.array([self.x, self.y])


def _as_point(p):
    if isinstance(p, Point2D):
        return p
    x, y = p
    return Point2D(float(x), float(y))


@functools.total_ordering
@dataclass(frozen=True)
class TargetConstant:
    """Exact constant ``(p/q) * sqrt(d) * phi**phi_power``.

    ``phi_power`` is -1, 0 or 1, which is enough to express the golden ratio
    and its reciprocal next to the rationals and surds.
    """

    p: int
    q: int = 1
    d: int = 1
    phi_power: int = 0
    unit: Unit = Unit.DIMENSIONLESS

    def __post_init__(self):
        if self.q <= 0 or self.d < 1:
            raise ValueError("TargetConstant needs q > 0 and d >= 1")
        if self.phi_power not in (-1, 0, 1):
            raise ValueError("phi_power must be -1, 0 or 1")
        # pull square factors out of d, then reduce p/q
        p, q, d = self.p, self.q, self.d
        k = 2
        while k * k <= d:
            while d % (k * k) == 0:
                d //= k * k
                p *= k
            k += 1
        frac = Fraction(p, q)
        object.__setattr__(self, "p", frac.numerator)
        object.__setattr__(self, "q", frac.denominator)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "unit", Unit(self.unit))

    @classmethod
    def phi(cls):
        return cls(1, phi_power=1)

    @classmethod
    def degrees(cls, value):
        return cls(int(value), unit=Unit.DEG)

    @classmethod
    def parse(cls, text):
        """Parse "16/3", "64/9", "sqrt2", "√2", "phi", "1/phi", "6sqrt2", "32/9*sqrt2"."""
        s = text.strip().lower().replace("√", "sqrt").replace("φ", "phi").replace(" ", "").replace("*", "")
        if s == "phi":
            return cls.phi()
        if s == "1/phi":
            return cls(1, phi_power=-1)
        num, d = s, 1
        if "sqrt" in s:
            num, _, rad = s.partition("sqrt")
            d = int(rad)
            num = num or "1"
        if "/" in num:
            a, b = num.split("/")
            return cls(int(a), int(b), d)
        return cls(int(num), 1, d)

    @property
    def value(self) -> float:
        v = self.p / self.q * math.sqrt(self.d)
        if self.phi_power:
            v *= PHI ** self.phi_power
        return v

    def __float__(self):
        return self.value

    def __lt__(self, other):
        if not isinstance(other, TargetConstant):
            return NotImplemented
        return self.value < other.value

    def decimal(self, digits=6) -> str:
        return f"{self.value:.{digits}f}"

    def to_json(self):
        if (self.p, self.q, self.d) == (1, 1, 1) and self.phi_power == 1:
            return "phi"
        out = {"p": self.p, "q": self.q, "d": self.d}
        if self.phi_power:
            out["phi_power"] = self.phi_power
        return out

    def __str__(self):
        if self.unit is Unit.DEG:
            return f"{self.value:g}°"
        coef = "" if (self.p, self.q) == (1, 1) else (str(self.p) if self.q == 1 else f"{self.p}/{self.q}")
        root = "" if self.d == 1 else f"√{self.d}"
        if self.phi_power == 1:
            return f"{coef}{root}φ" if (coef or root) else "φ"
        if self.phi_power == -1:
            return f"{coef or 1}{root}/φ"
        if not root:
            return coef or "1"
        return f"{coef}{root}" if self.q == 1 else f"{self.p}√{self.d}/{self.q}"


def ratio(a: Measurement, b: Measurement) -> Measurement:
    """``a / b`` with first-order relative-error propagation."""
    if a.unit != b.unit:
        raise UnitMismatchError(f"ratio of {a.unit.value} to {b.unit.value}")
    if b.value == 0:
        raise ZeroDivisionError("ratio with zero denominator")
    v = a.value / b.value
    rel_a = a.sigma / a.value if a.value else 0.0
    rel_b = b.sigma / b.value
    sigma = abs(v) * math.hypot(rel_a, rel_b)
    if a.value == 0:
        sigma = a.sigma / abs(b.value)
    return Measurement(v, sigma, Unit.DIMENSIONLESS)


def distance(p, q) -> Measurement:
    p, q = _as_point(p), _as_point(q)
    d = math.hypot(q.x - p.x, q.y - p.y)
    return Measurement(d, math.hypot(p.sigma, q.sigma), Unit.CM)


def _perp(v):
    return np.array([-v[1], v[0]])


def angle_at(vertex, p, q) -> Measurement:
    """Interior angle p-vertex-q in degrees, in [0, 180].

    The sigma is the delta-method propagation of the three isotropic point
    sigmas through the angle.
    """
    vertex, p, q = _as_point(vertex), _as_point(p), _as_point(q)
    u = p.xy - vertex.xy
    w = q.xy - vertex.xy
    nu, nw = u @ u, w @ w
    if nu == 0 or nw == 0:
        raise ValueError("degenerate angle: an arm has zero length")
    cross = u[0] * w[1] - u[1] * w[0]
    theta = math.atan2(abs(cross), float(u @ w))
    s = 1.0 if cross >= 0 else -1.0
    g_p = -s * _perp(u) / nu
    g_q = s * _perp(w) / nw
    g_v = -(g_p + g_q)
    var = (p.sigma ** 2) * (g_p @ g_p) + (q.sigma ** 2) * (g_q @ g_q) + (vertex.sigma ** 2) * (g_v @ g_v)
    return Measurement(math.degrees(theta), math.degrees(math.sqrt(var)), Unit.DEG)


def propagate_mc(func, inputs, n=100_000, seed=0):
    """Monte Carlo propagation for validating the first-order rules.

    ``inputs`` is a sequence of Measurements or (value, sigma) pairs, each drawn as an
    independent Gaussian; ``func`` must accept numpy arrays and broadcast.
    Returns (mean, std) of the transformed sample.
    """
    rng = np.random.default_rng(seed)
    inputs = [(m.value, m.sigma) if isinstance(m, Measurement) else m for m in inputs]
    draws = [rng.normal(v, s, n) if s > 0 else np.full(n, float(v)) for v, s in inputs]
    out = np.asarray(func(*draws))
    return float(out.mean()), float(out.std(ddof=1))


def construct_equilateral(a, b) -> Point2D:
    """Apex of the equilateral triangle on base a->b, on the left of a->b.

    Found as the intersection of the two circles of radius |ab| centred on
    a and b. The apex is linear in a and b with an orthogonal Jacobian, so
    the isotropic sigmas combine in quadrature.
    """
    a, b = _as_point(a), _as_point(b)
    base = b.xy - a.xy
    r = math.hypot(*base)
    if r == 0:
        raise ValueError("equilateral construction needs a non-zero base")
    mid = (a.xy + b.xy) / 2.0
    h = math.sqrt(r * r - (r / 2.0) ** 2)
    apex = mid + h * _perp(base) / r
    return Point2D(float(apex[0]), float(apex[1]), math.hypot(a.sigma, b.sigma))


@dataclass(frozen=True)
class GoldenRectangle:
    corners: np.ndarray  # (4, 2): base-left, base-right, top-right, top-left
    width: float
    length: float
    square: np.ndarray  # (4, 2) construction square
    arc_center: np.ndarray
    arc_radius: float


def construct_golden_rectangle(side, origin=(0.0, 0.0), orientation=0.0) -> GoldenRectangle:
    """Golden rectangle grown from a square of the given side.

    The cord is pinned at the midpoint of the square's base and swung from
    the far top corner down to the base line; the base is extended to where
    it lands. ``orientation`` is the base direction in radians (CCW).
    """
    if not side > 0:
        raise ValueError("golden rectangle needs a positive side")
    o = np.asarray(origin, dtype=float)
    e = np.array([math.cos(orientation), math.sin(orientation)])
    n = _perp(e)
    square = np.array([o, o + side * e, o + side * e + side * n, o + side * n])
    mid = o + 0.5 * side * e
    # cord from the base midpoint to the far top corner; taken from the side
    # directly so offset or rotated frames do not cost precision
    radius = math.hypot(0.5 * side, side)
    length = 0.5 * side + radius
    corners = np.array([o, o + length * e, o + length * e + side * n, o + side * n])
    return GoldenRectangle(corners, float(side), float(length), square, mid, radius)


def inscribed_circumscribed(side):
    """(inner, outer) radii of the circles inscribed in and around a square."""
    if not side > 0:
        raise ValueError("square side must be positive")
    half = side / 2.0
    return half, math.hypot(half, half)
