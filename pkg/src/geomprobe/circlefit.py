"""Circle fits to digitized rim points and aggregation of repeated passes."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Point2D
from .survey import Measurement, Unit


class DegenerateGeometryError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message, iterations):
        self.iterations = iterations
        super().__init__(f"{message} (after {iterations} iterations)")


@dataclass(frozen=True)
class DigitizedSet:
    feature_id: str
    pass_id: str
    points: np.ndarray
    image_id: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("points must have shape (n, 2)")
        if len(pts) < 3:
            raise DegenerateGeometryError(f"{self.feature_id}/{self.pass_id}: need at least 3 points")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class CircleEstimate:
    center: Point2D
    radius: float
    rms_residual: float
    n_points: int
    feature_id: str = ""
    pass_id: str = ""
    radius_se: float = 0.0
    iterations: int = 0
    objective_trace: tuple = field(default=(), repr=False)


def _check_not_collinear(pts):
    centered = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[0] == 0 or sv[1] <= 1e-12 * sv[0]:
        raise DegenerateGeometryError("points are collinear or coincident")


def algebraic_fit(points):
    """Kasa fit: linear least squares on x^2 + y^2 + D x + E y + F = 0."""
    pts = np.asarray(points, dtype=float)
    _check_not_collinear(pts)
    # centre and scale the data to keep the normal equations well conditioned
    shift = pts.mean(axis=0)
    scale = np.sqrt(((pts - shift) ** 2).sum(axis=1).mean())
    q = (pts - shift) / scale
    A = np.column_stack([q, np.ones(len(q))])
    b = -(q ** 2).sum(axis=1)
    (D, E, F), *_ = np.linalg.lstsq(A, b, rcond=None)
    c = np.array([-D / 2, -E / 2])
    r2 = c @ c - F
    if not r2 > 0:
        raise DegenerateGeometryError("algebraic fit produced no real circle")
    return c * scale + shift, math.sqrt(r2) * scale


def _residuals(pts, c, r):
    d = np.hypot(pts[:, 0] - c[0], pts[:, 1] - c[1])
    return d - r, d


def fit_circle(points, *, trim=0, max_iter=100, rtol=1e-10) -> CircleEstimate:
    """Geometric least-squares circle fit.

    Starts from the algebraic fit and refines by damped Gauss-Newton on the
    radial residuals ``|p_i - c| - r``. A step is accepted only when it lowers
    the sum of squared residuals; otherwise the damping grows. Converged once
    the accepted step is below ``rtol * radius``.

    ``points`` is a DigitizedSet or an (n, 2) array. ``trim`` drops that many
    largest-residual points after a first fit and refits.
    """
    feature_id = pass_id = ""
    if isinstance(points, DigitizedSet):
        feature_id, pass_id = points.feature_id, points.pass_id
        pts = points.points
    else:
        pts = np.asarray(points, dtype=float)
    if len(pts) < 3:
        raise DegenerateGeometryError("need at least 3 points")
    c, r = algebraic_fit(pts)
    c, r, it, trace = _refine(pts, c, r, max_iter, rtol)
    if trim:
        if len(pts) - trim < 3:
            raise DegenerateGeometryError("trim leaves fewer than 3 points")
        res, _ = _residuals(pts, c, r)
        keep = np.sort(np.argsort(np.abs(res), kind="stable")[: len(pts) - trim])
        pts = pts[keep]
        c, r, it2, trace2 = _refine(pts, c, r, max_iter, rtol)
        it, trace = it + it2, trace + trace2
    res, d = _residuals(pts, c, r)
    n = len(pts)
    rms = float(np.sqrt(np.mean(res ** 2)))
    radius_se = 0.0
    if n > 3:
        J = _jacobian(pts, c, d)
        s2 = float(res @ res) / (n - 3)
        cov = s2 * np.linalg.pinv(J.T @ J)
        radius_se = float(np.sqrt(max(cov[2, 2], 0.0)))
        center_se = float(np.sqrt(max((cov[0, 0] + cov[1, 1]) / 2, 0.0)))
    else:
        center_se = 0.0
    return CircleEstimate(Point2D(float(c[0]), float(c[1]), center_se), float(r), rms, n,
                          feature_id, pass_id, radius_se, it, tuple(trace))


def _jacobian(pts, c, d):
    d = np.where(d == 0, np.finfo(float).tiny, d)
    return np.column_stack([(c[0] - pts[:, 0]) / d, (c[1] - pts[:, 1]) / d, -np.ones(len(pts))])


def _refine(pts, c, r, max_iter, rtol):
    theta = np.array([c[0], c[1], r], dtype=float)
    res, d = _residuals(pts, theta[:2], theta[2])
    cost = float(res @ res)
    trace = [cost]
    lam = 1e-3
    for it in range(1, max_iter + 1):
        J = _jacobian(pts, theta[:2], d)
        JTJ = J.T @ J
        g = J.T @ res
        while True:
            A = JTJ + lam * np.diag(np.diag(JTJ))
            try:
                step = -np.linalg.solve(A, g)
            except np.linalg.LinAlgError:
                raise DegenerateGeometryError("singular normal equations in refinement") from None
            trial = theta + step
            tres, td = _residuals(pts, trial[:2], trial[2])
            tcost = float(tres @ tres)
            small = np.linalg.norm(step) < rtol * abs(theta[2])
            if tcost <= cost:
                theta, res, d, cost = trial, tres, td, tcost
                trace.append(cost)
                lam = max(lam / 10, 1e-12)
                break
            if small or lam > 1e12:
                # no descent left at this resolution: the current point is the minimum
                return theta[:2], float(theta[2]), it, trace
            lam *= 10
        if small:
            if theta[2] <= 0:
                raise DegenerateGeometryError("refinement collapsed the radius")
            return theta[:2], float(theta[2]), it, trace
    raise ConvergenceError("circle refinement did not converge", max_iter)


def calibrate_scale(pixel_length, ground_length: Measurement) -> Measurement:
    """Image scale in cm per pixel from a scale bar of known ground length."""
    if not pixel_length > 0:
        raise ValueError("pixel length must be positive")
    if not ground_length.value > 0:
        raise ValueError("ground length must be positive")
    return Measurement(ground_length.value / pixel_length, ground_length.sigma / pixel_length, Unit.CM)


def aggregate_passes(estimates, scale: Measurement):
    """Combine repeated digitization passes of one circle into cm.

    Mean radius and centre over passes; sigma is the sample standard
    deviation across passes, in quadrature with the scale uncertainty.
    Returns (radius Measurement, centre Point2D).
    """
    estimates = list(estimates)
    if len(estimates) < 2:
        raise ValueError("need at least two passes to estimate scatter")
    ids = {e.feature_id for e in estimates}
    if len(ids) > 1:
        raise ValueError(f"passes mix features: {sorted(ids)}")
    # sort so the result does not depend on pass order
    radii = np.sort([e.radius for e in estimates])
    xs = np.sort([e.center.x for e in estimates])
    ys = np.sort([e.center.y for e in estimates])
    k, sk = scale.value, scale.sigma
    r_mean = float(radii.mean())
    r_sigma = math.hypot(float(radii.std(ddof=1)) * k, r_mean * sk)
    cx, cy = float(xs.mean()), float(ys.mean())
    spread = math.sqrt((xs.var(ddof=1) + ys.var(ddof=1)) / 2)
    c_sigma = math.hypot(spread * k, math.hypot(cx, cy) * sk)
    return Measurement(r_mean * k, r_sigma, Unit.CM), Point2D(cx * k, cy * k, c_sigma)


def read_points_csv(path):
    """Read ``feature_id,pass_id,x_px,y_px`` rows into DigitizedSets."""
    groups = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["feature_id", "pass_id", "x_px", "y_px"]:
            raise ValueError(f"{path}: expected header feature_id,pass_id,x_px,y_px")
        for lineno, row in enumerate(reader, start=2):
            try:
                xy = (float(row["x_px"]), float(row["y_px"]))
            except (TypeError, ValueError):
                raise ValueError(f"{path}:{lineno}: bad coordinate") from None
            groups.setdefault((row["feature_id"], row["pass_id"]), []).append(xy)
    return [DigitizedSet(fid, pid, np.array(pts)) for (fid, pid), pts in groups.items()]


def fit_points_file(path, scale: Measurement, trim=0):
    """Fit every pass in a points CSV and aggregate per feature.

    Returns a JSON-ready dict keyed by feature id.
    """
    by_feature = {}
    for ds in read_points_csv(path):
        by_feature.setdefault(ds.feature_id, []).append(fit_circle(ds, trim=trim))
    out = {}
    for fid in sorted(by_feature):
        fits = sorted(by_feature[fid], key=lambda e: e.pass_id)
        entry = {"passes": [{"pass_id": e.pass_id, "center_px": [e.center.x, e.center.y],
                             "radius_px": e.radius, "rms_px": e.rms_residual, "n_points": e.n_points}
                            for e in fits]}
        if len(fits) >= 2:
            radius, center = aggregate_passes(fits, scale)
            entry["radius_cm"] = {"value": radius.value, "sigma": radius.sigma}
            entry["center_cm"] = {"xy": [center.x, center.y], "sigma": center.sigma}
        out[fid] = entry
    return out


def write_circles_json(result, path):
    Path(path).write_text(json.dumps(result, indent=2, sort_keys=True) + "\n", encoding="utf-8")
