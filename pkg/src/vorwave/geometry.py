"""Periodic free-surface curves.

A curve is stored as uniformly spaced parameter samples of a map
p(x) = (p1(x), p2(x)) with the periodic continuation
p(x + P) = p(x) + (x_advance, 0).  Water-wave surfaces use
x_advance = P; closed test geometries (circles) use x_advance = 0.
Derivatives are spectral, so smooth profiles are resolved to high order.
"""

from dataclasses import dataclass

import numpy as np

from .fourier import (
    periodic_integral,
    spectral_antiderivative,
    spectral_derivative,
    trig_interpolate,
)

TWO_PI = 2.0 * np.pi


class SelfIntersectionError(ValueError):
    """Raised when an operation requires a simple curve and the sample
    polyline crosses itself."""


@dataclass(frozen=True)
class PeriodicCurve:
    """One period of a periodic plane curve sampled at uniform parameters."""

    points: np.ndarray  # (n, 2)
    period: float
    x_advance: float | None = None  # drift of p1 per period; defaults to period

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("points must be an (n, 2) array")
        if pts.shape[0] < 4:
            raise ValueError("need at least 4 samples")
        if self.period <= 0:
            raise ValueError("period must be positive")
        if np.any(pts[:, 1] <= 0):
            raise ValueError("curve samples must satisfy x2 > 0")
        object.__setattr__(self, "points", pts)
        if self.x_advance is None:
            object.__setattr__(self, "x_advance", float(self.period))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def parameters(self) -> np.ndarray:
        return np.arange(self.n) * (self.period / self.n)

    def periodic_parts(self) -> np.ndarray:
        """Samples of p(x) - (x_advance * x / P, 0), which is periodic."""
        out = self.points.copy()
        out[:, 0] -= self.x_advance * self.parameters() / self.period
        return out

    def derivative(self, order: int = 1) -> np.ndarray:
        parts = self.periodic_parts()
        d = np.stack(
            [spectral_derivative(parts[:, c], self.period, order) for c in (0, 1)],
            axis=1,
        )
        if order == 1:
            d[:, 0] += self.x_advance / self.period
        return d

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        parts = self.periodic_parts()
        out = np.stack(
            [trig_interpolate(parts[:, c], self.period, x) for c in (0, 1)],
            axis=1,
        )
        out[:, 0] += self.x_advance * np.asarray(x, dtype=float) / self.period
        return out

    def translated(self, dx: float) -> "PeriodicCurve":
        pts = self.points.copy()
        pts[:, 0] += dx
        return PeriodicCurve(pts, self.period, self.x_advance)


@dataclass(frozen=True)
class GraphSurface:
    """Free surface given as heights over uniform x1 abscissae on (0, P)."""

    heights: np.ndarray
    period: float

    def __post_init__(self):
        h = np.asarray(self.heights, dtype=float)
        if h.ndim != 1 or h.shape[0] < 4:
            raise ValueError("heights must be a 1-D array with >= 4 entries")
        if np.any(h <= 0):
            raise ValueError("surface heights must stay above the bottom")
        if self.period <= 0:
            raise ValueError("period must be positive")
        object.__setattr__(self, "heights", h)

    @property
    def m(self) -> int:
        return self.heights.shape[0]

    def abscissae(self) -> np.ndarray:
        return np.arange(self.m) * (self.period / self.m)

    def mean_height(self) -> float:
        return float(self.heights.mean())

    def to_curve(self) -> PeriodicCurve:
        pts = np.column_stack([self.abscissae(), self.heights])
        return PeriodicCurve(pts, self.period)

    def slope(self) -> np.ndarray:
        return spectral_derivative(self.heights, self.period, 1)


# ---------------------------------------------------------------------------
# basic curve functionals


def arclength(curve: PeriodicCurve) -> float:
    """Length of one period, int_0^P |p'(x)| dx by spectral quadrature."""
    speed = np.hypot(*curve.derivative(1).T)
    return periodic_integral(speed, curve.period)


def curvature(curve: PeriodicCurve) -> np.ndarray:
    """Signed curvature at each sample.

    Sign convention: positive where the curve bends toward the upward
    normal (-p2', p1')/|p'|, so a wave crest has negative curvature.
    """
    if curve.n < 8:
        raise ValueError("curvature needs at least 8 samples")
    d1 = curve.derivative(1)
    d2 = curve.derivative(2)
    speed = np.hypot(d1[:, 0], d1[:, 1])
    return (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / speed**3


def bending_energy(curve: PeriodicCurve) -> float:
    """(P/l)^3 int_0^P |p''(x)|^2 dx, which equals int |sigma|^2 ds for a
    constant-speed parametrization."""
    ell = arclength(curve)
    d2 = curve.derivative(2)
    return (curve.period / ell) ** 3 * periodic_integral(
        d2[:, 0] ** 2 + d2[:, 1] ** 2, curve.period
    )


def enclosed_area(curve: PeriodicCurve) -> float:
    """Area between the curve and the bottom {x2 = 0} over one period.

    Computed by the exact trapezoid/shoelace formula on the sample
    polyline closed through the periodic continuation, so piecewise
    linear profiles are integrated exactly.
    """
    if np.any(curve.points[:, 1] <= 0):
        raise ValueError("curve must stay strictly above the bottom")
    if _polyline_has_crossing(curve):
        raise SelfIntersectionError("cannot compute enclosed area of a self-intersecting curve")
    x = np.append(curve.points[:, 0], curve.points[0, 0] + curve.x_advance)
    y = np.append(curve.points[:, 1], curve.points[0, 1])
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


# ---------------------------------------------------------------------------
# constant-speed resampling


def resample_constant_speed(
    curve: PeriodicCurve,
    tol: float = 1e-9,
    max_iter: int = 30,
    oversample: int = 8,
) -> PeriodicCurve:
    """Reparametrize so |p'| is constant, keeping the geometric locus.

    Iterates arclength re-tabulation with spectral interpolation until the
    speed is uniform to ``tol`` (relative).  Raises SelfIntersectionError
    for non-simple input.
    """
    if _polyline_has_crossing(curve):
        raise SelfIntersectionError("cannot reparametrize a self-intersecting curve")
    current = curve
    for _ in range(max_iter):
        dev, current = _equalize_speed_once(current, oversample)
        if dev <= tol:
            break
    return current


def _equalize_speed_once(curve: PeriodicCurve, oversample: int) -> tuple[float, PeriodicCurve]:
    n = curve.n
    n_fine = oversample * n
    x_fine = np.arange(n_fine) * (curve.period / n_fine)
    parts = curve.periodic_parts()
    deriv_samples = [spectral_derivative(parts[:, c], curve.period, 1) for c in (0, 1)]

    def speed_at(x):
        u1 = trig_interpolate(deriv_samples[0], curve.period, x) + curve.x_advance / curve.period
        u2 = trig_interpolate(deriv_samples[1], curve.period, x)
        return np.hypot(u1, u2)

    speed_fine = speed_at(x_fine)
    anti, mean_speed = spectral_antiderivative(speed_fine, curve.period)
    total = mean_speed * curve.period

    def arc_at(x):
        return mean_speed * x + trig_interpolate(anti, curve.period, x)

    targets = np.arange(n) * (total / n)
    x_new = np.interp(targets, np.append(arc_at(x_fine), total), np.append(x_fine, curve.period))
    # Newton polish of s(x) = target; the interpolated guess is already close.
    for _ in range(4):
        x_new = x_new - (arc_at(x_new) - targets) / speed_at(x_new)
    pts = curve.evaluate(x_new)
    resampled = PeriodicCurve(pts, curve.period, curve.x_advance)
    speed = np.hypot(*resampled.derivative(1).T)
    target_speed = total / curve.period
    dev = float(np.max(np.abs(speed - target_speed)) / target_speed)
    return dev, resampled


def constant_speed_deviation(curve: PeriodicCurve) -> float:
    """Max relative deviation of |p'| from its mean over the samples."""
    speed = np.hypot(*curve.derivative(1).T)
    mean = speed.mean()
    return float(np.max(np.abs(speed - mean)) / mean)


# ---------------------------------------------------------------------------
# injectivity certificate


CERTIFIED_INJECTIVE = "CertifiedInjective"
SELF_INTERSECTING = "SelfIntersecting"
INCONCLUSIVE = "Inconclusive"


def injectivity_criterion(curve: PeriodicCurve) -> float:
    """sqrt(l - P) * (P/l)^(3/2) * ||p''||_{L2(0,P)}.

    Any non-injective periodic curve has criterion value >= pi, so a
    value below pi certifies injectivity.
    """
    ell = arclength(curve)
    excess = max(ell - curve.period, 0.0)
    d2 = curve.derivative(2)
    norm_sq = periodic_integral(d2[:, 0] ** 2 + d2[:, 1] ** 2, curve.period)
    return float(np.sqrt(excess) * (curve.period / ell) ** 1.5 * np.sqrt(norm_sq))


def injectivity_check(curve: PeriodicCurve) -> str:
    """Certify injectivity from the bending criterion, falling back to an
    exact pairwise segment test on the sample polyline.

    A detected polyline crossing always wins over the certificate, so a
    crossing curve is never certified.
    """
    if _polyline_has_crossing(curve):
        return SELF_INTERSECTING
    if injectivity_criterion(curve) < np.pi:
        return CERTIFIED_INJECTIVE
    return INCONCLUSIVE


def _segments(curve: PeriodicCurve) -> np.ndarray:
    pts = np.vstack([curve.points, curve.points[0] + [curve.x_advance, 0.0]])
    return np.stack([pts[:-1], pts[1:]], axis=1)  # (n, 2, 2)


def _orient(a, b, c):
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (
        b[..., 1] - a[..., 1]
    ) * (c[..., 0] - a[..., 0])


def _proper_crossing(p1, p2, q1, q2) -> np.ndarray:
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    return (d1 * d2 < 0) & (d3 * d4 < 0)


def _polyline_has_crossing(curve: PeriodicCurve) -> bool:
    """Exact orientation-predicate crossing test over the sample polyline
    and its +-P translates (shared endpoints between neighbours excluded)."""
    base = _segments(curve)
    n = base.shape[0]
    shifts = [0.0] if curve.x_advance == 0.0 else [-curve.x_advance, 0.0, curve.x_advance]
    for shift in shifts:
        other = base.copy()
        other[:, :, 0] += shift
        p1 = base[:, None, 0]
        p2 = base[:, None, 1]
        q1 = other[None, :, 0]
        q2 = other[None, :, 1]
        hits = _proper_crossing(p1, p2, q1, q2)
        idx = np.arange(n)
        if shift == 0.0:
            # ignore a segment against itself and its immediate neighbours
            near = (np.abs(idx[:, None] - idx[None, :]) <= 1) | (
                np.abs(idx[:, None] - idx[None, :]) == n - 1
            )
            hits &= ~near
        else:
            # translate by one period: the wrap-around neighbour pair shares
            # an endpoint, everything else is a genuine crossing
            near = np.zeros((n, n), dtype=bool)
            if shift > 0:
                near[n - 1, 0] = True
            else:
                near[0, n - 1] = True
            hits &= ~near
        if hits.any():
            return True
    return False


# ---------------------------------------------------------------------------
# circular arc-chord area and the minimum-height bound


def chord_arc_area(ell_norm: float) -> float:
    """a(l) with 2*pi*a(l) the area between a circular arc of length l and
    a chord of length 2*pi.  Defined for l >= 2*pi; a(2*pi) = 0.
    """
    if ell_norm < TWO_PI:
        raise ValueError("arc length must be at least the chord length 2*pi")
    if ell_norm == TWO_PI:
        return 0.0
    # Solve sin(theta)/theta = 2*pi/l for the half-angle theta in (0, pi):
    # the arc has radius r = l/(2*theta) and the segment area is
    # r^2 (theta - sin(theta) cos(theta)).
    target = TWO_PI / ell_norm

    def f(theta):
        return np.sin(theta) / theta - target

    lo, hi = 1e-12, np.pi - 1e-12
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    theta = 0.5 * (lo + hi)
    for _ in range(3):  # Newton polish
        df = (np.cos(theta) * theta - np.sin(theta)) / theta**2
        step = f(theta) / df
        theta_new = theta - step
        if 0 < theta_new < np.pi:
            theta = theta_new
    r = ell_norm / (2.0 * theta)
    return float(r**2 * (theta - np.sin(theta) * np.cos(theta)) / TWO_PI)


def min_height_bound(ell: float, period: float, mean_depth: float) -> float:
    """Lower bound on min p2 for a surface of length ``ell`` enclosing mean
    depth ``mean_depth``: Q - (P/2pi) a(2pi l / P).  A positive value
    certifies the surface stays above the bottom."""
    if ell < period:
        raise ValueError("arclength cannot be below the period")
    return mean_depth - period / TWO_PI * chord_arc_area(TWO_PI * ell / period)


# ---------------------------------------------------------------------------
# serialization


def curve_to_csv(curve: PeriodicCurve, path) -> None:
    header = "x1,x2"
    np.savetxt(path, curve.points, delimiter=",", header=header, comments="")


def curve_from_csv(path, period: float, x_advance: float | None = None) -> PeriodicCurve:
    pts = np.loadtxt(path, delimiter=",", skiprows=1)
    return PeriodicCurve(pts, period, x_advance)


def curve_to_json_dict(curve: PeriodicCurve) -> dict:
    return {
        "period": curve.period,
        "n": curve.n,
        "points": curve.points.tolist(),
    }


def curve_from_json_dict(data: dict) -> PeriodicCurve:
    return PeriodicCurve(np.asarray(data["points"], dtype=float), float(data["period"]))
