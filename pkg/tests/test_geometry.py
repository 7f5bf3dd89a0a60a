import numpy as np
import pytest

from vorwave import geometry
from vorwave.geometry import (
    CERTIFIED_INJECTIVE,
    INCONCLUSIVE,
    SELF_INTERSECTING,
    GraphSurface,
    PeriodicCurve,
    SelfIntersectionError,
    arclength,
    bending_energy,
    chord_arc_area,
    constant_speed_deviation,
    curvature,
    enclosed_area,
    injectivity_check,
    injectivity_criterion,
    min_height_bound,
    resample_constant_speed,
)

P = 2.0 * np.pi
Q = 1.0


def flat_curve(n=64, q=Q, period=P):
    x = np.arange(n) * period / n
    return PeriodicCurve(np.column_stack([x, np.full(n, q)]), period)


def cosine_curve(eps, n=128, period=P, q=Q, mode=1):
    x = np.arange(n) * period / n
    return PeriodicCurve(
        np.column_stack([x, q + eps * np.cos(2 * np.pi * mode * x / period)]), period
    )


def circle_curve(radius, n=256, center=(0.0, 4.0)):
    t = np.arange(n) * 2 * np.pi / n
    pts = np.column_stack(
        [center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)]
    )
    return PeriodicCurve(pts, period=2 * np.pi, x_advance=0.0)


def quadrature_arclength(fx, fy, period, n=200_001):
    """Independent oracle: composite Simpson on a dense parameter grid."""
    from scipy.integrate import simpson

    x = np.linspace(0.0, period, n)
    dx = np.gradient(fx(x), x)
    dy = np.gradient(fy(x), x)
    return simpson(np.hypot(dx, dy), x=x)


class TestArclength:
    def test_flat_equals_period(self):
        assert arclength(flat_curve()) == pytest.approx(P, abs=1e-12)

    def test_cosine_matches_quadrature_oracle(self):
        eps = 0.3
        oracle = quadrature_arclength(
            lambda x: x, lambda x: Q + eps * np.cos(2 * np.pi * x / P), P
        )
        assert arclength(cosine_curve(eps, n=256)) == pytest.approx(oracle, rel=1e-6)

    def test_small_amplitude_series(self):
        # l = P (1 + eps^2 pi^2 / P^2 + O(eps^4))
        eps = 1e-3
        expected = P * (1.0 + eps**2 * np.pi**2 / P**2)
        assert arclength(cosine_curve(eps, n=128)) == pytest.approx(expected, rel=1e-9)

    def test_never_below_period(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            eps = rng.uniform(0.01, 0.3)
            mode = rng.integers(1, 4)
            assert arclength(cosine_curve(eps, mode=mode)) >= P - 1e-10

    def test_translation_invariant(self):
        c = cosine_curve(0.2)
        assert arclength(c.translated(1.7)) == pytest.approx(arclength(c), rel=1e-12)


class TestResampleConstantSpeed:
    def test_flat_identity(self):
        c = flat_curve()
        r = resample_constant_speed(c)
        assert np.allclose(r.points, c.points, atol=1e-12)

    def test_cosine_constant_speed_same_length(self):
        c = cosine_curve(0.1, n=128)
        before = arclength(c)
        r = resample_constant_speed(c)
        assert constant_speed_deviation(r) < 1e-8
        assert arclength(r) == pytest.approx(before, rel=1e-8)

    def test_idempotent(self):
        r = resample_constant_speed(cosine_curve(0.2, n=128))
        r2 = resample_constant_speed(r)
        assert np.max(np.abs(r2.points - r.points)) < 1e-8

    def test_rejects_self_intersecting(self):
        with pytest.raises(SelfIntersectionError):
            resample_constant_speed(loopy_curve())


class TestCurvature:
    def test_flat_zero(self):
        assert np.allclose(curvature(flat_curve()), 0.0, atol=1e-12)

    def test_circle_radius_two(self):
        sigma = curvature(circle_curve(2.0, n=256))
        assert np.allclose(np.abs(sigma), 0.5, atol=1e-4)

    def test_mirror_negates(self):
        # asymmetric two-mode profile so the mirror is a genuinely new curve
        n = 128
        x = np.arange(n) * P / n
        y = Q + 0.1 * np.cos(2 * np.pi * x / P) + 0.05 * np.sin(4 * np.pi * x / P)
        c = PeriodicCurve(np.column_stack([x, y]), P)
        # mirror about the x2 axis, same parameter order: drift flips sign
        m = PeriodicCurve(np.column_stack([-x, y]), P, x_advance=-P)
        assert np.allclose(curvature(m), -curvature(c), atol=1e-10)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            curvature(flat_curve(n=6))

    def test_crest_is_negative(self):
        sigma = curvature(cosine_curve(0.1, n=128))
        assert sigma[0] < 0  # sample 0 sits at the crest


class TestBendingEnergy:
    def test_flat_zero(self):
        assert bending_energy(flat_curve()) == pytest.approx(0.0, abs=1e-20)

    def test_circle_analytic(self):
        # int |sigma|^2 ds over the closed circle of radius r is 2 pi / r
        for r in (0.5, 2.0, 3.0):
            c = circle_curve(r, n=256, center=(0.0, r + 1.0))
            assert bending_energy(c) == pytest.approx(2 * np.pi / r, rel=1e-10)

    def test_translation_invariant(self):
        c = resample_constant_speed(cosine_curve(0.2, n=128))
        assert bending_energy(c.translated(1.234)) == pytest.approx(
            bending_energy(c), rel=1e-12
        )

    def test_matches_direct_curvature_quadrature(self):
        # two routes: (P/l)^3 int |p''|^2 dx  vs  int sigma^2 ds
        c = resample_constant_speed(cosine_curve(0.25, n=512))
        sigma = curvature(c)
        speed = np.hypot(*c.derivative(1).T)
        direct = float(np.mean(sigma**2 * speed) * c.period)
        assert bending_energy(c) == pytest.approx(direct, rel=1e-6)


class TestEnclosedArea:
    def test_flat(self):
        assert enclosed_area(flat_curve()) == pytest.approx(P * Q, rel=1e-14)

    def test_mean_zero_perturbation(self):
        assert enclosed_area(cosine_curve(0.3, n=128)) == pytest.approx(P * Q, rel=1e-12)

    def test_sawtooth_matches_polygon_oracle(self):
        n = 64
        x = np.arange(n) * P / n
        y = Q + 0.2 * (2 * np.abs(x / P - np.floor(x / P + 0.5)) - 0.5)
        curve = PeriodicCurve(np.column_stack([x, y]), P)
        # polygon shoelace oracle over one closed period
        vx = np.concatenate([x, [P], [P], [0.0]])
        vy = np.concatenate([y, [y[0]], [0.0], [0.0]])
        oracle = 0.5 * abs(
            np.sum(vx * np.roll(vy, -1) - np.roll(vx, -1) * vy)
        )
        assert enclosed_area(curve) == pytest.approx(oracle, rel=1e-12)

    def test_translation_invariant(self):
        c = cosine_curve(0.2)
        assert enclosed_area(c.translated(2.5)) == pytest.approx(
            enclosed_area(c), rel=1e-12
        )


def loopy_curve(n=96):
    """A periodic curve whose sample polyline visibly crosses itself."""
    t = np.arange(n) * 2 * np.pi / n
    x = P * t / (2 * np.pi) + 1.8 * np.sin(t)
    y = 2.0 + 1.2 * np.sin(2 * t)
    return PeriodicCurve(np.column_stack([x, y]), P)


class TestInjectivity:
    def test_flat_certified(self):
        c = flat_curve()
        assert injectivity_criterion(c) == pytest.approx(0.0, abs=1e-12)
        assert injectivity_check(c) == CERTIFIED_INJECTIVE

    def test_mild_cosine_certified(self):
        assert injectivity_check(cosine_curve(0.05)) == CERTIFIED_INJECTIVE

    def test_loop_detected_and_criterion_large(self):
        c = loopy_curve()
        assert injectivity_check(c) == SELF_INTERSECTING
        assert injectivity_criterion(c) >= np.pi

    def test_random_loopy_curves_never_certified(self):
        rng = np.random.default_rng(42)
        n = 48
        t = np.arange(n) * 2 * np.pi / n
        flagged = 0
        for _ in range(200):
            a = rng.uniform(1.2, 2.5)
            b = rng.uniform(0.5, 1.5)
            ph = rng.uniform(0, 2 * np.pi)
            x = P * t / (2 * np.pi) + a * np.sin(t + ph)
            y = 3.0 + b * np.sin(2 * t)
            c = PeriodicCurve(np.column_stack([x, y]), P)
            verdict = injectivity_check(c)
            if geometry._polyline_has_crossing(c):
                flagged += 1
                assert verdict == SELF_INTERSECTING
        assert flagged > 50  # the family does produce loops


class TestChordArcArea:
    def test_degenerate_chord(self):
        assert chord_arc_area(2 * np.pi) == 0.0

    def test_semicircle_closed_form(self):
        # arc length pi^2 over chord 2 pi: radius pi, half angle pi/2,
        # segment area pi * pi^2 / 2, so a = pi^2 / 4
        assert chord_arc_area(np.pi**2) == pytest.approx(np.pi**2 / 4, abs=1e-10)

    def test_monotone_increasing(self):
        values = [chord_arc_area(s) for s in np.linspace(2 * np.pi + 1e-6, 12.0, 40)]
        assert all(b > a for a, b in zip(values, values[1:]))
        assert chord_arc_area(6.5) < chord_arc_area(7.0)

    def test_below_domain_raises(self):
        with pytest.raises(ValueError):
            chord_arc_area(6.0)

    def test_continuous_at_chord_limit(self):
        # near the chord limit a(l) ~ (pi/3) sqrt(6 (l - 2pi) / l)
        excess = 1e-9
        ell = 2 * np.pi + excess
        asymptotic = np.pi / 3 * np.sqrt(6 * excess / ell)
        assert chord_arc_area(ell) == pytest.approx(asymptotic, rel=1e-2)
        assert chord_arc_area(2 * np.pi + 1e-12) < chord_arc_area(ell)

    def test_beyond_semicircle(self):
        # a full-ish circle: theta approaches pi, still solvable
        val = chord_arc_area(40.0)
        assert np.isfinite(val) and val > chord_arc_area(12.0)


class TestMinHeightBound:
    def test_flat_bound_is_depth(self):
        assert min_height_bound(P, P, Q) == pytest.approx(Q, abs=1e-14)

    def test_semicircle_case_negative(self):
        # P = 2 pi, Q = 1, l = pi^2: bound = 1 - a(pi^2) = 1 - pi^2/4 < 0
        bound = min_height_bound(np.pi**2, 2 * np.pi, 1.0)
        assert bound == pytest.approx(1.0 - np.pi**2 / 4, abs=1e-10)
        assert bound < 0

    def test_decreasing_in_length(self):
        lengths = np.linspace(P, 1.5 * P, 20)
        bounds = [min_height_bound(l, P, Q) for l in lengths]
        assert all(b2 < b1 + 1e-15 for b1, b2 in zip(bounds, bounds[1:]))


class TestSerialization:
    def test_csv_roundtrip(self, tmp_path):
        c = cosine_curve(0.1, n=32)
        path = tmp_path / "curve.csv"
        geometry.curve_to_csv(c, path)
        assert path.read_text().splitlines()[0] == "x1,x2"
        back = geometry.curve_from_csv(path, period=P)
        assert np.allclose(back.points, c.points)

    def test_json_roundtrip(self):
        c = cosine_curve(0.1, n=32)
        back = geometry.curve_from_json_dict(geometry.curve_to_json_dict(c))
        assert np.allclose(back.points, c.points)
        assert back.period == c.period


class TestGraphSurface:
    def test_positive_heights_required(self):
        with pytest.raises(ValueError):
            GraphSurface(np.array([1.0, -0.1, 1.0, 1.0]), P)

    def test_to_curve(self):
        s = GraphSurface(np.full(16, Q), P)
        assert s.mean_height() == pytest.approx(Q)
        assert arclength(s.to_curve()) == pytest.approx(P)
