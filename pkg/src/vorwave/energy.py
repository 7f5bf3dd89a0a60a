"""Total energy of a surface/stream-function pair and its first variation.

The energy is kinetic + gravitational potential + surface energy, with
the surface energy made of a stretching term T (l - P)^beta and a bending
term E int sigma^2 ds.  ``config`` arguments are duck-typed: any object
with ``gravity``, ``tension``, ``tension_exponent`` and ``bending``
attributes works.
"""

from dataclasses import dataclass

import numpy as np

from .elliptic import Mesh, StreamState
from .fourier import (
    periodic_integral,
    spectral_antiderivative,
    spectral_derivative,
    trig_interpolate,
)
from .geometry import GraphSurface, curvature, resample_constant_speed


@dataclass(frozen=True)
class EnergyReport:
    """Energy breakdown; total is the exact sum of the four parts."""

    kinetic: float
    potential: float
    tension: float
    bending: float
    total: float
    residual_max: float | None = None
    residual_l2: float | None = None

    def to_json_dict(self) -> dict:
        out = {
            "kinetic": self.kinetic,
            "potential": self.potential,
            "tension": self.tension,
            "bending": self.bending,
            "total": self.total,
        }
        if self.residual_max is not None:
            out["bernoulli_residual_max"] = self.residual_max
            out["bernoulli_residual_l2"] = self.residual_l2
        return out


def surface_length_and_bending(surface: GraphSurface) -> tuple[float, float]:
    """(arclength, int sigma^2 ds) from spectral graph derivatives."""
    h = surface.heights
    p = surface.period
    hp = spectral_derivative(h, p, 1)
    hpp = spectral_derivative(h, p, 2)
    w = np.sqrt(1.0 + hp**2)
    ell = periodic_integral(w, p)
    bend = periodic_integral(hpp**2 / w**5, p)
    return ell, bend


def total_energy(config, surface: GraphSurface, state: StreamState) -> EnergyReport:
    """Quadrature of the four energy terms for a solved state."""
    mesh = state.mesh
    kinetic = state.kinetic_energy
    potential = config.gravity * mesh.integral_x2()
    ell, bend_int = surface_length_and_bending(surface)
    excess = max(ell - surface.period, 0.0)
    tension = config.tension * excess**config.tension_exponent
    bending = config.bending * bend_int
    total = kinetic + potential + tension + bending
    return EnergyReport(kinetic, potential, tension, bending, total)


def rest_energy_floor(config, period: float, depth: float) -> float:
    """g P Q^2 / 2, the energy of the flat domain at rest."""
    return 0.5 * config.gravity * period * depth**2


# ---------------------------------------------------------------------------
# Bernoulli residual on the surface


@dataclass(frozen=True)
class BernoulliResidual:
    """Deviation from surface constancy of the Bernoulli density."""

    deviations: np.ndarray  # per surface node, mean removed
    arc_positions: np.ndarray  # arclength coordinate of each node
    arc_weights: np.ndarray  # dS weights used for the statistics
    max_abs: float
    l2: float  # area-weighted root mean square


def _surface_curvature_terms(surface: GraphSurface) -> tuple[np.ndarray, np.ndarray, float]:
    """sigma and its second arc-length derivative at the uniform x1 nodes,
    computed spectrally on the constant-speed parametrization."""
    curve = resample_constant_speed(surface.to_curve())
    sigma_cs = curvature(curve)
    ell = np.hypot(*curve.derivative(1).T).mean() * curve.period
    # second derivative with respect to arclength: d/ds = (P/l) d/dx
    sigma_ss_cs = spectral_derivative(sigma_cs, curve.period, 2) * (curve.period / ell) ** 2

    # arclength position of each uniform x1 node of the graph
    h = surface.heights
    hp = spectral_derivative(h, surface.period, 1)
    w = np.sqrt(1.0 + hp**2)
    anti, mean_w = spectral_antiderivative(w, surface.period)
    s_nodes = mean_w * surface.abscissae() + anti
    # the constant-speed curve starts at the same point, parameter x = s P/l
    x_cs = s_nodes * curve.period / ell
    sigma = trig_interpolate(sigma_cs, curve.period, x_cs)
    sigma_ss = trig_interpolate(sigma_ss_cs, curve.period, x_cs)
    return sigma, sigma_ss, ell


def bernoulli_residual(config, surface: GraphSurface, state: StreamState) -> BernoulliResidual:
    """Evaluate the strong-form Bernoulli density at the surface nodes and
    return its deviation from the arc-weighted mean.

    The density is 0.5 |grad psi0|^2 + g x2 - beta T (l-P)^(beta-1) sigma
    + E (sigma^3 + 2 sigma''), with psi0 the stream function in the frame
    moving with the wave.
    """
    mesh = state.mesh
    if mesh.m < 16:
        raise ValueError("need at least 16 surface nodes for the residual")
    k = mesh.k
    h = surface.heights
    p = surface.period
    hp = spectral_derivative(h, p, 1)
    w = np.sqrt(1.0 + hp**2)

    psi0 = state.shifted_stream().reshape(k + 1, mesh.m)
    # one-sided second-order vertical derivative in the mapped frame
    dpsi_eta = 0.5 * k * (3.0 * psi0[k] - 4.0 * psi0[k - 1] + psi0[k - 2])
    trace_x1 = spectral_derivative(psi0[k], p, 1)
    grad_x2 = dpsi_eta / h
    grad_x1 = trace_x1 - hp / h * dpsi_eta
    grad_sq = grad_x1**2 + grad_x2**2

    sigma, sigma_ss, ell = _surface_curvature_terms(surface)
    excess = max(ell - p, 0.0)
    stretch = config.tension_exponent * config.tension * excess ** (config.tension_exponent - 1.0)
    density = (
        0.5 * grad_sq
        + config.gravity * h
        - stretch * sigma
        + config.bending * (sigma**3 + 2.0 * sigma_ss)
    )
    mean = float(np.sum(w * density) / np.sum(w))
    dev = density - mean

    anti, mean_w = spectral_antiderivative(w, p)
    s_nodes = mean_w * surface.abscissae() + anti
    return BernoulliResidual(
        deviations=dev,
        arc_positions=s_nodes,
        arc_weights=w,
        max_abs=float(np.max(np.abs(dev))),
        l2=float(np.sqrt(np.sum(w * dev**2) / np.sum(w))),
    )


def shape_gradient(config, surface: GraphSurface, state: StreamState) -> np.ndarray:
    """Descent direction as a normal velocity density on the surface nodes.

    The negative Bernoulli deviation, with its area-weighted mean removed
    so the enclosed area is preserved to first order.
    """
    res = bernoulli_residual(config, surface, state)
    v = -res.deviations
    v = v - np.sum(res.arc_weights * v) / np.sum(res.arc_weights)
    return v


# ---------------------------------------------------------------------------
# solenoidal test fields and the weak first variation


class SolenoidalField:
    """Divergence-free field built as the curl of trig x polynomial
    potentials rho = amp * T(2 pi m x1 / P) * x2^q, q >= 1.

    The velocity is (d2 rho, -d1 rho); its vertical component vanishes at
    the bottom, so the bottom stays invariant under the flow.
    """

    def __init__(self, period: float, modes):
        # modes: iterable of (amplitude, m, q, kind) with kind "sin"/"cos"
        self.period = period
        self.modes = [(float(a), int(m), int(q), kind) for a, m, q, kind in modes]
        for _, m, q, kind in self.modes:
            if q < 1:
                raise ValueError("potential must vanish at the bottom: q >= 1")
            if kind not in ("sin", "cos"):
                raise ValueError("kind must be sin or cos")

    @classmethod
    def translation(cls, period: float, speed: float) -> "SolenoidalField":
        return cls(period, [(speed, 0, 1, "cos")])

    @classmethod
    def random(cls, period: float, rng, n_modes: int = 3, amplitude: float = 1.0) -> "SolenoidalField":
        modes = []
        for _ in range(n_modes):
            amp = amplitude * rng.uniform(-1.0, 1.0)
            m = int(rng.integers(0, 3))
            q = int(rng.integers(1, 4))
            # sin with mode 0 is the zero potential; keep the draw useful
            kind = "cos" if m == 0 or rng.random() < 0.5 else "sin"
            modes.append((amp, m, q, kind))
        return cls(period, modes)

    def _trig(self, m, kind, x, derivative=0):
        arg = 2.0 * np.pi * m * x / self.period
        freq = 2.0 * np.pi * m / self.period
        if kind == "sin":
            table = [np.sin(arg), np.cos(arg), -np.sin(arg)]
        else:
            table = [np.cos(arg), -np.sin(arg), -np.cos(arg)]
        return table[derivative] * freq**derivative

    def velocity(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        out = np.zeros_like(pts)
        for amp, m, q, kind in self.modes:
            t0 = self._trig(m, kind, x, 0)
            t1 = self._trig(m, kind, x, 1)
            out[:, 0] += amp * t0 * q * y ** (q - 1)
            out[:, 1] += -amp * t1 * y**q
        return out

    def jacobian(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        out = np.zeros((pts.shape[0], 2, 2))
        for amp, m, q, kind in self.modes:
            t0 = self._trig(m, kind, x, 0)
            t1 = self._trig(m, kind, x, 1)
            t2 = self._trig(m, kind, x, 2)
            d_w1_x1 = amp * t1 * q * y ** (q - 1)
            d_w1_x2 = amp * t0 * q * (q - 1) * y ** (q - 2) if q >= 2 else np.zeros_like(y)
            d_w2_x1 = -amp * t2 * y**q
            out[:, 0, 0] += d_w1_x1
            out[:, 0, 1] += d_w1_x2
            out[:, 1, 0] += d_w2_x1
            out[:, 1, 1] += -d_w1_x1
        return out

    def max_divergence(self, points) -> float:
        jac = self.jacobian(points)
        return float(np.max(np.abs(jac[:, 0, 0] + jac[:, 1, 1])))

    def flow(self, points, t: float, steps: int = 8) -> np.ndarray:
        """Integrate dX/dt = velocity(X) from 0 to t by classical RK4."""
        pts = np.atleast_2d(np.asarray(points, dtype=float)).copy()
        dt = t / steps
        for _ in range(steps):
            k1 = self.velocity(pts)
            k2 = self.velocity(pts + 0.5 * dt * k1)
            k3 = self.velocity(pts + 0.5 * dt * k2)
            k4 = self.velocity(pts + dt * k3)
            pts = pts + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        return pts


def shape_derivative(config, surface: GraphSurface, state: StreamState, field: SolenoidalField) -> float:
    """Weak first variation of the total energy along the flow of a
    solenoidal field: kinetic, gravity, stretching and bending terms.
    """
    mesh = state.mesh
    gp = mesh.gp_points.reshape(-1, 2)
    if field.max_divergence(gp) > 1e-8:
        raise ValueError("test field is not divergence-free")
    bottom = np.column_stack([np.linspace(0, surface.period, 16), np.zeros(16)])
    if np.max(np.abs(field.velocity(bottom)[:, 1])) > 1e-8:
        raise ValueError("test field must keep the bottom invariant")

    psi0 = state.shifted_stream()
    grad = mesh.field_gradient_at_gauss(psi0)  # (nc, 4, 2)
    jac = field.jacobian(gp).reshape(mesh.n_cells, 4, 2, 2)
    kinetic_term = float(
        np.einsum("cqa,cqab,cqb,cq->", grad, jac, grad, mesh.gp_weights)
    )
    w2 = field.velocity(gp)[:, 1].reshape(mesh.n_cells, 4)
    gravity_term = config.gravity * float(np.einsum("cq,cq->", w2, mesh.gp_weights))

    curve = resample_constant_speed(surface.to_curve())
    p = curve.period
    ell = np.hypot(*curve.derivative(1).T).mean() * p
    scale = p / ell  # dx to ds conversion
    tangent = curve.derivative(1) * scale
    omega_on_curve = field.velocity(curve.points)
    omega_s = np.stack(
        [spectral_derivative(omega_on_curve[:, c], p, 1) for c in (0, 1)], axis=1
    ) * scale
    omega_ss = np.stack(
        [spectral_derivative(omega_on_curve[:, c], p, 2) for c in (0, 1)], axis=1
    ) * scale**2
    p_ss = curve.derivative(2) * scale**2
    sigma_sq = np.sum(p_ss**2, axis=1)

    excess = max(ell - p, 0.0)
    stretch = config.tension_exponent * config.tension * excess ** (config.tension_exponent - 1.0)
    stretch_term = stretch * ell * float(np.mean(np.sum(omega_s * tangent, axis=1)))
    bending_term = config.bending * ell * float(
        np.mean(2.0 * np.sum(omega_ss * p_ss, axis=1) - 3.0 * sigma_sq * np.sum(omega_s * tangent, axis=1))
    )
    return kinetic_term + gravity_term + stretch_term + bending_term
