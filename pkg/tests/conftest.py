"""Shared fixtures and independent oracles for the test suite."""

import numpy as np
from scipy.interpolate import CubicSpline

from vorwave.elliptic import build_mesh, solve_multipliers
from vorwave.energy import total_energy
from vorwave.geometry import GraphSurface

P = 2.0 * np.pi
Q = 1.0


def flat_surface(m=32, q=Q, period=P):
    return GraphSurface(np.full(m, q), period)


def cosine_surface(eps, m=32, q=Q, period=P, mode=1):
    x = np.arange(m) * period / m
    return GraphSurface(q + eps * np.cos(2 * np.pi * mode * x / period), period)


class PlainState:
    """Minimal stand-in for StreamState when only the stream function and
    wave speed matter (flat-domain cases the multiplier solve excludes)."""

    def __init__(self, mesh, psi, wave_speed=0.0):
        self.mesh = mesh
        self.psi = np.asarray(psi, dtype=float)
        self.wave_speed = float(wave_speed)
        self.kinetic_energy = 0.5 * mesh.dirichlet_energy(self.psi)

    def shifted_stream(self):
        return self.psi - self.wave_speed * self.mesh.x2_nodal


def regraph(points, period, m):
    """Fit transported surface points back onto the uniform height grid by
    a periodic cubic spline."""
    x = np.mod(points[:, 0], period)
    order = np.argsort(x)
    xs = x[order]
    ys = points[:, 1][order]
    spline = CubicSpline(
        np.append(xs, xs[0] + period), np.append(ys, ys[0]), bc_type="periodic"
    )
    return spline(np.arange(m) * period / m)


def constraints_for_multipliers(mesh, zeta_values, lam1, lam2):
    """(mu, nu) whose multiplier solve returns exactly (lam1, lam2); keeps
    test states away from the ill-conditioned near-flat regime."""
    from vorwave.elliptic import circulation, harmonic_unit, impulse, particular_solution

    psi_tilde, c10 = harmonic_unit(mesh)
    psi_part, c0 = particular_solution(mesh, zeta_values)
    psi_x2 = mesh.solve(mesh.node_y[-1])
    mu = lam2 * c10 + lam1 * circulation(mesh, psi_x2) + c0
    nu = (
        lam2 * impulse(mesh, psi_tilde)
        + lam1 * impulse(mesh, psi_x2)
        + impulse(mesh, psi_part)
    )
    return mu, nu


def transported_energy(config, surface, zeta_fn, field, t, mu, nu, k):
    """Independent oracle: total energy after transporting the domain and
    the vorticity along the flow of ``field`` for time ``t``, with the
    multipliers re-solved at the same (mu, nu).
    """
    pts = np.column_stack([surface.abscissae(), surface.heights])
    moved = field.flow(pts, t) if t != 0.0 else pts
    heights = regraph(moved, surface.period, surface.m) if t != 0.0 else surface.heights
    surface_t = GraphSurface(heights, surface.period)
    mesh_t = build_mesh(surface_t, k)
    centers = mesh_t.cell_centers()
    origins = field.flow(centers, -t) if t != 0.0 else centers
    zeta_t = zeta_fn(origins[:, 0], origins[:, 1])
    state_t = solve_multipliers(mesh_t, zeta_t, mu, nu)
    return total_energy(config, surface_t, state_t).total


def fd_energy_derivative(config, surface, zeta_fn, field, mu, nu, k, step=1e-4):
    """Centered finite difference of the transported energy at t = 0."""
    plus = transported_energy(config, surface, zeta_fn, field, step, mu, nu, k)
    minus = transported_energy(config, surface, zeta_fn, field, -step, mu, nu, k)
    return (plus - minus) / (2.0 * step)
