"""Stream-function boundary value problem on the fluid domain.

The domain under a graph surface is meshed by mapping the reference
rectangle (0,P) x (0,Q) vertically, node (i,j) -> (i*P/m, j*H_i/k).
Bilinear quadrilateral elements with 2x2 Gauss quadrature assemble the
Dirichlet form; with this quadrature the coordinate field x2 is exactly
discrete-harmonic, so the circulation and impulse identities used by the
multiplier system hold to rounding error on every mesh.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import GraphSurface

_GAUSS = 1.0 / np.sqrt(3.0)
_GP = np.array([[-_GAUSS, -_GAUSS], [_GAUSS, -_GAUSS], [_GAUSS, _GAUSS], [-_GAUSS, _GAUSS]])


class DegenerateDomainError(ValueError):
    """The multiplier system is singular: the domain is flat or nearly so."""


def _shape_functions(u, v):
    return 0.25 * np.array(
        [(1 - u) * (1 - v), (1 + u) * (1 - v), (1 + u) * (1 + v), (1 - u) * (1 + v)]
    )


def _shape_gradients(u, v):
    return 0.25 * np.array(
        [
            [-(1 - v), -(1 - u)],
            [(1 - v), -(1 + u)],
            [(1 + v), (1 + u)],
            [-(1 + v), (1 - u)],
        ]
    )


class Mesh:
    """Structured quadrilateral mesh over one period of the fluid domain."""

    def __init__(self, surface: GraphSurface, k: int):
        if k < 2:
            raise ValueError("need at least 2 vertical cells")
        h = surface.heights
        if np.any(h <= 0):
            raise ValueError("surface heights must be positive")
        self.surface = surface
        self.period = surface.period
        self.m = surface.m
        self.k = k
        m = self.m

        dx = self.period / m
        x1 = np.arange(m) * dx
        rows = np.arange(k + 1)[:, None] / k
        self.node_x = np.broadcast_to(x1, (k + 1, m)).copy()
        self.node_y = rows * h[None, :]
        self.n_nodes = (k + 1) * m

        # cells (i, j), i fastest; corner node ids wrap in x1, corner
        # coordinates do not (the last column spans [P - dx, P])
        i = np.tile(np.arange(m), k)
        j = np.repeat(np.arange(k), m)
        ip = (i + 1) % m
        self.cell_nodes = np.stack(
            [j * m + i, j * m + ip, (j + 1) * m + ip, (j + 1) * m + i], axis=1
        )
        xl = i * dx
        xr = (i + 1) * dx
        hl = h[i]
        hr = h[ip]
        self.cell_coords = np.empty((m * k, 4, 2))
        self.cell_coords[:, 0] = np.stack([xl, j * hl / k], axis=1)
        self.cell_coords[:, 1] = np.stack([xr, j * hr / k], axis=1)
        self.cell_coords[:, 2] = np.stack([xr, (j + 1) * hr / k], axis=1)
        self.cell_coords[:, 3] = np.stack([xl, (j + 1) * hl / k], axis=1)
        self.n_cells = m * k

        self.bottom = np.arange(m)
        self.top = k * m + np.arange(m)
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.bottom] = False
        mask[self.top] = False
        self.interior = np.flatnonzero(mask)

        self._assemble()

    def _assemble(self):
        coords = self.cell_coords
        nc = self.n_cells
        ke = np.zeros((nc, 4, 4))
        load = np.zeros((nc, 4))
        x2_moment = np.zeros((nc, 4))
        areas = np.zeros(nc)
        grads = np.zeros((nc, 4, 4, 2))  # cell, gauss point, basis, component
        gp_weights = np.zeros((nc, 4))
        gp_xy = np.zeros((nc, 4, 2))
        for q, (u, v) in enumerate(_GP):
            dn = _shape_gradients(u, v)  # (4, 2)
            nvals = _shape_functions(u, v)  # (4,)
            jac = np.einsum("cia,ib->cab", coords, dn)  # (nc, 2, 2)
            det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
            inv = np.empty_like(jac)
            inv[:, 0, 0] = jac[:, 1, 1]
            inv[:, 1, 1] = jac[:, 0, 0]
            inv[:, 0, 1] = -jac[:, 0, 1]
            inv[:, 1, 0] = -jac[:, 1, 0]
            inv /= det[:, None, None]
            gp = np.einsum("ib,cba->cia", dn, inv)  # (nc, 4 basis, 2)
            ke += np.einsum("cia,cja,c->cij", gp, gp, det)
            load += nvals[None, :] * det[:, None]
            y_gp = coords[:, :, 1] @ nvals
            x2_moment += nvals[None, :] * (y_gp * det)[:, None]
            areas += det
            grads[:, q] = gp
            gp_weights[:, q] = det
            gp_xy[:, q, 0] = coords[:, :, 0] @ nvals
            gp_xy[:, q, 1] = y_gp
        if np.any(areas <= 0):
            raise ValueError("mesh has non-positive cell areas")
        self.cell_areas = areas
        self.load_shape = load
        self.x2_moment = x2_moment
        self.gp_gradients = grads
        self.gp_weights = gp_weights
        self.gp_points = gp_xy

        rows = np.repeat(self.cell_nodes, 4, axis=1).ravel()
        cols = np.tile(self.cell_nodes, (1, 4)).ravel()
        self.stiffness = sp.coo_matrix(
            (ke.transpose(0, 2, 1).ravel(), (rows, cols)),
            shape=(self.n_nodes, self.n_nodes),
        ).tocsr()

    # -- solves ------------------------------------------------------------

    @cached_property
    def _interior_lu(self):
        a_ii = self.stiffness[self.interior][:, self.interior].tocsc()
        return spla.splu(a_ii)

    def solve(self, top_values, cell_source=None) -> np.ndarray:
        """Solve the Dirichlet problem: zero at the bottom, ``top_values``
        on the surface, cell-wise constant source ``cell_source``."""
        psi = np.zeros(self.n_nodes)
        psi[self.top] = top_values
        b = np.zeros(self.n_nodes)
        if cell_source is not None:
            b = self.source_load(cell_source)
        rhs = b[self.interior] - self.stiffness[self.interior] @ psi
        psi[self.interior] = self._interior_lu.solve(rhs)
        return psi

    def source_load(self, cell_values) -> np.ndarray:
        """Nodal load vector of a cell-wise constant source."""
        vals = np.asarray(cell_values, dtype=float)
        if vals.shape != (self.n_cells,):
            raise ValueError("cell source must have one value per cell")
        b = np.zeros(self.n_nodes)
        np.add.at(b, self.cell_nodes.ravel(), (vals[:, None] * self.load_shape).ravel())
        return b

    # -- geometry helpers ---------------------------------------------------

    @property
    def x2_nodal(self) -> np.ndarray:
        return self.node_y.ravel()

    def total_area(self) -> float:
        return float(self.cell_areas.sum())

    def integral_x2(self) -> float:
        return float(self.x2_moment.sum())

    def integral_x2_against(self, cell_values) -> float:
        """int x2 * zeta with zeta cell-wise constant."""
        vals = np.asarray(cell_values, dtype=float)
        return float(np.sum(vals * self.x2_moment.sum(axis=1)))

    def cell_centers(self) -> np.ndarray:
        return self.cell_coords.mean(axis=1)

    def dirichlet_energy(self, psi, phi=None) -> float:
        """int grad(psi) . grad(phi) by the assembled quadrature."""
        if phi is None:
            phi = psi
        return float(psi @ (self.stiffness @ phi))

    def field_gradient_at_gauss(self, psi) -> np.ndarray:
        """Gradient of a nodal field at the 2x2 Gauss points, (nc, 4, 2)."""
        vals = psi[self.cell_nodes]  # (nc, 4)
        return np.einsum("cqia,ci->cqa", self.gp_gradients, vals)

    def max_cell_diameter(self) -> float:
        c = self.cell_coords
        d1 = np.linalg.norm(c[:, 2] - c[:, 0], axis=1)
        d2 = np.linalg.norm(c[:, 3] - c[:, 1], axis=1)
        return float(np.max(np.maximum(d1, d2)))

    # -- point location and evaluation --------------------------------------

    def locate(self, points) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Return (inside, cell index, u_ref, v_ref) for query points.

        The vertical map makes the inverse exact: u from the x1 offset in
        the column, v from the height fraction under the piecewise linear
        surface of the mesh.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        m, k = self.m, self.k
        dx = self.period / m
        x = np.mod(pts[:, 0], self.period)
        y = pts[:, 1]
        col = np.minimum((x / dx).astype(int), m - 1)
        frac = x / dx - col
        h = self.surface.heights
        h_lin = (1 - frac) * h[col] + frac * h[(col + 1) % m]
        t = y / h_lin * k
        inside = (y >= 0) & (y <= h_lin)
        row = np.clip(t.astype(int), 0, k - 1)
        v = t - row
        cell = row * m + col
        return inside, cell, 2 * frac - 1, 2 * np.clip(v, 0.0, 1.0) - 1

    def eval_gradient(self, psi, points) -> np.ndarray:
        """FE gradient of a nodal field at arbitrary points (zero outside)."""
        inside, cell, u, v = self.locate(points)
        out = np.zeros((len(cell), 2))
        if not np.any(inside):
            return out
        idx = np.flatnonzero(inside)
        cells = cell[idx]
        coords = self.cell_coords[cells]
        vals = psi[self.cell_nodes[cells]]
        uu, vv = u[idx], v[idx]
        dn = np.empty((len(idx), 4, 2))
        dn[:, 0, 0] = -(1 - vv)
        dn[:, 1, 0] = (1 - vv)
        dn[:, 2, 0] = (1 + vv)
        dn[:, 3, 0] = -(1 + vv)
        dn[:, 0, 1] = -(1 - uu)
        dn[:, 1, 1] = -(1 + uu)
        dn[:, 2, 1] = (1 + uu)
        dn[:, 3, 1] = (1 - uu)
        dn *= 0.25
        jac = np.einsum("cia,cib->cab", coords, dn)
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        inv = np.empty_like(jac)
        inv[:, 0, 0] = jac[:, 1, 1]
        inv[:, 1, 1] = jac[:, 0, 0]
        inv[:, 0, 1] = -jac[:, 0, 1]
        inv[:, 1, 0] = -jac[:, 1, 0]
        inv /= det[:, None, None]
        grad_ref = np.einsum("ci,cib->cb", vals, dn)
        out[idx] = np.einsum("cb,cba->ca", grad_ref, inv)
        return out


def build_mesh(surface: GraphSurface, k: int) -> Mesh:
    """Mesh the fluid domain under a graph surface with k vertical cells."""
    return Mesh(surface, k)


# ---------------------------------------------------------------------------
# circulation / impulse functionals (weak form)


def _admissible_test_field(mesh: Mesh) -> np.ndarray:
    """The cheapest admissible test field: 1 on the surface, 0 elsewhere."""
    w = np.zeros(mesh.n_nodes)
    w[mesh.top] = 1.0
    return w


def circulation(mesh: Mesh, psi, zeta=None, test_field=None) -> float:
    """Weak-form circulation int grad(psi).grad(w) - int zeta w for any
    test field w with w=0 at the bottom, w=1 on the surface.

    When ``psi`` solves the interior equations the value does not depend
    on the choice of w (discrete Green identity).
    """
    w = _admissible_test_field(mesh) if test_field is None else test_field
    value = mesh.dirichlet_energy(w, psi)
    if zeta is not None:
        vals = getattr(zeta, "values", zeta)
        value -= float(w @ mesh.source_load(vals))
    return value


def impulse(mesh: Mesh, psi) -> float:
    """int d2(psi) dx, evaluated as int grad(x2).grad(psi) which the
    quadrature integrates exactly."""
    return mesh.dirichlet_energy(mesh.x2_nodal, psi)


def harmonic_unit(mesh: Mesh) -> tuple[np.ndarray, float]:
    """Discrete harmonic field with value 0 at the bottom, 1 on the
    surface; returns (field, its Dirichlet energy)."""
    psi_tilde = mesh.solve(1.0)
    return psi_tilde, mesh.dirichlet_energy(psi_tilde)


def particular_solution(mesh: Mesh, zeta) -> tuple[np.ndarray, float]:
    """Zero-boundary-data solve of -Lap(psi) = zeta; returns
    (field, its weak-form circulation)."""
    vals = getattr(zeta, "values", zeta)
    psi_part = mesh.solve(0.0, cell_source=vals)
    return psi_part, circulation(mesh, psi_part, vals)


# ---------------------------------------------------------------------------
# multiplier system


@dataclass(frozen=True)
class StreamState:
    """Solved stream function with affine surface data and its functionals.

    ``wave_speed`` and ``stream_offset`` are the multipliers of the affine
    boundary trace: psi = wave_speed * x2 + stream_offset on the surface.
    """

    mesh: Mesh
    psi: np.ndarray
    wave_speed: float
    stream_offset: float
    circulation: float
    impulse: float
    kinetic_energy: float
    psi_tilde: np.ndarray
    psi_part: np.ndarray
    unit_circulation: float

    def shifted_stream(self) -> np.ndarray:
        """psi - wave_speed * x2, constant on the surface."""
        return self.psi - self.wave_speed * self.mesh.x2_nodal

    def to_json_dict(self) -> dict:
        return {
            "lambda1": self.wave_speed,
            "lambda2": self.stream_offset,
            "C": self.circulation,
            "I": self.impulse,
            "kinetic_energy": self.kinetic_energy,
        }


DEGENERACY_RTOL = 1e-10


def solve_multipliers(mesh: Mesh, zeta, mu: float, nu: float) -> StreamState:
    """Solve for the affine surface data that realizes circulation mu and
    impulse nu with vorticity zeta.

    Builds the 2x2 system from the decomposed solves (particular, data x2,
    data 1) and assembles psi by linearity, so the recomputed functionals
    reproduce (mu, nu) to rounding error.  Raises DegenerateDomainError on
    flat or nearly flat domains where the system is singular.
    """
    vals = np.asarray(getattr(zeta, "values", zeta), dtype=float)
    p = mesh.period
    q_mean = mesh.total_area() / p
    psi_tilde, c10 = harmonic_unit(mesh)
    if abs(p * p - p * q_mean * c10) < DEGENERACY_RTOL * p * p:
        raise DegenerateDomainError(
            "multiplier system singular: C(domain,1,0) is at its flat-domain "
            "floor, the affine data cannot match both constraints"
        )
    psi_part, c0 = particular_solution(mesh, vals)
    psi_x2 = mesh.solve(mesh.node_y[-1])  # harmonic lift of the data x2

    c_x2 = circulation(mesh, psi_x2)
    i_x2 = impulse(mesh, psi_x2)
    i_tilde = impulse(mesh, psi_tilde)
    i_part = impulse(mesh, psi_part)

    matrix = np.array([[c_x2, c10], [i_x2, i_tilde]])
    rhs = np.array([mu - c0, nu - i_part])
    lam1, lam2 = np.linalg.solve(matrix, rhs)

    psi = psi_part + lam1 * psi_x2 + lam2 * psi_tilde
    c_val = circulation(mesh, psi, vals)
    i_val = impulse(mesh, psi)
    kinetic = 0.5 * mesh.dirichlet_energy(psi)
    return StreamState(
        mesh=mesh,
        psi=psi,
        wave_speed=float(lam1),
        stream_offset=float(lam2),
        circulation=c_val,
        impulse=i_val,
        kinetic_energy=kinetic,
        psi_tilde=psi_tilde,
        psi_part=psi_part,
        unit_circulation=c10,
    )


def write_field_csv(mesh: Mesh, psi, path) -> None:
    data = np.column_stack([mesh.node_x.ravel(), mesh.node_y.ravel(), psi])
    np.savetxt(path, data, delimiter=",", header="x1,x2,psi", comments="")
