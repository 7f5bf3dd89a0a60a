"""Rearrangement-class algebra for cell-valued vorticity fields.

A field's distribution is summarized by its decreasing rearrangement, a
right-continuous decreasing step function on (0, total area).  The class
constraint of the solver is "same decreasing rearrangement as the
reference vorticity"; its weak closure is tested through integral
majorization.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class VorticityProfile:
    """Right-continuous decreasing step function on (0, total_area).

    ``values[i]`` holds on [cuts[i], cuts[i+1]).
    """

    cuts: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        cuts = np.asarray(self.cuts, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if cuts.ndim != 1 or values.ndim != 1 or cuts.shape[0] != values.shape[0] + 1:
            raise ValueError("need len(cuts) == len(values) + 1")
        if cuts[0] != 0.0 or np.any(np.diff(cuts) <= 0):
            raise ValueError("cuts must increase from 0")
        if np.any(np.diff(values) >= 0):
            raise ValueError("step values must be strictly decreasing")
        object.__setattr__(self, "cuts", cuts)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, value: float, total_area: float) -> "VorticityProfile":
        return cls(np.array([0.0, total_area]), np.array([float(value)]))

    @property
    def total_area(self) -> float:
        return float(self.cuts[-1])

    def widths(self) -> np.ndarray:
        return np.diff(self.cuts)

    def mass(self) -> float:
        return float(np.sum(self.values * self.widths()))

    def cumulative(self) -> np.ndarray:
        """Integral of the profile from 0 to each cut."""
        return np.concatenate([[0.0], np.cumsum(self.values * self.widths())])

    def integral_to(self, s) -> np.ndarray:
        """int_0^s of the profile, piecewise linear in s, exact."""
        return np.interp(np.asarray(s, dtype=float), self.cuts, self.cumulative())

    def evaluate(self, s) -> np.ndarray:
        idx = np.clip(
            np.searchsorted(self.cuts, np.asarray(s, dtype=float), side="right") - 1,
            0,
            len(self.values) - 1,
        )
        return self.values[idx]

    def l2_norm_sq(self) -> float:
        return float(np.sum(self.values**2 * self.widths()))


@dataclass(frozen=True)
class VorticityField:
    """Cell-wise constant vorticity with the cell areas of its mesh."""

    values: np.ndarray
    areas: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        areas = np.asarray(self.areas, dtype=float)
        if values.shape != areas.shape or values.ndim != 1:
            raise ValueError("values and areas must be matching 1-D arrays")
        if np.any(areas <= 0):
            raise ValueError("cell areas must be positive")
        if not np.all(np.isfinite(values)):
            raise ValueError("vorticity values must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "areas", areas)

    @classmethod
    def on_mesh(cls, mesh, values) -> "VorticityField":
        return cls(np.asarray(values, dtype=float), mesh.cell_areas)

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    def weighted_norm(self, p: int = 2) -> float:
        return float(np.sum(np.abs(self.values) ** p * self.areas) ** (1.0 / p))


def _merge_equal_steps(cuts: np.ndarray, values: np.ndarray) -> VorticityProfile:
    scale = 1.0 + np.max(np.abs(values), initial=0.0)
    keep = np.concatenate([[True], np.abs(np.diff(values)) > 1e-12 * scale])
    starts = np.flatnonzero(keep)
    new_cuts = np.concatenate([cuts[starts], [cuts[-1]]])
    return VorticityProfile(new_cuts, values[starts])


def decreasing_rearrangement(field: VorticityField) -> VorticityProfile:
    """Sort cell values in decreasing order and accumulate their areas."""
    order = np.argsort(-field.values, kind="stable")
    vals = field.values[order]
    cuts = np.concatenate([[0.0], np.cumsum(field.areas[order])])
    return _merge_equal_steps(cuts, vals)


def profile_distance(p1: VorticityProfile, p2: VorticityProfile) -> float:
    """L2 distance between two step functions on the same interval."""
    grid = np.union1d(p1.cuts, p2.cuts)
    mids = 0.5 * (grid[1:] + grid[:-1])
    diff = p1.evaluate(mids) - p2.evaluate(mids)
    return float(np.sqrt(np.sum(diff**2 * np.diff(grid))))


def is_rearrangement(
    f1: VorticityField,
    f2: VorticityField,
    value_tol: float = 1e-10,
    area_tol: float = 1e-10,
) -> bool:
    """True when the two fields share their decreasing rearrangement."""
    if abs(f1.total_area - f2.total_area) > area_tol * (1.0 + f1.total_area):
        raise ValueError("fields live on different total areas")
    p1 = decreasing_rearrangement(f1)
    p2 = decreasing_rearrangement(f2)
    grid = np.union1d(p1.cuts, p2.cuts)
    widths = np.diff(grid)
    mids = 0.5 * (grid[1:] + grid[:-1])
    wide = widths > area_tol
    return bool(np.all(np.abs(p1.evaluate(mids[wide]) - p2.evaluate(mids[wide])) <= value_tol))


def weak_closure_leq(g: VorticityProfile, big: VorticityProfile, tol: float = None) -> bool:
    """Integral majorization: int_0^s g <= int_0^s big at every breakpoint
    and over the whole interval.  Both profiles must share the domain."""
    if abs(g.total_area - big.total_area) > 1e-8 * (1.0 + g.total_area):
        raise ValueError("profiles must live on the same total area")
    if tol is None:
        scale = max(abs(g.mass()), abs(big.mass()), g.total_area)
        tol = 1e-10 * (1.0 + scale)
    grid = np.union1d(g.cuts, big.cuts)
    return bool(np.all(g.integral_to(grid) <= big.integral_to(grid) + tol))


def optimal_rearrangement_step(
    profile: VorticityProfile, phi, areas
) -> VorticityField:
    """Realization of ``profile`` minimizing int h*phi over the class.

    Cells sorted by phi ascending consume the profile from its largest
    values (largest vorticity on smallest phi); ties in phi break by cell
    index.  On a cell straddling a profile step the consumed mass is
    averaged, which realizes the monotone coupling of the weak closure
    exactly in the discrete measure.
    """
    phi = np.asarray(phi, dtype=float)
    areas = np.asarray(areas, dtype=float)
    total = float(areas.sum())
    if abs(total - profile.total_area) > 1e-8 * (1.0 + profile.total_area):
        raise ValueError("cell areas do not fill the profile domain")
    order = np.argsort(phi, kind="stable")
    edges = np.concatenate([[0.0], np.cumsum(areas[order])])
    edges[-1] = profile.total_area  # guard rounding in the last edge
    integrals = profile.integral_to(edges)
    assigned = np.diff(integrals) / areas[order]
    values = np.empty_like(assigned)
    values[order] = assigned
    return VorticityField(values, areas)


def coupling_objective(field: VorticityField, phi) -> float:
    """int zeta * phi over the cells."""
    return float(np.sum(field.values * np.asarray(phi, dtype=float) * field.areas))


# ---------------------------------------------------------------------------
# monotone vorticity-function fitting


@dataclass(frozen=True)
class MonotoneFit:
    """Non-increasing step map fitted through (phi, zeta) cell pairs."""

    abscissa: np.ndarray  # pooled phi values, ascending
    levels: np.ndarray  # fitted values, non-increasing
    fitted: np.ndarray  # per input cell
    residual: float  # area-weighted L2 error

    def __call__(self, t) -> np.ndarray:
        idx = np.clip(
            np.searchsorted(self.abscissa, np.asarray(t, dtype=float), side="right") - 1,
            0,
            len(self.levels) - 1,
        )
        return self.levels[idx]


def _pava_nonincreasing(y: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted pool-adjacent-violators for a non-increasing fit."""
    means = []
    weights = []
    counts = []
    for yi, wi in zip(y, w):
        means.append(yi)
        weights.append(wi)
        counts.append(1)
        while len(means) >= 2 and means[-1] > means[-2]:
            w2 = weights.pop()
            m2 = means.pop()
            c2 = counts.pop()
            w1 = weights[-1]
            means[-1] = (w1 * means[-1] + w2 * m2) / (w1 + w2)
            weights[-1] += w2
            counts[-1] += c2
    return np.repeat(means, counts)


def vorticity_function_fit(zeta: VorticityField, phi) -> MonotoneFit:
    """Area-weighted isotonic (decreasing) regression of zeta against phi.

    The residual vanishes exactly when zeta is a decreasing function of
    phi.  Cells with equal phi are pooled first, since a function of phi
    must be single-valued there.
    """
    phi = np.asarray(phi, dtype=float)
    uniq, inverse = np.unique(phi, return_inverse=True)
    w = np.zeros(len(uniq))
    yw = np.zeros(len(uniq))
    np.add.at(w, inverse, zeta.areas)
    np.add.at(yw, inverse, zeta.areas * zeta.values)
    pooled = yw / w
    levels = _pava_nonincreasing(pooled, w)
    fitted = levels[inverse]
    residual = float(np.sqrt(np.sum(zeta.areas * (zeta.values - fitted) ** 2)))
    return MonotoneFit(abscissa=uniq, levels=levels, fitted=fitted, residual=residual)


# ---------------------------------------------------------------------------
# serialization and configuration forms


def profile_to_csv(profile: VorticityProfile, path) -> None:
    """Step table: each row gives the right endpoint of a step and the
    value the profile takes on it."""
    data = np.column_stack([profile.cuts[1:], profile.values])
    np.savetxt(path, data, delimiter=",", header="s,g", comments="")


def profile_from_csv(path) -> VorticityProfile:
    data = np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1))
    cuts = np.concatenate([[0.0], data[:, 0]])
    return VorticityProfile(cuts, data[:, 1])
