"""Constrained minimization driver.

Alternates three blocks: the linear multiplier solve that enforces the
circulation and impulse constraints, the monotone-coupling rearrangement
step for the vorticity, and an area-preserving descent of the surface
along the Bernoulli residual, with a backtracking line search that only
accepts energy decrease.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .elliptic import DegenerateDomainError, Mesh, StreamState, build_mesh, solve_multipliers
from .energy import (
    EnergyReport,
    bernoulli_residual,
    rest_energy_floor,
    surface_length_and_bending,
    total_energy,
)
from .fourier import spectral_derivative
from .geometry import GraphSurface, chord_arc_area
from .vorticity import (
    VorticityField,
    VorticityProfile,
    coupling_objective,
    optimal_rearrangement_step,
    profile_from_csv,
    vorticity_function_fit,
)

TWO_PI = 2.0 * np.pi


class ConfigError(ValueError):
    """Configuration violates the model assumptions or the file schema."""


# ---------------------------------------------------------------------------
# reference vorticity specification


@dataclass(frozen=True)
class VorticitySpec:
    """Reference vorticity on the flat rectangle, as configured.

    kinds: ``constant`` (value = amplitude), ``indicator`` (amplitude on an
    axis-aligned subrectangle), ``csv`` (a stored profile step table).
    """

    kind: str
    amplitude: float = 0.0
    x1_range: tuple[float, float] | None = None
    x2_range: tuple[float, float] | None = None
    path: str | None = None

    def build_profile(self, period: float, depth: float) -> VorticityProfile:
        total = period * depth
        if self.kind == "constant":
            return VorticityProfile.constant(self.amplitude, total)
        if self.kind == "indicator":
            if self.x1_range is None or self.x2_range is None:
                raise ConfigError("indicator vorticity needs x1_range and x2_range")
            w = min(self.x1_range[1], period) - max(self.x1_range[0], 0.0)
            h = min(self.x2_range[1], depth) - max(self.x2_range[0], 0.0)
            if w <= 0 or h <= 0:
                raise ConfigError("indicator rectangle lies outside the domain")
            area = w * h
            if self.amplitude == 0.0 or area >= total:
                return VorticityProfile.constant(self.amplitude, total)
            if self.amplitude > 0:
                cuts = np.array([0.0, area, total])
                values = np.array([self.amplitude, 0.0])
            else:
                cuts = np.array([0.0, total - area, total])
                values = np.array([0.0, self.amplitude])
            return VorticityProfile(cuts, values)
        if self.kind == "csv":
            if not self.path:
                raise ConfigError("csv vorticity needs a path")
            profile = profile_from_csv(self.path)
            if abs(profile.total_area - total) > 1e-8 * total:
                raise ConfigError("stored profile does not cover the domain area")
            return profile
        raise ConfigError(f"unknown vorticity kind {self.kind!r}")

    def sign_class(self, period: float, depth: float, tol: float = 1e-14) -> str:
        values = self.build_profile(period, depth).values
        has_pos = bool(np.any(values > tol))
        has_neg = bool(np.any(values < -tol))
        if has_pos and has_neg:
            return "mixed"
        if has_pos:
            return "nonnegative"
        if has_neg:
            return "nonpositive"
        return "zero"


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class WaveConfig:
    """All physical, constraint and numerical parameters of a run."""

    period: float = TWO_PI
    depth: float = 1.0
    gravity: float = 1.0
    tension: float = 0.3
    tension_exponent: float = 1.0
    bending: float = 0.01
    circulation_target: float = 0.0  # mu
    impulse_target: float = 0.0  # nu
    vorticity: VorticitySpec = field(default_factory=lambda: VorticitySpec("constant", 0.0))
    surface_samples: int = 48
    vertical_cells: int = 16
    initial_amplitude: float = 0.02
    max_iterations: int = 500
    tol_rearrangement: float = 1e-5
    tol_bernoulli: float = 1e-5
    tol_constraint: float = 1e-7
    step_initial: float = 5e-3
    step_min: float = 1e-12
    flat_collapse_tol: float = 1e-4
    seed: int = 0
    verify_tolerance: float = 1e-6

    def validate(self) -> None:
        for name in ("period", "depth", "gravity", "tension", "bending"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.tension_exponent < 1.0:
            raise ConfigError("tension_exponent must be at least 1")
        if self.surface_samples < 16:
            raise ConfigError("need at least 16 surface samples")
        if self.vertical_cells < 4:
            raise ConfigError("need at least 4 vertical cells")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be positive")

    def reference_profile(self) -> VorticityProfile:
        return self.vorticity.build_profile(self.period, self.depth)

    def energy_floor(self) -> float:
        return rest_energy_floor(self, self.period, self.depth)


# ---------------------------------------------------------------------------
# hypothesis checks

SIGN_SATISFIED = "Satisfied"
SIGN_VIOLATED = "Violated"
SIGN_INAPPLICABLE = "Inapplicable"


def check_parallel_flow_sign(config: WaveConfig) -> str:
    """Sign rule excluding parallel flows: (nu - Q mu) zeta_ref <= 0 for
    one-signed reference vorticity, nu - Q mu != 0 when it vanishes."""
    sign_class = config.vorticity.sign_class(config.period, config.depth)
    gap = config.impulse_target - config.depth * config.circulation_target
    if sign_class == "mixed":
        return SIGN_INAPPLICABLE
    if sign_class == "zero":
        return SIGN_SATISFIED if gap != 0.0 else SIGN_VIOLATED
    signed = gap if sign_class == "nonnegative" else -gap
    return SIGN_SATISFIED if signed <= 0.0 else SIGN_VIOLATED


@dataclass(frozen=True)
class EnergyLevelReport:
    """Numeric check of the two surface bounds at a given energy level:
    the chord-arc clearance above the bottom and the bending margin that
    rules out loops."""

    energy_bound: float
    clearance_lhs: float
    clearance_rhs: float
    clearance_ok: bool
    loop_lhs: float
    loop_rhs: float
    loop_ok: bool

    @property
    def ok(self) -> bool:
        return self.clearance_ok and self.loop_ok

    def to_json_dict(self) -> dict:
        return {
            "energy_bound": self.energy_bound,
            "clearance_lhs": self.clearance_lhs,
            "clearance_rhs": self.clearance_rhs,
            "clearance_ok": self.clearance_ok,
            "loop_lhs": self.loop_lhs,
            "loop_rhs": self.loop_rhs,
            "loop_ok": self.loop_ok,
            "ok": self.ok,
        }


def check_energy_level(config: WaveConfig, energy_bound: float) -> EnergyLevelReport:
    """Evaluate both existence-hypothesis inequalities at an energy level
    above the rest-state floor."""
    margin = energy_bound - config.energy_floor()
    if margin <= 0:
        raise ValueError("energy bound must exceed the flat rest energy")
    p, q = config.period, config.depth
    excess_len = (margin / config.tension) ** (1.0 / config.tension_exponent)
    clearance_lhs = p / TWO_PI * chord_arc_area(TWO_PI / p * excess_len + TWO_PI)
    loop_lhs = margin * excess_len
    loop_rhs = config.bending * np.pi**2
    return EnergyLevelReport(
        energy_bound=energy_bound,
        clearance_lhs=float(clearance_lhs),
        clearance_rhs=q,
        clearance_ok=bool(clearance_lhs < q),
        loop_lhs=float(loop_lhs),
        loop_rhs=float(loop_rhs),
        loop_ok=bool(loop_lhs < loop_rhs),
    )


def domain_height_cap(config: WaveConfig, energy_bound: float) -> float:
    """Height every sub-level surface stays below: a curve of length l
    cannot rise more than l/2 above its mean-depth baseline."""
    margin = energy_bound - config.energy_floor()
    if margin <= 0:
        raise ValueError("energy bound must exceed the flat rest energy")
    excess_len = (margin / config.tension) ** (1.0 / config.tension_exponent)
    return config.depth + 0.5 * (config.period + excess_len)


# ---------------------------------------------------------------------------
# minimization driver

TERMINATED_CONVERGED = "converged"
TERMINATED_ITERATION_CAP = "iteration_cap"
TERMINATED_CRITICAL_POINT = "critical_point_suspected"
TERMINATED_DEGENERATE = "degenerate_domain"


@dataclass
class IterationTrace:
    iteration: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    gap: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    circulation: list = field(default_factory=list)
    impulse: list = field(default_factory=list)
    wave_speed: list = field(default_factory=list)
    stream_offset: list = field(default_factory=list)

    def append(self, it, energy, gap, residual, state: StreamState):
        self.iteration.append(it)
        self.energy.append(energy)
        self.gap.append(gap)
        self.residual.append(residual)
        self.circulation.append(state.circulation)
        self.impulse.append(state.impulse)
        self.wave_speed.append(state.wave_speed)
        self.stream_offset.append(state.stream_offset)

    def to_csv(self, path) -> None:
        data = np.column_stack(
            [
                self.iteration,
                self.energy,
                self.gap,
                self.residual,
                self.circulation,
                self.impulse,
                self.wave_speed,
                self.stream_offset,
            ]
        )
        header = "iter,energy,gap,residual,C,I,lambda1,lambda2"
        np.savetxt(path, data, delimiter=",", header=header, comments="")


@dataclass(frozen=True)
class MinimizeResult:
    surface: GraphSurface
    zeta: VorticityField
    state: StreamState
    report: EnergyReport
    trace: IterationTrace
    termination: str
    iterations: int
    fit_residual: float
    diagnostics: dict


def default_initial_surface(config: WaveConfig) -> GraphSurface:
    x = np.arange(config.surface_samples) * config.period / config.surface_samples
    h = config.depth + config.initial_amplitude * np.cos(TWO_PI * x / config.period)
    return GraphSurface(h * (config.depth / h.mean()), config.period)


def constraints_from_seed_state(
    config: WaveConfig, amplitude: float, boundary_value: float
) -> tuple[float, float]:
    """Circulation and impulse of a feasible seed state: a cosine surface
    of the given amplitude, constant boundary data, and the reference
    vorticity realized with the largest values at the bottom.

    Using these as (mu, nu) guarantees the constraint set is non-empty and
    keeps the minimizer in the small-amplitude regime.
    """
    from .elliptic import circulation, impulse  # local alias for readability

    x = np.arange(config.surface_samples) * config.period / config.surface_samples
    h = config.depth + amplitude * np.cos(TWO_PI * x / config.period)
    seed = _rescaled(h, config.depth, config.period)
    mesh = build_mesh(seed, config.vertical_cells)
    profile = config.reference_profile()
    zeta = optimal_rearrangement_step(profile, mesh.cell_centers()[:, 1], mesh.cell_areas)
    psi = mesh.solve(np.full(mesh.m, boundary_value), cell_source=zeta.values)
    return circulation(mesh, psi, zeta), impulse(mesh, psi)


def _cell_phi(mesh: Mesh, state: StreamState) -> np.ndarray:
    """psi - wave_speed * x2 averaged over cell corners."""
    return state.shifted_stream()[mesh.cell_nodes].mean(axis=1)


def _transfer_zeta(values: np.ndarray, mesh: Mesh) -> VorticityField:
    """Carry cell values to a re-meshed domain by cell index."""
    return VorticityField(values.copy(), mesh.cell_areas)


def _rescaled(heights: np.ndarray, depth: float, period: float) -> GraphSurface:
    return GraphSurface(heights * (depth / heights.mean()), period)


def _preconditioned_direction(v: np.ndarray, weights: np.ndarray, config: WaveConfig, stretch: float) -> np.ndarray:
    """Damp the descent direction mode by mode with the local second
    variation of the surface energy, g + stretch w^2 + 2 E w^4.

    Plain gradient flow of the Bernoulli deviation is stiff: the bending
    term scales like the fourth power of the wavenumber.  Dividing by the
    symmetric positive factor keeps a descent direction while letting the
    low modes move at O(1) steps.
    """
    n = v.shape[0]
    omega = 2.0 * np.pi * np.fft.rfftfreq(n, d=config.period / n)
    damp = config.gravity + max(stretch, 0.0) * omega**2 + 2.0 * config.bending * omega**4
    out = np.fft.irfft(np.fft.rfft(v) / damp, n=n)
    out -= np.sum(weights * out) / np.sum(weights)
    return out


def minimize(
    config: WaveConfig,
    initial_surface: GraphSurface | None = None,
    initial_zeta: np.ndarray | None = None,
) -> MinimizeResult:
    """Run the alternating minimization until the rearrangement gap, the
    Bernoulli residual and the constraint defect are below tolerance, or
    the iteration cap is reached.
    """
    config.validate()
    profile = config.reference_profile()
    mu, nu = config.circulation_target, config.impulse_target
    sign_verdict = check_parallel_flow_sign(config)
    diagnostics = {"parallel_flow_sign": sign_verdict, "rearrangement_damped_steps": 0}

    surface = initial_surface or default_initial_surface(config)
    surface = _rescaled(surface.heights, config.depth, config.period)
    mesh = build_mesh(surface, config.vertical_cells)
    if initial_zeta is None:
        zeta = optimal_rearrangement_step(profile, mesh.cell_centers()[:, 1], mesh.cell_areas)
    else:
        zeta = VorticityField(np.asarray(initial_zeta, dtype=float), mesh.cell_areas)

    trace = IterationTrace()
    try:
        state = solve_multipliers(mesh, zeta, mu, nu)
    except DegenerateDomainError:
        raise ConfigError("initial surface is flat; start from a perturbed one")
    report = total_energy(config, surface, state)

    level = check_energy_level(config, report.total)
    diagnostics["energy_level_check"] = level.to_json_dict()
    if not level.ok:
        raise ConfigError(
            "existence hypotheses fail at the initial energy level; "
            "increase tension or bending, or start closer to rest"
        )
    diagnostics["height_cap"] = domain_height_cap(config, report.total)

    step = config.step_initial
    termination = TERMINATED_ITERATION_CAP
    iterations_done = config.max_iterations
    scale = 1.0 + abs(mu) + abs(nu)

    for it in range(config.max_iterations):
        # vorticity block: monotone coupling against the current potential
        phi = _cell_phi(mesh, state)
        zeta_best = optimal_rearrangement_step(profile, phi, mesh.cell_areas)
        gap = coupling_objective(zeta, phi) - coupling_objective(zeta_best, phi)
        if gap > 1e-14 * (1.0 + abs(coupling_objective(zeta, phi))):
            trial = solve_multipliers(mesh, zeta_best, mu, nu)
            if trial.kinetic_energy <= state.kinetic_energy + 1e-12 * (1 + state.kinetic_energy):
                zeta, state = zeta_best, trial
            else:
                # damped convex step: the kinetic energy is an exact
                # quadratic along (1-t) zeta + t zeta_best
                quad = trial.kinetic_energy - state.kinetic_energy + gap
                t_opt = min(1.0, gap / (2.0 * quad)) if quad > 0 else 1.0
                mixed = (1 - t_opt) * zeta.values + t_opt * zeta_best.values
                zeta = VorticityField(mixed, mesh.cell_areas)
                state = solve_multipliers(mesh, zeta, mu, nu)
                diagnostics["rearrangement_damped_steps"] += 1
            report = total_energy(config, surface, state)

        residual = bernoulli_residual(config, surface, state)
        defect = abs(state.circulation - mu) + abs(state.impulse - nu)
        trace.append(it, report.total, gap, residual.l2, state)

        # approaching the excluded flat domain outranks the residual test:
        # near the degeneracy the multiplier solve is about to break down
        if np.max(np.abs(surface.heights - config.depth)) < config.flat_collapse_tol * config.depth:
            termination = TERMINATED_DEGENERATE
            iterations_done = it + 1
            break

        if (
            gap < config.tol_rearrangement
            and residual.l2 < config.tol_bernoulli
            and defect < config.tol_constraint * scale
        ):
            termination = TERMINATED_CONVERGED
            iterations_done = it + 1
            break

        # surface block: descend the Bernoulli deviation, keep the area
        v = -residual.deviations
        v -= np.sum(residual.arc_weights * v) / np.sum(residual.arc_weights)
        ell, _ = surface_length_and_bending(surface)
        stretch = (
            config.tension_exponent
            * config.tension
            * max(ell - config.period, 0.0) ** (config.tension_exponent - 1.0)
        )
        v = _preconditioned_direction(v, residual.arc_weights, config, stretch)
        slope = np.sqrt(1.0 + spectral_derivative(surface.heights, config.period, 1) ** 2)
        dx = config.period / mesh.m
        # first-order decrease of the energy along v stays positive because
        # the preconditioner is symmetric positive definite
        decrease_rate = float(np.sum(residual.arc_weights * v * (-residual.deviations)) * dx)
        if decrease_rate <= 0.0:
            decrease_rate = float(np.sum(residual.arc_weights * v**2) * dx)

        accepted = None
        while step >= config.step_min:
            h_trial = surface.heights + step * v * slope
            if np.any(h_trial <= 0.05 * config.depth):
                step *= 0.5
                continue
            trial_surface = _rescaled(h_trial, config.depth, config.period)
            trial_mesh = build_mesh(trial_surface, config.vertical_cells)
            trial_zeta = _transfer_zeta(zeta.values, trial_mesh)
            try:
                trial_state = solve_multipliers(trial_mesh, trial_zeta, mu, nu)
            except DegenerateDomainError:
                step *= 0.5
                continue
            trial_report = total_energy(config, trial_surface, trial_state)
            if trial_report.total <= report.total - 1e-4 * step * decrease_rate:
                accepted = (trial_surface, trial_mesh, trial_zeta, trial_state, trial_report)
                break
            step *= 0.5

        if accepted is None:
            termination = TERMINATED_CRITICAL_POINT
            iterations_done = it + 1
            break
        surface, mesh, zeta, state, report = accepted
        step = min(step * 1.5, 10.0 * config.step_initial)

    fit = vorticity_function_fit(zeta, _cell_phi(mesh, state))
    final_residual = bernoulli_residual(config, surface, state)
    report = replace(
        report, residual_max=final_residual.max_abs, residual_l2=final_residual.l2
    )
    return MinimizeResult(
        surface=surface,
        zeta=zeta,
        state=state,
        report=report,
        trace=trace,
        termination=termination,
        iterations=iterations_done,
        fit_residual=fit.residual,
        diagnostics=diagnostics,
    )
