"""Command-line entry point.

Subcommands: solve (run the minimizer), verify (identity and invariant
suite on the configured domain), hypotheses (numeric existence checks),
follower (transport diagnostics around a solved state), sweep (parameter
grids).  Exit codes: 0 success, 1 runtime or check failure, 2
configuration error.
"""

import argparse
import configparser
import json
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .elliptic import DegenerateDomainError, build_mesh, circulation, harmonic_unit, impulse, solve_multipliers, write_field_csv
from .energy import bernoulli_residual, total_energy
from .geometry import GraphSurface, curve_to_csv
from .minimizer import (
    ConfigError,
    VorticitySpec,
    WaveConfig,
    check_energy_level,
    check_parallel_flow_sign,
    default_initial_surface,
    domain_height_cap,
    minimize,
)
from .stability import CflError, StripGrid, follower_run
from .vorticity import VorticityField, coupling_objective, optimal_rearrangement_step

MANIFEST_SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# configuration file handling


def load_config(path) -> tuple[WaveConfig, dict]:
    """Parse the INI run configuration; returns the config and the raw
    section/option echo embedded in manifests."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    if "vorticity" not in parser:
        raise ConfigError("missing [vorticity] section (reference vorticity settings)")
    phys = parser["physical"] if "physical" in parser else {}
    cons = parser["constraints"] if "constraints" in parser else {}
    num = parser["numerics"] if "numerics" in parser else {}
    vort = parser["vorticity"]

    def fget(section, key, default):
        if not section or key not in section:
            return default
        try:
            return float(section[key])
        except ValueError as exc:
            raise ConfigError(f"option {key!r} is not a number: {section[key]!r}") from exc

    kind = vort.get("kind", "").strip()
    if not kind:
        raise ConfigError("missing vorticity kind")
    spec_kwargs = {"kind": kind, "amplitude": fget(vort, "amplitude", 0.0)}
    if kind == "indicator":
        try:
            spec_kwargs["x1_range"] = (float(vort["x1_min"]), float(vort["x1_max"]))
            spec_kwargs["x2_range"] = (float(vort["x2_min"]), float(vort["x2_max"]))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad indicator vorticity options: {exc}") from exc
    if kind == "csv":
        if "path" not in vort:
            raise ConfigError("csv vorticity needs a path option")
        spec_kwargs["path"] = str(Path(path).parent / vort["path"])

    config = WaveConfig(
        period=fget(phys, "period", 2 * np.pi),
        depth=fget(phys, "depth", 1.0),
        gravity=fget(phys, "gravity", 1.0),
        tension=fget(phys, "tension", 0.3),
        tension_exponent=fget(phys, "tension_exponent", 1.0),
        bending=fget(phys, "bending", 0.01),
        circulation_target=fget(cons, "circulation", 0.0),
        impulse_target=fget(cons, "impulse", 0.0),
        vorticity=VorticitySpec(**spec_kwargs),
        surface_samples=int(fget(num, "surface_samples", 48)),
        vertical_cells=int(fget(num, "vertical_cells", 16)),
        initial_amplitude=fget(num, "initial_amplitude", 0.02),
        max_iterations=int(fget(num, "max_iterations", 500)),
        tol_rearrangement=fget(num, "tol_rearrangement", 1e-5),
        tol_bernoulli=fget(num, "tol_bernoulli", 1e-5),
        tol_constraint=fget(num, "tol_constraint", 1e-7),
        step_initial=fget(num, "step_initial", 5e-3),
        step_min=fget(num, "step_min", 1e-12),
        seed=int(fget(num, "seed", 0)),
        verify_tolerance=fget(num, "verify_tolerance", 1e-6),
    )
    config.validate()
    echo = {name: dict(parser[name]) for name in parser.sections()}
    return config, echo


def output_directory(args, echo) -> Path:
    if args.output:
        out = Path(args.output)
    else:
        out = Path(echo.get("output", {}).get("directory", "runs/latest"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def figures_enabled(args, echo) -> bool:
    if getattr(args, "no_figures", False):
        return False
    raw = echo.get("output", {}).get("figures", "true").strip().lower()
    return raw in ("1", "true", "yes", "on")


def write_manifest(out: Path, command: str, echo: dict, outputs: dict, results: dict, checks=None) -> Path:
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "artifact_version": __version__,
        "command": command,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "config": echo,
        "outputs": outputs,
        "results": results,
    }
    if checks is not None:
        manifest["checks"] = checks
        manifest["results"]["passed"] = all(c["ok"] for c in checks)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def validate_manifest(path) -> dict:
    data = json.loads(Path(path).read_text())
    required = {"schema_version", "artifact_version", "command", "created_utc", "config", "outputs", "results"}
    missing = required - set(data)
    if missing:
        raise ValueError(f"manifest misses keys: {sorted(missing)}")
    base = Path(path).parent
    for name, rel in data["outputs"].items():
        if not (base / rel).exists():
            raise ValueError(f"manifest references missing output {name}: {rel}")
    return data


# ---------------------------------------------------------------------------
# solve


def cmd_solve(args) -> int:
    config, echo = load_config(args.config)
    out = output_directory(args, echo)
    result = minimize(config)

    outputs = {}
    result.trace.to_csv(out / "trace.csv")
    outputs["trace"] = "trace.csv"
    curve_to_csv(result.surface.to_curve(), out / "surface.csv")
    outputs["surface"] = "surface.csv"
    write_field_csv(result.state.mesh, result.state.psi, out / "psi.csv")
    outputs["psi"] = "psi.csv"
    res = bernoulli_residual(config, result.surface, result.state)
    np.savetxt(
        out / "bernoulli.csv",
        np.column_stack([res.arc_positions, res.deviations]),
        delimiter=",",
        header="s,residual",
        comments="",
    )
    outputs["bernoulli"] = "bernoulli.csv"
    (out / "state.json").write_text(json.dumps(result.state.to_json_dict(), indent=2) + "\n")
    outputs["state"] = "state.json"
    np.savetxt(out / "zeta.csv", result.zeta.values, delimiter=",", header="value", comments="")
    outputs["zeta"] = "zeta.csv"
    (out / "energy.json").write_text(json.dumps(result.report.to_json_dict(), indent=2) + "\n")
    outputs["energy"] = "energy.json"

    if figures_enabled(args, echo):
        from . import plotting

        plotting.save_surface_plot(result.surface, out / "surface.png")
        outputs["surface_figure"] = "surface.png"
        plotting.save_trace_plot(result.trace, out / "trace.png")
        outputs["trace_figure"] = "trace.png"
        plotting.save_residual_plot(res.arc_positions, res.deviations, out / "bernoulli.png")
        outputs["bernoulli_figure"] = "bernoulli.png"

    results = {
        "termination": result.termination,
        "iterations": result.iterations,
        "energy": result.report.total,
        "bernoulli_residual_l2": result.report.residual_l2,
        "rearrangement_gap": result.trace.gap[-1],
        "fit_residual": result.fit_residual,
        "lambda1": result.state.wave_speed,
        "lambda2": result.state.stream_offset,
        "C": result.state.circulation,
        "I": result.state.impulse,
        "diagnostics": result.diagnostics,
    }
    write_manifest(out, "solve", echo, outputs, results)
    print(f"solve: {result.termination} after {result.iterations} iterations")
    print(f"  energy {result.report.total:.9f}  residual {result.report.residual_l2:.3e}")
    print(f"  outputs in {out}")
    return 0 if result.termination == "converged" else 1


# ---------------------------------------------------------------------------
# verify


def _verify_checks(config: WaveConfig) -> list[dict]:
    tol = config.verify_tolerance
    p = config.period
    surface = default_initial_surface(config)
    mesh = build_mesh(surface, config.vertical_cells)
    q_mean = mesh.total_area() / p
    checks = []

    def record(name, value, target, ok):
        checks.append(
            {"name": name, "value": float(value), "target": float(target), "ok": bool(ok)}
        )

    x2 = mesh.x2_nodal
    c_x2 = circulation(mesh, x2)
    record("circulation_data_x2", c_x2, p, abs(c_x2 - p) <= tol * p)
    i_x2 = impulse(mesh, x2)
    record("impulse_data_x2", i_x2, p * q_mean, abs(i_x2 - p * q_mean) <= tol * p * q_mean)
    psi_tilde, c10 = harmonic_unit(mesh)
    i_tilde = impulse(mesh, psi_tilde)
    record("impulse_unit_data", i_tilde, p, abs(i_tilde - p) <= tol * p)

    profile = config.reference_profile()
    zeta = optimal_rearrangement_step(profile, mesh.cell_centers()[:, 1], mesh.cell_areas)
    psi_part = mesh.solve(0.0, cell_source=zeta.values)
    i_part = impulse(mesh, psi_part)
    record("impulse_zero_data", i_part, 0.0, abs(i_part) <= tol * (1 + p))

    floor = p / config.depth
    flat = config.initial_amplitude == 0.0
    gap = c10 - floor
    if flat:
        record("nondegeneracy_equality", gap, 0.0, abs(gap) <= 1e-10 * floor)
    else:
        record("nondegeneracy_strict", gap, 0.0, gap > 0.0)

    from types import SimpleNamespace

    rest = SimpleNamespace(mesh=mesh, kinetic_energy=0.0)
    energy = total_energy(config, surface, rest).total
    record(
        "energy_floor",
        energy,
        config.energy_floor(),
        energy >= config.energy_floor() - tol * (1 + abs(energy)),
    )

    # rearrangement optimality against explicit enumeration on 6 cells
    import itertools

    from .vorticity import VorticityProfile

    values = np.array([3.0, 2.0, 1.0, 0.5, -0.2, -1.0])
    prof = VorticityProfile(np.arange(7, dtype=float), values)
    phi = np.array([0.3, -0.1, 0.7, 0.2, -0.4, 0.5])
    best = optimal_rearrangement_step(prof, phi, np.ones(6))
    brute = min(float(np.dot(perm, phi)) for perm in itertools.permutations(values))
    obj = coupling_objective(best, phi)
    record("rearrangement_oracle", obj, brute, abs(obj - brute) <= 1e-12)

    if not flat:
        state = solve_multipliers(mesh, zeta, config.circulation_target, config.impulse_target)
        defect = abs(state.circulation - config.circulation_target) + abs(
            state.impulse - config.impulse_target
        )
        scale = 1 + abs(config.circulation_target) + abs(config.impulse_target)
        record("multiplier_round_trip", defect, 0.0, defect <= max(tol, 1e-8) * scale)
    return checks


def cmd_verify(args) -> int:
    config, echo = load_config(args.config)
    out = output_directory(args, echo)
    checks = _verify_checks(config)
    for check in checks:
        flag = "pass" if check["ok"] else "FAIL"
        print(f"{flag}  {check['name']}: value {check['value']:.12g} target {check['target']:.12g}")
    write_manifest(out, "verify", echo, {}, {}, checks=checks)
    failed = [c["name"] for c in checks if not c["ok"]]
    if failed:
        print(f"verify: FAILED checks: {', '.join(failed)}", file=sys.stderr)
        return 1
    print("verify: all checks passed")
    return 0


# ---------------------------------------------------------------------------
# hypotheses


def cmd_hypotheses(args) -> int:
    config, echo = load_config(args.config)
    out = output_directory(args, echo)
    if args.energy_bound <= config.energy_floor():
        raise ConfigError(
            f"energy bound {args.energy_bound} does not exceed the rest energy "
            f"{config.energy_floor():.6f}"
        )
    level = check_energy_level(config, args.energy_bound)
    sign = check_parallel_flow_sign(config)
    cap = domain_height_cap(config, args.energy_bound)
    print(f"clearance: {level.clearance_lhs:.6g} < {level.clearance_rhs:.6g} -> {level.clearance_ok}")
    print(f"loop bound: {level.loop_lhs:.6g} < {level.loop_rhs:.6g} -> {level.loop_ok}")
    print(f"parallel-flow sign rule: {sign}")
    print(f"height cap: {cap:.6g}")
    results = {
        "energy_level": level.to_json_dict(),
        "parallel_flow_sign": sign,
        "height_cap": cap,
    }
    write_manifest(out, "hypotheses", echo, {}, results)
    return 0


# ---------------------------------------------------------------------------
# follower


def _load_state_dir(state_dir: Path):
    manifest = validate_manifest(state_dir / "manifest.json")
    num = manifest["config"].get("numerics", {})
    k = int(float(num.get("vertical_cells", 16)))
    surface_data = np.loadtxt(state_dir / "surface.csv", delimiter=",", skiprows=1)
    period = float(manifest["config"].get("physical", {}).get("period", 2 * np.pi))
    surface = GraphSurface(surface_data[:, 1], period)
    zeta_values = np.loadtxt(state_dir / "zeta.csv", delimiter=",", skiprows=1)
    state_json = json.loads((state_dir / "state.json").read_text())
    mesh = build_mesh(surface, k)
    state = solve_multipliers(mesh, zeta_values, state_json["C"], state_json["I"])
    return surface, state, VorticityField.on_mesh(mesh, zeta_values)


def cmd_follower(args) -> int:
    config, echo = load_config(args.config)
    out = output_directory(args, echo)
    state_dir = Path(args.state)
    if not (state_dir / "manifest.json").exists():
        raise ConfigError(f"no solved state found in {state_dir}")
    surface, state, zeta = _load_state_dir(state_dir)

    nx = args.grid_nx or 2 * state.mesh.m
    height = 1.3 * float(np.max(surface.heights))
    ny = args.grid_ny or max(4, 2 * (int(np.ceil(nx * height / surface.period)) // 2))
    grid = StripGrid(surface.period, height, nx, ny)
    if args.chi == "zero":
        chi0 = np.zeros((grid.ny, grid.nx))
    else:
        chi0 = grid.rasterize(state.mesh, zeta.values)
    trace = follower_run(state, chi0, horizon=args.horizon, dt=args.dt, grid=grid)
    trace.to_csv(out / "follower.csv")
    outputs = {"follower": "follower.csv"}
    if figures_enabled(args, echo):
        from . import plotting

        plotting.save_follower_plot(trace, out / "follower.png")
        outputs["follower_figure"] = "follower.png"
    results = {
        "horizon": args.horizon,
        "dt": args.dt,
        "grid": [grid.nx, grid.ny],
        "l2_drift": trace.max_l2_drift(),
        "final_distribution_drift": float(trace.distribution_drifts[-1]),
    }
    write_manifest(out, "follower", echo, outputs, results)
    print(f"follower: L2 drift {trace.max_l2_drift():.3e} over horizon {args.horizon}")
    return 0


# ---------------------------------------------------------------------------
# sweep


def _sweep_points(echo) -> tuple[str, list[dict]]:
    section = echo.get("sweep")
    if not section:
        raise ConfigError("sweep needs a [sweep] section")
    parameter = section.get("parameter", "").strip()
    if parameter not in ("circulation", "impulse", "circulation_impulse", "vorticity_amplitude"):
        raise ConfigError(f"unknown sweep parameter {parameter!r}")
    values = [float(v) for v in section.get("values", "").split(",") if v.strip()]
    if not values:
        raise ConfigError("sweep needs a values list")
    if parameter == "circulation_impulse":
        values2 = [float(v) for v in section.get("values2", "").split(",") if v.strip()]
        if not values2:
            raise ConfigError("circulation_impulse sweep needs values2")
        return parameter, [
            {"circulation": a, "impulse": b} for a in values for b in values2
        ]
    return parameter, [{parameter: v} for v in values]


def cmd_sweep(args) -> int:
    config, echo = load_config(args.config)
    out = output_directory(args, echo)
    parameter, points = _sweep_points(echo)
    rows = []
    outputs = {}
    for idx, point in enumerate(points):
        label = f"point_{idx:04d}"
        sub = out / label
        sub.mkdir(parents=True, exist_ok=True)
        overrides = {}
        if "circulation" in point:
            overrides["circulation_target"] = point["circulation"]
        if "impulse" in point:
            overrides["impulse_target"] = point["impulse"]
        if "vorticity_amplitude" in point:
            overrides["vorticity"] = replace(
                config.vorticity, amplitude=point["vorticity_amplitude"]
            )
        run_config = replace(config, **overrides)
        row = dict(point)
        row["value"] = next(iter(point.values()))
        try:
            result = minimize(run_config)
            result.trace.to_csv(sub / "trace.csv")
            row.update(
                status="ok",
                termination=result.termination,
                energy=result.report.total,
                lambda1=result.state.wave_speed,
                residual=result.report.residual_l2,
            )
        except Exception as exc:  # per-point failures recorded, sweep continues
            row.update(status="failed", error=str(exc))
        rows.append(row)
        outputs[label] = f"{label}/trace.csv" if row["status"] == "ok" else f"{label}"

    header = sorted({key for row in rows for key in row})
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(row.get(key, "")) for key in header))
    (out / "summary.csv").write_text("\n".join(lines) + "\n")
    outputs["summary"] = "summary.csv"
    if figures_enabled(args, echo):
        from . import plotting

        plotting.save_sweep_plot(rows, out / "sweep.png")
        outputs["sweep_figure"] = "sweep.png"
    n_ok = sum(1 for r in rows if r["status"] == "ok")
    write_manifest(out, "sweep", echo, outputs, {"parameter": parameter, "points": len(rows), "succeeded": n_ok})
    print(f"sweep: {n_ok}/{len(rows)} points succeeded")
    return 0


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vorwave",
        description="Periodic travelling water waves with vorticity by constrained energy minimization",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="run configuration file (INI format)")
        p.add_argument("--output", help="output directory (overrides [output] directory)")
        p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    p_solve = sub.add_parser("solve", help="run the constrained minimization")
    common(p_solve)
    p_solve.set_defaults(func=cmd_solve)

    p_verify = sub.add_parser("verify", help="run the identity/invariant suite")
    common(p_verify)
    p_verify.set_defaults(func=cmd_verify)

    p_hyp = sub.add_parser("hypotheses", help="numeric existence-hypothesis report")
    common(p_hyp)
    p_hyp.add_argument("--energy-bound", type=float, required=True, help="energy level to certify")
    p_hyp.set_defaults(func=cmd_hypotheses)

    p_fol = sub.add_parser("follower", help="transport diagnostics around a solved state")
    common(p_fol)
    p_fol.add_argument("--state", required=True, help="directory written by solve")
    p_fol.add_argument("--horizon", type=float, default=1.0)
    p_fol.add_argument("--dt", type=float, default=0.02)
    p_fol.add_argument("--chi", choices=("zeta", "zero"), default="zeta")
    p_fol.add_argument("--grid-nx", type=int, default=None)
    p_fol.add_argument("--grid-ny", type=int, default=None)
    p_fol.set_defaults(func=cmd_follower)

    p_sweep = sub.add_parser("sweep", help="run minimize over a parameter grid")
    common(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (CflError, DegenerateDomainError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure of any other kind
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
