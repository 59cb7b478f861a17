"""Command line front end.

Subcommands:
  run         simulate a scenario's initial conditions, write CSV/JSON/SVG
  verify      grid and Monte-Carlo audits of the density construction
  compare-nf  density controller vs navigation-function baseline
  arm         task-space mapping, reference planning and arm tracking
  sweep       parameter grid of Monte-Carlo convergence runs

Output directory: --out, else $DENSNAV_OUT/<scenario-name>, else
./out/<scenario-name>.  Exit code 0 on success, 2 on validation or audit
failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import output
from .baseline_nf import outcome_counts, run_comparison, world_environment
from .dynamics import (
    IntegratorConfig,
    Outcome,
    generate_reference,
    map_task_obstacle_to_joint_space,
    simulate_arm,
    simulate_batch,
)
from .errors import DensnavError
from .geometry import Environment, validate_environment
from .scenario import (
    Scenario,
    build_arm,
    build_controller,
    build_environment,
    build_integrator,
    build_params,
    build_sphere_world,
    controller_kind,
    load_scenario,
    sample_initial_conditions,
    scenario_hash,
)
from .verify import (
    VerificationReport,
    convergence_monte_carlo,
    divergence_check,
    divergence_field,
    divergence_sweep,
    gradient_audit,
    occupancy_audit,
)


def _out_dir(args, sc: Scenario) -> Path:
    if args.out:
        d = Path(args.out)
    else:
        base = os.environ.get("DENSNAV_OUT", "out")
        d = Path(base) / sc.name
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load(args) -> tuple[Scenario, str]:
    sc = load_scenario(args.scenario)
    return sc, scenario_hash(args.scenario)


def _worker_run(payload):
    """Simulate one chunk of runs; executed in a worker process.

    Per-run noise streams are derived from (master_seed, run_index), so the
    chunking cannot change any run's bytes.
    """
    from .scenario import parse_scenario

    text, seed, dt_override, indices, ics = payload
    sc = parse_scenario(text)
    env = build_environment(sc)
    params = build_params(sc)
    ctrl = build_controller(sc)
    integ = build_integrator(sc, dt_override)
    return simulate_batch(
        env, params, ctrl, integ, np.asarray(ics, dtype=float),
        controller=controller_kind(sc), master_seed=seed, run_indices=list(indices),
    )


def cmd_run(args) -> int:
    t0 = time.perf_counter()
    sc, file_hash = _load(args)
    env = build_environment(sc)
    violations = validate_environment(env, seed=sc.seed)
    if violations:
        for v in violations:
            print(f"environment check failed: {v}", file=sys.stderr)
        return 2
    params = build_params(sc)
    ctrl = build_controller(sc)
    integ = build_integrator(sc, args.dt_override)
    seed = sc.seed if args.seed is None else args.seed
    ics = sample_initial_conditions(sc, env, seed=seed)

    if args.jobs > 1:
        text = Path(args.scenario).read_text(encoding="utf-8")
        chunks = np.array_split(np.arange(len(ics)), args.jobs)
        payloads = [
            (text, seed, args.dt_override, chunk.tolist(), ics[chunk].tolist())
            for chunk in chunks if len(chunk)
        ]
        trajs = []
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for part in pool.map(_worker_run, payloads):
                trajs.extend(part)
        trajs.sort(key=lambda t: t.run_index)
    else:
        trajs = simulate_batch(
            env, params, ctrl, integ, ics, controller=controller_kind(sc),
            master_seed=seed, run_indices=list(range(len(ics))),
        )

    out = _out_dir(args, sc)
    for tr in trajs:
        output.write_trajectory_csv(out / f"run_{tr.run_index:04d}.csv", tr, env)
    summary = output.run_summary(sc.name, file_hash, seed, trajs)
    output.write_json(out / "summary.json", summary)
    if not args.no_svg:
        output.environment_svg(out / "overlay.svg", env, params, trajs)
    output.write_run_meta(out / "run_meta.json", time.perf_counter() - t0,
                          {"command": "run", "jobs": args.jobs})

    counts = outcome_counts(trajs)
    for name, cnt in sorted(counts.items()):
        if cnt:
            print(f"{name}: {cnt}/{len(trajs)}")
    print(f"unsafe occupancy total: {summary['total_unsafe_occupancy']:.6g} s")
    print(f"wrote {out}")
    return 0


def cmd_verify(args) -> int:
    t0 = time.perf_counter()
    sc, _ = _load(args)
    env = build_environment(sc)
    params = build_params(sc)
    if args.alpha is not None:
        import dataclasses

        params = dataclasses.replace(params, alpha=args.alpha)

    report = VerificationReport()
    report.environment_violations = validate_environment(env, seed=sc.seed)
    out = _out_dir(args, sc)
    fld = divergence_field(env, params, resolution=args.grid)
    report.divergence = divergence_check(env, params, field=fld)
    if not args.no_svg and env.dimension == 2:
        output.divergence_svg(out / "divergence.svg", fld, env,
                              resolution_note=f"grid {args.grid}, alpha {params.alpha:g}")
    if args.alpha_sweep:
        alphas = [float(a) for a in args.alpha_sweep.split(",")]
        report.alpha_sweep = divergence_sweep(env, params, alphas, resolution=args.grid)
    report.gradient = gradient_audit(env, params, n_points=args.points, seed=sc.seed)
    if args.runs > 0:
        ctrl = build_controller(sc)
        integ = build_integrator(sc, args.dt_override)
        stats, trajs = convergence_monte_carlo(
            env, params, ctrl, integ, n_runs=args.runs, seed=sc.seed,
            clearance=args.clearance, controller=controller_kind(sc),
        )
        report.convergence = stats
        report.occupancy = occupancy_audit(trajs, env, params, seed=sc.seed)

    output.write_json(out / "verify.json", report.to_dict())
    output.write_run_meta(out / "run_meta.json", time.perf_counter() - t0,
                          {"command": "verify"})

    d = report.divergence
    print(f"divergence: checked={d.checked_points} violations={d.violations} "
          f"fraction={d.violation_fraction:.3%} strict={d.strict_violation_fraction:.3%} "
          f"min={d.min_divergence:.3e} xi_free={d.xi_free_region:.3e}")
    if report.alpha_sweep:
        for a, s in report.alpha_sweep:
            print(f"  alpha={a:g}: fraction={s.violation_fraction:.3%} "
                  f"strict={s.strict_violation_fraction:.3%}")
    g = report.gradient
    print(f"gradient audit: points={g.checked_points} max_rel={g.max_rel_error:.3e}")
    if report.convergence:
        c = report.convergence
        print(f"convergence: {c.converged}/{c.total} converged, {c.unsafe} unsafe")
    if report.occupancy:
        o = report.occupancy
        print(f"occupancy: measured {o.measured_fraction:.3e} "
              f"vs implied budget {o.implied_epsilon:.3e}")
    if report.environment_violations:
        for v in report.environment_violations:
            print(f"environment check failed: {v}", file=sys.stderr)
    ok = report.passed()
    print("PASS" if ok else "FAIL")
    return 0 if ok else 2


def _parse_floats(text: str, flag: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise DensnavError(f"{flag}: expected comma-separated numbers, got '{text}'") from e


def cmd_compare_nf(args) -> int:
    t0 = time.perf_counter()
    sc, file_hash = _load(args)
    if not any(ob["unsafe"]["kind"] == "c-shape"
               for ob in sc.data["environment"]["obstacles"]):
        print("error: comparison scenario must declare a c-shape unsafe set",
              file=sys.stderr)
        return 2
    env = build_environment(sc)
    params = build_params(sc)
    ctrl = build_controller(sc)
    integ = build_integrator(sc, args.dt_override)
    world = build_sphere_world(sc)
    seed = sc.seed if args.seed is None else args.seed
    if args.runs is not None:
        icd = sc.data.get("initial_conditions")
        if icd and icd["mode"] in ("uniform", "disc"):
            icd["count"] = args.runs
    ics = sample_initial_conditions(sc, env, seed=seed)
    if args.runs is not None:
        ics = ics[: args.runs]
    radii = sorted(_parse_floats(args.radii, "--radii")) if args.radii else None
    kappas = sorted(_parse_floats(args.kappas, "--kappas")) if args.kappas else None

    result = run_comparison(env, params, ctrl, integ, world, ics,
                            master_seed=seed, radii=radii, kappas=kappas)
    out = _out_dir(args, sc)
    for tr in result.density_runs:
        output.write_trajectory_csv(out / f"density_{tr.run_index:04d}.csv", tr, env)
    nf_env = world_environment(world, env.domain)
    for tr in result.baseline_runs:
        output.write_trajectory_csv(out / f"baseline_{tr.run_index:04d}.csv", tr, nf_env)
    summary = {
        "scenario": sc.name,
        "scenario_sha256": file_hash,
        "seed": seed,
        "runs": len(ics),
        **result.summary(),
    }
    output.write_json(out / "comparison.json", summary)
    if not args.no_svg:
        from .baseline_nf import with_sensing_radius

        panels = []
        for r, runs in result.density.items():
            env_r = env if r is None else with_sensing_radius(env, r)
            label = "density (as given)" if r is None else f"density r = {r:g}"
            panels.append((label, output.environment_canvas(env_r, params, runs)))
        for k, runs in result.baseline.items():
            panels.append((f"NF kappa = {k:g}",
                           output.environment_canvas(nf_env, None, runs)))
        output.panel_grid_svg(out / "comparison.svg", panels)
    output.write_run_meta(out / "run_meta.json", time.perf_counter() - t0,
                          {"command": "compare-nf"})

    for side in ("density", "baseline"):
        for leg, stats in summary[side].items():
            print(f"{side} {leg}: converged {stats['converged_fraction']:.2f} "
                  f"trapped {stats['trapped_fraction']:.2f} "
                  f"unsafe {stats['unsafe_fraction']:.2f}")
    print(f"wrote {out}")
    return 0


_SWEEP_PARAMS = ("alpha", "theta", "sigma", "u_max")


def _parse_grid(text: str) -> list[dict]:
    """Expand 'alpha=1,4;sigma=0,0.5' into the cartesian list of cells."""
    if not text or not text.strip():
        return []
    names: list[str] = []
    values: list[list[float]] = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise DensnavError(f"--grid: expected name=v1,v2,... got '{part}'")
        name, _, vals = part.partition("=")
        name = name.strip()
        if name not in _SWEEP_PARAMS:
            raise DensnavError(
                f"--grid: unknown parameter '{name}' (expected one of {', '.join(_SWEEP_PARAMS)})"
            )
        if name in names:
            raise DensnavError(f"--grid: parameter '{name}' repeated")
        names.append(name)
        values.append(_parse_floats(vals, f"--grid {name}"))
    cells: list[dict] = [{}]
    for name, vals in zip(names, values):
        cells = [dict(c, **{name: v}) for c in cells for v in vals]
    return cells


def _sweep_cell(payload):
    """Run one sweep cell; executed in a worker process."""
    import dataclasses

    from .geometry import Environment, Obstacle
    from .scenario import parse_scenario
    from .verify import convergence_monte_carlo

    text, seed, dt_override, runs, clearance, cell = payload
    sc = parse_scenario(text)
    env = build_environment(sc)
    params = build_params(sc)
    ctrl = build_controller(sc)
    integ = build_integrator(sc, dt_override)
    if "alpha" in cell:
        params = dataclasses.replace(params, alpha=cell["alpha"])
    if "theta" in cell:
        params = dataclasses.replace(params, theta=cell["theta"])
    if "u_max" in cell:
        ctrl = dataclasses.replace(ctrl, u_max=cell["u_max"])
    if cell.get("sigma"):
        # Enlarge every sensing set: {s - sigma <= 0} contains {s <= 0}.
        obstacles = tuple(
            Obstacle(h=o.h, s=o.s.shifted(-cell["sigma"]), label=o.label)
            for o in env.obstacles
        )
        env = Environment(
            dimension=env.dimension, target=tuple(env.target),
            obstacles=obstacles, domain=(tuple(env.lo), tuple(env.hi)),
            delta=env.delta, geometry_mode=env.geometry_mode,
        )
    stats, trajs = convergence_monte_carlo(
        env, params, ctrl, integ, n_runs=runs, seed=seed,
        clearance=clearance, controller=controller_kind(sc),
    )
    mean_path = float(np.mean([t.path_length() for t in trajs]))
    mean_clear = float(np.mean([float(np.min(t.h_min)) for t in trajs]))
    return stats, mean_path, mean_clear


def cmd_sweep(args) -> int:
    t0 = time.perf_counter()
    sc, _ = _load(args)
    seed = sc.seed if args.seed is None else args.seed
    cells = _parse_grid(args.grid)
    out = _out_dir(args, sc)

    text = Path(args.scenario).read_text(encoding="utf-8")
    payloads = [
        (text, seed, args.dt_override, args.runs, args.clearance, cell)
        for cell in cells
    ]
    if args.jobs > 1 and payloads:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_cell, payloads))
    else:
        results = [_sweep_cell(p) for p in payloads]

    import csv as _csv

    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as f:
        w = _csv.writer(f)
        w.writerow(list(_SWEEP_PARAMS)
                   + ["runs", "converged_fraction", "unsafe",
                      "mean_path_length", "mean_min_clearance"])
        for cell, (stats, mean_path, mean_clear) in zip(cells, results):
            w.writerow(
                [output.fmt(cell[k]) if k in cell else "" for k in _SWEEP_PARAMS]
                + [stats.total, output.fmt(stats.converged_fraction), stats.unsafe,
                   output.fmt(mean_path), output.fmt(mean_clear)]
            )
    output.write_run_meta(out / "run_meta.json", time.perf_counter() - t0,
                          {"command": "sweep", "cells": len(cells)})
    for cell, (stats, _, mc) in zip(cells, results):
        desc = " ".join(f"{k}={v:g}" for k, v in cell.items()) or "(base)"
        print(f"{desc}: converged {stats.converged_fraction:.2f} "
              f"unsafe {stats.unsafe} min-clearance {mc:.3f}")
    print(f"wrote {out / 'sweep.csv'} ({len(cells)} cells)")
    return 0


def cmd_arm(args) -> int:
    t0 = time.perf_counter()
    sc, file_hash = _load(args)
    env = build_environment(sc)
    params = build_params(sc)
    ctrl = build_controller(sc)
    integ = build_integrator(sc, args.dt_override)
    arm, gains, extras = build_arm(sc)

    mapped = []
    reports = []
    for tob in extras["task_obstacles"]:
        obs, rep = map_task_obstacle_to_joint_space(
            arm, tob["center"], tob["radius"],
            resolution=extras["cspace_grid"],
            joint_margin=extras["joint_margin"],
            max_circle_radius=extras["max_circle_radius"],
            label=f"task-{len(reports)}",
        )
        if rep.notice:
            print(f"note: {rep.notice}")
        mapped.extend(obs)
        reports.append(rep)

    env_joint = Environment(
        dimension=env.dimension, target=env.target,
        obstacles=env.obstacles + tuple(mapped), domain=env.domain,
        delta=env.delta, geometry_mode=env.geometry_mode,
    )
    violations = validate_environment(env_joint, seed=sc.seed)
    if violations:
        for v in violations:
            print(f"environment check failed: {v}", file=sys.stderr)
        return 2

    reference = generate_reference(env_joint, params, ctrl, integ, extras["q0"])
    from .control import ControllerConfig

    err_cfg = ControllerConfig(blend_delta=ctrl.blend_delta)
    track_cfg = IntegratorConfig(
        dt=extras["track_dt"], max_time=extras["track_time"],
        converge_radius=extras["track_converge"], safety_margin=integ.safety_margin,
    )
    traj = simulate_arm(arm, gains, env_joint, params, err_cfg, track_cfg,
                        reference, extras["q0"], extras["qd0"])

    out = _out_dir(args, sc)
    output.write_arm_csv(out / "arm.csv", traj)
    output.write_torque_csv(out / "torque.csv", traj)
    summary = {
        "scenario": sc.name,
        "scenario_sha256": file_hash,
        "outcome": traj.outcome.value,
        "final_joint_error": traj.annotations.get("final_joint_error"),
        "penetrated": bool(traj.annotations.get("penetrated", False)),
        "min_h_seen": float(np.min(traj.h_min)),
        "reference_duration": reference.duration,
        "mapping": [
            {
                "colliding_cells": r.colliding_cells,
                "total_cells": r.total_cells,
                "circles": [{"center": list(c), "radius": rad} for c, rad in r.circles],
                "coverage": r.coverage,
                "over_approx_ratio": r.over_approx_ratio,
                "notice": r.notice,
            }
            for r in reports
        ],
    }
    output.write_json(out / "arm_summary.json", summary)
    if not args.no_svg:
        tobs = [(tuple(t["center"]), t["radius"]) for t in extras["task_obstacles"]]
        output.arm_svg(out / "arm.svg", arm, traj, tobs)
        output.environment_svg(out / "joint.svg", env_joint, params)
        output.arm_frames(out / "frames", arm, traj, tobs)
    output.write_run_meta(out / "run_meta.json", time.perf_counter() - t0,
                          {"command": "arm"})

    print(f"reference duration: {reference.duration:.2f} s")
    print(f"tracking outcome: {traj.outcome.value} "
          f"(final error {summary['final_joint_error']:.4f} rad)")
    print(f"wrote {out}")
    ok = traj.outcome is Outcome.CONVERGED and not summary["penetrated"]
    return 0 if ok else 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="densnav",
        description="Density-based almost-everywhere safe navigation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario YAML file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override scenario seed")
        p.add_argument("--dt-override", type=float, default=None,
                       help="override integrator step size")
        p.add_argument("--no-svg", action="store_true", help="skip SVG rendering")

    p_run = sub.add_parser("run", help="simulate a scenario")
    common(p_run)
    p_run.add_argument("--jobs", type=int, default=1,
                       help="worker processes (results are identical for any value)")
    p_run.set_defaults(func=cmd_run)

    p_ver = sub.add_parser("verify", help="numerical audits")
    common(p_ver)
    p_ver.add_argument("--grid", type=int, default=120, help="divergence grid resolution")
    p_ver.add_argument("--alpha", type=float, default=None, help="override alpha")
    p_ver.add_argument("--alpha-sweep", default=None,
                       help="comma-separated alphas for the divergence sweep")
    p_ver.add_argument("--points", type=int, default=300, help="gradient audit points")
    p_ver.add_argument("--runs", type=int, default=0,
                       help="Monte-Carlo convergence runs (0 = skip)")
    p_ver.add_argument("--clearance", type=float, default=0.0,
                       help="initial-condition clearance for the Monte-Carlo audit")
    p_ver.set_defaults(func=cmd_verify)

    p_cmp = sub.add_parser("compare-nf", help="density vs navigation-function baseline")
    common(p_cmp)
    p_cmp.add_argument("--kappas", default=None,
                       help="comma-separated NF exponents (default: scenario value)")
    p_cmp.add_argument("--radii", default=None,
                       help="comma-separated sensing radii for the density legs")
    p_cmp.add_argument("--runs", type=int, default=None,
                       help="number of initial conditions (default: scenario value)")
    p_cmp.set_defaults(func=cmd_compare_nf)

    p_arm = sub.add_parser("arm", help="two-link arm planning and tracking")
    common(p_arm)
    p_arm.set_defaults(func=cmd_arm)

    p_swp = sub.add_parser("sweep", help="parameter grid of Monte-Carlo convergence runs")
    common(p_swp)
    p_swp.add_argument("--grid", default="",
                       help="semicolon-separated cells, e.g. 'alpha=1,4,10;sigma=0,0.5'")
    p_swp.add_argument("--runs", type=int, default=50, help="runs per grid cell")
    p_swp.add_argument("--clearance", type=float, default=0.0,
                       help="initial-condition clearance per cell")
    p_swp.add_argument("--jobs", type=int, default=1,
                       help="worker processes (results are identical for any value)")
    p_swp.set_defaults(func=cmd_sweep)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DensnavError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
