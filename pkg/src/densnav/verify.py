"""Numerical verification: divergence sign, convergence rates, occupancy, gradients.

These audits back the controller's guarantees with measurements on the
actual implementation instead of trusting the algebra.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .control import ControllerConfig
from .density import (
    V_REFUSAL,
    DensityParams,
    estimate_unsafe_stats,
    grad_rho_values,
    make_distance,
)
from .dynamics import IntegratorConfig, Outcome, Trajectory, simulate_batch
from .errors import DomainError, EstimationError
from .geometry import Environment, sample_safe_states
from .smoothing import psi_values

Array = np.ndarray


@dataclass(frozen=True)
class DivergenceStats:
    """Grid audit of div(rho grad rho) >= 0 away from the target ball.

    Two violation counts are reported.  `violations` uses a tolerance scaled
    to the largest term magnitude on the audited grid: sign failures many
    orders below the audit's dynamic range do not count.  `strict_violations`
    compares each point against its own local term scale and so also counts
    structurally negative regions of tiny absolute size (these appear around
    flow saddles for moderate alpha and vanish when alpha reaches the order
    of 1/theta).  Both numbers are part of the report; hiding neither.
    """

    alpha: float
    resolution: tuple[int, ...]
    checked_points: int
    excluded_points: int
    violations: int
    violation_fraction: float
    strict_violations: int
    strict_violation_fraction: float
    min_divergence: float
    xi_free_region: float
    rel_tol: float


def _rho_grid(env: Environment, params: DensityParams, pts: Array):
    """Density on arbitrary points without the near-target refusal.

    Returns (rho, V); rows with V at the refusal floor carry rho = nan and
    must be excluded by the caller.
    """
    dist = make_distance(env, params)
    V = dist.value(pts)
    good = V > V_REFUSAL
    Vs = np.where(good, V, 1.0)
    prod = np.ones(pts.shape[:-1])
    for obs in env.obstacles:
        prod = prod * psi_values(obs, params.theta, pts)
    # Large alpha can overflow V**-alpha near the target; those points come
    # out non-finite and are excluded by the callers.
    with np.errstate(over="ignore"):
        rho = np.where(good, prod * Vs ** (-params.alpha), np.nan)
    return rho, V


@dataclass
class DivergenceField:
    """Raw grid data behind a divergence audit (kept for heat-map rendering)."""

    axes: list[Array]
    points: Array
    div: Array
    scale: Array
    excluded: Array
    free_region: Array
    resolution: tuple[int, ...]


def divergence_field(
    env: Environment,
    params: DensityParams,
    resolution: int = 200,
    box=None,
    band_cells: float = 2.0,
    target_radius: float | None = None,
) -> DivergenceField:
    """div(rho grad rho) and its exclusion mask on a cell-centred grid.

    Uses 5-point stencils for the first and second derivatives.  Cells
    straddling the h = 0 or s = 0 surfaces and the target ball are flagged
    excluded: the inequality is only claimed away from them and the
    stencil's truncation error swamps the signal there.
    """
    n = env.dimension
    lo, hi = (env.lo, env.hi) if box is None else (
        np.asarray(box[0], dtype=float), np.asarray(box[1], dtype=float))
    res = (resolution,) * n if np.isscalar(resolution) else tuple(resolution)
    cells = (hi - lo) / np.asarray(res, dtype=float)
    if target_radius is None:
        target_radius = env.delta

    toroidal = env.geometry_mode == "toroidal"
    if toroidal:
        period = 2.0 * math.pi
        if not np.allclose(hi - lo, period):
            raise DomainError("toroidal divergence grid must span one full period per axis")
        axes = [lo[i] + (np.arange(res[i]) + 0.5) * cells[i] for i in range(n)]
    else:
        axes = [lo[i] + (np.arange(-2, res[i] + 2) + 0.5) * cells[i] for i in range(n)]

    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack(mesh, axis=-1)
    rho, _ = _rho_grid(env, params, pts)
    if toroidal:
        rho = np.pad(rho, 2, mode="wrap")
        core_pts = pts
        core_axes = axes
    else:
        core = tuple(slice(2, -2) for _ in range(n))
        core_pts = pts[core]
        core_axes = [a[2:-2] for a in axes]

    core = tuple(slice(2, -2) for _ in range(n))
    rho0 = rho[core]

    def shifted(axis: int, k: int) -> Array:
        idx = [slice(2, -2)] * n
        idx[axis] = slice(2 + k, rho.shape[axis] - 2 + k)
        return rho[tuple(idx)]

    div = np.zeros_like(rho0)
    scale = np.zeros_like(rho0)
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        for axis in range(n):
            h = cells[axis]
            fp2, fp1 = shifted(axis, 2), shifted(axis, 1)
            fm1, fm2 = shifted(axis, -1), shifted(axis, -2)
            d1 = (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * h)
            d2 = (-fp2 + 16.0 * fp1 - 30.0 * rho0 + 16.0 * fm1 - fm2) / (12.0 * h * h)
            div = div + d1 * d1 + rho0 * d2
            scale = scale + d1 * d1 + np.abs(rho0 * d2)

    excluded = ~np.isfinite(div)
    excluded |= env.target_distance(core_pts) <= target_radius
    band = band_cells * float(np.max(cells))
    free_region = np.ones(rho0.shape, dtype=bool)
    for obs in env.obstacles:
        free_region &= obs.s.value(core_pts) > 0.0
        for fn in (obs.h, obs.s):
            v = fn.value(core_pts)
            g = fn.grad(core_pts)
            gn = np.sqrt(np.sum(g * g, axis=-1))
            excluded |= np.abs(v) <= band * (gn + 1.0)

    return DivergenceField(
        axes=core_axes, points=core_pts, div=div, scale=scale,
        excluded=excluded, free_region=free_region, resolution=res,
    )


def divergence_check(
    env: Environment,
    params: DensityParams,
    resolution: int = 200,
    box=None,
    band_cells: float = 2.0,
    rel_tol: float = 1e-7,
    target_radius: float | None = None,
    field: DivergenceField | None = None,
) -> DivergenceStats:
    """Check div(rho grad rho) >= 0 away from the target ball.

    Violations are counted relative to the local term scale; pass a
    precomputed `field` to reuse the grid (e.g. when also rendering it).
    """
    if field is None:
        field = divergence_field(env, params, resolution=resolution, box=box,
                                 band_cells=band_cells, target_radius=target_radius)
    checked = ~field.excluded
    n_checked = int(np.count_nonzero(checked))
    if n_checked == 0:
        raise DomainError(
            "no grid points remain after exclusions; enlarge the box or resolution"
        )
    dv = field.div[checked]
    sc = field.scale[checked] + 1e-300
    audit_scale = float(np.max(sc))
    violations = int(np.count_nonzero(dv < -rel_tol * audit_scale))
    strict = int(np.count_nonzero(dv < -rel_tol * sc))
    free_checked = field.free_region & checked
    xi = float(np.min(field.div[free_checked])) if free_checked.any() else math.nan
    return DivergenceStats(
        alpha=params.alpha,
        resolution=field.resolution,
        checked_points=n_checked,
        excluded_points=int(np.count_nonzero(field.excluded)),
        violations=violations,
        violation_fraction=violations / n_checked,
        strict_violations=strict,
        strict_violation_fraction=strict / n_checked,
        min_divergence=float(np.min(dv)),
        xi_free_region=xi,
        rel_tol=rel_tol,
    )


def divergence_sweep(env: Environment, params: DensityParams, alphas, **kwargs):
    """divergence_check across a list of alpha values (other params fixed)."""
    out = []
    for a in alphas:
        p = dataclasses.replace(params, alpha=float(a))
        out.append((float(a), divergence_check(env, p, **kwargs)))
    return out


@dataclass(frozen=True)
class ConvergenceStats:
    total: int
    converged: int
    unsafe: int
    max_time: int
    failed: int
    mean_convergence_time: float
    total_unsafe_occupancy: float

    @property
    def converged_fraction(self) -> float:
        return self.converged / self.total if self.total else 0.0

    @property
    def unsafe_fraction(self) -> float:
        return self.unsafe / self.total if self.total else 0.0


def summarize_runs(trajectories: list[Trajectory]) -> ConvergenceStats:
    conv = [t for t in trajectories if t.outcome is Outcome.CONVERGED]
    unsafe = sum(1 for t in trajectories if t.outcome is Outcome.UNSAFE_ENTERED)
    failed = sum(1 for t in trajectories if t.outcome is Outcome.NUMERICAL_FAILURE)
    maxt = sum(1 for t in trajectories if t.outcome is Outcome.MAX_TIME)
    mean_time = float(np.mean([t.times[-1] for t in conv])) if conv else math.nan
    occ = float(sum(sum(t.occupancy_time_unsafe) for t in trajectories))
    return ConvergenceStats(
        total=len(trajectories), converged=len(conv), unsafe=unsafe,
        max_time=maxt, failed=failed, mean_convergence_time=mean_time,
        total_unsafe_occupancy=occ,
    )


def convergence_monte_carlo(
    env: Environment,
    params: DensityParams,
    ctrl_cfg: ControllerConfig,
    int_cfg: IntegratorConfig,
    n_runs: int = 100,
    seed: int = 0,
    clearance: float = 0.0,
    controller: str = "blended",
) -> tuple[ConvergenceStats, list[Trajectory]]:
    """Simulate uniform safe initial conditions and tally the outcomes."""
    ics = sample_safe_states(
        env, n_runs, clearance=clearance,
        exclude_radius=int_cfg.converge_radius, seed=seed,
    )
    trajs = simulate_batch(
        env, params, ctrl_cfg, int_cfg, ics,
        controller=controller, master_seed=seed,
    )
    return summarize_runs(trajs), trajs


@dataclass(frozen=True)
class OccupancyStats:
    """Measured unsafe dwell fraction against the theta-implied budget."""

    measured_fraction: float
    implied_epsilon: float
    theta: float
    v_min_estimate: float
    unsafe_measure_estimate: float
    total_time: float

    @property
    def within_budget(self) -> bool:
        return self.measured_fraction <= self.implied_epsilon


def occupancy_audit(
    trajectories: list[Trajectory],
    env: Environment,
    params: DensityParams,
    samples: int = 200_000,
    seed: int = 0,
) -> OccupancyStats:
    """Compare measured unsafe occupancy with the bound implied by theta.

    theta <= eps * V_min / m(X_u) rearranges to an implied occupancy budget
    eps = theta * m(X_u) / V_min.  The budget is asymptotic (long-run
    fraction); finite windows are indicative, not a proof.
    """
    stats = estimate_unsafe_stats(env, params, samples=samples, seed=seed)
    if stats.v_min <= 0.0:
        raise EstimationError("estimated V_min is non-positive; target overlaps unsafe set")
    implied = params.theta * stats.measure / stats.v_min
    total_time = float(sum(t.times[-1] for t in trajectories))
    if total_time <= 0.0:
        raise EstimationError("no simulated time to audit")
    unsafe_time = float(sum(sum(t.occupancy_time_unsafe) for t in trajectories))
    return OccupancyStats(
        measured_fraction=unsafe_time / total_time,
        implied_epsilon=implied,
        theta=params.theta,
        v_min_estimate=stats.v_min,
        unsafe_measure_estimate=stats.measure,
        total_time=total_time,
    )


@dataclass(frozen=True)
class GradientAuditStats:
    checked_points: int
    max_rel_error: float
    mean_rel_error: float
    fd_step: float


def gradient_audit(
    env: Environment,
    params: DensityParams,
    n_points: int = 1000,
    seed: int = 0,
    fd_step: float = 1e-4,
    band: float = 1e-3,
) -> GradientAuditStats:
    """Analytic grad rho against a 5-point central difference at random states.

    Skips a thin band around the h = 0 and s = 0 surfaces and the near-target
    region, where finite differencing itself is the weaker instrument.
    Relative error is measured against the combined magnitude of both
    estimates, so steep and flat regions are weighted alike.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed)])))
    n = env.dimension
    pts_list = []
    need = int(n_points)
    tries = 0
    while need > 0 and tries < 200:
        cand = env.sample_uniform(rng, max(4 * need, 256))
        ok = env.target_distance(cand) > max(band, 1e-3)
        for obs in env.obstacles:
            ok &= np.abs(obs.h.value(cand)) > band
            ok &= np.abs(obs.s.value(cand)) > band
        cand = cand[ok]
        if len(cand):
            pts_list.append(cand[:need])
            need -= len(pts_list[-1])
        tries += 1
    if need > 0:
        raise EstimationError("could not sample enough audit points outside the band")
    pts = np.concatenate(pts_list, axis=0)

    ga = grad_rho_values(env, params, pts)
    m = len(pts)
    steps = fd_step * np.maximum(1.0, np.max(np.abs(pts), axis=-1))
    gfd = np.zeros_like(ga)
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        h = steps[:, None] * e
        fp2 = _rho_grid(env, params, pts + 2.0 * h)[0]
        fp1 = _rho_grid(env, params, pts + h)[0]
        fm1 = _rho_grid(env, params, pts - h)[0]
        fm2 = _rho_grid(env, params, pts - 2.0 * h)[0]
        gfd[:, j] = (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * steps)

    diff = np.sqrt(np.sum((ga - gfd) ** 2, axis=-1))
    mag = np.sqrt(np.sum(ga * ga, axis=-1)) + np.sqrt(np.sum(gfd * gfd, axis=-1))
    rel = diff / (mag + 1e-300)
    return GradientAuditStats(
        checked_points=m,
        max_rel_error=float(np.max(rel)),
        mean_rel_error=float(np.mean(rel)),
        fd_step=fd_step,
    )


@dataclass
class VerificationReport:
    divergence: DivergenceStats | None = None
    alpha_sweep: list[tuple[float, DivergenceStats]] | None = None
    gradient: GradientAuditStats | None = None
    convergence: ConvergenceStats | None = None
    occupancy: OccupancyStats | None = None
    environment_violations: list[str] | None = None

    def passed(self) -> bool:
        ok = True
        if self.divergence is not None:
            ok &= self.divergence.violation_fraction < 0.01
        if self.alpha_sweep:
            fracs = [s.violation_fraction for _, s in self.alpha_sweep]
            ok &= all(b <= a + 1e-12 for a, b in zip(fracs, fracs[1:]))
        if self.gradient is not None:
            ok &= self.gradient.max_rel_error < 1e-5
        if self.convergence is not None:
            ok &= self.convergence.unsafe == 0
        if self.occupancy is not None:
            ok &= self.occupancy.within_budget
        if self.environment_violations:
            ok = False
        return bool(ok)

    def to_dict(self) -> dict:
        out: dict = {}
        if self.divergence is not None:
            out["divergence"] = dataclasses.asdict(self.divergence)
        if self.alpha_sweep is not None:
            out["alpha_sweep"] = [
                {"alpha": a, **dataclasses.asdict(s)} for a, s in self.alpha_sweep
            ]
        if self.gradient is not None:
            out["gradient"] = dataclasses.asdict(self.gradient)
        if self.convergence is not None:
            d = dataclasses.asdict(self.convergence)
            d["converged_fraction"] = self.convergence.converged_fraction
            out["convergence"] = d
        if self.occupancy is not None:
            d = dataclasses.asdict(self.occupancy)
            d["within_budget"] = self.occupancy.within_budget
            out["occupancy"] = d
        if self.environment_violations is not None:
            out["environment_violations"] = list(self.environment_violations)
        out["passed"] = self.passed()
        return out
