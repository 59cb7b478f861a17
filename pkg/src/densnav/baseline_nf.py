"""Navigation-function baseline on a sphere world.

Classical construction: psi = gamma / (gamma + beta^(1/kappa)) with
gamma the squared goal distance and beta the product of the outer-shell
and obstacle clearance functions.  Descent on psi is the comparison
baseline for the density controller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .control import ControllerConfig, rescale_speed, saturate
from .density import DensityParams
from .dynamics import IntegratorConfig, Outcome, Trajectory, simulate_batch
from .errors import DimensionMismatchError, DomainError
from .geometry import Environment, Obstacle, Polynomial, Sphere

Array = np.ndarray


@dataclass(frozen=True)
class SphereWorld:
    """Goal, bounding sphere and disjoint round obstacles for the baseline."""

    goal: tuple[float, ...]
    outer_radius: float
    centers: tuple[tuple[float, ...], ...] = ()
    radii: tuple[float, ...] = ()
    kappa: float = 3.0

    def __post_init__(self):
        n = len(self.goal)
        if self.outer_radius <= 0.0:
            raise ValueError("outer_radius must be positive")
        if len(self.centers) != len(self.radii):
            raise ValueError("centers and radii must pair up")
        if self.kappa < 1.0:
            raise ValueError("kappa must be at least 1")
        if any(r <= 0.0 for r in self.radii):
            raise ValueError("obstacle radii must be positive")
        for c in self.centers:
            if len(c) != n:
                raise DimensionMismatchError("obstacle center dimension mismatch")
        # Sphere-world hypotheses: obstacles strictly inside the shell,
        # pairwise disjoint closures, goal in the open free space.
        for c, r in zip(self.centers, self.radii):
            if math.sqrt(sum(v * v for v in c)) + r >= self.outer_radius:
                raise ValueError("obstacle not strictly inside the outer sphere")
        for i in range(len(self.centers)):
            for j in range(i + 1, len(self.centers)):
                ci = np.array(self.centers[i])
                cj = np.array(self.centers[j])
                if float(np.linalg.norm(ci - cj)) <= self.radii[i] + self.radii[j]:
                    raise ValueError("obstacles must have disjoint closures")
        g = np.array(self.goal)
        if float(np.dot(g, g)) >= self.outer_radius**2:
            raise ValueError("goal outside the outer sphere")
        for c, r in zip(self.centers, self.radii):
            if float(np.linalg.norm(g - np.array(c))) <= r:
                raise ValueError("goal inside an obstacle")

    @property
    def dimension(self) -> int:
        return len(self.goal)


def _beta_terms(world: SphereWorld, pts: Array):
    """Clearance factors and their gradients; first factor is the outer shell."""
    vals = [world.outer_radius**2 - np.sum(pts * pts, axis=-1)]
    grads = [-2.0 * pts]
    for c, r in zip(world.centers, world.radii):
        d = pts - np.asarray(c, dtype=float)
        vals.append(np.sum(d * d, axis=-1) - r * r)
        grads.append(2.0 * d)
    return np.stack(vals, axis=0), np.stack(grads, axis=0)


def nf_values(world: SphereWorld, pts) -> tuple[Array, Array, Array]:
    """psi, grad psi and a validity mask on a batch of points.

    Rows outside the free space (any clearance factor non-positive) are
    flagged invalid and get zero value/gradient; the strict single-point
    ops raise instead.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if pts.shape[-1] != world.dimension:
        raise DimensionMismatchError(
            f"points have dimension {pts.shape[-1]}, world has {world.dimension}"
        )
    d = pts - np.asarray(world.goal, dtype=float)
    gamma = np.sum(d * d, axis=-1)
    dgamma = 2.0 * d

    vals, grads = _beta_terms(world, pts)
    valid = np.all(vals > 0.0, axis=0)
    safe_vals = np.where(vals > 0.0, vals, 1.0)
    beta = np.prod(safe_vals, axis=0)
    # Leave-one-out product rule; factors are strictly positive on valid rows.
    dbeta = np.sum((beta / safe_vals)[..., None] * grads, axis=0)

    k = world.kappa
    B = beta ** (1.0 / k)
    denom = gamma + B
    psi = np.where(valid & (denom > 0.0), gamma / np.where(denom > 0.0, denom, 1.0), 0.0)
    dB = (1.0 / k) * beta ** (1.0 / k - 1.0)
    grad = (B[..., None] * dgamma - gamma[..., None] * dB[..., None] * dbeta) / np.where(
        denom > 0.0, denom, 1.0
    )[..., None] ** 2
    grad = np.where(valid[..., None], grad, 0.0)
    return psi, grad, valid


def nf_value(world: SphereWorld, x) -> float:
    psi, _, valid = nf_values(world, np.atleast_2d(x))
    if not valid[0]:
        raise DomainError("point outside the sphere-world free space")
    return float(psi[0])


def nf_control(world: SphereWorld, x) -> Array:
    """Raw descent direction -grad psi at a single free-space point."""
    _, grad, valid = nf_values(world, np.atleast_2d(x))
    if not valid[0]:
        raise DomainError("point outside the sphere-world free space")
    return -grad[0]


def nf_field(world: SphereWorld, ctrl_cfg: ControllerConfig):
    """Batch controller for the baseline, shaped like the density pipeline.

    Same speed normalisation and saturation as the density controller so
    the comparison isolates the shape of the field, not its magnitude.
    Invalid probe rows (outside free space) get a zero command; actual
    entries are caught by the trajectory event checks.
    """
    goal = np.asarray(world.goal, dtype=float)

    def field(pts: Array) -> Array:
        _, grad, _ = nf_values(world, pts)
        u = -grad
        if ctrl_cfg.speed is not None:
            dist = np.sqrt(np.sum((pts - goal) ** 2, axis=-1))
            u = rescale_speed(u, ctrl_cfg.speed, dist=dist,
                              taper=ctrl_cfg.speed_taper or ctrl_cfg.blend_delta)
        if ctrl_cfg.u_max is not None:
            u = saturate(u, ctrl_cfg.u_max)
        return u

    return field


def world_environment(world: SphereWorld, domain) -> Environment:
    """Event-checking environment for baseline runs (obstacles + outer shell)."""
    n = world.dimension
    obstacles = []
    for i, (c, r) in enumerate(zip(world.centers, world.radii)):
        h = Sphere(center=tuple(c), radius=float(r))
        s = Sphere(center=tuple(c), radius=float(r) + 0.5)
        obstacles.append(Obstacle(h=h, s=s, label=f"nf-disc-{i}"))
    # Outer shell: unsafe outside the bounding sphere.
    exps = tuple(tuple(2 if j == i else 0 for j in range(n)) for i in range(n))
    h_out = Polynomial(
        exponents=exps + (tuple(0 for _ in range(n)),),
        coefficients=tuple(-1.0 for _ in range(n)) + (world.outer_radius**2,),
    )
    obstacles.append(Obstacle(h=h_out, s=h_out.shifted(-1.0), label="nf-outer-shell"))
    return Environment(
        dimension=n, target=tuple(world.goal), obstacles=tuple(obstacles),
        domain=domain, delta=1.0, geometry_mode="euclidean",
    )


def outcome_counts(trajectories) -> dict[str, int]:
    counts = {o.value: 0 for o in Outcome}
    for tr in trajectories:
        counts[tr.outcome.value] += 1
    return counts


def _leg_summary(trajectories: list[Trajectory]) -> dict:
    counts = outcome_counts(trajectories)
    n = len(trajectories)
    return {
        "outcomes": counts,
        "converged_fraction": counts["Converged"] / n if n else 0.0,
        "trapped_fraction": counts["MaxTime"] / n if n else 0.0,
        "unsafe_fraction": counts["UnsafeEntered"] / n if n else 0.0,
        "mean_path_length": (
            float(np.mean([t.path_length() for t in trajectories])) if n else 0.0
        ),
    }


def with_sensing_radius(env: Environment, radius: float) -> Environment:
    """Same environment with every obstacle's sensing radius replaced."""
    import dataclasses

    obstacles = []
    for obs in env.obstacles:
        if not hasattr(obs.s, "radius"):
            raise DomainError(
                f"obstacle '{obs.label}' sensing surface has no radius to override"
            )
        obstacles.append(
            Obstacle(h=obs.h, s=dataclasses.replace(obs.s, radius=float(radius)),
                     label=obs.label)
        )
    return Environment(
        dimension=env.dimension, target=env.target, obstacles=tuple(obstacles),
        domain=(tuple(env.lo), tuple(env.hi)), delta=env.delta,
        geometry_mode=env.geometry_mode,
    )


@dataclass
class ComparisonResult:
    """Same initial conditions under both methods, one leg per parameter.

    `density` maps sensing radius (None = scenario as-given) to runs;
    `baseline` maps the NF tuning exponent kappa to runs.
    """

    density: dict
    baseline: dict

    @property
    def density_runs(self) -> list[Trajectory]:
        return next(iter(self.density.values()))

    @property
    def baseline_runs(self) -> list[Trajectory]:
        return next(iter(self.baseline.values()))

    def summary(self) -> dict:
        return {
            "density": {
                ("as-given" if r is None else f"r={r:g}"): _leg_summary(runs)
                for r, runs in self.density.items()
            },
            "baseline": {
                f"kappa={k:g}": _leg_summary(runs) for k, runs in self.baseline.items()
            },
        }


def run_comparison(
    env: Environment,
    params: DensityParams,
    ctrl_cfg: ControllerConfig,
    int_cfg: IntegratorConfig,
    world: SphereWorld,
    ics,
    master_seed: int = 0,
    radii=None,
    kappas=None,
) -> ComparisonResult:
    """Run the same initial conditions under both controllers.

    `radii` re-parameterises the density side's sensing surfaces (one leg
    per value); `kappas` does the same for the NF exponent.  Defaults run a
    single leg each, exactly as configured.
    """
    import dataclasses

    density: dict = {}
    for r in (radii if radii else [None]):
        env_r = env if r is None else with_sensing_radius(env, r)
        density[r] = simulate_batch(
            env_r, params, ctrl_cfg, int_cfg, ics, controller="blended",
            master_seed=master_seed,
        )

    baseline: dict = {}
    for k in (kappas if kappas else [world.kappa]):
        world_k = dataclasses.replace(world, kappa=float(k))
        nf_env = world_environment(world_k, env.domain)

        def polish(y, world_k=world_k):
            _, grad, valid = nf_values(world_k, np.atleast_2d(y))
            return -grad[0] if valid[0] else np.zeros(world_k.dimension)

        baseline[float(k)] = simulate_batch(
            nf_env, params, ctrl_cfg, int_cfg, ics,
            master_seed=master_seed, field_fn=nf_field(world_k, ctrl_cfg),
            polish_field=polish,
        )
    return ComparisonResult(density=density, baseline=baseline)
