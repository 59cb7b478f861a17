"""Closed-loop simulation: single integrators and a two-link arm.

The batch integrator advances every run with identical per-row arithmetic,
so results do not depend on how runs are grouped (worker count, batch
splits).  Noise uses per-run generators derived from the master seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.optimize

from .control import ControllerConfig, make_field
from .density import DensityParams, grad_rho_values
from .errors import DensnavError, DimensionMismatchError, MalformedObstacleError
from .geometry import Environment, Obstacle, Sphere, wrap_angles

Array = np.ndarray


class Outcome(Enum):
    CONVERGED = "Converged"
    MAX_TIME = "MaxTime"
    UNSAFE_ENTERED = "UnsafeEntered"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step integration settings and event thresholds."""

    method: str = "rk4"
    dt: float = 1e-3
    max_time: float = 10.0
    converge_radius: float = 0.1
    safety_margin: float = 0.0
    # Stall handling: when the net displacement over a window collapses
    # relative to the path length, the run is assumed to be oscillating
    # around a stationary point and a local root polish is attempted.
    stall_window: int = 30
    stall_ratio: float = 0.2
    polish_stationary: bool = True

    def __post_init__(self):
        if self.method not in ("rk4", "euler"):
            raise ValueError(f"unknown integration method '{self.method}'")
        if self.dt <= 0.0 or self.max_time <= 0.0:
            raise ValueError("dt and max_time must be positive")
        if self.converge_radius <= 0.0:
            raise ValueError("converge_radius must be positive")
        if self.safety_margin < 0.0:
            raise ValueError("safety_margin must be non-negative")


@dataclass
class Trajectory:
    """Time-stamped states and controls for one run, plus event annotations."""

    times: Array
    states: Array
    controls: Array
    outcome: Outcome
    occupancy_time_unsafe: tuple[float, ...]
    h_min: Array
    run_index: int = 0
    annotations: dict = field(default_factory=dict)

    @property
    def final_state(self) -> Array:
        return self.states[-1]

    def path_length(self) -> float:
        if len(self.states) < 2:
            return 0.0
        steps = np.diff(self.states, axis=0)
        return float(np.sum(np.sqrt(np.sum(steps * steps, axis=-1))))


def step_rk4(field, x, dt: float):
    """One classical Runge-Kutta step of x' = field(x)."""
    x = np.asarray(x, dtype=float)
    k1 = field(x)
    k2 = field(x + 0.5 * dt * k1)
    k3 = field(x + 0.5 * dt * k2)
    k4 = field(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step_euler(field, x, dt: float):
    x = np.asarray(x, dtype=float)
    return x + dt * field(x)


def _rk4_step_t(field, t: float, x, dt: float):
    """Time-dependent RK4 variant used by the arm tracking loop."""
    k1 = field(t, x)
    k2 = field(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3 = field(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4 = field(t + dt, x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def run_seed_sequence(master_seed: int, run_index: int) -> np.random.SeedSequence:
    """Per-run seed derivation: SeedSequence mixes (master, index) splitmix-style."""
    return np.random.SeedSequence([int(master_seed), int(run_index)])


def _h_stack(env: Environment, pts: Array) -> Array:
    if not env.obstacles:
        return np.full((len(env.obstacles),) + pts.shape[:-1], np.inf)
    return np.stack([obs.h.value(pts) for obs in env.obstacles], axis=0)


def _polish_stationary(polish_field, x0: Array, locality: float):
    """Try to land exactly on a nearby stationary point of the raw field."""
    g0 = float(np.linalg.norm(polish_field(x0)))
    try:
        res = scipy.optimize.root(lambda y: polish_field(y), x0, method="hybr")
    except Exception:
        return None
    if not res.success:
        return None
    if float(np.linalg.norm(res.x - x0)) > locality:
        return None
    gn = float(np.linalg.norm(polish_field(res.x)))
    if not (gn < g0 or gn == 0.0):
        return None
    return res.x, gn


def simulate_batch(
    env: Environment,
    params: DensityParams,
    ctrl_cfg: ControllerConfig,
    int_cfg: IntegratorConfig,
    ics,
    controller: str = "blended",
    master_seed: int = 0,
    run_indices=None,
    allow_unsafe_ic: bool = False,
    field_fn=None,
    polish_field=None,
) -> list[Trajectory]:
    """Integrate a batch of runs of x' = u(x) (+ disturbance) to termination.

    field_fn overrides the density controller (used by the baseline
    comparison); polish_field supplies the raw field whose zeros are the
    stationary points reported for stalled runs.
    """
    ics = np.atleast_2d(np.asarray(ics, dtype=float))
    m, n = ics.shape
    if n != env.dimension:
        raise DimensionMismatchError(
            f"initial conditions have dimension {n}, environment has {env.dimension}"
        )
    if not np.all(np.isfinite(ics)):
        raise ValueError("initial conditions must be finite")
    if not np.all(env.contains(ics)):
        raise ValueError("initial condition outside the domain box")
    if run_indices is None:
        run_indices = list(range(m))

    fld = field_fn if field_fn is not None else make_field(env, params, ctrl_cfg, controller)
    if polish_field is None and field_fn is None:
        polish_field = lambda y: grad_rho_values(env, params, np.atleast_2d(y))[0]

    x = env.wrap_state(ics.copy())
    L = len(env.obstacles)
    h0 = _h_stack(env, x)
    if L and not allow_unsafe_ic and np.any(np.min(h0, axis=0) <= 0.0):
        raise ValueError("initial condition inside an unsafe set")

    gens = None
    if ctrl_cfg.noise is not None:
        gens = [np.random.Generator(np.random.PCG64(run_seed_sequence(master_seed, ri)))
                for ri in run_indices]
        noise_L = ctrl_cfg.noise.transform()
        noise_mean = np.asarray(ctrl_cfg.noise.mean, dtype=float)
    sqrt_dt = math.sqrt(int_cfg.dt)

    states_rec = [[x[i].copy()] for i in range(m)]
    controls_rec: list[list[Array]] = [[] for _ in range(m)]
    hmin_rec = [[float(np.min(h0[:, i])) if L else math.inf] for i in range(m)]
    occupancy = np.zeros((m, L))
    outcome: list[Outcome | None] = [None] * m
    annotations: list[dict] = [{} for _ in range(m)]

    # Immediate convergence check (covers ic == target).
    d0 = np.atleast_1d(env.target_distance(x))
    for i in range(m):
        if d0[i] <= int_cfg.converge_radius:
            outcome[i] = Outcome.CONVERGED
    alive = np.array([o is None for o in outcome], dtype=bool)

    max_steps = int(math.ceil(int_cfg.max_time / int_cfg.dt - 1e-9))
    window = max(2, int(int_cfg.stall_window))
    ring_states = [x.copy()]
    cum_path = np.zeros(m)
    ring_path = [cum_path.copy()]
    next_polish_try = np.zeros(m, dtype=int)

    stepper = step_rk4 if int_cfg.method == "rk4" else step_euler

    for k in range(1, max_steps + 1):
        if not alive.any():
            break
        idx = np.nonzero(alive)[0]
        pts = x[idx]
        u = fld(pts)
        x_new = stepper(fld, pts, int_cfg.dt)
        if gens is not None:
            for j, i in enumerate(idx):
                xi = gens[i].normal(size=n)
                x_new[j] = x_new[j] + int_cfg.dt * noise_mean + sqrt_dt * (noise_L @ xi)
        x_new = env.wrap_state(x_new)

        finite = np.all(np.isfinite(x_new), axis=-1)
        h_new = _h_stack(env, x_new)
        dist = env.target_distance(x_new)
        if L:
            occupancy[idx[finite]] += int_cfg.dt * (h_new[:, finite] <= 0.0).T

        for j, i in enumerate(idx):
            if not finite[j]:
                outcome[i] = Outcome.NUMERICAL_FAILURE
                annotations[i]["failed_at_step"] = k
                alive[i] = False
                continue
            states_rec[i].append(x_new[j].copy())
            controls_rec[i].append(np.asarray(u[j], dtype=float).copy())
            hm = float(np.min(h_new[:, j])) if L else math.inf
            hmin_rec[i].append(hm)
            x[i] = x_new[j]
            if L and hm < -int_cfg.safety_margin:
                outcome[i] = Outcome.UNSAFE_ENTERED
                alive[i] = False
            elif dist[j] <= int_cfg.converge_radius:
                outcome[i] = Outcome.CONVERGED
                alive[i] = False

        step_len = np.zeros(m)
        step_len[idx] = np.sqrt(np.sum((x_new - pts) ** 2, axis=-1))
        cum_path = cum_path + step_len
        ring_states.append(x.copy())
        ring_path.append(cum_path.copy())
        if len(ring_states) > window + 1:
            ring_states.pop(0)
            ring_path.pop(0)

        # Stall detection: oscillation around a stationary point shows up as
        # a tiny net displacement over a window of steady step lengths.
        if int_cfg.polish_stationary and polish_field is not None and len(ring_states) == window + 1:
            base_x, base_p = ring_states[0], ring_path[0]
            for i in np.nonzero(alive)[0]:
                if k < next_polish_try[i]:
                    continue
                path_w = cum_path[i] - base_p[i]
                if path_w <= 0.0:
                    continue
                net = float(np.linalg.norm(env.displacement(x[i]) - env.displacement(base_x[i])))
                if net / path_w >= int_cfg.stall_ratio:
                    continue
                if env.target_distance(x[i]) <= ctrl_cfg.blend_delta:
                    continue
                got = _polish_stationary(polish_field, x[i], locality=max(2.0 * path_w, 1e-3))
                if got is None:
                    next_polish_try[i] = k + window
                    continue
                x_star, gn = got
                states_rec[i].append(np.asarray(x_star, dtype=float))
                controls_rec[i].append(np.zeros(n))
                hs = _h_stack(env, np.atleast_2d(x_star))
                hmin_rec[i].append(float(np.min(hs)) if L else math.inf)
                outcome[i] = Outcome.MAX_TIME
                annotations[i]["stationary_point"] = [float(v) for v in x_star]
                annotations[i]["stationary_grad_norm"] = gn
                alive[i] = False

    for i in range(m):
        if outcome[i] is None:
            outcome[i] = Outcome.MAX_TIME

    out = []
    for i in range(m):
        T = len(states_rec[i])
        controls = np.zeros((T, n))
        if T > 1:
            controls[: T - 1] = np.asarray(controls_rec[i])
        out.append(
            Trajectory(
                times=np.arange(T) * int_cfg.dt,
                states=np.asarray(states_rec[i]),
                controls=controls,
                outcome=outcome[i],
                occupancy_time_unsafe=tuple(occupancy[i]),
                h_min=np.asarray(hmin_rec[i]),
                run_index=run_indices[i],
                annotations=annotations[i],
            )
        )
    return out


def simulate_integrator(
    env: Environment,
    params: DensityParams,
    ctrl_cfg: ControllerConfig,
    int_cfg: IntegratorConfig,
    ic,
    controller: str = "blended",
    master_seed: int = 0,
    run_index: int = 0,
    allow_unsafe_ic: bool = False,
) -> Trajectory:
    """Single-run convenience wrapper around the batch integrator."""
    return simulate_batch(
        env, params, ctrl_cfg, int_cfg, np.asarray(ic, dtype=float)[None, :],
        controller=controller, master_seed=master_seed, run_indices=[run_index],
        allow_unsafe_ic=allow_unsafe_ic,
    )[0]


# --- two-link arm -----------------------------------------------------------


@dataclass(frozen=True)
class TwoLinkArm:
    """Planar two-link arm, point masses at the link tips.

    Joint angles are measured from the downward vertical, so q = (0, 0) is
    the stable hanging equilibrium and (pi, 0) is upright.
    """

    masses: tuple[float, float] = (1.0, 1.0)
    lengths: tuple[float, float] = (1.0, 1.0)
    gravity: float = 9.81

    def __post_init__(self):
        if any(v <= 0.0 for v in self.masses + self.lengths):
            raise ValueError("masses and lengths must be positive")


@dataclass(frozen=True)
class ArmGains:
    kp: tuple[float, float]
    kv: tuple[float, float]

    def __post_init__(self):
        if any(v <= 0.0 for v in self.kp + self.kv):
            raise ValueError("gains must be positive")


def arm_mass_matrix(arm: TwoLinkArm, q) -> Array:
    m1, m2 = arm.masses
    l1, l2 = arm.lengths
    c2 = math.cos(float(q[1]))
    m11 = (m1 + m2) * l1**2 + m2 * l2**2 + 2.0 * m2 * l1 * l2 * c2
    m12 = m2 * l2**2 + m2 * l1 * l2 * c2
    m22 = m2 * l2**2
    return np.array([[m11, m12], [m12, m22]])


def arm_bias(arm: TwoLinkArm, q, qd) -> Array:
    """Coriolis/centrifugal plus gravity torques H(q, qd)."""
    m1, m2 = arm.masses
    l1, l2 = arm.lengths
    g = arm.gravity
    q1, q2 = float(q[0]), float(q[1])
    qd1, qd2 = float(qd[0]), float(qd[1])
    s2 = math.sin(q2)
    c1 = -m2 * l1 * l2 * s2 * (2.0 * qd1 * qd2 + qd2 * qd2)
    c2_ = m2 * l1 * l2 * s2 * qd1 * qd1
    g1 = (m1 + m2) * g * l1 * math.sin(q1) + m2 * g * l2 * math.sin(q1 + q2)
    g2 = m2 * g * l2 * math.sin(q1 + q2)
    return np.array([c1 + g1, c2_ + g2])


def arm_energy(arm: TwoLinkArm, q, qd) -> float:
    """Total mechanical energy (kinetic + gravitational potential)."""
    m1, m2 = arm.masses
    l1, l2 = arm.lengths
    M = arm_mass_matrix(arm, q)
    qd = np.asarray(qd, dtype=float)
    kin = 0.5 * float(qd @ M @ qd)
    pot = -(m1 + m2) * arm.gravity * l1 * math.cos(float(q[0])) \
        - m2 * arm.gravity * l2 * math.cos(float(q[0]) + float(q[1]))
    return kin + pot


def arm_free_dynamics(arm: TwoLinkArm):
    """Unforced dynamics f(t, [q, qd]) of the arm; handy for energy checks."""

    def dyn(t, z):
        q, qd = z[:2], z[2:]
        M = arm_mass_matrix(arm, q)
        H = arm_bias(arm, q, qd)
        return np.concatenate([qd, np.linalg.solve(M, -H)])

    return dyn


def arm_points(arm: TwoLinkArm, q):
    """Task-space elbow and tip positions for joint angles q (batch-capable)."""
    q = np.asarray(q, dtype=float)
    l1, l2 = arm.lengths
    p1 = np.stack([l1 * np.sin(q[..., 0]), -l1 * np.cos(q[..., 0])], axis=-1)
    p2 = p1 + np.stack(
        [l2 * np.sin(q[..., 0] + q[..., 1]), -l2 * np.cos(q[..., 0] + q[..., 1])], axis=-1
    )
    return p1, p2


@dataclass
class Reference:
    """Joint-space reference produced by the planning system q' = u(q)."""

    times: Array
    q: Array      # unwrapped for safe interpolation
    qd: Array
    qdd: Array
    outcome: Outcome

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    def sample(self, t: float):
        """Reference (q_d, qd_d, qdd_d) at time t; holds the endpoint beyond."""
        if t >= self.times[-1]:
            return self.q[-1], np.zeros(2), np.zeros(2)
        qd_ = np.array([np.interp(t, self.times, self.q[:, j]) for j in range(2)])
        v = np.array([np.interp(t, self.times, self.qd[:, j]) for j in range(2)])
        a = np.array([np.interp(t, self.times, self.qdd[:, j]) for j in range(2)])
        return qd_, v, a


def generate_reference(
    env_joint: Environment,
    params: DensityParams,
    ctrl_cfg: ControllerConfig,
    int_cfg: IntegratorConfig,
    q0,
) -> Reference:
    """Plan a joint-space path by integrating the density controller."""
    traj = simulate_integrator(env_joint, params, ctrl_cfg, int_cfg, q0)
    if traj.outcome is not Outcome.CONVERGED:
        raise DensnavError(
            f"reference planning did not converge (outcome {traj.outcome.value})"
        )
    q = np.unwrap(traj.states, axis=0)
    qd = traj.controls.copy()
    qd[-1] = 0.0
    if len(traj.times) > 1:
        qdd = np.gradient(qd, float(int_cfg.dt), axis=0)
    else:
        qdd = np.zeros_like(qd)
    return Reference(times=traj.times, q=q, qd=qd, qdd=qdd, outcome=traj.outcome)


@dataclass
class ArmTrajectory:
    times: Array
    q: Array
    qd: Array
    torques: Array
    errors: Array
    h_min: Array
    outcome: Outcome
    annotations: dict = field(default_factory=dict)


def simulate_arm(
    arm: TwoLinkArm,
    gains: ArmGains,
    env_joint: Environment,
    params: DensityParams,
    err_cfg: ControllerConfig,
    int_cfg: IntegratorConfig,
    reference: Reference,
    q0,
    qd0,
) -> ArmTrajectory:
    """Track a planned swing-up reference with density-based inverse dynamics.

    u = M(q) qdd_d + H(q, qd) + M(q) (Kp * k(e) - Kv * edot) where k is the
    blended error-space density controller; near zero error k(e) = -e, so
    the loop reduces to classical computed-torque PD tracking.
    """
    # Error space: no obstacles, origin target; the blend makes k(e) = -e
    # inside blend_delta/2.
    err_env = Environment(
        dimension=2, target=(0.0, 0.0), obstacles=(),
        domain=((-2.0 * math.pi, -2.0 * math.pi), (2.0 * math.pi, 2.0 * math.pi)),
        delta=err_cfg.blend_delta, geometry_mode="euclidean",
    )
    err_params = DensityParams(alpha=params.alpha, theta=params.theta,
                               distance="squared-euclidean")
    kp = np.asarray(gains.kp, dtype=float)
    kv = np.asarray(gains.kv, dtype=float)
    goal = env_joint.target_array

    def err_field(e):
        from .control import blended_field, rescale_speed

        pts = np.atleast_2d(e)
        u = blended_field(err_env, err_params, err_cfg, pts)
        # The raw error-space gradient grows without bound approaching zero
        # error, so rescale to a saturated-linear profile: with speed equal
        # to the taper the command is exactly -e inside the taper radius and
        # a unit-direction vector of fixed magnitude beyond it.
        speed = err_cfg.speed if err_cfg.speed is not None else err_cfg.blend_delta
        taper = err_cfg.speed_taper if err_cfg.speed_taper is not None else err_cfg.blend_delta
        dist = np.sqrt(np.sum(pts * pts, axis=-1))
        return rescale_speed(u, speed, dist=dist, taper=taper)[0]

    def torque_of(t, q, qd):
        q_d, qd_d, qdd_d = reference.sample(t)
        e = wrap_angles(q - q_d)
        edot = qd - qd_d
        M = arm_mass_matrix(arm, q)
        H = arm_bias(arm, q, qd)
        track = kp * err_field(e) - kv * edot
        return M @ (qdd_d + track) + H, e

    def dyn(t, z):
        q, qd = z[:2], z[2:]
        u, _ = torque_of(t, q, qd)
        M = arm_mass_matrix(arm, q)
        H = arm_bias(arm, q, qd)
        qdd = np.linalg.solve(M, u - H)
        return np.concatenate([qd, qdd])

    dt = int_cfg.dt
    steps = int(math.ceil(int_cfg.max_time / dt - 1e-9))
    z = np.concatenate([np.asarray(q0, dtype=float), np.asarray(qd0, dtype=float)])
    times = [0.0]
    qs = [z[:2].copy()]
    qds = [z[2:].copy()]
    u0, e0 = torque_of(0.0, z[:2], z[2:])
    torques = [u0]
    errors = [e0]
    hmins = [float(np.min(_h_stack(env_joint, np.atleast_2d(wrap_angles(z[:2]))))) if env_joint.obstacles else math.inf]
    outcome = Outcome.MAX_TIME
    ann: dict = {}

    for k in range(1, steps + 1):
        t = (k - 1) * dt
        z = _rk4_step_t(dyn, t, z, dt)
        if not np.all(np.isfinite(z)):
            outcome = Outcome.NUMERICAL_FAILURE
            ann["failed_at_step"] = k
            break
        q, qd = z[:2], z[2:]
        u, e = torque_of(k * dt, q, qd)
        times.append(k * dt)
        qs.append(q.copy())
        qds.append(qd.copy())
        torques.append(u)
        errors.append(e)
        hm = float(np.min(_h_stack(env_joint, np.atleast_2d(wrap_angles(q))))) if env_joint.obstacles else math.inf
        hmins.append(hm)
        if hm < -int_cfg.safety_margin:
            ann["penetrated"] = True

    final_err = float(np.linalg.norm(wrap_angles(np.asarray(qs[-1]) - goal)))
    if outcome is not Outcome.NUMERICAL_FAILURE:
        outcome = Outcome.CONVERGED if final_err <= int_cfg.converge_radius else Outcome.MAX_TIME
    ann["final_joint_error"] = final_err
    return ArmTrajectory(
        times=np.asarray(times), q=np.asarray(qs), qd=np.asarray(qds),
        torques=np.asarray(torques), errors=np.asarray(errors),
        h_min=np.asarray(hmins), outcome=outcome, annotations=ann,
    )


# --- task-space to joint-space obstacle mapping ------------------------------


@dataclass(frozen=True)
class MappingReport:
    colliding_cells: int
    total_cells: int
    circles: tuple[tuple[tuple[float, float], float], ...]
    coverage: float
    over_approx_ratio: float
    notice: str = ""


def _segment_point_distance(p0, p1, c):
    """Distance from point c to segment [p0, p1]; all inputs broadcastable."""
    v = p1 - p0
    w = np.asarray(c, dtype=float) - p0
    vv = np.sum(v * v, axis=-1)
    t = np.clip(np.sum(w * v, axis=-1) / np.where(vv > 0.0, vv, 1.0), 0.0, 1.0)
    proj = p0 + t[..., None] * v
    d = np.asarray(c, dtype=float) - proj
    return np.sqrt(np.sum(d * d, axis=-1))


def _wrapped_dist(a, b):
    d = wrap_angles(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    return np.sqrt(np.sum(d * d, axis=-1))


def _circular_mean(pts: Array) -> Array:
    return np.arctan2(np.mean(np.sin(pts), axis=0), np.mean(np.cos(pts), axis=0))


def _cover_component(pts: Array, max_radius: float, halfdiag: float):
    """Greedy k-centre cover of one colliding component by wrapped circles."""
    for k in range(1, 33):
        seeds = [pts[0]]
        d = _wrapped_dist(pts, seeds[0])
        while len(seeds) < k:
            far = int(np.argmax(d))
            seeds.append(pts[far])
            d = np.minimum(d, _wrapped_dist(pts, seeds[-1]))
        assign = np.argmin(
            np.stack([_wrapped_dist(pts, s) for s in seeds], axis=0), axis=0
        )
        circles = []
        worst = 0.0
        for j in range(len(seeds)):
            members = pts[assign == j]
            if len(members) == 0:
                continue
            # Centre on the seed's neighbourhood mean (circular), cover by radius.
            ctr = _circular_mean(wrap_angles(members - seeds[j]) + seeds[j])
            ctr = wrap_angles(ctr)
            r = float(np.max(_wrapped_dist(members, ctr)))
            circles.append((ctr, r + halfdiag))
            worst = max(worst, r + halfdiag)
        if worst <= max_radius or k == 32:
            return circles
    return circles


def map_task_obstacle_to_joint_space(
    arm: TwoLinkArm,
    center,
    radius: float,
    resolution: int = 160,
    joint_margin: float = 0.5,
    max_circle_radius: float = 1.0,
    label: str = "task-obstacle",
) -> tuple[list[Obstacle], MappingReport]:
    """Rasterise the collision set of one task-space disc and cover it by circles.

    Each covering circle becomes one joint-space obstacle (wrapped sphere);
    composing several obstacles through the density product is exactly how
    unions of unsafe sets are meant to combine.
    """
    if resolution < 64:
        raise ValueError("grid resolution must be at least 64 per axis")
    if radius <= 0.0:
        raise ValueError("task obstacle radius must be positive")
    center = np.asarray(center, dtype=float)

    cell = 2.0 * math.pi / resolution
    ax = -math.pi + (np.arange(resolution) + 0.5) * cell
    Q1, Q2 = np.meshgrid(ax, ax, indexing="ij")
    q = np.stack([Q1, Q2], axis=-1)
    p1, p2 = arm_points(arm, q)
    base = np.zeros_like(p1)
    d1 = _segment_point_distance(base, p1, center)
    d2 = _segment_point_distance(p1, p2, center)
    collide = np.minimum(d1, d2) <= radius

    total = collide.size
    count = int(np.count_nonzero(collide))
    if count == 0:
        report = MappingReport(0, total, (), 1.0, 1.0,
                               notice="no colliding configurations (obstacle out of reach)")
        return [], report
    if count == total:
        raise MalformedObstacleError(
            f"{label}: collision set covers every configuration (obstacle overlaps the arm base)"
        )

    # Connected components on the torus grid (4-neighbourhood, wrapped).
    labels = np.full(collide.shape, -1, dtype=int)
    comp = 0
    for i0, j0 in zip(*np.nonzero(collide)):
        if labels[i0, j0] >= 0:
            continue
        stack = [(int(i0), int(j0))]
        labels[i0, j0] = comp
        while stack:
            i, j = stack.pop()
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ii, jj = (i + di) % resolution, (j + dj) % resolution
                if collide[ii, jj] and labels[ii, jj] < 0:
                    labels[ii, jj] = comp
                    stack.append((ii, jj))
        comp += 1

    halfdiag = cell * math.sqrt(2.0) / 2.0
    circles: list[tuple[Array, float]] = []
    for c in range(comp):
        pts = q[labels == c]
        circles.extend(_cover_component(pts, max_circle_radius, halfdiag))

    # Coverage audit on the rasterised set.
    all_pts = q[collide]
    dists = np.stack([_wrapped_dist(all_pts, ctr) for ctr, _ in circles], axis=0)
    radii = np.array([r for _, r in circles])
    covered_pts = np.any(dists <= radii[:, None] + 1e-12, axis=0)
    coverage = float(np.mean(covered_pts))

    flat = q.reshape(-1, 2)
    din = np.stack([_wrapped_dist(flat, ctr) for ctr, _ in circles], axis=0)
    in_union = np.any(din <= radii[:, None], axis=0)
    over_ratio = float(np.count_nonzero(in_union)) / count

    obstacles = []
    for idx, (ctr, r) in enumerate(circles):
        h = Sphere(center=(float(ctr[0]), float(ctr[1])), radius=float(r),
                   wrap_mask=(True, True))
        s = Sphere(center=(float(ctr[0]), float(ctr[1])), radius=float(r + joint_margin),
                   wrap_mask=(True, True))
        obstacles.append(Obstacle(h=h, s=s, label=f"{label}-{idx}"))

    report = MappingReport(
        colliding_cells=count, total_cells=total,
        circles=tuple(((float(c[0]), float(c[1])), float(r)) for c, r in circles),
        coverage=coverage, over_approx_ratio=over_ratio,
    )
    return obstacles, report
