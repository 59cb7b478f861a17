"""Navigation density rho = prod_k Psi_k / V^alpha and its gradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EstimationError, UnboundedDensityError
from .geometry import Environment, _as_points, wrap_angles
from .smoothing import grad_psi_values, psi_values

Array = np.ndarray

# Evaluation is refused when V falls at or below this floor.
V_REFUSAL = 1e-12

DISTANCE_KINDS = ("squared-euclidean", "trigonometric-joint")


@dataclass(frozen=True)
class DistanceFn:
    """Smooth distance-like measure V with V(target) = 0."""

    kind: str
    target: tuple[float, ...]
    wrap_mask: tuple[bool, ...] | None = None

    def __post_init__(self):
        if self.kind not in DISTANCE_KINDS:
            raise ValueError(f"unknown distance kind '{self.kind}'")

    @property
    def dim(self) -> int:
        return len(self.target)

    def _diff(self, x) -> Array:
        d = np.asarray(x, dtype=float) - np.asarray(self.target)
        if self.kind == "squared-euclidean" and self.wrap_mask is not None:
            d = wrap_angles(d, self.wrap_mask)
        return d

    def value(self, x) -> Array:
        d = self._diff(x)
        if self.kind == "squared-euclidean":
            return np.sum(d * d, axis=-1)
        # 2*(1 - cos d) matches ||d||^2 to second order near the target.
        return np.sum(2.0 * (1.0 - np.cos(d)), axis=-1)

    def grad(self, x) -> Array:
        d = self._diff(x)
        if self.kind == "squared-euclidean":
            return 2.0 * d
        return 2.0 * np.sin(d)


@dataclass(frozen=True)
class DensityParams:
    """Density exponent, bump floor, and the distance measure kind."""

    alpha: float = 4.0
    theta: float = 0.01
    distance: str = "squared-euclidean"

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise ValueError("alpha must be positive")
        # theta = 0 is tolerated so diagnostic audits can probe the
        # pathological configuration; scenario loading enforces theta > 0.
        if self.theta < 0.0:
            raise ValueError("theta must be non-negative")
        if self.distance not in DISTANCE_KINDS:
            raise ValueError(f"unknown distance kind '{self.distance}'")


def make_distance(env: Environment, params: DensityParams) -> DistanceFn:
    return DistanceFn(kind=params.distance, target=env.target, wrap_mask=env.wrap_mask)


def distance_V(env: Environment, params: DensityParams, x):
    """V at a single state."""
    arr, single = _as_points(x, env.dimension)
    v = make_distance(env, params).value(arr)
    return float(v) if single else v


def grad_V(env: Environment, params: DensityParams, x):
    """Gradient of V at a single state."""
    arr, _ = _as_points(x, env.dimension)
    return make_distance(env, params).grad(arr)


def _psi_stack(env: Environment, theta: float, pts: Array) -> Array:
    if not env.obstacles:
        return np.ones((0,) + pts.shape[:-1])
    return np.stack([psi_values(obs, theta, pts) for obs in env.obstacles], axis=0)


def rho_values(env: Environment, params: DensityParams, pts: Array) -> Array:
    """Vectorised density over (..., n) points; refuses points too near the target."""
    dist = make_distance(env, params)
    V = dist.value(pts)
    if np.any(V <= V_REFUSAL):
        raise UnboundedDensityError(
            "density requested within machine tolerance of the target (V <= 1e-12)"
        )
    psis = _psi_stack(env, params.theta, pts)
    prod = np.prod(psis, axis=0) if psis.shape[0] else np.ones_like(V)
    return prod * V ** (-params.alpha)


def grad_rho_values(env: Environment, params: DensityParams, pts: Array) -> Array:
    """Vectorised density gradient via the product rule."""
    dist = make_distance(env, params)
    V = dist.value(pts)
    if np.any(V <= V_REFUSAL):
        raise UnboundedDensityError(
            "density gradient requested within machine tolerance of the target (V <= 1e-12)"
        )
    gV = dist.grad(pts)
    psis = _psi_stack(env, params.theta, pts)
    prod = np.prod(psis, axis=0) if psis.shape[0] else np.ones_like(V)
    v_pow = V ** (-params.alpha)
    out = (-params.alpha) * (v_pow / V * prod)[..., None] * gV
    if psis.shape[0]:
        bump_sum = np.zeros_like(pts)
        for k, obs in enumerate(env.obstacles):
            gpsi = grad_psi_values(obs, pts)
            # Leave-one-out product; Psi_k >= theta > 0 keeps the division total.
            bump_sum += (prod / psis[k])[..., None] * gpsi
        out += v_pow[..., None] * bump_sum
    return out


def rho(env: Environment, params: DensityParams, x) -> float:
    """Density at a single state."""
    arr, single = _as_points(x, env.dimension)
    v = rho_values(env, params, arr)
    return float(v) if single else v


def grad_rho(env: Environment, params: DensityParams, x):
    """Density gradient at a single state."""
    arr, _ = _as_points(x, env.dimension)
    return grad_rho_values(env, params, arr)


@dataclass(frozen=True)
class UnsafeSetStats:
    """Monte Carlo estimates for one obstacle's unsafe set."""

    v_min: float
    measure: float
    measure_se: float
    hits: int
    samples: int


def estimate_unsafe_stats(
    env: Environment,
    params: DensityParams,
    obstacle_index: int | None = None,
    samples: int = 1_000_000,
    seed: int = 0,
) -> UnsafeSetStats:
    """Uniform-sampling estimates of min V over the unsafe set and its measure.

    obstacle_index selects one unsafe set; None takes the union over all.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed])))
    pts = env.sample_uniform(rng, int(samples))
    if obstacle_index is None:
        if not env.obstacles:
            raise EstimationError("environment has no obstacles to estimate")
        vals = np.stack([o.h.value(pts) for o in env.obstacles], axis=0)
        inside = np.any(vals <= 0.0, axis=0)
        label = "union"
    else:
        obs = env.obstacles[obstacle_index]
        inside = obs.h.value(pts) <= 0.0
        label = obs.label
    hits = int(np.count_nonzero(inside))
    if hits == 0:
        raise EstimationError(
            f"no samples hit the unsafe set of '{label}' "
            f"({samples} draws); refine the domain box or sample count"
        )
    p_hat = hits / samples
    vol = env.volume()
    measure = vol * p_hat
    measure_se = vol * float(np.sqrt(p_hat * (1.0 - p_hat) / samples))
    v_min = float(np.min(make_distance(env, params).value(pts[inside])))
    return UnsafeSetStats(v_min=v_min, measure=measure, measure_se=measure_se,
                          hits=hits, samples=int(samples))


def theta_bound(
    env: Environment,
    params: DensityParams,
    epsilon: float,
    obstacle_index: int | None = None,
    samples: int = 1_000_000,
    seed: int = 0,
) -> float:
    """Largest theta honouring the occupancy budget epsilon.

    theta_max = epsilon * min_{unsafe} V / m(unsafe), both factors estimated
    by uniform Monte Carlo over the domain box; obstacle_index as in
    estimate_unsafe_stats.
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    stats = estimate_unsafe_stats(env, params, obstacle_index, samples, seed)
    if stats.v_min <= 0.0:
        raise EstimationError(
            "unsafe set reaches the target (V_min estimate is not positive)"
        )
    return epsilon * stats.v_min / stats.measure
