"""Implicit-surface obstacle geometry and environment bookkeeping.

Obstacles are pairs of scalar fields (h, s): the unsafe set is {h <= 0},
the sensing region is {s <= 0} minus the unsafe set.  All built-in field
kinds carry analytic gradients; finite differences are used only as a
cross-check in the test suite.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DimensionMismatchError, EstimationError, MalformedObstacleError

Array = np.ndarray

# Squared-size of a coordinate box diagonal below which two points are "the same".
_TINY = 1e-12


def wrap_angles(d: Array, mask=None) -> Array:
    """Wrap coordinate differences into (-pi, pi].

    With ``mask`` given, only the flagged coordinates are wrapped; ``None``
    wraps every coordinate.
    """
    d = np.array(d, dtype=float, copy=True)
    if mask is None:
        return np.pi - np.mod(np.pi - d, 2.0 * np.pi)
    m = np.asarray(mask, dtype=bool)
    if m.any():
        d[..., m] = np.pi - np.mod(np.pi - d[..., m], 2.0 * np.pi)
    return d


def _as_points(x, dim: int) -> tuple[Array, bool]:
    """Coerce to a (..., dim) float array; report whether input was a single point."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] != dim:
        raise DimensionMismatchError(
            f"expected points of dimension {dim}, got array of shape {arr.shape}"
        )
    return arr, arr.ndim == 1


class ImplicitFn(ABC):
    """Scalar field x -> R with an analytic gradient."""

    @property
    @abstractmethod
    def dim(self) -> int:
        ...

    @abstractmethod
    def value(self, x: Array) -> Array:
        """Field value; accepts (..., dim) arrays and broadcasts."""

    @abstractmethod
    def grad(self, x: Array) -> Array:
        """Analytic gradient, shape (..., dim)."""

    def shifted(self, offset: float) -> "ImplicitFn":
        """Field plus a constant; gradient unchanged."""
        return Shifted(self, float(offset))


@dataclass(frozen=True)
class Shifted(ImplicitFn):
    base: ImplicitFn
    offset: float

    @property
    def dim(self) -> int:
        return self.base.dim

    def value(self, x):
        return self.base.value(x) + self.offset

    def grad(self, x):
        return self.base.grad(x)


@dataclass(frozen=True, kw_only=True)
class _Centered(ImplicitFn):
    """Shared machinery for kinds defined through x - center."""

    center: tuple[float, ...]
    wrap_mask: tuple[bool, ...] | None = None

    @property
    def dim(self) -> int:
        return len(self.center)

    def _diff(self, x) -> Array:
        arr, _ = _as_points(x, self.dim)
        d = arr - np.asarray(self.center, dtype=float)
        if self.wrap_mask is not None:
            d = wrap_angles(d, self.wrap_mask)
        return d


@dataclass(frozen=True, kw_only=True)
class Sphere(_Centered):
    radius: float

    def value(self, x):
        d = self._diff(x)
        return np.sum(d * d, axis=-1) - self.radius**2

    def grad(self, x):
        return 2.0 * self._diff(x)


@dataclass(frozen=True, kw_only=True)
class Ellipsoid(_Centered):
    scale: tuple[float, ...]
    radius: float

    def value(self, x):
        d = self._diff(x) * np.asarray(self.scale)
        return np.sum(d * d, axis=-1) - self.radius**2

    def grad(self, x):
        a2 = np.asarray(self.scale) ** 2
        return 2.0 * a2 * self._diff(x)


@dataclass(frozen=True, kw_only=True)
class Superellipse(_Centered):
    """Powered sphere ||a*(x-c)||^p - r^p; p = 2 reduces to an ellipsoid."""

    radius: float
    power: float = 4.0
    scale: tuple[float, ...] | None = None

    def _q(self, x):
        d = self._diff(x)
        if self.scale is not None:
            d = d * np.asarray(self.scale)
        return d, np.sum(d * d, axis=-1)

    def value(self, x):
        _, q = self._q(x)
        return q ** (self.power / 2.0) - self.radius**self.power

    def grad(self, x):
        d, q = self._q(x)
        a2 = np.asarray(self.scale) ** 2 if self.scale is not None else 1.0
        # d/dx q^(p/2) = p * q^(p/2 - 1) * a_i^2 * (x_i - c_i); power >= 2 keeps this total.
        coef = self.power * q ** (self.power / 2.0 - 1.0)
        return coef[..., None] * a2 * self._diff(x)


@dataclass(frozen=True, kw_only=True)
class AxisCylinder(_Centered):
    """Unbounded cylinder around one coordinate axis (exempt from boundedness)."""

    axis: int
    radius: float

    def value(self, x):
        d = self._diff(x)
        d = np.delete(d, self.axis, axis=-1)
        return np.sum(d * d, axis=-1) - self.radius**2

    def grad(self, x):
        g = 2.0 * self._diff(x)
        g[..., self.axis] = 0.0
        return g


@dataclass(frozen=True, kw_only=True)
class Torus(_Centered):
    """Quartic implicit torus; polynomial, so the gradient is total."""

    axis: int
    major_radius: float
    minor_radius: float

    def _split(self, x):
        d = self._diff(x)
        da = d[..., self.axis]
        dp = np.delete(d, self.axis, axis=-1)
        return d, da, np.sum(dp * dp, axis=-1)

    def value(self, x):
        _, da, u = self._split(x)
        s = u + da * da + self.major_radius**2 - self.minor_radius**2
        return s * s - 4.0 * self.major_radius**2 * u

    def grad(self, x):
        d, da, u = self._split(x)
        s = u + da * da + self.major_radius**2 - self.minor_radius**2
        g = 4.0 * d * (s - 2.0 * self.major_radius**2)[..., None]
        g[..., self.axis] = 4.0 * da * s
        return g


@dataclass(frozen=True)
class Polynomial(ImplicitFn):
    """Multivariate polynomial sum_m c_m * prod_i x_i^e_{m,i} (escape hatch kind)."""

    exponents: tuple[tuple[int, ...], ...]
    coefficients: tuple[float, ...]

    def __post_init__(self):
        if len(self.exponents) != len(self.coefficients) or not self.exponents:
            raise MalformedObstacleError("polynomial needs matching, non-empty terms")
        dims = {len(e) for e in self.exponents}
        if len(dims) != 1:
            raise MalformedObstacleError("polynomial exponent tuples have mixed lengths")

    @property
    def dim(self) -> int:
        return len(self.exponents[0])

    def value(self, x):
        arr, _ = _as_points(x, self.dim)
        out = np.zeros(arr.shape[:-1])
        for c, exps in zip(self.coefficients, self.exponents):
            term = np.full(arr.shape[:-1], c, dtype=float)
            for i, e in enumerate(exps):
                if e:
                    term = term * arr[..., i] ** e
            out = out + term
        return out

    def grad(self, x):
        arr, _ = _as_points(x, self.dim)
        g = np.zeros(arr.shape)
        for c, exps in zip(self.coefficients, self.exponents):
            for j, ej in enumerate(exps):
                if ej == 0:
                    continue
                term = np.full(arr.shape[:-1], c * ej, dtype=float)
                for i, e in enumerate(exps):
                    p = e - 1 if i == j else e
                    if p:
                        term = term * arr[..., i] ** p
                g[..., j] += term
        return g


@dataclass(frozen=True, kw_only=True)
class WarpedEllipse(_Centered):
    """Exponentially warped ellipse: zero set a^2 x1^2 + b^2 x2^2 c^x1 = r^2.

    The field is that expression divided by r, so magnitudes away from the
    boundary stay comparable with linear-unit fields regardless of r; the
    zero set itself does not depend on the normalisation.
    """

    a: float
    b: float
    c: float
    radius: float

    def __post_init__(self):
        if len(self.center) != 2:
            raise MalformedObstacleError("warped ellipse is two-dimensional")
        if self.c <= 0.0:
            raise MalformedObstacleError("warp base c must be positive")
        if self.radius <= 0.0:
            raise MalformedObstacleError("warped ellipse radius must be positive")

    def value(self, x):
        d = self._diff(x)
        cx = self.c ** d[..., 0]
        quad = (self.a * d[..., 0]) ** 2 + (self.b * d[..., 1]) ** 2 * cx
        return (quad - self.radius**2) / self.radius

    def grad(self, x):
        d = self._diff(x)
        cx = self.c ** d[..., 0]
        g = np.empty_like(d)
        g[..., 0] = 2.0 * self.a**2 * d[..., 0] + (self.b * d[..., 1]) ** 2 * math.log(self.c) * cx
        g[..., 1] = 2.0 * self.b**2 * d[..., 1] * cx
        return g / self.radius


def _rconj(p, q, gp=None, gq=None):
    """Smooth intersection of sublevel sets: negative iff p < 0 and q < 0.

    Returns the value, or (value, gradient) when the operand gradients are given.
    The gradient is undefined only on the measure-zero corner set p = q = 0.
    """
    root = np.sqrt(p * p + q * q)
    val = p + q + root
    if gp is None:
        return val
    safe = np.where(root > 0.0, root, 1.0)
    wp = np.where(root > 0.0, p / safe, 0.0)
    wq = np.where(root > 0.0, q / safe, 0.0)
    grad = (1.0 + wp)[..., None] * gp + (1.0 + wq)[..., None] * gq
    return val, grad


@dataclass(frozen=True, kw_only=True)
class CShape(_Centered):
    """Annulus with a rectangular slot removed on the +x1 side.

    Built from smooth set conjunctions, so the zero level set is exactly the
    ring boundary minus the slot mouth and the gradient is analytic away from
    the measure-zero corner curves.  ``scale`` multiplies the field (not the
    set): pairing a C-shape with a much larger sensing surface needs h and s
    magnitudes of comparable size, otherwise the bump ratio h/(h-s) is pinned
    near zero over the whole interior.
    """

    inner_radius: float
    outer_radius: float
    slot_halfwidth: float
    scale: float = 1.0

    def __post_init__(self):
        if len(self.center) != 2:
            raise MalformedObstacleError("c-shape is two-dimensional")
        if not 0.0 < self.inner_radius < self.outer_radius:
            raise MalformedObstacleError("c-shape radii must satisfy 0 < inner < outer")
        if not 0.0 < self.slot_halfwidth < self.inner_radius:
            raise MalformedObstacleError("slot halfwidth must lie in (0, inner radius)")
        if self.scale <= 0.0:
            raise MalformedObstacleError("c-shape field scale must be positive")

    def _pieces(self, x, with_grad: bool):
        d = self._diff(x)
        r2 = np.sum(d * d, axis=-1)
        # Comparable scales keep the conjunctions well balanced.
        f1 = (r2 - self.outer_radius**2) / self.outer_radius
        f2 = (self.inner_radius**2 - r2) / self.outer_radius
        g1 = -d[..., 0]
        g2 = (d[..., 1] ** 2 - self.slot_halfwidth**2) / self.slot_halfwidth
        if not with_grad:
            return f1, f2, g1, g2, None
        zero = np.zeros_like(d)
        grads = (
            2.0 * d / self.outer_radius,
            -2.0 * d / self.outer_radius,
            zero + np.array([-1.0, 0.0]),
            np.stack([np.zeros_like(g2), 2.0 * d[..., 1] / self.slot_halfwidth], axis=-1),
        )
        return f1, f2, g1, g2, grads

    def value(self, x):
        f1, f2, g1, g2, _ = self._pieces(x, with_grad=False)
        ring = _rconj(f1, f2)
        slot = _rconj(g1, g2)
        return self.scale * _rconj(ring, -slot)

    def grad(self, x):
        f1, f2, g1, g2, grads = self._pieces(x, with_grad=True)
        ring, gring = _rconj(f1, f2, grads[0], grads[1])
        slot, gslot = _rconj(g1, g2, grads[2], grads[3])
        _, g = _rconj(ring, -slot, gring, -gslot)
        return self.scale * g


class Region(Enum):
    UNSAFE = "Unsafe"
    SENSING = "Sensing"
    FREE = "Free"


@dataclass(frozen=True)
class Obstacle:
    """Unsafe field h and enclosing sensing field s for one obstacle."""

    h: ImplicitFn
    s: ImplicitFn
    label: str = ""

    def __post_init__(self):
        if self.h.dim != self.s.dim:
            raise DimensionMismatchError(
                f"obstacle '{self.label}': h has dim {self.h.dim}, s has dim {self.s.dim}"
            )

    @property
    def dim(self) -> int:
        return self.h.dim


@dataclass(frozen=True)
class Environment:
    """Workspace description: target, obstacles, domain box, blend radius."""

    dimension: int
    target: tuple[float, ...]
    obstacles: tuple[Obstacle, ...]
    domain: tuple[tuple[float, ...], tuple[float, ...]]
    delta: float
    geometry_mode: str = "euclidean"

    def __post_init__(self):
        if self.geometry_mode not in ("euclidean", "toroidal"):
            raise ValueError(f"unknown geometry mode '{self.geometry_mode}'")
        if len(self.target) != self.dimension:
            raise DimensionMismatchError("target dimension does not match environment")
        lo, hi = self.domain
        if len(lo) != self.dimension or len(hi) != self.dimension:
            raise DimensionMismatchError("domain box dimension does not match environment")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("domain box must have positive extent on every axis")
        if self.delta <= 0.0:
            raise ValueError("delta must be positive")
        for obs in self.obstacles:
            if obs.dim != self.dimension:
                raise DimensionMismatchError(
                    f"obstacle '{obs.label}' has dim {obs.dim}, environment has {self.dimension}"
                )

    @property
    def lo(self) -> Array:
        return np.asarray(self.domain[0], dtype=float)

    @property
    def hi(self) -> Array:
        return np.asarray(self.domain[1], dtype=float)

    @property
    def target_array(self) -> Array:
        return np.asarray(self.target, dtype=float)

    @property
    def wrap_mask(self) -> tuple[bool, ...] | None:
        if self.geometry_mode == "toroidal":
            return (True,) * self.dimension
        return None

    def displacement(self, x: Array) -> Array:
        """x - target, wrapped per the geometry mode."""
        d = np.asarray(x, dtype=float) - self.target_array
        if self.geometry_mode == "toroidal":
            d = wrap_angles(d)
        return d

    def target_distance(self, x: Array) -> Array:
        d = self.displacement(x)
        return np.sqrt(np.sum(d * d, axis=-1))

    def wrap_state(self, x: Array) -> Array:
        if self.geometry_mode == "toroidal":
            return wrap_angles(np.asarray(x, dtype=float))
        return np.asarray(x, dtype=float)

    def contains(self, x: Array) -> Array:
        arr, _ = _as_points(x, self.dimension)
        return np.all((arr >= self.lo) & (arr <= self.hi), axis=-1)

    def sample_uniform(self, rng: np.random.Generator, count: int) -> Array:
        return rng.uniform(self.lo, self.hi, size=(count, self.dimension))

    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))


def eval_field(fn: ImplicitFn, x) -> float:
    """Evaluate an implicit field at a single state."""
    arr, single = _as_points(x, fn.dim)
    if not np.all(np.isfinite(arr)):
        raise ValueError("state coordinates must be finite")
    v = fn.value(arr)
    return float(v) if single else v


def grad_field(fn: ImplicitFn, x):
    """Analytic gradient of an implicit field at a single state."""
    arr, single = _as_points(x, fn.dim)
    if not np.all(np.isfinite(arr)):
        raise ValueError("state coordinates must be finite")
    g = fn.grad(arr)
    return np.asarray(g, dtype=float) if not single else np.asarray(g, dtype=float)


def classify(env: Environment, x) -> tuple[Region, ...]:
    """Region label per obstacle at a single state (exactly one label each)."""
    arr, single = _as_points(x, env.dimension)
    out = []
    for obs in env.obstacles:
        h = obs.h.value(arr)
        s = obs.s.value(arr)
        if single:
            if h <= 0.0:
                out.append(Region.UNSAFE)
            elif s <= 0.0:
                out.append(Region.SENSING)
            else:
                out.append(Region.FREE)
        else:
            code = np.where(h <= 0.0, 0, np.where(s <= 0.0, 1, 2))
            out.append(code)
    return tuple(out)


def min_h(env: Environment, x) -> Array:
    """Minimum of h over obstacles; +inf when the environment has none."""
    arr, single = _as_points(x, env.dimension)
    if not env.obstacles:
        shape = arr.shape[:-1]
        return float("inf") if single else np.full(shape, np.inf)
    vals = np.stack([obs.h.value(arr) for obs in env.obstacles], axis=0)
    m = np.min(vals, axis=0)
    return float(m) if single else m


def sample_safe_states(
    env: Environment,
    count: int,
    clearance: float = 0.0,
    exclude_radius: float = 0.0,
    seed: int = 0,
) -> Array:
    """Uniform states over the domain with min h > clearance, away from target.

    Rejection sampling; raises EstimationError when the accepted fraction is
    too small to fill the request in a bounded number of draws.
    """
    if count <= 0:
        raise ValueError("count must be positive")
    if clearance < 0.0:
        raise ValueError("clearance must be non-negative")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed)])))
    batch = max(4 * count, 256)
    kept: list[Array] = []
    total = 0
    budget = 10_000 * count + 100_000
    while sum(len(k) for k in kept) < count:
        if total >= budget:
            raise EstimationError(
                "safe-state sampling rejected too many draws; "
                "check the clearance against the free-space volume"
            )
        cand = env.sample_uniform(rng, batch)
        total += batch
        ok = min_h(env, cand) > clearance
        if exclude_radius > 0.0:
            ok &= env.target_distance(cand) > exclude_radius
        if np.any(ok):
            kept.append(cand[ok])
    return np.concatenate(kept, axis=0)[:count]


def sample_disc_states(
    env: Environment,
    count: int,
    center,
    radius: float,
    clearance: float = 0.0,
    seed: int = 0,
) -> Array:
    """Uniform states in a ball around `center` with min h > clearance.

    Used to seed runs inside a cavity or other designated pocket of the
    free space instead of the whole domain.
    """
    if count <= 0:
        raise ValueError("count must be positive")
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    if clearance < 0.0:
        raise ValueError("clearance must be non-negative")
    ctr = np.asarray(center, dtype=float)
    if ctr.shape != (env.dimension,):
        raise DimensionMismatchError("disc center dimension mismatch")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed)])))
    batch = max(4 * count, 256)
    kept: list[Array] = []
    total = 0
    budget = 10_000 * count + 100_000
    while sum(len(k) for k in kept) < count:
        if total >= budget:
            raise EstimationError(
                "disc sampling rejected too many draws; "
                "check the clearance against the ball's safe volume"
            )
        cand = ctr + rng.uniform(-radius, radius, size=(batch, env.dimension))
        total += batch
        ok = np.sum((cand - ctr) ** 2, axis=-1) <= radius * radius
        ok &= env.contains(cand)
        ok &= min_h(env, cand) > clearance
        if np.any(ok):
            kept.append(cand[ok])
    return np.concatenate(kept, axis=0)[:count]


def validate_environment(env: Environment, samples: int = 100_000, seed: int = 0) -> list[str]:
    """Sampled structural checks; returns human-readable violations (empty = pass)."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed])))
    pts = env.sample_uniform(rng, int(samples))
    violations: list[str] = []
    target = env.target_array

    # Ball around the target used for the delta-disjointness check.
    ball_dirs = rng.normal(size=(2048, env.dimension))
    ball_dirs /= np.linalg.norm(ball_dirs, axis=1, keepdims=True)
    radii = env.delta * rng.uniform(0.0, 1.0, size=2048) ** (1.0 / env.dimension)
    ball = target + ball_dirs * radii[:, None]

    for obs in env.obstacles:
        name = obs.label or "obstacle"
        h = obs.h.value(pts)
        s = obs.s.value(pts)
        unsafe = h <= 0.0
        sensing_closure = s <= 0.0

        if float(obs.s.value(target)) <= 0.0:
            violations.append(f"{name}: target inside sensing set")
        if np.any(obs.s.value(ball) <= 0.0):
            violations.append(f"{name}: delta ball around target intersects sensing set")
        if np.any(unsafe & ~(s < 0.0)):
            violations.append(f"{name}: sensing set does not enclose unsafe set")
        if np.any(sensing_closure & (h - s <= 0.0)):
            violations.append(f"{name}: h - s not positive on sensing closure")
        if np.any(unsafe):
            d = pts[unsafe] - target
            if env.geometry_mode == "toroidal":
                d = wrap_angles(d)
            dmin = float(np.min(np.sqrt(np.sum(d * d, axis=-1))))
            if dmin <= math.sqrt(_TINY):
                violations.append(f"{name}: unsafe set touches the target")
    return violations
