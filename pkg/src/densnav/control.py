"""Feedback controllers synthesised from the navigation density."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .density import DensityParams, grad_rho_values
from .geometry import Environment, _as_points
from .smoothing import smooth_step

Array = np.ndarray


@dataclass(frozen=True)
class NoiseConfig:
    """Zero-order-hold white actuation noise: mean and covariance of w."""

    mean: tuple[float, ...]
    cov: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=float)
        c = np.asarray(self.cov, dtype=float)
        if c.shape != (m.size, m.size):
            raise ValueError("noise covariance shape does not match the mean")
        if not np.allclose(c, c.T):
            raise ValueError("noise covariance must be symmetric")
        w = np.linalg.eigvalsh(c)
        if np.any(w < -1e-12):
            raise ValueError("noise covariance must be positive semi-definite")

    def transform(self) -> Array:
        """Matrix L with L L^T = cov (eigendecomposition; tolerates singular cov)."""
        c = np.asarray(self.cov, dtype=float)
        w, u = np.linalg.eigh(c)
        return u * np.sqrt(np.clip(w, 0.0, None))

    def sample(self, rng: np.random.Generator) -> Array:
        xi = rng.normal(size=len(self.mean))
        return np.asarray(self.mean) + self.transform() @ xi


@dataclass(frozen=True)
class ControllerConfig:
    """Controller options layered on top of the raw density gradient.

    blend_delta  radius of the local blend toward pure target attraction
    speed        optional constant-speed rescale of the commanded field;
                 a positive rescale preserves the field's integral curves
                 while making fixed-step integration practical
    speed_taper  optional distance over which the rescaled speed ramps
                 down approaching the target (smooths reference endpoints)
    u_max        optional infinity-norm saturation bound
    noise        optional actuation disturbance entering after the command
    """

    blend_delta: float = 1.0
    speed: float | None = None
    speed_taper: float | None = None
    u_max: float | None = None
    noise: NoiseConfig | None = None

    def __post_init__(self):
        if self.blend_delta <= 0.0:
            raise ValueError("blend_delta must be positive")
        if self.speed is not None and self.speed <= 0.0:
            raise ValueError("speed must be positive when set")
        if self.speed_taper is not None and self.speed_taper <= 0.0:
            raise ValueError("speed_taper must be positive when set")
        if self.u_max is not None and self.u_max <= 0.0:
            raise ValueError("u_max must be positive when set")


def gradient_field(env: Environment, params: DensityParams, pts: Array) -> Array:
    """Raw ascent field: the density gradient itself."""
    return grad_rho_values(env, params, pts)


def blended_field(env: Environment, params: DensityParams,
                  cfg: ControllerConfig, pts: Array) -> Array:
    """Gradient field blended into pure attraction near the target.

    Weight w = smooth_step(2 - 2*dist/delta): w = 0 at dist >= delta
    (pure gradient), w = 1 at dist <= delta/2 (pure -e, and the density
    gradient is not evaluated there).
    """
    e = env.displacement(pts)
    dist = np.sqrt(np.sum(e * e, axis=-1))
    w = np.asarray(smooth_step(2.0 - 2.0 * dist / cfg.blend_delta))
    out = -w[..., None] * e
    need = w < 1.0
    if np.any(need):
        g = grad_rho_values(env, params, pts[need])
        out[need] += (1.0 - w[need])[..., None] * g
    return out


def rescale_speed(u: Array, speed: float, dist=None, taper: float | None = None) -> Array:
    """Rescale field vectors to constant magnitude ``speed``.

    Orbit-preserving: only the traversal rate changes.  Zero vectors stay
    zero.  With ``taper`` set, the magnitude ramps down linearly with the
    target distance below ``taper`` so references come to rest smoothly.
    """
    u = np.asarray(u, dtype=float)
    norms = np.sqrt(np.sum(u * u, axis=-1))
    out = np.zeros_like(u)
    nz = norms > 0.0
    if np.any(nz):
        mag = np.full(np.shape(norms), float(speed))
        if taper is not None and dist is not None:
            mag = mag * np.clip(np.asarray(dist) / taper, 0.0, 1.0)
        out[nz] = u[nz] / norms[nz, None] * mag[nz, None]
    return out


def saturate(u, u_max: float):
    """Scale u down to the infinity-norm ball of radius u_max; direction kept."""
    if u_max <= 0.0:
        raise ValueError("u_max must be positive")
    arr = np.asarray(u, dtype=float)
    m = np.max(np.abs(arr), axis=-1)
    scale = np.where(m > u_max, u_max / np.where(m > 0.0, m, 1.0), 1.0)
    return arr * scale[..., None]


def add_noise(u, noise: NoiseConfig, rng: np.random.Generator):
    """u + w with w ~ N(mean, cov) drawn from the given generator.

    Inside the integrator the fluctuation part enters the state update with
    the sqrt(dt) Euler-Maruyama scaling; this op returns one raw draw.
    """
    u = np.asarray(u, dtype=float)
    return u + noise.sample(rng)


def gradient_control(env: Environment, params: DensityParams, x):
    """Spec controller u = grad rho(x) at a single state."""
    arr, _ = _as_points(x, env.dimension)
    return grad_rho_values(env, params, arr)


def blended_control(env: Environment, params: DensityParams, cfg: ControllerConfig, x):
    """Locally blended controller at a single state; zero exactly at the target."""
    arr, single = _as_points(x, env.dimension)
    out = blended_field(env, params, cfg, arr[None, :] if single else arr)
    return out[0] if single else out


def make_field(env: Environment, params: DensityParams, cfg: ControllerConfig,
               kind: str = "blended"):
    """Commanded control field: base controller, speed rescale, saturation.

    Noise is not included; it models a disturbance entering after the
    command and is applied by the integrator.
    """
    if kind not in ("gradient", "blended"):
        raise ValueError(f"unknown controller kind '{kind}'")

    def field(pts: Array) -> Array:
        if kind == "gradient":
            u = gradient_field(env, params, pts)
        else:
            u = blended_field(env, params, cfg, pts)
        if cfg.speed is not None:
            dist = env.target_distance(pts) if cfg.speed_taper is not None else None
            u = rescale_speed(u, cfg.speed, dist=dist, taper=cfg.speed_taper)
        if cfg.u_max is not None:
            u = saturate(u, cfg.u_max)
        return u

    return field
