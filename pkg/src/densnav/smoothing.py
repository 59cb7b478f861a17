"""Smooth bump construction from obstacle fields.

The chain is: an elementary C-infinity function f, the smooth step built
from it, a change of variables tau = h/(h - s) per obstacle, and finally
the inverse bump Phi (0 on the unsafe set, ramp on the sensing region,
1 outside) lifted by theta to the strictly positive factor Psi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MalformedObstacleError
from .geometry import Obstacle, _as_points

Array = np.ndarray


def elementary_f(tau):
    """exp(-1/tau) for tau > 0, identically 0 otherwise.

    Results below the double floor flush to zero; no NaN/overflow for any
    finite input (1/tau may overflow to inf, exp(-inf) is an exact 0).
    """
    if np.ndim(tau) == 0:
        t = float(tau)
        return math.exp(-1.0 / t) if t > 0.0 else 0.0
    t = np.asarray(tau, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0.0
    with np.errstate(over="ignore", under="ignore"):
        out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_step(tau):
    """Monotone C-infinity step: 0 for tau <= 0, 1 for tau >= 1.

    Satisfies the reflection identity f(tau) + f(1 - tau) = 1.
    """
    t = float(tau) if np.ndim(tau) == 0 else np.asarray(tau, dtype=float)
    fa = elementary_f(t)
    fb = elementary_f(1.0 - t)
    # fa and fb never vanish together: their underflow regions are disjoint.
    return fa / (fa + fb)


def _f_prime(u):
    """d/du exp(-1/u) = exp(-1/u)/u^2 on u > 0, else 0."""
    if np.ndim(u) == 0:
        v = float(u)
        return elementary_f(v) / (v * v) if v > 0.0 else 0.0
    arr = np.asarray(u, dtype=float)
    out = np.zeros_like(arr)
    pos = arr > 0.0
    with np.errstate(over="ignore", under="ignore"):
        out[pos] = elementary_f(arr[pos]) / (arr[pos] * arr[pos])
    return out


def smooth_step_deriv(tau):
    """Derivative of the smooth step; exactly 0 outside (0, 1)."""
    t = np.asarray(tau, dtype=float) if np.ndim(tau) else float(tau)
    fa = elementary_f(t)
    fb = elementary_f(1.0 - t)
    da = _f_prime(t)
    db = _f_prime(1.0 - t)
    den = (fa + fb) ** 2
    return (da * fb + fa * db) / den


@dataclass(frozen=True)
class BumpSpec:
    """Obstacle paired with the positive floor theta of its Psi factor."""

    obstacle: Obstacle
    theta: float

    def __post_init__(self):
        if not self.theta > 0.0:
            raise ValueError("theta must be strictly positive")


def _hs(obstacle: Obstacle, x):
    arr, single = _as_points(x, obstacle.dim)
    return obstacle.h.value(arr), obstacle.s.value(arr), arr, single


def phi(obstacle: Obstacle, x):
    """Ramp value smooth_step(h/(h-s)) on the sensing closure of one obstacle."""
    h, s, _, single = _hs(obstacle, x)
    denom = h - s
    if np.any(denom <= 0.0):
        raise MalformedObstacleError(
            f"obstacle '{obstacle.label}': h - s <= 0 inside sensing closure"
        )
    out = smooth_step(h / denom)
    return float(out) if single else out


def inverse_bump(obstacle: Obstacle, x):
    """Phi: 0 on the unsafe set, phi on the sensing region, 1 elsewhere."""
    h, s, _, single = _hs(obstacle, x)
    h = np.atleast_1d(np.asarray(h, dtype=float))
    s = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.ones_like(h)
    unsafe = h <= 0.0
    sensing = ~unsafe & (s <= 0.0)
    out[unsafe] = 0.0
    if np.any(sensing):
        hh = h[sensing]
        ss = s[sensing]
        denom = hh - ss
        if np.any(denom <= 0.0):
            raise MalformedObstacleError(
                f"obstacle '{obstacle.label}': h - s <= 0 inside sensing closure"
            )
        out[sensing] = smooth_step(hh / denom)
    return float(out[0]) if single else out


def psi_values(obstacle: Obstacle, theta: float, x) -> Array:
    """Vectorised Psi = Phi + theta over an array of points."""
    arr = np.asarray(x, dtype=float)
    flat = arr.reshape(-1, arr.shape[-1])
    vals = inverse_bump(obstacle, flat)
    return np.asarray(vals).reshape(arr.shape[:-1]) + theta


def grad_psi_values(obstacle: Obstacle, x) -> Array:
    """Vectorised gradient of Psi; an exact zero outside the sensing region."""
    arr = np.asarray(x, dtype=float)
    flat = arr.reshape(-1, arr.shape[-1])
    h = obstacle.h.value(flat)
    s = obstacle.s.value(flat)
    g = np.zeros_like(flat)
    sensing = (h > 0.0) & (s <= 0.0)
    if np.any(sensing):
        pts = flat[sensing]
        hh = h[sensing]
        ss = s[sensing]
        denom = hh - ss
        if np.any(denom <= 0.0):
            raise MalformedObstacleError(
                f"obstacle '{obstacle.label}': h - s <= 0 inside sensing closure"
            )
        gh = obstacle.h.grad(pts)
        gs = obstacle.s.grad(pts)
        w = smooth_step_deriv(hh / denom)
        dtau = ((-ss)[:, None] * gh + hh[:, None] * gs) / (denom * denom)[:, None]
        g[sensing] = w[:, None] * dtau
    return g.reshape(arr.shape)


def psi(spec: BumpSpec, x):
    """Psi = Phi + theta at a single state; range [theta, 1 + theta]."""
    arr, single = _as_points(x, spec.obstacle.dim)
    v = psi_values(spec.obstacle, spec.theta, arr)
    return float(v) if single else v


def grad_psi(spec: BumpSpec, x):
    """Gradient of Psi at a single state."""
    arr, _ = _as_points(x, spec.obstacle.dim)
    return grad_psi_values(spec.obstacle, arr)
