"""Shared fixtures: the circle-obstacle workspace and the golden scenario files."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from densnav import (
    ControllerConfig,
    DensityParams,
    Environment,
    IntegratorConfig,
    Obstacle,
    Sphere,
)

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"

GOLDEN_SCENARIOS = (
    "fig3_circle.yaml",
    "fig3_saddle.yaml",
    "fig4_shapes.yaml",
    "fig5_maze.yaml",
    "fig5_solids.yaml",
    "fig6_cshape.yaml",
    "fig7_noise.yaml",
    "fig8_swingup.yaml",
)


def scenario_path(name: str) -> Path:
    return SCENARIO_DIR / name


def central_diff(fn, x, step: float = 1e-6) -> np.ndarray:
    """Five-point central difference of a scalar function at one point."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = step
        g[j] = (
            -fn(x + 2.0 * e) + 8.0 * fn(x + e) - 8.0 * fn(x - e) + fn(x - 2.0 * e)
        ) / (12.0 * step)
    return g


def make_disc_env() -> Environment:
    """Single round obstacle (r = 2, sensing r = 3) with the target at (4, -3)."""
    obs = Obstacle(
        h=Sphere(center=(0.0, 0.0), radius=2.0),
        s=Sphere(center=(0.0, 0.0), radius=3.0),
        label="disc",
    )
    return Environment(
        dimension=2,
        target=(4.0, -3.0),
        obstacles=(obs,),
        domain=((-6.0, -6.0), (6.0, 6.0)),
        delta=1.0,
    )


@pytest.fixture(scope="session")
def disc_env() -> Environment:
    return make_disc_env()


@pytest.fixture(scope="session")
def disc_params() -> DensityParams:
    return DensityParams(alpha=10.0, theta=0.01)


@pytest.fixture(scope="session")
def basic_ctrl() -> ControllerConfig:
    return ControllerConfig(blend_delta=0.3, speed=1.0, speed_taper=0.3)


@pytest.fixture(scope="session")
def basic_integ() -> IntegratorConfig:
    return IntegratorConfig(dt=0.01, max_time=30.0, converge_radius=0.05)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([42])))
