"""Density construction: distance measures, rho and its gradient, set estimates."""

from __future__ import annotations

import math

import numpy as np
import pytest

from densnav import (
    DensityParams,
    DistanceFn,
    Environment,
    EstimationError,
    Obstacle,
    Sphere,
    UnboundedDensityError,
    distance_V,
    estimate_unsafe_stats,
    grad_V,
    grad_rho,
    grad_rho_values,
    rho,
    rho_values,
    theta_bound,
)
from densnav.smoothing import psi_values

from conftest import central_diff, make_disc_env


class TestDistanceFn:
    def test_squared_euclidean(self):
        d = DistanceFn(kind="squared-euclidean", target=(1.0, -1.0))
        assert d.value(np.array([4.0, 3.0])) == pytest.approx(9.0 + 16.0)
        assert np.allclose(d.grad(np.array([4.0, 3.0])), [6.0, 8.0])
        assert d.value(np.array([1.0, -1.0])) == 0.0

    def test_trigonometric_joint(self):
        d = DistanceFn(kind="trigonometric-joint", target=(0.0, 0.0))
        x = np.array([0.5, -1.2])
        want = 2.0 * (1.0 - math.cos(0.5)) + 2.0 * (1.0 - math.cos(-1.2))
        assert d.value(x) == pytest.approx(want)
        assert np.allclose(d.grad(x), 2.0 * np.sin(x))

    def test_trig_is_periodic(self):
        d = DistanceFn(kind="trigonometric-joint", target=(0.3, -0.4))
        x = np.array([1.0, 2.0])
        shifted = x + 2.0 * np.pi * np.array([1.0, -2.0])
        assert d.value(shifted) == pytest.approx(d.value(x))

    def test_trig_matches_euclidean_to_second_order(self):
        de = DistanceFn(kind="squared-euclidean", target=(0.0, 0.0))
        dt = DistanceFn(kind="trigonometric-joint", target=(0.0, 0.0))
        x = np.array([1e-3, -2e-3])
        assert dt.value(x) == pytest.approx(de.value(x), rel=1e-5)

    def test_wrap_mask_applies_to_euclidean(self):
        d = DistanceFn(kind="squared-euclidean", target=(3.0, 0.0),
                       wrap_mask=(True, True))
        # Through the cut: |(-3) - 3| wraps to 2 pi - 6.
        v = d.value(np.array([-3.0, 0.0]))
        assert v == pytest.approx((2.0 * np.pi - 6.0) ** 2)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            DistanceFn(kind="manhattan", target=(0.0, 0.0))


class TestDensityParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            DensityParams(alpha=0.0)
        with pytest.raises(ValueError):
            DensityParams(alpha=-1.0)
        with pytest.raises(ValueError):
            DensityParams(theta=-0.01)
        with pytest.raises(ValueError):
            DensityParams(distance="geodesic")

    def test_theta_zero_tolerated(self):
        # Diagnostic audits may probe the degenerate floor; construction allows it.
        p = DensityParams(alpha=4.0, theta=0.0)
        assert p.theta == 0.0


class TestRho:
    def test_closed_form_outside_sensing(self, disc_env, disc_params):
        # Psi is exactly 1 + theta there, so rho = (1 + theta) / V^alpha.
        x = np.array([5.0, 3.0])
        V = distance_V(disc_env, disc_params, x)
        want = (1.0 + disc_params.theta) * V ** (-disc_params.alpha)
        assert rho(disc_env, disc_params, x) == pytest.approx(want, rel=1e-14)

    def test_closed_form_inside_unsafe(self, disc_env, disc_params):
        x = np.array([0.5, 0.5])
        V = distance_V(disc_env, disc_params, x)
        want = disc_params.theta * V ** (-disc_params.alpha)
        assert rho(disc_env, disc_params, x) == pytest.approx(want, rel=1e-14)

    def test_sensing_ring_uses_bump(self, disc_env, disc_params):
        x = np.array([2.5, 0.0])
        psi = float(psi_values(disc_env.obstacles[0], disc_params.theta,
                               x[None, :])[0])
        V = distance_V(disc_env, disc_params, x)
        want = psi * V ** (-disc_params.alpha)
        assert rho(disc_env, disc_params, x) == pytest.approx(want, rel=1e-14)

    def test_obstacle_free_density(self, disc_params):
        env = Environment(dimension=2, target=(0.0, 0.0), obstacles=(),
                          domain=((-2.0, -2.0), (2.0, 2.0)), delta=0.5)
        x = np.array([1.0, 1.0])
        assert rho(env, disc_params, x) == pytest.approx(2.0 ** (-disc_params.alpha))

    def test_multiple_obstacles_multiply(self, disc_params):
        o1 = Obstacle(h=Sphere(center=(0.0, 0.0), radius=1.0),
                      s=Sphere(center=(0.0, 0.0), radius=2.0), label="a")
        o2 = Obstacle(h=Sphere(center=(3.0, 3.0), radius=1.0),
                      s=Sphere(center=(3.0, 3.0), radius=2.0), label="b")
        env = Environment(dimension=2, target=(5.0, -5.0), obstacles=(o1, o2),
                          domain=((-8.0, -8.0), (8.0, 8.0)), delta=0.5)
        x = np.array([1.5, 1.5])  # inside both sensing rings
        p1 = float(psi_values(o1, disc_params.theta, x[None, :])[0])
        p2 = float(psi_values(o2, disc_params.theta, x[None, :])[0])
        V = distance_V(env, disc_params, x)
        assert rho(env, disc_params, x) == pytest.approx(
            p1 * p2 * V ** (-disc_params.alpha), rel=1e-13
        )

    def test_refusal_at_target(self, disc_env, disc_params):
        with pytest.raises(UnboundedDensityError):
            rho(disc_env, disc_params, np.array(disc_env.target))
        with pytest.raises(UnboundedDensityError):
            grad_rho(disc_env, disc_params, np.array(disc_env.target))

    def test_refusal_contaminates_batch(self, disc_env, disc_params):
        pts = np.array([[5.0, 3.0], [4.0, -3.0]])
        with pytest.raises(UnboundedDensityError):
            rho_values(disc_env, disc_params, pts)

    def test_just_outside_refusal_floor(self, disc_env, disc_params):
        x = np.array(disc_env.target) + np.array([2e-6, 0.0])
        v = rho(disc_env, disc_params, x)  # V = 4e-12 > floor
        assert np.isfinite(v) and v > 0.0


class TestGradRho:
    def test_matches_finite_difference(self, disc_env, disc_params, rng):
        pts = []
        while len(pts) < 30:
            x = rng.uniform(-6.0, 6.0, size=2)
            r = np.linalg.norm(x)
            # Stay off the kink-free but steep surfaces for the FD probe.
            if abs(r - 2.0) > 0.05 and abs(r - 3.0) > 0.05 \
                    and np.linalg.norm(x - disc_env.target_array) > 0.5:
                pts.append(x)
        for x in pts:
            g = grad_rho(disc_env, disc_params, x)
            fd = central_diff(
                lambda y: rho(disc_env, disc_params, y), x, step=1e-5
            )
            scale = np.linalg.norm(g) + np.linalg.norm(fd) + 1e-300
            assert np.linalg.norm(g - fd) / scale < 1e-6

    def test_gradient_is_zero_of_v_term_inside_unsafe(self, disc_env, disc_params):
        # Inside the unsafe set Psi is constant, so only the V term remains.
        x = np.array([0.5, -0.5])
        g = grad_rho(disc_env, disc_params, x)
        V = distance_V(disc_env, disc_params, x)
        gV = grad_V(disc_env, disc_params, x)
        want = -disc_params.alpha * disc_params.theta * V ** (-disc_params.alpha - 1.0) * gV
        assert np.allclose(g, want, rtol=1e-12)

    def test_batch_shape(self, disc_env, disc_params):
        pts = np.array([[5.0, 3.0], [-5.0, -5.0], [2.5, 0.0]])
        g = grad_rho_values(disc_env, disc_params, pts)
        assert g.shape == (3, 2)

    def test_ascent_points_away_from_obstacle(self, disc_env, disc_params):
        # In the sensing ring the bump term dominates and pushes outward.
        x = np.array([-2.5, 0.0])
        g = grad_rho(disc_env, disc_params, x)
        assert g[0] < 0.0


class TestUnsafeStats:
    def test_circle_analytic_values(self, disc_env, disc_params):
        stats = estimate_unsafe_stats(disc_env, disc_params, samples=200_000, seed=1)
        assert stats.measure == pytest.approx(4.0 * math.pi, rel=0.03)
        # min V over the disc: (dist(target, center) - r)^2 = (5 - 2)^2.
        assert stats.v_min == pytest.approx(9.0, rel=0.02)
        assert stats.hits > 0
        assert stats.samples == 200_000
        assert stats.measure_se < 0.1

    def test_deterministic(self, disc_env, disc_params):
        a = estimate_unsafe_stats(disc_env, disc_params, samples=10_000, seed=5)
        b = estimate_unsafe_stats(disc_env, disc_params, samples=10_000, seed=5)
        assert a == b

    def test_obstacle_index_selection(self, disc_params):
        o1 = Obstacle(h=Sphere(center=(-3.0, 0.0), radius=1.0),
                      s=Sphere(center=(-3.0, 0.0), radius=1.5), label="small")
        o2 = Obstacle(h=Sphere(center=(3.0, 0.0), radius=2.0),
                      s=Sphere(center=(3.0, 0.0), radius=2.5), label="large")
        env = Environment(dimension=2, target=(0.0, 5.0), obstacles=(o1, o2),
                          domain=((-6.0, -6.0), (6.0, 6.0)), delta=0.5)
        s_small = estimate_unsafe_stats(env, disc_params, obstacle_index=0,
                                        samples=100_000, seed=2)
        s_union = estimate_unsafe_stats(env, disc_params, samples=100_000, seed=2)
        assert s_small.measure == pytest.approx(math.pi, rel=0.05)
        assert s_union.measure == pytest.approx(5.0 * math.pi, rel=0.05)

    def test_no_obstacles_raises(self, disc_params):
        env = Environment(dimension=2, target=(0.0, 0.0), obstacles=(),
                          domain=((-1.0, -1.0), (1.0, 1.0)), delta=0.5)
        with pytest.raises(EstimationError):
            estimate_unsafe_stats(env, disc_params)

    def test_no_hits_raises(self, disc_params):
        # Unsafe set entirely outside the domain box: zero hit probability.
        obs = Obstacle(h=Sphere(center=(100.0, 0.0), radius=0.5),
                       s=Sphere(center=(100.0, 0.0), radius=1.0), label="far")
        env = Environment(dimension=2, target=(0.0, 0.0), obstacles=(obs,),
                          domain=((-6.0, -6.0), (6.0, 6.0)), delta=0.5)
        with pytest.raises(EstimationError):
            estimate_unsafe_stats(env, disc_params, samples=1_000, seed=0)


class TestThetaBound:
    def test_formula(self, disc_env, disc_params):
        eps = 0.05
        stats = estimate_unsafe_stats(disc_env, disc_params, samples=50_000, seed=9)
        bound = theta_bound(disc_env, disc_params, eps, samples=50_000, seed=9)
        assert bound == pytest.approx(eps * stats.v_min / stats.measure)

    def test_scales_linearly_in_epsilon(self, disc_env, disc_params):
        b1 = theta_bound(disc_env, disc_params, 0.01, samples=20_000, seed=3)
        b2 = theta_bound(disc_env, disc_params, 0.02, samples=20_000, seed=3)
        assert b2 == pytest.approx(2.0 * b1)

    def test_epsilon_validation(self, disc_env, disc_params):
        with pytest.raises(ValueError):
            theta_bound(disc_env, disc_params, 0.0)
