"""Implicit field kinds, environment bookkeeping, samplers and structural checks."""

from __future__ import annotations

import math

import numpy as np
import pytest
import sympy as sp

from densnav import (
    AxisCylinder,
    CShape,
    DimensionMismatchError,
    Ellipsoid,
    Environment,
    EstimationError,
    MalformedObstacleError,
    Obstacle,
    Polynomial,
    Region,
    Sphere,
    Superellipse,
    Torus,
    WarpedEllipse,
    classify,
    eval_field,
    grad_field,
    min_h,
    sample_disc_states,
    sample_safe_states,
    validate_environment,
    wrap_angles,
)

from conftest import central_diff, make_disc_env


class TestWrapAngles:
    def test_half_open_interval(self):
        assert wrap_angles(np.array([np.pi]))[0] == pytest.approx(np.pi)
        assert wrap_angles(np.array([-np.pi]))[0] == pytest.approx(np.pi)
        assert wrap_angles(np.array([3.0 * np.pi]))[0] == pytest.approx(np.pi)
        assert wrap_angles(np.array([2.0 * np.pi]))[0] == pytest.approx(0.0, abs=1e-12)

    def test_identity_inside(self):
        xs = np.linspace(-3.0, 3.0, 101)
        assert np.allclose(wrap_angles(xs), xs)

    def test_mask_selects_coordinates(self):
        d = np.array([4.0, 4.0])
        out = wrap_angles(d, mask=(True, False))
        assert out[0] == pytest.approx(4.0 - 2.0 * np.pi)
        assert out[1] == 4.0

    def test_does_not_mutate_input(self):
        d = np.array([4.0, 4.0])
        wrap_angles(d, mask=(True, True))
        assert d[0] == 4.0


def fd_check(fn, pts, rel=1e-6, abs_tol=1e-7):
    """Analytic gradient against the five-point stencil at each row."""
    for x in pts:
        g = fn.grad(np.asarray(x, dtype=float))
        fd = central_diff(lambda y: float(fn.value(y)), x)
        assert np.allclose(g, fd, rtol=rel, atol=abs_tol), (x, g, fd)


class TestSphere:
    def test_zero_set(self):
        s = Sphere(center=(1.0, -2.0), radius=3.0)
        assert eval_field(s, (4.0, -2.0)) == pytest.approx(0.0)
        assert eval_field(s, (1.0, -2.0)) == pytest.approx(-9.0)

    def test_gradient(self, rng):
        s = Sphere(center=(0.5, 0.25), radius=1.5)
        fd_check(s, rng.uniform(-3, 3, size=(20, 2)))

    def test_wrapped_copies(self):
        s = Sphere(center=(np.pi - 0.1, 0.0), radius=0.5, wrap_mask=(True, True))
        # The same point seen from the other side of the cut.
        a = eval_field(s, (np.pi - 0.1, 0.0))
        b = eval_field(s, (np.pi - 0.1 - 2.0 * np.pi, 0.0))
        assert a == pytest.approx(b)
        assert a == pytest.approx(-0.25)


class TestEllipsoid:
    def test_zero_set(self):
        e = Ellipsoid(center=(0.0, 0.0), scale=(1.0, 2.0), radius=2.0)
        assert eval_field(e, (2.0, 0.0)) == pytest.approx(0.0)
        assert eval_field(e, (0.0, 1.0)) == pytest.approx(0.0)

    def test_gradient(self, rng):
        e = Ellipsoid(center=(0.3, -0.4), scale=(1.0, 2.0), radius=1.0)
        fd_check(e, rng.uniform(-2, 2, size=(20, 2)))


class TestSuperellipse:
    def test_reduces_to_ellipsoid_zero_set(self):
        # Power only reshapes the field; the zero set stays the ellipse.
        se = Superellipse(center=(0.0, 0.0), radius=1.0, power=4.0, scale=(1.0, 1.4))
        el = Ellipsoid(center=(0.0, 0.0), scale=(1.0, 1.4), radius=1.0)
        for ang in np.linspace(0.0, 2.0 * np.pi, 17):
            # A zero of the ellipsoid field is a zero of the powered field.
            r = 1.0 / math.hypot(math.cos(ang), 1.4 * math.sin(ang))
            x = (r * math.cos(ang), r * math.sin(ang))
            assert abs(eval_field(el, x)) < 1e-12
            assert abs(eval_field(se, x)) < 1e-12

    def test_power_steepens_field_only(self):
        # ||d||^p - r^p: the sign at any point is power-independent, the
        # magnitude grows with p on both sides of the boundary.
        p2 = Superellipse(center=(0.0, 0.0), radius=1.0, power=2.0)
        p8 = Superellipse(center=(0.0, 0.0), radius=1.0, power=8.0)
        inside, outside = (0.4, 0.4), (0.9, 0.9)
        assert eval_field(p8, inside) < eval_field(p2, inside) < 0.0
        assert eval_field(p8, outside) > eval_field(p2, outside) > 0.0

    def test_gradient(self, rng):
        se = Superellipse(center=(0.1, -0.2), radius=1.0, power=4.0, scale=(1.0, 1.4))
        pts = rng.uniform(-2, 2, size=(30, 2))
        pts = pts[np.sum(pts * pts, axis=-1) > 0.1]
        fd_check(se, pts, rel=1e-5, abs_tol=1e-6)

    def test_sympy_oracle(self):
        x1, x2 = sp.symbols("x1 x2")
        a, b, r, p = 1.0, 1.4, 0.9, 4.0
        q = (a * x1) ** 2 + (b * x2) ** 2
        expr = q ** (p / 2) - r**p
        grad = [sp.lambdify((x1, x2), sp.diff(expr, v)) for v in (x1, x2)]
        se = Superellipse(center=(0.0, 0.0), radius=r, power=p, scale=(a, b))
        for pt in [(0.5, 0.7), (-1.2, 0.3), (0.9, -0.9)]:
            g = grad_field(se, pt)
            want = np.array([g_i(*pt) for g_i in grad])
            assert np.allclose(g, want, rtol=1e-12)


class TestAxisCylinder:
    def test_axis_coordinate_is_ignored(self):
        c = AxisCylinder(center=(1.0, 2.0, 0.0), axis=2, radius=0.8)
        va = eval_field(c, (1.5, 2.0, -10.0))
        vb = eval_field(c, (1.5, 2.0, 10.0))
        assert va == vb == pytest.approx(0.25 - 0.64)

    def test_gradient_axis_component_zero(self, rng):
        c = AxisCylinder(center=(0.0, 0.0, 0.0), axis=1, radius=1.0)
        pts = rng.uniform(-2, 2, size=(10, 3))
        g = c.grad(pts)
        assert np.all(g[:, 1] == 0.0)
        fd_check(c, pts)


class TestTorus:
    def test_zero_set_circle(self):
        t = Torus(center=(0.0, 0.0, 0.0), axis=2, major_radius=2.0, minor_radius=0.5)
        # Tube boundary points in the plane of the ring.
        assert eval_field(t, (2.5, 0.0, 0.0)) == pytest.approx(0.0, abs=1e-9)
        assert eval_field(t, (1.5, 0.0, 0.0)) == pytest.approx(0.0, abs=1e-9)
        # Top of the tube.
        assert eval_field(t, (2.0, 0.0, 0.5)) == pytest.approx(0.0, abs=1e-9)
        # Ring axis is far inside the complement.
        assert eval_field(t, (0.0, 0.0, 0.0)) > 0.0

    def test_sympy_oracle(self):
        x1, x2, x3 = sp.symbols("x1 x2 x3")
        R, r = 1.5, 0.5
        u = x2**2 + x3**2  # plane perpendicular to axis 0
        s = u + x1**2 + R**2 - r**2
        expr = s**2 - 4 * R**2 * u
        val = sp.lambdify((x1, x2, x3), expr)
        grads = [sp.lambdify((x1, x2, x3), sp.diff(expr, v)) for v in (x1, x2, x3)]
        t = Torus(center=(0.0, 0.0, 0.0), axis=0, major_radius=R, minor_radius=r)
        rng = np.random.Generator(np.random.PCG64(5))
        for pt in rng.uniform(-2.5, 2.5, size=(25, 3)):
            assert eval_field(t, pt) == pytest.approx(val(*pt), rel=1e-12, abs=1e-9)
            g = grad_field(t, pt)
            want = np.array([gi(*pt) for gi in grads])
            assert np.allclose(g, want, rtol=1e-10, atol=1e-9)

    def test_offset_center(self, rng):
        t = Torus(center=(-3.0, 2.0, 1.0), axis=0, major_radius=1.5, minor_radius=0.5)
        fd_check(t, rng.uniform(-5, 5, size=(10, 3)), rel=1e-5, abs_tol=1e-4)


class TestPolynomial:
    def test_value_and_gradient(self):
        # x^2 + 2 y^2 - 3 x y + 1
        p = Polynomial(
            exponents=((2, 0), (0, 2), (1, 1), (0, 0)),
            coefficients=(1.0, 2.0, -3.0, 1.0),
        )
        x = np.array([1.5, -0.5])
        assert eval_field(p, x) == pytest.approx(1.5**2 + 2 * 0.25 + 3 * 0.75 + 1.0)
        fd = central_diff(lambda y: float(p.value(y)), x)
        assert np.allclose(p.grad(x), fd, rtol=1e-8)

    def test_validation(self):
        with pytest.raises(MalformedObstacleError):
            Polynomial(exponents=(), coefficients=())
        with pytest.raises(MalformedObstacleError):
            Polynomial(exponents=((1, 0), (1,)), coefficients=(1.0, 1.0))
        with pytest.raises(MalformedObstacleError):
            Polynomial(exponents=((1, 0),), coefficients=(1.0, 2.0))


class TestWarpedEllipse:
    def test_sympy_oracle(self):
        x1, x2 = sp.symbols("x1 x2")
        a, b, c, r = 1.0, 1.0, 4.0, 4.5
        expr = ((a * x1) ** 2 + (b * x2) ** 2 * c**x1 - r**2) / r
        val = sp.lambdify((x1, x2), expr)
        grads = [sp.lambdify((x1, x2), sp.diff(expr, v)) for v in (x1, x2)]
        w = WarpedEllipse(center=(0.0, 0.0), a=a, b=b, c=c, radius=r)
        rng = np.random.Generator(np.random.PCG64(6))
        for pt in rng.uniform(-5, 5, size=(30, 2)):
            assert eval_field(w, pt) == pytest.approx(val(*pt), rel=1e-12, abs=1e-10)
            assert np.allclose(grad_field(w, pt), [g(*pt) for g in grads], rtol=1e-10)

    def test_normalisation_keeps_zero_set(self):
        # Dividing by r changes magnitudes, not the boundary.
        w = WarpedEllipse(center=(0.0, 0.0), a=1.0, b=1.0, c=4.0, radius=4.5)
        assert eval_field(w, (4.5, 0.0)) == pytest.approx(0.0, abs=1e-12)
        assert eval_field(w, (0.0, 4.5)) == pytest.approx(0.0, abs=1e-12)

    def test_validation(self):
        with pytest.raises(MalformedObstacleError):
            WarpedEllipse(center=(0.0, 0.0, 0.0), a=1.0, b=1.0, c=2.0, radius=1.0)
        with pytest.raises(MalformedObstacleError):
            WarpedEllipse(center=(0.0, 0.0), a=1.0, b=1.0, c=-1.0, radius=1.0)
        with pytest.raises(MalformedObstacleError):
            WarpedEllipse(center=(0.0, 0.0), a=1.0, b=1.0, c=2.0, radius=0.0)


class TestCShape:
    def make(self) -> CShape:
        return CShape(
            center=(0.0, 0.0),
            inner_radius=1.2,
            outer_radius=2.0,
            slot_halfwidth=0.9,
            scale=4.0,
        )

    def test_membership(self):
        c = self.make()
        # Inside the ring wall away from the slot.
        assert eval_field(c, (0.0, 1.6)) < 0.0
        assert eval_field(c, (-1.6, 0.0)) < 0.0
        # The slot mouth is carved out of the +x side.
        assert eval_field(c, (1.6, 0.0)) > 0.0
        # Cavity interior and far field are both outside.
        assert eval_field(c, (0.0, 0.0)) > 0.0
        assert eval_field(c, (4.0, 0.0)) > 0.0

    def test_scale_multiplies_field_not_set(self):
        base = CShape(center=(0.0, 0.0), inner_radius=1.2, outer_radius=2.0,
                      slot_halfwidth=0.9, scale=1.0)
        scaled = self.make()
        for pt in [(0.3, 0.2), (1.6, 0.0), (0.0, 1.6), (-2.5, 1.0)]:
            assert eval_field(scaled, pt) == pytest.approx(4.0 * eval_field(base, pt))

    def test_gradient_away_from_corners(self, rng):
        c = self.make()
        pts = rng.uniform(-3, 3, size=(120, 2))
        # The corner curves p = q = 0 of each conjunction are measure zero;
        # keep a small margin from them for the finite-difference probe.
        keep = []
        for x in pts:
            d = x
            r2 = float(d @ d)
            f1 = (r2 - 4.0) / 2.0
            f2 = (1.44 - r2) / 2.0
            g1 = -d[0]
            g2 = (d[1] ** 2 - 0.81) / 0.9
            if min(abs(f1), abs(f2), abs(g1), abs(g2)) > 0.05 and r2 > 0.05:
                keep.append(x)
        assert len(keep) > 30
        fd_check(c, keep, rel=1e-5, abs_tol=1e-5)

    def test_validation(self):
        with pytest.raises(MalformedObstacleError):
            CShape(center=(0.0, 0.0), inner_radius=2.0, outer_radius=1.0,
                   slot_halfwidth=0.5)
        with pytest.raises(MalformedObstacleError):
            CShape(center=(0.0, 0.0), inner_radius=1.0, outer_radius=2.0,
                   slot_halfwidth=1.5)
        with pytest.raises(MalformedObstacleError):
            CShape(center=(0.0, 0.0, 0.0), inner_radius=1.0, outer_radius=2.0,
                   slot_halfwidth=0.5)


class TestShifted:
    def test_value_offset_gradient_unchanged(self):
        s = Sphere(center=(0.0, 0.0), radius=1.0)
        sh = s.shifted(-0.5)
        x = (1.3, 0.4)
        assert eval_field(sh, x) == pytest.approx(eval_field(s, x) - 0.5)
        assert np.array_equal(grad_field(sh, x), grad_field(s, x))
        assert sh.dim == 2


class TestEnvironment:
    def test_validation(self):
        obs = Obstacle(h=Sphere(center=(0.0, 0.0), radius=1.0),
                       s=Sphere(center=(0.0, 0.0), radius=2.0))
        with pytest.raises(DimensionMismatchError):
            Environment(dimension=3, target=(0.0, 0.0), obstacles=(obs,),
                        domain=((-1.0,) * 3, (1.0,) * 3), delta=0.5)
        with pytest.raises(ValueError):
            Environment(dimension=2, target=(0.0, 0.0), obstacles=(),
                        domain=((1.0, -1.0), (-1.0, 1.0)), delta=0.5)
        with pytest.raises(ValueError):
            Environment(dimension=2, target=(0.0, 0.0), obstacles=(),
                        domain=((-1.0, -1.0), (1.0, 1.0)), delta=0.0)
        with pytest.raises(ValueError):
            Environment(dimension=2, target=(0.0, 0.0), obstacles=(),
                        domain=((-1.0, -1.0), (1.0, 1.0)), delta=1.0,
                        geometry_mode="spherical")

    def test_obstacle_dim_mismatch(self):
        obs = Obstacle(h=Sphere(center=(0.0, 0.0, 0.0), radius=1.0),
                       s=Sphere(center=(0.0, 0.0, 0.0), radius=2.0))
        with pytest.raises(DimensionMismatchError):
            Environment(dimension=2, target=(0.0, 0.0), obstacles=(obs,),
                        domain=((-1.0, -1.0), (1.0, 1.0)), delta=0.5)

    def test_obstacle_pair_dim_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            Obstacle(h=Sphere(center=(0.0, 0.0), radius=1.0),
                     s=Sphere(center=(0.0, 0.0, 0.0), radius=2.0))

    def test_displacement_wraps_on_torus(self):
        env = Environment(
            dimension=2, target=(3.0, 0.0), obstacles=(),
            domain=((-np.pi, -np.pi), (np.pi, np.pi)), delta=0.5,
            geometry_mode="toroidal",
        )
        d = env.displacement(np.array([-3.0, 0.0]))
        # Going through the cut is shorter than across the interval.
        assert abs(d[0]) == pytest.approx(2.0 * np.pi - 6.0)
        assert env.wrap_mask == (True, True)

    def test_contains_and_volume(self):
        env = make_disc_env()
        assert env.contains(np.array([0.0, 0.0]))
        assert not env.contains(np.array([7.0, 0.0]))
        assert env.volume() == pytest.approx(144.0)


class TestClassify:
    def test_single_point_labels(self, disc_env):
        assert classify(disc_env, (0.0, 0.0)) == (Region.UNSAFE,)
        assert classify(disc_env, (2.5, 0.0)) == (Region.SENSING,)
        assert classify(disc_env, (5.0, 0.0)) == (Region.FREE,)

    def test_batch_codes(self, disc_env):
        pts = np.array([[0.0, 0.0], [2.5, 0.0], [5.0, 0.0]])
        codes = classify(disc_env, pts)[0]
        assert list(codes) == [0, 1, 2]

    def test_min_h(self, disc_env):
        assert min_h(disc_env, (0.0, 0.0)) == pytest.approx(-4.0)
        empty = Environment(dimension=2, target=(0.0, 0.0), obstacles=(),
                            domain=((-1.0, -1.0), (1.0, 1.0)), delta=0.5)
        assert min_h(empty, (0.0, 0.0)) == math.inf


class TestSamplers:
    def test_safe_states_respect_clearance(self, disc_env):
        pts = sample_safe_states(disc_env, 200, clearance=1.0,
                                 exclude_radius=1.0, seed=7)
        assert pts.shape == (200, 2)
        assert np.all(min_h(disc_env, pts) > 1.0)
        assert np.all(disc_env.target_distance(pts) > 1.0)
        assert np.all(disc_env.contains(pts))

    def test_safe_states_deterministic(self, disc_env):
        a = sample_safe_states(disc_env, 50, seed=3)
        b = sample_safe_states(disc_env, 50, seed=3)
        c = sample_safe_states(disc_env, 50, seed=4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_safe_states_impossible_clearance(self, disc_env):
        with pytest.raises(EstimationError):
            sample_safe_states(disc_env, 10, clearance=1e6)

    def test_safe_states_argument_validation(self, disc_env):
        with pytest.raises(ValueError):
            sample_safe_states(disc_env, 0)
        with pytest.raises(ValueError):
            sample_safe_states(disc_env, 5, clearance=-1.0)

    def test_disc_states(self, disc_env):
        ctr = np.array([0.0, 0.0])
        pts = sample_disc_states(disc_env, 100, ctr, radius=5.0,
                                 clearance=0.5, seed=1)
        assert pts.shape == (100, 2)
        assert np.all(np.linalg.norm(pts - ctr, axis=-1) <= 5.0)
        assert np.all(min_h(disc_env, pts) > 0.5)

    def test_disc_states_validation(self, disc_env):
        with pytest.raises(DimensionMismatchError):
            sample_disc_states(disc_env, 5, (0.0, 0.0, 0.0), radius=1.0)
        with pytest.raises(ValueError):
            sample_disc_states(disc_env, 5, (0.0, 0.0), radius=0.0)


class TestValidateEnvironment:
    def test_wellformed_passes(self, disc_env):
        assert validate_environment(disc_env, samples=20_000) == []

    def test_target_inside_sensing(self):
        obs = Obstacle(h=Sphere(center=(4.0, -3.0), radius=1.0),
                       s=Sphere(center=(4.0, -3.0), radius=2.0), label="ongoal")
        env = Environment(dimension=2, target=(4.0, -3.0), obstacles=(obs,),
                          domain=((-6.0, -6.0), (6.0, 6.0)), delta=0.5)
        msgs = validate_environment(env, samples=5_000)
        assert any("target inside sensing" in m for m in msgs)

    def test_delta_ball_overlap(self):
        obs = Obstacle(h=Sphere(center=(2.0, 0.0), radius=0.5),
                       s=Sphere(center=(2.0, 0.0), radius=1.5), label="near")
        env = Environment(dimension=2, target=(0.0, 0.0), obstacles=(obs,),
                          domain=((-6.0, -6.0), (6.0, 6.0)), delta=1.0)
        msgs = validate_environment(env, samples=5_000)
        assert any("delta ball" in m for m in msgs)

    def test_sensing_must_enclose_unsafe(self):
        obs = Obstacle(h=Sphere(center=(0.0, 0.0), radius=2.0),
                       s=Sphere(center=(1.0, 0.0), radius=2.0), label="skewed")
        env = Environment(dimension=2, target=(4.0, -3.0), obstacles=(obs,),
                          domain=((-6.0, -6.0), (6.0, 6.0)), delta=0.5)
        msgs = validate_environment(env, samples=50_000)
        assert any("does not enclose" in m for m in msgs)


class TestFieldWrappers:
    def test_nonfinite_input_rejected(self):
        s = Sphere(center=(0.0, 0.0), radius=1.0)
        with pytest.raises(ValueError):
            eval_field(s, (np.nan, 0.0))
        with pytest.raises(ValueError):
            grad_field(s, (np.inf, 0.0))

    def test_dimension_mismatch(self):
        s = Sphere(center=(0.0, 0.0), radius=1.0)
        with pytest.raises(DimensionMismatchError):
            eval_field(s, (1.0, 2.0, 3.0))
