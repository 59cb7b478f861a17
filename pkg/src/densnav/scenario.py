"""Scenario files: strict YAML schema, canonical round-trip, object builders.

A scenario file fully determines a run: environment, density parameters,
controller, integrator, initial conditions and optional baseline/arm
sections.  Parsing is strict (unknown fields are errors, reported with
dotted paths) and canonicalising: parse(serialize(parse(text))) is a fixed
point, which keeps output manifests stable.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import yaml

from .control import ControllerConfig, NoiseConfig
from .density import DISTANCE_KINDS, DensityParams
from .dynamics import ArmGains, IntegratorConfig, TwoLinkArm
from .errors import ScenarioError
from .geometry import (
    AxisCylinder,
    CShape,
    Ellipsoid,
    Environment,
    ImplicitFn,
    Obstacle,
    Polynomial,
    Sphere,
    Superellipse,
    Torus,
    WarpedEllipse,
    sample_disc_states,
    sample_safe_states,
)

_MISSING = object()


def _fail(path: str, msg: str):
    raise ScenarioError(f"{path}: {msg}")


def _section(mapping, key, path, required=True):
    if not isinstance(mapping, dict):
        _fail(path, "expected a mapping")
    if key not in mapping:
        if required:
            _fail(path, f"missing required section '{key}'")
        return None
    v = mapping[key]
    if not isinstance(v, dict):
        _fail(f"{path}.{key}", "expected a mapping")
    return dict(v)


def _take(m: dict, key: str, path: str, default=_MISSING):
    if key in m:
        return m.pop(key)
    if default is _MISSING:
        _fail(path, f"missing required field '{key}'")
    return default


def _done(m: dict, path: str):
    if m:
        extra = sorted(m.keys())[0]
        _fail(f"{path}.{extra}", "unknown field")


def _float(v, path) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(path, f"expected a number, got {type(v).__name__}")
    return float(v)


def _int(v, path) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        _fail(path, f"expected an integer, got {type(v).__name__}")
    return int(v)


def _bool(v, path) -> bool:
    if not isinstance(v, bool):
        _fail(path, f"expected a boolean, got {type(v).__name__}")
    return v


def _str(v, path) -> str:
    if not isinstance(v, str):
        _fail(path, f"expected a string, got {type(v).__name__}")
    return v


def _vec(v, path, n=None) -> list[float]:
    if not isinstance(v, (list, tuple)):
        _fail(path, "expected a list of numbers")
    out = [_float(x, f"{path}[{i}]") for i, x in enumerate(v)]
    if n is not None and len(out) != n:
        _fail(path, f"expected {n} entries, got {len(out)}")
    return out


def _mat(v, path, n=None) -> list[list[float]]:
    if not isinstance(v, (list, tuple)):
        _fail(path, "expected a list of rows")
    return [_vec(row, f"{path}[{i}]", n) for i, row in enumerate(v)]


def _wrap_list(v, path, dim, default) -> list[bool]:
    if v is None:
        return list(default)
    if isinstance(v, bool):
        return [v] * dim
    if isinstance(v, (list, tuple)):
        if len(v) != dim:
            _fail(path, f"expected {dim} booleans")
        return [_bool(x, f"{path}[{i}]") for i, x in enumerate(v)]
    _fail(path, "expected a boolean or list of booleans")


# --- geometry specs ----------------------------------------------------------

_KINDS = (
    "sphere", "ellipsoid", "superellipse", "axis-cylinder", "torus",
    "polynomial", "warped-ellipse", "c-shape", "shifted",
)


def _canon_geometry(spec, path, dim, default_wrap) -> dict:
    if not isinstance(spec, dict):
        _fail(path, "expected a mapping describing an implicit surface")
    m = dict(spec)
    kind = _str(_take(m, "kind", path), f"{path}.kind")
    if kind not in _KINDS:
        _fail(f"{path}.kind", f"unknown kind '{kind}' (expected one of {', '.join(_KINDS)})")
    out: dict = {"kind": kind}
    if kind == "shifted":
        base = _take(m, "base", path)
        out["base"] = _canon_geometry(base, f"{path}.base", dim, default_wrap)
        out["offset"] = _float(_take(m, "offset", path), f"{path}.offset")
        _done(m, path)
        return out

    if kind == "polynomial":
        exps = _take(m, "exponents", path)
        if not isinstance(exps, (list, tuple)):
            _fail(f"{path}.exponents", "expected a list of exponent tuples")
        out["exponents"] = [
            [_int(e, f"{path}.exponents[{i}][{j}]") for j, e in enumerate(term)]
            for i, term in enumerate(exps)
        ]
        out["coefficients"] = _vec(_take(m, "coefficients", path), f"{path}.coefficients")
        _done(m, path)
        return out

    out["center"] = _vec(_take(m, "center", path), f"{path}.center", dim)
    out["wrap"] = _wrap_list(_take(m, "wrap", path, None), f"{path}.wrap", dim, default_wrap)
    if kind == "sphere":
        out["radius"] = _float(_take(m, "radius", path), f"{path}.radius")
    elif kind == "ellipsoid":
        out["scale"] = _vec(_take(m, "scale", path), f"{path}.scale", dim)
        out["radius"] = _float(_take(m, "radius", path), f"{path}.radius")
    elif kind == "superellipse":
        out["radius"] = _float(_take(m, "radius", path), f"{path}.radius")
        out["power"] = _float(_take(m, "power", path, 4.0), f"{path}.power")
        scale = _take(m, "scale", path, None)
        out["scale"] = None if scale is None else _vec(scale, f"{path}.scale", dim)
    elif kind == "axis-cylinder":
        out["axis"] = _int(_take(m, "axis", path), f"{path}.axis")
        out["radius"] = _float(_take(m, "radius", path), f"{path}.radius")
    elif kind == "torus":
        out["axis"] = _int(_take(m, "axis", path), f"{path}.axis")
        out["major_radius"] = _float(_take(m, "major_radius", path), f"{path}.major_radius")
        out["minor_radius"] = _float(_take(m, "minor_radius", path), f"{path}.minor_radius")
    elif kind == "warped-ellipse":
        for key in ("a", "b", "c", "radius"):
            out[key] = _float(_take(m, key, path), f"{path}.{key}")
    elif kind == "c-shape":
        for key in ("inner_radius", "outer_radius", "slot_halfwidth"):
            out[key] = _float(_take(m, key, path), f"{path}.{key}")
        out["scale"] = _float(_take(m, "scale", path, 1.0), f"{path}.scale")
    _done(m, path)
    return out


def build_implicit(spec: dict) -> ImplicitFn:
    """Construct an implicit surface from a canonical geometry mapping."""
    kind = spec["kind"]
    if kind == "shifted":
        return build_implicit(spec["base"]).shifted(spec["offset"])
    if kind == "polynomial":
        return Polynomial(exponents=tuple(tuple(t) for t in spec["exponents"]),
                          coefficients=tuple(spec["coefficients"]))
    center = tuple(spec["center"])
    wrap = tuple(spec["wrap"])
    if kind == "sphere":
        return Sphere(center=center, wrap_mask=wrap, radius=spec["radius"])
    if kind == "ellipsoid":
        return Ellipsoid(center=center, wrap_mask=wrap,
                         scale=tuple(spec["scale"]), radius=spec["radius"])
    if kind == "superellipse":
        scale = spec["scale"]
        return Superellipse(center=center, wrap_mask=wrap, radius=spec["radius"],
                            power=spec["power"],
                            scale=None if scale is None else tuple(scale))
    if kind == "axis-cylinder":
        return AxisCylinder(center=center, wrap_mask=wrap,
                            axis=spec["axis"], radius=spec["radius"])
    if kind == "torus":
        return Torus(center=center, wrap_mask=wrap, axis=spec["axis"],
                     major_radius=spec["major_radius"], minor_radius=spec["minor_radius"])
    if kind == "warped-ellipse":
        return WarpedEllipse(center=center, wrap_mask=wrap, a=spec["a"], b=spec["b"],
                             c=spec["c"], radius=spec["radius"])
    if kind == "c-shape":
        return CShape(center=center, wrap_mask=wrap,
                      inner_radius=spec["inner_radius"],
                      outer_radius=spec["outer_radius"],
                      slot_halfwidth=spec["slot_halfwidth"],
                      scale=spec["scale"])
    raise ScenarioError(f"unknown geometry kind '{kind}'")


# --- scenario ----------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """Canonical parsed scenario; `data` is the normalised mapping."""

    data: dict

    @property
    def name(self) -> str:
        return self.data["name"]

    @property
    def seed(self) -> int:
        return self.data["seed"]


def parse_scenario(text: str) -> Scenario:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ScenarioError(f"invalid YAML: {e}") from e
    if not isinstance(raw, dict):
        raise ScenarioError("scenario: top level must be a mapping")
    m = dict(raw)
    data: dict = {}
    data["name"] = _str(_take(m, "name", "scenario"), "scenario.name")
    data["seed"] = _int(_take(m, "seed", "scenario", 0), "scenario.seed")

    env = _section(m, "environment", "scenario")
    m.pop("environment")
    dim = _int(_take(env, "dimension", "environment"), "environment.dimension")
    if dim < 1:
        _fail("environment.dimension", "must be at least 1")
    geometry = _str(_take(env, "geometry", "environment", "euclidean"), "environment.geometry")
    if geometry not in ("euclidean", "toroidal"):
        _fail("environment.geometry", f"unknown geometry '{geometry}'")
    default_wrap = [geometry == "toroidal"] * dim
    target = _vec(_take(env, "target", "environment"), "environment.target", dim)
    dom = _section(env, "domain", "environment")
    env.pop("domain")
    lo = _vec(_take(dom, "lo", "environment.domain"), "environment.domain.lo", dim)
    hi = _vec(_take(dom, "hi", "environment.domain"), "environment.domain.hi", dim)
    _done(dom, "environment.domain")
    delta = _float(_take(env, "delta", "environment"), "environment.delta")
    obstacles_raw = _take(env, "obstacles", "environment", [])
    if not isinstance(obstacles_raw, (list, tuple)):
        _fail("environment.obstacles", "expected a list")
    obstacles = []
    for i, ob in enumerate(obstacles_raw):
        opath = f"environment.obstacles[{i}]"
        if not isinstance(ob, dict):
            _fail(opath, "expected a mapping")
        om = dict(ob)
        label = _str(_take(om, "label", opath, f"obstacle-{i}"), f"{opath}.label")
        unsafe = _canon_geometry(_take(om, "unsafe", opath), f"{opath}.unsafe", dim, default_wrap)
        sensing = _canon_geometry(_take(om, "sensing", opath), f"{opath}.sensing", dim, default_wrap)
        _done(om, opath)
        obstacles.append({"label": label, "unsafe": unsafe, "sensing": sensing})
    _done(env, "environment")
    data["environment"] = {
        "dimension": dim, "geometry": geometry, "target": target,
        "domain": {"lo": lo, "hi": hi}, "delta": delta, "obstacles": obstacles,
    }

    dens = _section(m, "density", "scenario")
    m.pop("density")
    alpha = _float(_take(dens, "alpha", "density"), "density.alpha")
    theta = _float(_take(dens, "theta", "density"), "density.theta")
    if theta <= 0.0:
        _fail("density.theta", "must be strictly positive in scenario files")
    distance = _str(_take(dens, "distance", "density", "squared-euclidean"), "density.distance")
    if distance not in DISTANCE_KINDS:
        _fail("density.distance", f"unknown distance '{distance}'")
    _done(dens, "density")
    data["density"] = {"alpha": alpha, "theta": theta, "distance": distance}

    ctrl = _section(m, "controller", "scenario", required=False)
    if ctrl is None:
        ctrl = {}
    else:
        m.pop("controller")
    kind = _str(_take(ctrl, "kind", "controller", "blended"), "controller.kind")
    if kind not in ("blended", "gradient"):
        _fail("controller.kind", f"unknown controller kind '{kind}'")
    cdata: dict = {"kind": kind}
    cdata["blend_delta"] = _float(_take(ctrl, "blend_delta", "controller", delta), "controller.blend_delta")
    for key in ("speed", "speed_taper", "u_max"):
        v = _take(ctrl, key, "controller", None)
        cdata[key] = None if v is None else _float(v, f"controller.{key}")
    noise = _take(ctrl, "noise", "controller", None)
    if noise is not None:
        if not isinstance(noise, dict):
            _fail("controller.noise", "expected a mapping")
        nm = dict(noise)
        mean = _vec(_take(nm, "mean", "controller.noise", [0.0] * dim), "controller.noise.mean", dim)
        cov = _mat(_take(nm, "cov", "controller.noise"), "controller.noise.cov", dim)
        if len(cov) != dim:
            _fail("controller.noise.cov", f"expected {dim} rows")
        _done(nm, "controller.noise")
        noise = {"mean": mean, "cov": cov}
    cdata["noise"] = noise
    _done(ctrl, "controller")
    data["controller"] = cdata

    integ = _section(m, "integrator", "scenario")
    m.pop("integrator")
    idata = {
        "method": _str(_take(integ, "method", "integrator", "rk4"), "integrator.method"),
        "dt": _float(_take(integ, "dt", "integrator"), "integrator.dt"),
        "max_time": _float(_take(integ, "max_time", "integrator"), "integrator.max_time"),
        "converge_radius": _float(_take(integ, "converge_radius", "integrator", 0.1),
                                  "integrator.converge_radius"),
        "safety_margin": _float(_take(integ, "safety_margin", "integrator", 0.0),
                                "integrator.safety_margin"),
    }
    if idata["method"] not in ("rk4", "euler"):
        _fail("integrator.method", f"unknown method '{idata['method']}'")
    _done(integ, "integrator")
    data["integrator"] = idata

    ics = _section(m, "initial_conditions", "scenario", required=False)
    if ics is not None:
        m.pop("initial_conditions")
        mode = _str(_take(ics, "mode", "initial_conditions"), "initial_conditions.mode")
        icd: dict = {"mode": mode}
        if mode == "uniform":
            icd["count"] = _int(_take(ics, "count", "initial_conditions"), "initial_conditions.count")
            icd["clearance"] = _float(_take(ics, "clearance", "initial_conditions", 0.0),
                                      "initial_conditions.clearance")
            icd["exclude_radius"] = _float(_take(ics, "exclude_radius", "initial_conditions", 0.0),
                                           "initial_conditions.exclude_radius")
        elif mode == "disc":
            icd["center"] = _vec(_take(ics, "center", "initial_conditions"),
                                 "initial_conditions.center", dim)
            icd["radius"] = _float(_take(ics, "radius", "initial_conditions"),
                                   "initial_conditions.radius")
            icd["count"] = _int(_take(ics, "count", "initial_conditions"), "initial_conditions.count")
            icd["clearance"] = _float(_take(ics, "clearance", "initial_conditions", 0.0),
                                      "initial_conditions.clearance")
            if icd["radius"] <= 0.0:
                _fail("initial_conditions.radius", "must be positive")
        elif mode == "list":
            icd["states"] = _mat(_take(ics, "states", "initial_conditions"),
                                 "initial_conditions.states", dim)
        elif mode == "line":
            icd["start"] = _vec(_take(ics, "start", "initial_conditions"),
                                "initial_conditions.start", dim)
            icd["end"] = _vec(_take(ics, "end", "initial_conditions"),
                              "initial_conditions.end", dim)
            icd["count"] = _int(_take(ics, "count", "initial_conditions"),
                                "initial_conditions.count")
        else:
            _fail("initial_conditions.mode", f"unknown mode '{mode}'")
        _done(ics, "initial_conditions")
        data["initial_conditions"] = icd

    comp = _section(m, "comparison", "scenario", required=False)
    if comp is not None:
        m.pop("comparison")
        cdict = {
            "kappa": _float(_take(comp, "kappa", "comparison", 3.0), "comparison.kappa"),
            "outer_radius": _float(_take(comp, "outer_radius", "comparison"),
                                   "comparison.outer_radius"),
        }
        discs_raw = _take(comp, "discs", "comparison", [])
        if not isinstance(discs_raw, (list, tuple)):
            _fail("comparison.discs", "expected a list")
        discs = []
        for i, dsc in enumerate(discs_raw):
            dpath = f"comparison.discs[{i}]"
            if not isinstance(dsc, dict):
                _fail(dpath, "expected a mapping")
            dm = dict(dsc)
            discs.append({
                "center": _vec(_take(dm, "center", dpath), f"{dpath}.center", dim),
                "radius": _float(_take(dm, "radius", dpath), f"{dpath}.radius"),
            })
            _done(dm, dpath)
        cdict["discs"] = discs
        _done(comp, "comparison")
        data["comparison"] = cdict

    arm = _section(m, "arm", "scenario", required=False)
    if arm is not None:
        m.pop("arm")
        adata = {
            "masses": _vec(_take(arm, "masses", "arm", [1.0, 1.0]), "arm.masses", 2),
            "lengths": _vec(_take(arm, "lengths", "arm", [1.0, 1.0]), "arm.lengths", 2),
            "gravity": _float(_take(arm, "gravity", "arm", 9.81), "arm.gravity"),
            "kp": _vec(_take(arm, "kp", "arm"), "arm.kp", 2),
            "kv": _vec(_take(arm, "kv", "arm"), "arm.kv", 2),
            "track_converge": _float(_take(arm, "track_converge", "arm", 0.05),
                                     "arm.track_converge"),
            "q0": _vec(_take(arm, "q0", "arm", [0.0, 0.0]), "arm.q0", 2),
            "qd0": _vec(_take(arm, "qd0", "arm", [0.0, 0.0]), "arm.qd0", 2),
            "cspace_grid": _int(_take(arm, "cspace_grid", "arm", 160), "arm.cspace_grid"),
            "joint_margin": _float(_take(arm, "joint_margin", "arm", 0.5), "arm.joint_margin"),
            "max_circle_radius": _float(_take(arm, "max_circle_radius", "arm", 1.0),
                                        "arm.max_circle_radius"),
            "track_dt": _float(_take(arm, "track_dt", "arm", 0.002), "arm.track_dt"),
            "track_time": _float(_take(arm, "track_time", "arm", 25.0), "arm.track_time"),
        }
        for gain in ("kp", "kv"):
            for j, v in enumerate(adata[gain]):
                if v <= 0.0:
                    _fail(f"arm.{gain}[{j}]", "gains must be strictly positive")
        tob_raw = _take(arm, "task_obstacles", "arm", [])
        if not isinstance(tob_raw, (list, tuple)):
            _fail("arm.task_obstacles", "expected a list")
        tobs = []
        for i, ob in enumerate(tob_raw):
            tpath = f"arm.task_obstacles[{i}]"
            if not isinstance(ob, dict):
                _fail(tpath, "expected a mapping")
            tm = dict(ob)
            tobs.append({
                "center": _vec(_take(tm, "center", tpath), f"{tpath}.center", 2),
                "radius": _float(_take(tm, "radius", tpath), f"{tpath}.radius"),
            })
            _done(tm, tpath)
        adata["task_obstacles"] = tobs
        _done(arm, "arm")
        data["arm"] = adata

    _done(m, "scenario")
    return Scenario(data=data)


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as f:
        return parse_scenario(f.read())


def serialize_scenario(sc: Scenario) -> str:
    return yaml.safe_dump(sc.data, sort_keys=True, default_flow_style=None)


def scenario_hash(path) -> str:
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()


# --- builders ----------------------------------------------------------------


def build_environment(sc: Scenario) -> Environment:
    e = sc.data["environment"]
    obstacles = tuple(
        Obstacle(
            h=build_implicit(ob["unsafe"]),
            s=build_implicit(ob["sensing"]),
            label=ob["label"],
        )
        for ob in e["obstacles"]
    )
    return Environment(
        dimension=e["dimension"],
        target=tuple(e["target"]),
        obstacles=obstacles,
        domain=(tuple(e["domain"]["lo"]), tuple(e["domain"]["hi"])),
        delta=e["delta"],
        geometry_mode=e["geometry"],
    )


def build_params(sc: Scenario) -> DensityParams:
    d = sc.data["density"]
    return DensityParams(alpha=d["alpha"], theta=d["theta"], distance=d["distance"])


def build_controller(sc: Scenario) -> ControllerConfig:
    c = sc.data["controller"]
    noise = None
    if c["noise"] is not None:
        noise = NoiseConfig(
            mean=tuple(c["noise"]["mean"]),
            cov=tuple(tuple(row) for row in c["noise"]["cov"]),
        )
    return ControllerConfig(
        blend_delta=c["blend_delta"], speed=c["speed"],
        speed_taper=c["speed_taper"], u_max=c["u_max"], noise=noise,
    )


def controller_kind(sc: Scenario) -> str:
    return sc.data["controller"]["kind"]


def build_integrator(sc: Scenario, dt_override: float | None = None) -> IntegratorConfig:
    i = sc.data["integrator"]
    return IntegratorConfig(
        method=i["method"], dt=dt_override if dt_override is not None else i["dt"],
        max_time=i["max_time"], converge_radius=i["converge_radius"],
        safety_margin=i["safety_margin"],
    )


def sample_initial_conditions(sc: Scenario, env: Environment, seed: int | None = None):
    """Initial states per the scenario's initial_conditions section."""
    icd = sc.data.get("initial_conditions")
    if icd is None:
        raise ScenarioError("scenario has no initial_conditions section")
    if icd["mode"] == "uniform":
        return sample_safe_states(
            env, icd["count"], clearance=icd["clearance"],
            exclude_radius=icd["exclude_radius"],
            seed=sc.seed if seed is None else seed,
        )
    if icd["mode"] == "disc":
        return sample_disc_states(
            env, icd["count"], center=icd["center"], radius=icd["radius"],
            clearance=icd["clearance"], seed=sc.seed if seed is None else seed,
        )
    if icd["mode"] == "list":
        return np.asarray(icd["states"], dtype=float)
    starts = np.asarray(icd["start"], dtype=float)
    ends = np.asarray(icd["end"], dtype=float)
    w = np.linspace(0.0, 1.0, icd["count"])[:, None]
    return starts + w * (ends - starts)


def build_sphere_world(sc: Scenario):
    """Baseline sphere world from the comparison section (goal = env target)."""
    from .baseline_nf import SphereWorld

    comp = sc.data.get("comparison")
    if comp is None:
        raise ScenarioError("scenario has no comparison section")
    e = sc.data["environment"]
    return SphereWorld(
        goal=tuple(e["target"]),
        outer_radius=comp["outer_radius"],
        centers=tuple(tuple(d["center"]) for d in comp["discs"]),
        radii=tuple(d["radius"] for d in comp["discs"]),
        kappa=comp["kappa"],
    )


def build_arm(sc: Scenario) -> tuple[TwoLinkArm, ArmGains, dict]:
    a = sc.data.get("arm")
    if a is None:
        raise ScenarioError("scenario has no arm section")
    arm = TwoLinkArm(masses=tuple(a["masses"]), lengths=tuple(a["lengths"]),
                     gravity=a["gravity"])
    gains = ArmGains(kp=tuple(a["kp"]), kv=tuple(a["kv"]))
    return arm, gains, a
