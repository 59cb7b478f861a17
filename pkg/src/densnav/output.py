"""Run artefacts: CSV trajectories, JSON summaries, SVG renderings.

All numeric text is written with repeatable formatting so identical runs
produce byte-identical files.  Wall-clock and host facts go to a separate
metadata file that is excluded from any byte comparison.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import platform
import time
from enum import Enum
from pathlib import Path

import numpy as np

from .density import DensityParams
from .dynamics import ArmTrajectory, Trajectory, TwoLinkArm, arm_points
from .geometry import Environment
from .verify import _rho_grid

FMT = "%.9g"


def fmt(v: float) -> str:
    return FMT % float(v)


def jsonable(obj):
    """Recursively coerce numpy scalars/arrays, enums and dataclasses to JSON types."""
    if isinstance(obj, Enum):
        return obj.value
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return jsonable(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(
        json.dumps(jsonable(obj), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _region_labels(env: Environment, states: np.ndarray) -> list[str]:
    if not env.obstacles:
        return ["Free"] * len(states)
    h = np.stack([o.h.value(states) for o in env.obstacles], axis=0)
    s = np.stack([o.s.value(states) for o in env.obstacles], axis=0)
    unsafe = np.any(h <= 0.0, axis=0)
    sensing = np.any(s <= 0.0, axis=0)
    return [
        "Unsafe" if u else ("Sensing" if g else "Free")
        for u, g in zip(unsafe, sensing)
    ]


def write_trajectory_csv(path, traj: Trajectory, env: Environment) -> None:
    """One row per sample: time, state, applied control, min h, region label."""
    n = traj.states.shape[1]
    regions = _region_labels(env, traj.states)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(
            ["t"] + [f"x{i}" for i in range(n)] + [f"u{i}" for i in range(n)]
            + ["h_min", "region"]
        )
        for k in range(len(traj.times)):
            row = [fmt(traj.times[k])]
            row += [fmt(v) for v in traj.states[k]]
            row += [fmt(v) for v in traj.controls[k]]
            row.append(fmt(traj.h_min[k]))
            row.append(regions[k])
            w.writerow(row)


def write_arm_csv(path, traj: ArmTrajectory) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["t", "q0", "q1", "qd0", "qd1", "tau0", "tau1", "e0", "e1", "h_min"])
        for k in range(len(traj.times)):
            w.writerow(
                [fmt(traj.times[k])]
                + [fmt(v) for v in traj.q[k]] + [fmt(v) for v in traj.qd[k]]
                + [fmt(v) for v in traj.torques[k]] + [fmt(v) for v in traj.errors[k]]
                + [fmt(traj.h_min[k])]
            )


def run_summary(name: str, file_hash: str, seed: int, trajectories: list[Trajectory]) -> dict:
    from .baseline_nf import outcome_counts

    conv = [t for t in trajectories if t.outcome.value == "Converged"]
    per_run = [
        {
            "index": t.run_index,
            "outcome": t.outcome.value,
            "final_time": float(t.times[-1]),
            "final_state": [float(v) for v in t.final_state],
            "path_length": t.path_length(),
            "unsafe_occupancy": [float(v) for v in t.occupancy_time_unsafe],
            "min_h_seen": float(np.min(t.h_min)) if len(t.h_min) else None,
            "annotations": t.annotations,
        }
        for t in sorted(trajectories, key=lambda t: t.run_index)
    ]
    return {
        "scenario": name,
        "scenario_sha256": file_hash,
        "seed": seed,
        "runs": len(trajectories),
        "outcomes": outcome_counts(trajectories),
        "converged_fraction": len(conv) / len(trajectories) if trajectories else 0.0,
        "mean_convergence_time": (
            float(np.mean([t.times[-1] for t in conv])) if conv else None
        ),
        "total_unsafe_occupancy": float(
            sum(sum(t.occupancy_time_unsafe) for t in trajectories)
        ),
        "per_run": per_run,
    }


def write_run_meta(path, elapsed_seconds: float, extra: dict | None = None) -> None:
    """Volatile facts (clock, host, versions); never part of comparisons."""
    import scipy

    meta = {
        "created_unix": time.time(),
        "elapsed_seconds": elapsed_seconds,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "machine": platform.machine(),
    }
    if extra:
        meta.update(extra)
    write_json(path, meta)


# --- marching squares ---------------------------------------------------------

# Segment endpoints per case, as pairs of edge ids: 0 bottom, 1 right,
# 2 top, 3 left.  Corner bit order: (i,j), (i+1,j), (i+1,j+1), (i,j+1).
_CASES = {
    1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)],
    6: [(0, 2)], 7: [(3, 2)], 8: [(2, 3)], 9: [(0, 2)],
    11: [(1, 2)], 12: [(1, 3)], 13: [(0, 1)], 14: [(3, 0)],
}


def marching_squares(xs: np.ndarray, ys: np.ndarray, Z: np.ndarray, level: float = 0.0):
    """Level-set segments of Z (indexed [ix, iy]) on the rectilinear grid."""
    inside = Z > level
    case = (
        inside[:-1, :-1].astype(int) + 2 * inside[1:, :-1]
        + 4 * inside[1:, 1:] + 8 * inside[:-1, 1:]
    )
    segs = []

    def edge_point(e, i, j):
        if e == 0:
            za, zb = Z[i, j], Z[i + 1, j]
            t = (level - za) / (zb - za)
            return (xs[i] + t * (xs[i + 1] - xs[i]), ys[j])
        if e == 1:
            za, zb = Z[i + 1, j], Z[i + 1, j + 1]
            t = (level - za) / (zb - za)
            return (xs[i + 1], ys[j] + t * (ys[j + 1] - ys[j]))
        if e == 2:
            za, zb = Z[i, j + 1], Z[i + 1, j + 1]
            t = (level - za) / (zb - za)
            return (xs[i] + t * (xs[i + 1] - xs[i]), ys[j + 1])
        za, zb = Z[i, j], Z[i, j + 1]
        t = (level - za) / (zb - za)
        return (xs[i], ys[j] + t * (ys[j + 1] - ys[j]))

    ii, jj = np.nonzero((case > 0) & (case < 15))
    for i, j in zip(ii, jj):
        c = case[i, j]
        if c in (5, 10):
            center = 0.25 * (Z[i, j] + Z[i + 1, j] + Z[i, j + 1] + Z[i + 1, j + 1])
            if c == 5:
                pairs = [(0, 1), (2, 3)] if center > level else [(3, 0), (1, 2)]
            else:
                pairs = [(3, 0), (1, 2)] if center > level else [(0, 1), (2, 3)]
        else:
            pairs = _CASES[c]
        for ea, eb in pairs:
            segs.append((edge_point(ea, i, j), edge_point(eb, i, j)))
    return segs


# --- SVG ----------------------------------------------------------------------

OUTCOME_COLORS = {
    "Converged": "#1b9e77",
    "MaxTime": "#d95f02",
    "UnsafeEntered": "#d7191c",
    "NumericalFailure": "#7570b3",
}

_VIRIDIS = [
    (0.267, 0.005, 0.329), (0.283, 0.141, 0.458), (0.254, 0.265, 0.530),
    (0.207, 0.372, 0.553), (0.164, 0.471, 0.558), (0.128, 0.567, 0.551),
    (0.135, 0.659, 0.518), (0.267, 0.749, 0.441), (0.478, 0.821, 0.318),
    (0.741, 0.873, 0.150), (0.993, 0.906, 0.144),
]


def _ramp(t: float) -> str:
    t = min(max(t, 0.0), 1.0)
    pos = t * (len(_VIRIDIS) - 1)
    i = min(int(pos), len(_VIRIDIS) - 2)
    w = pos - i
    rgb = [
        (1.0 - w) * _VIRIDIS[i][k] + w * _VIRIDIS[i + 1][k] for k in range(3)
    ]
    return "#%02x%02x%02x" % tuple(int(round(255 * v)) for v in rgb)


class SvgCanvas:
    """Minimal SVG writer mapping a world box to pixel coordinates (y up)."""

    def __init__(self, lo, hi, width: int = 640):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        span = self.hi - self.lo
        self.width = width
        self.height = int(round(width * span[1] / span[0]))
        self._items: list[str] = []

    def _px(self, p):
        x = (p[0] - self.lo[0]) / (self.hi[0] - self.lo[0]) * self.width
        y = self.height - (p[1] - self.lo[1]) / (self.hi[1] - self.lo[1]) * self.height
        return x, y

    def rect_world(self, p0, p1, fill: str, opacity: float = 1.0):
        x0, y0 = self._px(p0)
        x1, y1 = self._px(p1)
        x, y = min(x0, x1), min(y0, y1)
        w, h = abs(x1 - x0), abs(y1 - y0)
        self._items.append(
            f'<rect x="{x:.2f}" y="{y:.2f}" width="{w + 0.1:.2f}" height="{h + 0.1:.2f}" '
            f'fill="{fill}" opacity="{opacity:.3f}" stroke="none"/>'
        )

    def polyline(self, pts, stroke: str, width: float = 1.5, opacity: float = 1.0,
                 dashed: bool = False):
        if len(pts) < 2:
            return
        coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in (self._px(p) for p in pts))
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        self._items.append(
            f'<polyline points="{coords}" fill="none" stroke="{stroke}" '
            f'stroke-width="{width:.2f}" opacity="{opacity:.3f}"{dash}/>'
        )

    def segments(self, segs, stroke: str, width: float = 1.5, dashed: bool = False):
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        parts = []
        for a, b in segs:
            xa, ya = self._px(a)
            xb, yb = self._px(b)
            parts.append(f"M{xa:.2f},{ya:.2f}L{xb:.2f},{yb:.2f}")
        if parts:
            self._items.append(
                f'<path d="{"".join(parts)}" fill="none" stroke="{stroke}" '
                f'stroke-width="{width:.2f}"{dash}/>'
            )

    def circle(self, center, r_px: float, fill: str, stroke: str = "none",
               opacity: float = 1.0):
        x, y = self._px(center)
        self._items.append(
            f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r_px:.2f}" fill="{fill}" '
            f'stroke="{stroke}" opacity="{opacity:.3f}"/>'
        )

    def text(self, pos, s: str, size: int = 12, fill: str = "#333"):
        x, y = self._px(pos)
        self._items.append(
            f'<text x="{x:.2f}" y="{y:.2f}" font-size="{size}" '
            f'font-family="sans-serif" fill="{fill}">{s}</text>'
        )

    def body(self) -> str:
        return "\n".join(self._items)

    def document(self) -> str:
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">\n'
            f'<rect width="100%" height="100%" fill="white"/>\n{self.body()}\n</svg>\n'
        )

    def save(self, path):
        Path(path).write_text(self.document(), encoding="utf-8")


def environment_canvas(
    env: Environment,
    params: DensityParams | None = None,
    trajectories: list[Trajectory] = (),
    resolution: int = 200,
    heat_resolution: int = 0,
) -> SvgCanvas:
    """Top-down picture: optional density heat, h/s level sets, trajectories.

    Only the first two coordinates are drawn; higher-dimensional runs get a
    projected view.
    """
    lo, hi = env.lo[:2], env.hi[:2]
    canvas = SvgCanvas(lo, hi)

    def grid_points(res):
        xs = np.linspace(lo[0], hi[0], res)
        ys = np.linspace(lo[1], hi[1], res)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        cols = [X, Y]
        for k in range(2, env.dimension):
            cols.append(np.full_like(X, env.target[k]))
        return xs, ys, np.stack(cols, axis=-1)

    if heat_resolution and params is not None:
        xs, ys, pts = grid_points(heat_resolution)
        rho, _ = _rho_grid(env, params, pts)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.log10(rho)
        finite = np.isfinite(z)
        if finite.any():
            zmin, zmax = float(np.min(z[finite])), float(np.max(z[finite]))
            zspan = (zmax - zmin) or 1.0
            for i in range(heat_resolution - 1):
                for j in range(heat_resolution - 1):
                    if not finite[i, j]:
                        continue
                    t = (z[i, j] - zmin) / zspan
                    canvas.rect_world(
                        (xs[i], ys[j]), (xs[i + 1], ys[j + 1]), _ramp(t), opacity=0.5
                    )

    xs, ys, pts = grid_points(resolution)
    for obs in env.obstacles:
        H = obs.h.value(pts)
        S = obs.s.value(pts)
        canvas.segments(marching_squares(xs, ys, S), "#888888", width=1.0, dashed=True)
        canvas.segments(marching_squares(xs, ys, H), "#222222", width=1.8)

    for traj in trajectories:
        color = OUTCOME_COLORS.get(traj.outcome.value, "#555555")
        canvas.polyline(traj.states[:, :2], color, width=1.2, opacity=0.85)
        canvas.circle(traj.states[0, :2], 2.5, color, opacity=0.9)

    canvas.circle(env.target[:2], 5.0, "none", stroke="#1b9e77")
    canvas.circle(env.target[:2], 1.8, "#1b9e77")
    return canvas


def environment_svg(
    path,
    env: Environment,
    params: DensityParams | None = None,
    trajectories: list[Trajectory] = (),
    resolution: int = 200,
    heat_resolution: int = 0,
) -> None:
    environment_canvas(env, params, trajectories, resolution, heat_resolution).save(path)


def panel_grid_svg(path, panels, columns: int = 2, tile_width: int = 480,
                   title_height: int = 22) -> None:
    """Tile labelled canvases into one figure (e.g. method/parameter panels)."""
    if not panels:
        raise ValueError("panel grid needs at least one panel")
    rows = (len(panels) + columns - 1) // columns
    tile_heights = []
    for r in range(rows):
        row_panels = panels[r * columns:(r + 1) * columns]
        tile_heights.append(max(
            int(round(tile_width * c.height / c.width)) for _, c in row_panels
        ))
    total_w = columns * tile_width
    total_h = sum(h + title_height for h in tile_heights)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" '
        f'height="{total_h}" viewBox="0 0 {total_w} {total_h}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    y = 0
    for r in range(rows):
        th = tile_heights[r]
        for c_idx in range(columns):
            k = r * columns + c_idx
            if k >= len(panels):
                break
            title, canvas = panels[k]
            x = c_idx * tile_width
            parts.append(
                f'<text x="{x + 8}" y="{y + title_height - 7}" font-size="14" '
                f'font-family="sans-serif" fill="#222">{title}</text>'
            )
            parts.append(
                f'<svg x="{x}" y="{y + title_height}" width="{tile_width}" height="{th}" '
                f'viewBox="0 0 {canvas.width} {canvas.height}" '
                f'preserveAspectRatio="xMidYMid meet">'
            )
            parts.append('<rect width="100%" height="100%" fill="white" stroke="#ccc"/>')
            parts.append(canvas.body())
            parts.append("</svg>")
        y += th + title_height
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")


def divergence_svg(path, fld, env: Environment, resolution_note: str = "") -> None:
    """Heat map of the divergence audit: violations red, excluded cells grey.

    Non-negative cells are shaded by log magnitude.  Only meaningful for
    two-dimensional environments.
    """
    if env.dimension != 2:
        raise ValueError("divergence heat map requires a two-dimensional environment")
    xs, ys = fld.axes
    canvas = SvgCanvas((xs[0], ys[0]), (xs[-1], ys[-1]))
    div = fld.div
    pos = np.where(~fld.excluded & (div > 0.0), div, np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        z = np.log10(pos)
    finite = np.isfinite(z)
    zmin = float(np.nanmin(z[finite])) if finite.any() else 0.0
    zmax = float(np.nanmax(z[finite])) if finite.any() else 1.0
    span = (zmax - zmin) or 1.0
    nx, ny = div.shape
    for i in range(nx - 1):
        for j in range(ny - 1):
            p0, p1 = (xs[i], ys[j]), (xs[i + 1], ys[j + 1])
            if fld.excluded[i, j]:
                canvas.rect_world(p0, p1, "#e0e0e0")
            elif div[i, j] < 0.0:
                canvas.rect_world(p0, p1, "#d7191c")
            else:
                t = (z[i, j] - zmin) / span if finite[i, j] else 0.0
                canvas.rect_world(p0, p1, _ramp(0.25 + 0.75 * t))

    res = 160
    gx = np.linspace(xs[0], xs[-1], res)
    gy = np.linspace(ys[0], ys[-1], res)
    X, Y = np.meshgrid(gx, gy, indexing="ij")
    pts = np.stack([X, Y], axis=-1)
    for obs in env.obstacles:
        canvas.segments(marching_squares(gx, gy, obs.s.value(pts)), "#ffffff",
                        width=1.0, dashed=True)
        canvas.segments(marching_squares(gx, gy, obs.h.value(pts)), "#ffffff", width=1.8)
    canvas.circle(env.target[:2], 4.0, "none", stroke="#ffffff")
    if resolution_note:
        canvas.text((xs[0] + 0.02 * (xs[-1] - xs[0]), ys[-1] - 0.04 * (ys[-1] - ys[0])),
                    resolution_note, size=12, fill="#ffffff")
    canvas.save(path)


def write_torque_csv(path, traj: ArmTrajectory) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["t", "tau0", "tau1"])
        for k in range(len(traj.times)):
            w.writerow([fmt(traj.times[k])] + [fmt(v) for v in traj.torques[k]])


def arm_svg(path, arm: TwoLinkArm, traj: ArmTrajectory, task_obstacles=()) -> None:
    """Workspace view: ghosted arm poses, tip path, task obstacles."""
    reach = sum(arm.lengths) * 1.15
    canvas = SvgCanvas((-reach, -reach), (reach, reach))
    scale_px = canvas.width / (2.0 * reach)

    for center, radius in task_obstacles:
        canvas.circle(tuple(center), radius * scale_px, "#d7191c", opacity=0.35)

    n_ghosts = 14
    idx = np.unique(np.linspace(0, len(traj.times) - 1, n_ghosts).astype(int))
    for rank, k in enumerate(idx):
        p1, p2 = arm_points(arm, traj.q[k])
        fade = 0.15 + 0.85 * rank / max(len(idx) - 1, 1)
        canvas.polyline([(0.0, 0.0), tuple(p1), tuple(p2)], "#2c7fb8",
                        width=3.0, opacity=fade * 0.8)
        canvas.circle(tuple(p2), 2.0, "#2c7fb8", opacity=fade)

    _, tips = arm_points(arm, traj.q)
    canvas.polyline(tips, "#d95f02", width=1.2, opacity=0.9)
    canvas.circle((0.0, 0.0), 4.0, "#222222")
    canvas.save(path)


def arm_frames(out_dir, arm: TwoLinkArm, traj: ArmTrajectory, task_obstacles=(),
               n_frames: int = 24) -> list[Path]:
    """Workspace snapshots at evenly spaced times: frame_000.svg, frame_001.svg, ...

    Each frame shows the pose, the tip path so far and the task obstacles;
    suitable for flipping through or assembling into an animation.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reach = sum(arm.lengths) * 1.15
    idx = np.unique(np.linspace(0, len(traj.times) - 1, n_frames).astype(int))
    _, tips = arm_points(arm, traj.q)
    written = []
    for fno, k in enumerate(idx):
        canvas = SvgCanvas((-reach, -reach), (reach, reach), width=320)
        scale_px = canvas.width / (2.0 * reach)
        for center, radius in task_obstacles:
            canvas.circle(tuple(center), radius * scale_px, "#d7191c", opacity=0.35)
        canvas.polyline(tips[: k + 1], "#d95f02", width=1.0, opacity=0.8)
        p1, p2 = arm_points(arm, traj.q[k])
        canvas.polyline([(0.0, 0.0), tuple(p1), tuple(p2)], "#2c7fb8", width=3.0)
        canvas.circle(tuple(p2), 3.0, "#2c7fb8")
        canvas.circle((0.0, 0.0), 3.5, "#222222")
        canvas.text((-reach * 0.95, reach * 0.9), f"t = {traj.times[k]:.2f} s", size=12)
        p = out_dir / f"frame_{fno:03d}.svg"
        canvas.save(p)
        written.append(p)
    return written
