"""Deterministic dynamic phantoms: moving discs and ellipses on a pixel grid.

Discs are rasterized with the exact disc/pixel overlap area, so sub-pixel
motion is smooth and per-frame mass is conserved for translating shapes.
Ellipses use 4x4 subsampling per pixel. Overlapping shapes resolve by
maximum intensity, which keeps every frame inside [0, 1].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .geometry import ImageGrid, ImageSequence
from .errors import ConfigError


@dataclass(frozen=True)
class LinearPath:
    """Constant-velocity trajectory, meters per second."""

    velocity: tuple[float, float]

    def at(self, start: tuple[float, float], t: float) -> tuple[float, float]:
        return (start[0] + self.velocity[0] * t, start[1] + self.velocity[1] * t)


@dataclass(frozen=True)
class OrbitPath:
    """Circular orbit of the shape center around ``center`` at ``angular_rate`` rad/s."""

    center: tuple[float, float]
    angular_rate: float

    def at(self, start: tuple[float, float], t: float) -> tuple[float, float]:
        dx = start[0] - self.center[0]
        dy = start[1] - self.center[1]
        a = self.angular_rate * t
        c, s = math.cos(a), math.sin(a)
        return (self.center[0] + c * dx - s * dy, self.center[1] + s * dx + c * dy)


@dataclass(frozen=True)
class Disc:
    intensity: float
    center: tuple[float, float]
    radius: float
    path: LinearPath | OrbitPath

    def __post_init__(self):
        if not 0.0 <= self.intensity <= 1.0:
            raise ValueError(f"intensity must be in [0, 1], got {self.intensity}")
        if not self.radius > 0:
            raise ValueError(f"disc radius must be positive, got {self.radius}")

    def bounding_radius(self) -> float:
        return self.radius


@dataclass(frozen=True)
class Ellipse:
    intensity: float
    center: tuple[float, float]
    radii: tuple[float, float]

    path: LinearPath | OrbitPath

    def __post_init__(self):
        if not 0.0 <= self.intensity <= 1.0:
            raise ValueError(f"intensity must be in [0, 1], got {self.intensity}")
        if not (self.radii[0] > 0 and self.radii[1] > 0):
            raise ValueError(f"ellipse radii must be positive, got {self.radii}")

    def bounding_radius(self) -> float:
        return max(self.radii)


@dataclass(frozen=True)
class PhantomSpec:
    """A list of moving shapes plus the temporal sampling of the sequence."""

    shapes: tuple
    num_frames: int
    frame_interval: float
    seed: int = 0

    def __post_init__(self):
        if self.num_frames < 1:
            raise ValueError(f"need at least 1 frame, got {self.num_frames}")
        if not self.frame_interval > 0:
            raise ValueError(f"frame interval must be positive, got {self.frame_interval}")
        if len(self.shapes) == 0:
            raise ValueError("phantom needs at least one shape")
        object.__setattr__(self, "shapes", tuple(self.shapes))


def _circle_halfplane_area(x: float, y: float, r: float) -> float:
    """Area of {u^2 + v^2 <= r^2, u <= x, v <= y} for a circle at the origin."""
    if x <= -r or y <= -r:
        return 0.0
    cx = min(x, r)
    cy = min(max(y, -r), r)

    def g(u):
        # integral of sqrt(r^2 - s^2) from 0 to u, |u| <= r
        u = min(max(u, -r), r)
        return 0.5 * (u * math.sqrt(max(r * r - u * u, 0.0)) + r * r * math.asin(u / r))

    w = math.sqrt(max(r * r - cy * cy, 0.0))
    if cy >= 0.0:
        # slices left of -w and right of +w span the full chord 2*f(u);
        # in between the segment is cut at height cy
        area = 2.0 * (g(min(cx, -w)) - g(-r))
        if cx > -w:
            b = min(cx, w)
            area += cy * (b + w) + (g(b) - g(-w))
        if cx > w:
            area += 2.0 * (g(cx) - g(w))
        return area
    # cy < 0: only slices with f(u) >= |cy| contribute
    if cx <= -w:
        return 0.0
    b = min(cx, w)
    return cy * (b + w) + (g(b) - g(-w))


def disc_pixel_coverage(grid: ImageGrid, center: tuple[float, float], radius: float) -> np.ndarray:
    """Exact area fraction of each pixel covered by the disc, shape ``(n, n)``.

    Only pixels in the disc's bounding box are evaluated; interior pixels
    short-circuit to 1 and exterior ones to 0.
    """
    n, pitch = grid.n, grid.pitch
    cov = np.zeros((n, n), dtype=np.float64)
    half = pitch / 2.0
    # index range of the bounding box
    j_lo = max(0, int(math.floor((center[0] - radius - grid.origin[0]) / pitch - 0.5)))
    j_hi = min(n - 1, int(math.ceil((center[0] + radius - grid.origin[0]) / pitch + 0.5)))
    i_lo = max(0, int(math.floor((center[1] - radius - grid.origin[1]) / pitch - 0.5)))
    i_hi = min(n - 1, int(math.ceil((center[1] + radius - grid.origin[1]) / pitch + 0.5)))
    half_diag = half * math.sqrt(2.0)
    inv_area = 1.0 / (pitch * pitch)
    for i in range(i_lo, i_hi + 1):
        py = grid.origin[1] + i * pitch - center[1]
        for j in range(j_lo, j_hi + 1):
            px = grid.origin[0] + j * pitch - center[0]
            d = math.hypot(px, py)
            if d <= radius - half_diag:
                cov[i, j] = 1.0
            elif d < radius + half_diag:
                a = (
                    _circle_halfplane_area(px + half, py + half, radius)
                    - _circle_halfplane_area(px - half, py + half, radius)
                    - _circle_halfplane_area(px + half, py - half, radius)
                    + _circle_halfplane_area(px - half, py - half, radius)
                )
                cov[i, j] = min(max(a * inv_area, 0.0), 1.0)
    return cov


_SUBSAMPLE = 4


def ellipse_pixel_coverage(grid: ImageGrid, center: tuple[float, float],
                           radii: tuple[float, float]) -> np.ndarray:
    """Pixel coverage of an axis-aligned ellipse by 4x4 subsampling."""
    n, pitch = grid.n, grid.pitch
    cov = np.zeros((n, n), dtype=np.float64)
    rx, ry = radii
    j_lo = max(0, int(math.floor((center[0] - rx - grid.origin[0]) / pitch - 0.5)))
    j_hi = min(n - 1, int(math.ceil((center[0] + rx - grid.origin[0]) / pitch + 0.5)))
    i_lo = max(0, int(math.floor((center[1] - ry - grid.origin[1]) / pitch - 0.5)))
    i_hi = min(n - 1, int(math.ceil((center[1] + ry - grid.origin[1]) / pitch + 0.5)))
    if j_lo > j_hi or i_lo > i_hi:
        return cov
    # subsample offsets relative to the pixel center
    off = (np.arange(_SUBSAMPLE) + 0.5) / _SUBSAMPLE * pitch - pitch / 2.0
    xs = grid.origin[0] + np.arange(j_lo, j_hi + 1)[:, None] * pitch + off[None, :]
    ys = grid.origin[1] + np.arange(i_lo, i_hi + 1)[:, None] * pitch + off[None, :]
    u = ((xs - center[0]) / rx).reshape(1, -1, 1, _SUBSAMPLE)
    v = ((ys - center[1]) / ry).reshape(-1, 1, _SUBSAMPLE, 1)
    inside = (u * u + v * v) <= 1.0
    cov[i_lo:i_hi + 1, j_lo:j_hi + 1] = inside.sum(axis=(2, 3)) / (_SUBSAMPLE * _SUBSAMPLE)
    return cov


def render_phantom(spec: PhantomSpec, grid: ImageGrid) -> ImageSequence:
    """Render every frame of the phantom; frame ``t`` is drawn at ``t * frame_interval``.

    Raises
    ------
    ValueError
        If any shape leaves the grid extent in any frame (mass leaving
        the field of view would silently break temporal priors).
    """
    x_min, x_max, y_min, y_max = grid.bounds()
    frames = np.zeros((grid.n, grid.n, spec.num_frames), dtype=np.float64)
    for t in range(spec.num_frames):
        time = t * spec.frame_interval
        for k, shape in enumerate(spec.shapes):
            cx, cy = shape.path.at(shape.center, time)
            r = shape.bounding_radius()
            if cx - r < x_min or cx + r > x_max or cy - r < y_min or cy + r > y_max:
                raise ValueError(
                    f"shape {k} leaves the grid extent at frame {t} "
                    f"(center ({cx:.4g}, {cy:.4g}), bounding radius {r:.4g})"
                )
            if isinstance(shape, Disc):
                cov = disc_pixel_coverage(grid, (cx, cy), shape.radius)
            else:
                cov = ellipse_pixel_coverage(grid, (cx, cy), shape.radii)
            np.maximum(frames[:, :, t], shape.intensity * cov, out=frames[:, :, t])
    times = np.arange(spec.num_frames, dtype=np.float64) * spec.frame_interval
    return ImageSequence(data=frames, grid=grid, frame_times=times)


# --- JSON configuration -------------------------------------------------
#
# Schema (see docs/phantom_spec.schema.json):
# {
#   "num_frames": int >= 1,
#   "frame_interval": float > 0,
#   "seed": int,
#   "shapes": [
#     {"kind": "disc", "intensity": float, "center": [x, y], "radius": float,
#      "motion": {"kind": "linear", "velocity": [vx, vy]}},
#     {"kind": "ellipse", "intensity": float, "center": [x, y], "radii": [rx, ry],
#      "motion": {"kind": "orbit", "center": [cx, cy], "angular_rate": float}}
#   ]
# }


def _require(cond: bool, msg: str):
    if not cond:
        raise ConfigError(msg)


def _parse_pair(obj, name) -> tuple[float, float]:
    _require(isinstance(obj, (list, tuple)) and len(obj) == 2, f"{name} must be a [x, y] pair")
    return (float(obj[0]), float(obj[1]))


def _parse_motion(obj) -> LinearPath | OrbitPath:
    _require(isinstance(obj, dict), "motion must be an object")
    kind = obj.get("kind")
    if kind == "linear":
        return LinearPath(velocity=_parse_pair(obj.get("velocity", [0, 0]), "motion.velocity"))
    if kind == "orbit":
        _require("angular_rate" in obj, "orbit motion needs angular_rate")
        return OrbitPath(
            center=_parse_pair(obj.get("center", [0, 0]), "motion.center"),
            angular_rate=float(obj["angular_rate"]),
        )
    raise ConfigError(f"unknown motion kind {kind!r} (expected 'linear' or 'orbit')")


def _parse_shape(obj, idx: int):
    _require(isinstance(obj, dict), f"shapes[{idx}] must be an object")
    kind = obj.get("kind")
    try:
        motion = _parse_motion(obj.get("motion", {"kind": "linear", "velocity": [0, 0]}))
        if kind == "disc":
            _require("radius" in obj, f"shapes[{idx}]: disc needs a radius")
            return Disc(
                intensity=float(obj.get("intensity", 1.0)),
                center=_parse_pair(obj.get("center", [0, 0]), f"shapes[{idx}].center"),
                radius=float(obj["radius"]),
                path=motion,
            )
        if kind == "ellipse":
            _require("radii" in obj, f"shapes[{idx}]: ellipse needs radii")
            return Ellipse(
                intensity=float(obj.get("intensity", 1.0)),
                center=_parse_pair(obj.get("center", [0, 0]), f"shapes[{idx}].center"),
                radii=_parse_pair(obj["radii"], f"shapes[{idx}].radii"),
                path=motion,
            )
    except ValueError as e:
        raise ConfigError(f"shapes[{idx}]: {e}") from e
    raise ConfigError(f"shapes[{idx}]: unknown kind {kind!r} (expected 'disc' or 'ellipse')")


def phantom_spec_from_dict(obj: dict) -> PhantomSpec:
    _require(isinstance(obj, dict), "phantom spec must be a JSON object")
    _require("shapes" in obj and isinstance(obj["shapes"], list) and obj["shapes"],
             "phantom spec needs a non-empty 'shapes' list")
    shapes = tuple(_parse_shape(s, i) for i, s in enumerate(obj["shapes"]))
    try:
        return PhantomSpec(
            shapes=shapes,
            num_frames=int(obj.get("num_frames", 1)),
            frame_interval=float(obj.get("frame_interval", 0.1)),
            seed=int(obj.get("seed", 0)),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e


def load_phantom_spec(path) -> PhantomSpec:
    """Read a phantom spec from a JSON file."""
    with open(path, "r", encoding="utf-8") as f:
        try:
            obj = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e
    return phantom_spec_from_dict(obj)


def two_disc_phantom(num_frames: int = 8, frame_interval: float = 0.1,
                     seed: int = 7) -> PhantomSpec:
    """Default desk-scale phantom: one translating and one orbiting disc."""
    return PhantomSpec(
        shapes=(
            Disc(intensity=1.0, center=(-0.004, -0.002), radius=0.0022,
                 path=LinearPath(velocity=(0.008, 0.004))),
            Disc(intensity=0.6, center=(0.004, 0.003), radius=0.0030,
                 path=OrbitPath(center=(0.002, 0.001), angular_rate=0.9)),
        ),
        num_frames=num_frames,
        frame_interval=frame_interval,
        seed=seed,
    )
