"""Imaging grids, ring sensor arrays, and dynamic image stacks.

Conventions used throughout the package:

* Physical coordinates are in meters, times in seconds.
* An image frame is an ``(n, n)`` array indexed ``[row, col]``; the pixel
  at ``[i, j]`` has its center at ``origin + (j * pitch, i * pitch)``,
  i.e. column index maps to x and row index maps to y.
* A dynamic sequence stacks frames along the last axis, ``(n, n, T)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Desk-scale defaults: 20 mm x 20 mm field of view on a 30 mm ring,
# water-like sound speed, 40 MSa/s digitizer.
DEFAULT_GRID_N = 64
DEFAULT_GRID_SPAN = 0.020
DEFAULT_RING_RADIUS = 0.030
DEFAULT_SOUND_SPEED = 1500.0
DEFAULT_SAMPLE_RATE = 40e6

_RING_TOL = 1e-9


@dataclass(frozen=True)
class ImageGrid:
    """Square pixel grid: ``n`` pixels per side, ``pitch`` meters per pixel.

    ``origin`` is the physical coordinate of the center of pixel
    ``[0, 0]``.
    """

    n: int
    pitch: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"grid needs n >= 2, got {self.n}")
        if not self.pitch > 0:
            raise ValueError(f"grid pitch must be positive, got {self.pitch}")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def centered(cls, n: int, span: float, center: tuple[float, float] = (0.0, 0.0)) -> "ImageGrid":
        """Grid of ``n`` pixels spanning ``span`` meters, centered on ``center``."""
        pitch = span / n
        half = (n - 1) / 2.0 * pitch
        return cls(n=n, pitch=pitch, origin=(center[0] - half, center[1] - half))

    @property
    def span(self) -> float:
        """Physical side length ``n * pitch`` in meters."""
        return self.n * self.pitch

    def pixel_coords(self) -> np.ndarray:
        """Centers of all pixels, shape ``(n*n, 2)``, row-major (x = column axis)."""
        idx = np.arange(self.n, dtype=np.float64) * self.pitch
        x = self.origin[0] + idx
        y = self.origin[1] + idx
        xx, yy = np.meshgrid(x, y)  # yy varies along rows
        return np.column_stack([xx.ravel(), yy.ravel()])

    def bounds(self) -> tuple[float, float, float, float]:
        """Physical extent ``(x_min, x_max, y_min, y_max)`` including pixel edges."""
        h = self.pitch / 2.0
        lo_x = self.origin[0] - h
        lo_y = self.origin[1] - h
        return (lo_x, lo_x + self.span, lo_y, lo_y + self.span)


def default_grid(n: int = DEFAULT_GRID_N, span: float = DEFAULT_GRID_SPAN) -> ImageGrid:
    """Desk-scale grid centered on the ring center (origin)."""
    return ImageGrid.centered(n, span)


@dataclass(frozen=True)
class SensorGeometry:
    """Ring-array detection geometry and temporal sampling.

    Parameters
    ----------
    positions : ndarray, shape (S, 2)
        Sensor element centers in meters. Every position must lie on
        the circle given by ``radius`` / ``center`` to within 1e-9 m.
    radius, center : float, tuple
        Ring radius and center, meters.
    sound_speed : float
        Homogeneous medium speed of sound in m/s.
    sample_rate : float
        Samples per second of the digitizer.
    num_samples : int
        Number of recorded samples per sensor trace (F).
    t_start : float
        Acquisition time of the first sample, seconds.
    """

    positions: np.ndarray
    radius: float
    center: tuple[float, float]
    sound_speed: float
    sample_rate: float
    num_samples: int
    t_start: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ValueError(f"positions must have shape (S, 2), got {pos.shape}")
        if pos.shape[0] < 2:
            raise ValueError(f"need at least 2 sensors, got {pos.shape[0]}")
        if not self.radius > 0:
            raise ValueError(f"ring radius must be positive, got {self.radius}")
        if not self.sound_speed > 0:
            raise ValueError(f"sound speed must be positive, got {self.sound_speed}")
        if not self.sample_rate > 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")
        if self.num_samples < 2:
            raise ValueError(f"need at least 2 samples, got {self.num_samples}")
        d = np.hypot(pos[:, 0] - self.center[0], pos[:, 1] - self.center[1])
        off = np.max(np.abs(d - self.radius))
        if off > _RING_TOL:
            raise ValueError(f"sensor positions deviate from the ring by up to {off:.3e} m")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @property
    def num_sensors(self) -> int:
        return self.positions.shape[0]

    @property
    def t_end(self) -> float:
        """End of the recording window, ``t_start + F / sample_rate``."""
        return self.t_start + self.num_samples / self.sample_rate

    def sample_times(self) -> np.ndarray:
        """Absolute acquisition time of each sample, shape ``(F,)``."""
        return self.t_start + np.arange(self.num_samples, dtype=np.float64) / self.sample_rate


def make_ring_array(
    num_sensors: int,
    radius: float,
    center: tuple[float, float] = (0.0, 0.0),
    sound_speed: float = DEFAULT_SOUND_SPEED,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    num_samples: int = 2048,
    t_start: float = 0.0,
) -> SensorGeometry:
    """Equally spaced ring array; sensor ``k`` sits at angle ``2*pi*k/S`` from +x.

    Raises
    ------
    ValueError
        For fewer than 2 sensors or nonpositive radius / sample_rate.
    """
    if num_sensors < 2:
        raise ValueError(f"need at least 2 sensors, got {num_sensors}")
    if not radius > 0:
        raise ValueError(f"ring radius must be positive, got {radius}")
    angles = 2.0 * np.pi * np.arange(num_sensors, dtype=np.float64) / num_sensors
    positions = np.column_stack([
        center[0] + radius * np.cos(angles),
        center[1] + radius * np.sin(angles),
    ])
    return SensorGeometry(
        positions=positions,
        radius=radius,
        center=center,
        sound_speed=sound_speed,
        sample_rate=sample_rate,
        num_samples=num_samples,
        t_start=t_start,
    )


def subsample_sensors(geom: SensorGeometry, keep: int) -> SensorGeometry:
    """Keep every ``(S/keep)``-th sensor starting at index 0.

    ``keep`` must divide the sensor count evenly and be at least 2; all
    other geometry fields are unchanged.
    """
    s = geom.num_sensors
    if keep < 2:
        raise ValueError(f"keep must be >= 2, got {keep}")
    if s % keep != 0:
        raise ValueError(f"keep={keep} does not divide sensor count {s}")
    stride = s // keep
    return SensorGeometry(
        positions=geom.positions[::stride].copy(),
        radius=geom.radius,
        center=geom.center,
        sound_speed=geom.sound_speed,
        sample_rate=geom.sample_rate,
        num_samples=geom.num_samples,
        t_start=geom.t_start,
    )


def pixel_sensor_distances(grid: ImageGrid, geom: SensorGeometry) -> np.ndarray:
    """Distance from every pixel center to every sensor, shape ``(S, n*n)``."""
    pix = grid.pixel_coords()
    diff = geom.positions[:, None, :] - pix[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def check_grid_inside_ring(grid: ImageGrid, geom: SensorGeometry) -> None:
    """Require every pixel center to lie strictly inside the sensor ring."""
    pix = grid.pixel_coords()
    d = np.hypot(pix[:, 0] - geom.center[0], pix[:, 1] - geom.center[1])
    if np.max(d) >= geom.radius:
        raise ValueError(
            f"grid extends to {np.max(d):.4g} m from the ring center, "
            f"outside the ring radius {geom.radius:.4g} m"
        )


def flight_time_window(grid: ImageGrid, geom: SensorGeometry) -> tuple[float, float]:
    """Smallest and largest pixel-to-sensor time of flight, in seconds."""
    d = pixel_sensor_distances(grid, geom)
    return float(d.min() / geom.sound_speed), float(d.max() / geom.sound_speed)


def check_window_covers_grid(grid: ImageGrid, geom: SensorGeometry) -> None:
    """Require every pixel's time of flight to fall inside the recording window."""
    tof_min, tof_max = flight_time_window(grid, geom)
    if tof_min < geom.t_start or tof_max >= geom.t_end:
        raise ValueError(
            f"time-of-flight range [{tof_min:.3e}, {tof_max:.3e}] s is not covered by "
            f"the recording window [{geom.t_start:.3e}, {geom.t_end:.3e}) s"
        )


def samples_to_cover(grid: ImageGrid, radius: float = DEFAULT_RING_RADIUS,
                     center: tuple[float, float] = (0.0, 0.0),
                     sound_speed: float = DEFAULT_SOUND_SPEED,
                     sample_rate: float = DEFAULT_SAMPLE_RATE,
                     t_start: float = 0.0) -> int:
    """Number of samples needed so every pixel's time of flight is recordable."""
    pix = grid.pixel_coords()
    d = np.hypot(pix[:, 0] - center[0], pix[:, 1] - center[1])
    tof_max = (radius + float(d.max())) / sound_speed  # worst case: pixel opposite sensor
    return int(math.ceil((tof_max - t_start) * sample_rate)) + 2


def default_ring(num_sensors: int = 128, grid: ImageGrid | None = None,
                 num_samples: int | None = None) -> SensorGeometry:
    """Desk-scale ring covering ``grid`` (the default grid if not given)."""
    if grid is None:
        grid = default_grid()
    if num_samples is None:
        num_samples = samples_to_cover(grid)
    return make_ring_array(
        num_sensors=num_sensors,
        radius=DEFAULT_RING_RADIUS,
        num_samples=num_samples,
    )


@dataclass(frozen=True)
class ImageSequence:
    """Dynamic image stack ``(n, n, T)`` with one timestamp per frame.

    Intensities are dimensionless initial pressure. Values produced by the
    phantom renderer and the coordinate network lie in [0, 1]; gradient-like
    stacks (e.g. the transpose of the forward operator) may be signed, so
    the sign is not enforced here.
    """

    data: np.ndarray
    grid: ImageGrid
    frame_times: np.ndarray = field(default=None)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[0] != data.shape[1]:
            raise ValueError(f"expected (n, n, T) data, got shape {data.shape}")
        if data.shape[0] != self.grid.n:
            raise ValueError(f"data side {data.shape[0]} does not match grid n={self.grid.n}")
        if not np.all(np.isfinite(data)):
            raise ValueError("image sequence contains non-finite values")
        times = self.frame_times
        if times is None:
            times = np.arange(data.shape[2], dtype=np.float64)
        times = np.asarray(times, dtype=np.float64)
        if times.shape != (data.shape[2],):
            raise ValueError(f"need {data.shape[2]} frame times, got shape {times.shape}")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("frame times must be strictly increasing")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "frame_times", times)

    @property
    def num_frames(self) -> int:
        return self.data.shape[2]

    def casorati(self) -> np.ndarray:
        """View of the stack as a (pixels x frames) matrix, no copy."""
        n = self.grid.n
        return self.data.reshape(n * n, self.num_frames)

    def frame(self, t: int) -> np.ndarray:
        return self.data[:, :, t]
