"""Frame-by-frame reference reconstructions: delay-and-sum and
universal back-projection.

Both methods sample each sensor trace at every pixel's time of flight by
linear interpolation and average over sensors with uniform weights (the
ring is uniform, so the solid-angle weights of back-projection reduce to
equal weights; uniform subsampling preserves that). Negative values are
clamped to zero for the returned stack after the raw minimum/maximum are
recorded via the module logger.
"""

from __future__ import annotations

import logging

import numpy as np

from .forward import Sinogram, _derivative_matrix
from .geometry import (
    ImageGrid,
    ImageSequence,
    check_grid_inside_ring,
    pixel_sensor_distances,
)

log = logging.getLogger(__name__)


def _sample_indices(grid: ImageGrid, sino: Sinogram) -> tuple[np.ndarray, np.ndarray]:
    """Fractional sample index of each (sensor, pixel) time of flight."""
    geom = sino.geometry
    check_grid_inside_ring(grid, geom)
    dist = pixel_sensor_distances(grid, geom)
    q = (dist / geom.sound_speed - geom.t_start) * geom.sample_rate
    f = geom.num_samples
    if q.min() < 0.0 or q.max() > f - 1:
        raise ValueError(
            f"time of flight outside the recorded window: fractional sample index "
            f"range [{q.min():.2f}, {q.max():.2f}] vs F={f}"
        )
    i0 = np.floor(q).astype(np.int64)
    i0 = np.minimum(i0, f - 2)  # keep i0+1 valid; frac becomes 1 at the last sample
    return i0, q - i0


def _backproject(traces: np.ndarray, i0: np.ndarray, frac: np.ndarray, n: int) -> np.ndarray:
    """Average linearly interpolated trace samples over sensors, (n, n)."""
    s = traces.shape[0]
    rows = np.arange(s)[:, None]
    vals = traces[rows, i0] * (1.0 - frac) + traces[rows, i0 + 1] * frac
    return (vals.mean(axis=0)).reshape(n, n)


def _clamped_sequence(raw: np.ndarray, grid: ImageGrid, frame_times: np.ndarray,
                      label: str) -> ImageSequence:
    log.debug("%s raw value range: [%.4g, %.4g]", label, raw.min(), raw.max())
    return ImageSequence(data=np.maximum(raw, 0.0), grid=grid, frame_times=frame_times)


def reconstruct_das(sino: Sinogram, grid: ImageGrid) -> ImageSequence:
    """Delay-and-sum: pixel value is the sensor average of the trace at the
    pixel's time of flight. Frames are reconstructed independently."""
    i0, frac = _sample_indices(grid, sino)
    n = grid.n
    raw = np.empty((n, n, sino.num_frames), dtype=np.float64)
    for t in range(sino.num_frames):
        raw[:, :, t] = _backproject(sino.data[:, :, t], i0, frac, n)
    return _clamped_sequence(raw, grid, sino.frame_times, "DAS")


def reconstruct_ubp(sino: Sinogram, grid: ImageGrid) -> ImageSequence:
    """Universal back-projection of ``b(t) = 2 p(t) - 2 t dp/dt``.

    The derivative is the same central-difference filter used by the
    forward model (one-sided at the trace ends); ``t`` is the absolute
    sample time. For the uniform ring the per-sensor weights are equal.
    """
    i0, frac = _sample_indices(grid, sino)
    geom = sino.geometry
    n = grid.n
    deriv = _derivative_matrix(geom.num_samples, geom.sample_rate)
    times = geom.sample_times()[None, :]
    raw = np.empty((n, n, sino.num_frames), dtype=np.float64)
    for t in range(sino.num_frames):
        p = sino.data[:, :, t]
        dp = (deriv @ p.T).T
        b = 2.0 * p - 2.0 * times * dp
        raw[:, :, t] = _backproject(b, i0, frac, n)
    return _clamped_sequence(raw, grid, sino.frame_times, "UBP")
