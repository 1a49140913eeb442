"""Discrete ring-array acquisition model with an exact transpose.

Each pixel is treated as a point source: its intensity, weighted by the
reciprocal pixel-to-sensor distance, is deposited into the two time bins
bracketing the time of flight (linear interpolation), which discretizes
the circular-path integral of the 2D pressure solution. A temporal
derivative filter (central differences scaled by the sample rate,
one-sided at the trace ends) then produces the measured pressure.

Both stages are sparse matrices, so the adjoint is the exact transpose
and the inner-product identity <A x, y> = <x, A^T y> holds to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import (
    ImageGrid,
    ImageSequence,
    SensorGeometry,
    check_grid_inside_ring,
    pixel_sensor_distances,
)


@dataclass(frozen=True)
class Sinogram:
    """Pressure traces for every sensor and frame, shape ``(S, F, T)``."""

    data: np.ndarray
    geometry: SensorGeometry
    frame_times: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        s, f = self.geometry.num_sensors, self.geometry.num_samples
        if data.ndim != 3 or data.shape[0] != s or data.shape[1] != f:
            raise ValueError(
                f"sinogram shape {data.shape} does not match geometry (S={s}, F={f})"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("sinogram contains non-finite values")
        times = np.asarray(self.frame_times, dtype=np.float64)
        if times.shape != (data.shape[2],):
            raise ValueError(f"need {data.shape[2]} frame times, got shape {times.shape}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "frame_times", times)

    @property
    def num_frames(self) -> int:
        return self.data.shape[2]


def _derivative_matrix(num_samples: int, sample_rate: float) -> sp.csr_matrix:
    """Central-difference d/dt, one-sided at the first and last sample."""
    f = num_samples
    rows, cols, vals = [], [], []
    rows += [0, 0]
    cols += [0, 1]
    vals += [-sample_rate, sample_rate]
    half = sample_rate / 2.0
    for i in range(1, f - 1):
        rows += [i, i]
        cols += [i - 1, i + 1]
        vals += [-half, half]
    rows += [f - 1, f - 1]
    cols += [f - 2, f - 1]
    vals += [-sample_rate, sample_rate]
    return sp.csr_matrix((vals, (rows, cols)), shape=(f, f))


@dataclass(frozen=True)
class ForwardOperator:
    """Precomputed sparse acquisition operator ``A`` and its transpose.

    ``projection`` maps a flattened frame (n*n,) to stacked traces
    (S*F,) before the temporal derivative; ``deriv`` is the per-trace
    derivative filter (None when the derivative stage is disabled).
    """

    projection: sp.csr_matrix
    projection_t: sp.csr_matrix
    deriv: sp.csr_matrix | None
    deriv_t: sp.csr_matrix | None
    grid: ImageGrid
    geometry: SensorGeometry

    @property
    def include_derivative(self) -> bool:
        return self.deriv is not None


def build_forward_operator(grid: ImageGrid, geom: SensorGeometry,
                           include_derivative: bool = True) -> ForwardOperator:
    """Assemble the sparse weights for the given grid and ring geometry.

    The weight of pixel ``j`` seen by sensor ``s`` is ``1 / d_sj`` split
    linearly between the two samples bracketing the fractional sample
    index ``(d_sj / c - t_start) * sample_rate``.

    Raises
    ------
    ValueError
        If the grid is not strictly inside the ring or any pixel's time
        of flight falls outside the recording window.
    """
    check_grid_inside_ring(grid, geom)
    s_count = geom.num_sensors
    f_count = geom.num_samples
    n2 = grid.n * grid.n

    dist = pixel_sensor_distances(grid, geom)  # (S, n*n)
    tof = dist / geom.sound_speed
    q = (tof - geom.t_start) * geom.sample_rate  # fractional sample index
    # two-bin interpolation needs q in [0, F-1]; beyond that the flight
    # time is not representable in the recorded window
    if q.min() < 0.0 or q.max() > f_count - 1:
        raise ValueError(
            f"time of flight outside the recording window: fractional sample index "
            f"range [{q.min():.2f}, {q.max():.2f}] vs F={f_count}"
        )
    i0 = np.floor(q).astype(np.int64)
    frac = q - i0

    pix_idx = np.broadcast_to(np.arange(n2, dtype=np.int64), (s_count, n2))
    sensor_base = (np.arange(s_count, dtype=np.int64) * f_count)[:, None]
    w = 1.0 / dist
    rows = np.concatenate([(sensor_base + i0).ravel(), (sensor_base + i0 + 1).ravel()])
    cols = np.concatenate([pix_idx.ravel(), pix_idx.ravel()])
    vals = np.concatenate([(w * (1.0 - frac)).ravel(), (w * frac).ravel()])
    keep = vals != 0.0
    proj = sp.csr_matrix(
        (vals[keep], (rows[keep], cols[keep])), shape=(s_count * f_count, n2)
    )
    if include_derivative:
        deriv = _derivative_matrix(f_count, geom.sample_rate)
        deriv_t = deriv.T.tocsr()
    else:
        deriv = deriv_t = None
    return ForwardOperator(
        projection=proj,
        projection_t=proj.T.tocsr(),
        deriv=deriv,
        deriv_t=deriv_t,
        grid=grid,
        geometry=geom,
    )


def _forward_frame(op: ForwardOperator, frame_flat: np.ndarray) -> np.ndarray:
    traces = (op.projection @ frame_flat).reshape(
        op.geometry.num_sensors, op.geometry.num_samples
    )
    if op.deriv is not None:
        traces = (op.deriv @ traces.T).T
    return traces


def _adjoint_frame(op: ForwardOperator, traces: np.ndarray) -> np.ndarray:
    if op.deriv_t is not None:
        traces = (op.deriv_t @ traces.T).T
    return op.projection_t @ traces.ravel()


def apply_forward(op: ForwardOperator, frames: ImageSequence) -> Sinogram:
    """Map an image sequence to its sinogram, one frame at a time."""
    if frames.grid != op.grid:
        raise ValueError("image grid does not match the operator's grid")
    s, f = op.geometry.num_sensors, op.geometry.num_samples
    t_count = frames.num_frames
    out = np.empty((s, f, t_count), dtype=np.float64)
    cas = frames.casorati()
    for t in range(t_count):
        out[:, :, t] = _forward_frame(op, cas[:, t])
    return Sinogram(data=out, geometry=op.geometry, frame_times=frames.frame_times)


def apply_adjoint(op: ForwardOperator, sino: Sinogram) -> ImageSequence:
    """Exact transpose of :func:`apply_forward`.

    The result is a gradient-like stack and is generally signed.
    """
    if sino.geometry.num_sensors != op.geometry.num_sensors or \
            sino.geometry.num_samples != op.geometry.num_samples:
        raise ValueError("sinogram dimensions do not match the operator's geometry")
    n = op.grid.n
    t_count = sino.num_frames
    out = np.empty((n, n, t_count), dtype=np.float64)
    for t in range(t_count):
        out[:, :, t] = _adjoint_frame(op, sino.data[:, :, t]).reshape(n, n)
    return ImageSequence(data=out, grid=op.grid, frame_times=sino.frame_times)


def add_noise(sino: Sinogram, snr_db: float, seed: int) -> Sinogram:
    """Add white Gaussian noise at the requested signal-to-noise ratio.

    ``snr_db=inf`` returns the sinogram unchanged. The noise power is
    scaled so that ``10*log10(mean(y^2) / noise_power) == snr_db``.
    """
    if not np.isfinite(snr_db):
        if snr_db > 0:
            return sino
        raise ValueError(f"snr_db must be finite or +inf, got {snr_db}")
    signal_power = float(np.mean(sino.data ** 2))
    noise_std = np.sqrt(signal_power / (10.0 ** (snr_db / 10.0)))
    rng = np.random.default_rng(seed)
    noisy = sino.data + noise_std * rng.standard_normal(sino.data.shape)
    return Sinogram(data=noisy, geometry=sino.geometry, frame_times=sino.frame_times)
