"""The three training loss terms and their image-domain (sub)gradients.

* data consistency: squared L2 residual of the acquisition model,
* temporal total variation: Charbonnier-smoothed L1 of first temporal
  differences (smoothed so a true gradient exists for Adam),
* low rank: nuclear norm of the (pixels x frames) Casorati matrix,
  computed through the T x T Gram eigendecomposition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import ForwardOperator, Sinogram, _adjoint_frame, _forward_frame
from .geometry import ImageSequence

DEFAULT_TV_EPSILON = 1e-8
SV_FLOOR_SCALE = 1e-8


@dataclass(frozen=True)
class LossBreakdown:
    """One iteration's loss terms; ``total = dc + lambda_d*tv + lambda_l*lr``."""

    dc: float
    tv: float
    lr: float
    lambda_d: float
    lambda_l: float

    @property
    def total(self) -> float:
        return self.dc + self.lambda_d * self.tv + self.lambda_l * self.lr


def dc_loss(op: ForwardOperator, frames: ImageSequence, y: Sinogram):
    """``sum((A x - y)^2)`` and its gradient ``2 A^T (A x - y)``.

    Returns (value, gradient) with the gradient shaped like the image
    stack ``(n, n, T)``.
    """
    if frames.grid != op.grid:
        raise ValueError("image grid does not match the operator's grid")
    if y.data.shape[2] != frames.num_frames:
        raise ValueError(
            f"sinogram has {y.data.shape[2]} frames, image stack has {frames.num_frames}"
        )
    n = op.grid.n
    t_count = frames.num_frames
    cas = frames.casorati()
    value = 0.0
    grad = np.empty((n, n, t_count), dtype=np.float64)
    for t in range(t_count):
        resid = _forward_frame(op, cas[:, t]) - y.data[:, :, t]
        value += float(np.sum(resid * resid))
        grad[:, :, t] = 2.0 * _adjoint_frame(op, resid).reshape(n, n)
    return value, grad


def temporal_tv(frames: ImageSequence, epsilon: float = DEFAULT_TV_EPSILON):
    """Charbonnier-smoothed L1 of frame-to-frame differences.

    value = sum over pixels and t of sqrt((x[t+1]-x[t])^2 + eps^2) - eps,
    which tends to the plain L1 as eps -> 0 and is exactly 0 for T = 1.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    x = frames.data
    grad = np.zeros_like(x)
    if frames.num_frames == 1:
        return 0.0, grad
    diff = x[:, :, 1:] - x[:, :, :-1]
    root = np.sqrt(diff * diff + epsilon * epsilon)
    value = float(np.sum(root - epsilon))
    slope = diff / root
    grad[:, :, 1:] += slope
    grad[:, :, :-1] -= slope
    return value, grad


def nuclear_norm(frames: ImageSequence, sv_floor: float | None = None):
    """Sum of singular values of the Casorati matrix, with a subgradient.

    Singular values come from the eigendecomposition of the T x T Gram
    matrix X^T X (T <= pixel count throughout this package). The
    subgradient is U V^T restricted to singular values above
    ``sv_floor`` (default ``1e-8 * sigma_max``); directions below the
    floor are dropped, which is a valid subgradient element.
    """
    x = frames.casorati()
    if x.shape[1] > x.shape[0]:
        raise ValueError(
            f"Casorati matrix is {x.shape[0]}x{x.shape[1]}; expected T <= pixel count"
        )
    gram = x.T @ x
    try:
        _eigvals, eigvecs = np.linalg.eigh(gram)
    except np.linalg.LinAlgError as e:
        raise np.linalg.LinAlgError(f"Gram eigendecomposition failed: {e}") from e
    eigvecs = eigvecs[:, ::-1]  # descending
    # refine each singular value as ||X v_i||: identical to sqrt(eigenvalue)
    # for well-separated directions, but exact (instead of sqrt(machine eps)
    # junk) in the numerical null space of a rank-deficient stack
    xv = x @ eigvecs
    sigma = np.sqrt(np.sum(xv * xv, axis=0))
    value = float(np.sum(sigma))
    if sv_floor is None:
        sv_floor = SV_FLOOR_SCALE * (sigma.max() if sigma.size else 0.0)
    keep = sigma > sv_floor
    if not np.any(keep):
        grad = np.zeros_like(frames.data)
        return value, grad
    u = xv[:, keep] / sigma[keep][None, :]
    grad = (u @ eigvecs[:, keep].T).reshape(frames.data.shape)
    return value, grad
