"""PSNR and SSIM with sequence-level min-max normalization.

Both metrics operate per frame on stacks normalized to [0, 1] over the
whole sequence (not per frame). PSNR is ``10*log10(1/MSE)`` with MSE the
mean squared error; identical frames yield an infinite sentinel that is
excluded from the mean. SSIM uses the single-statistics form (frame-wide
mean, variance and covariance) with c1 = 0.01^2, c2 = 0.03^2.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import ImageSequence

SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


@dataclass(frozen=True)
class EvalReport:
    """Per-frame and mean image-quality scores for one reconstruction."""

    psnr_per_frame: tuple
    ssim_per_frame: tuple
    mean_psnr: float
    mean_ssim: float
    psnr_excluded: int
    reference_bounds: tuple
    reconstruction_bounds: tuple

    def to_dict(self) -> dict:
        return {
            "psnr_per_frame": list(self.psnr_per_frame),
            "ssim_per_frame": list(self.ssim_per_frame),
            "mean_psnr": self.mean_psnr,
            "mean_ssim": self.mean_ssim,
            "psnr_excluded": self.psnr_excluded,
            "reference_bounds": list(self.reference_bounds),
            "reconstruction_bounds": list(self.reconstruction_bounds),
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["frame", "psnr_db", "ssim"])
            for i, (p, s) in enumerate(zip(self.psnr_per_frame, self.ssim_per_frame)):
                writer.writerow([i, p, s])


def _minmax(seq: ImageSequence):
    lo = float(seq.data.min())
    hi = float(seq.data.max())
    if hi == lo:
        raise ValueError("cannot normalize a constant image sequence (zero range)")
    scaled = (seq.data - lo) / (hi - lo)
    return ImageSequence(data=scaled, grid=seq.grid, frame_times=seq.frame_times), (lo, hi)


def normalize_pair(y: ImageSequence, yhat: ImageSequence):
    """Min-max normalize each stack independently over its whole sequence."""
    if y.data.shape != yhat.data.shape:
        raise ValueError(f"shape mismatch: {y.data.shape} vs {yhat.data.shape}")
    y_norm, _ = _minmax(y)
    yhat_norm, _ = _minmax(yhat)
    return y_norm, yhat_norm


def psnr(y: ImageSequence, yhat: ImageSequence):
    """Per-frame PSNR in dB and the mean over frames.

    Assumes inputs normalized to [0, 1]. Frames with zero error map to
    ``inf`` and are excluded from the mean (with a warning).
    """
    if y.data.shape != yhat.data.shape:
        raise ValueError(f"shape mismatch: {y.data.shape} vs {yhat.data.shape}")
    diff = y.data - yhat.data
    mse = np.mean(diff * diff, axis=(0, 1))
    per_frame = np.where(mse > 0.0, 10.0 * np.log10(1.0 / np.where(mse > 0.0, mse, 1.0)), np.inf)
    finite = np.isfinite(per_frame)
    if not np.all(finite):
        warnings.warn(
            f"{int(np.sum(~finite))} identical frame(s) excluded from the mean PSNR",
            stacklevel=2,
        )
    mean = float(np.mean(per_frame[finite])) if np.any(finite) else float("inf")
    return per_frame, mean


def ssim(y: ImageSequence, yhat: ImageSequence):
    """Per-frame SSIM (global-statistics form) and the mean over frames."""
    if y.data.shape != yhat.data.shape:
        raise ValueError(f"shape mismatch: {y.data.shape} vs {yhat.data.shape}")
    a = y.data.reshape(-1, y.num_frames)
    b = yhat.data.reshape(-1, y.num_frames)
    mu_a = a.mean(axis=0)
    mu_b = b.mean(axis=0)
    var_a = a.var(axis=0)
    var_b = b.var(axis=0)
    cov = ((a - mu_a) * (b - mu_b)).mean(axis=0)
    per_frame = ((2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)) / (
        (mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    )
    return per_frame, float(np.mean(per_frame))


def evaluate_pair(reference: ImageSequence, reconstruction: ImageSequence) -> EvalReport:
    """Normalize both stacks, then score PSNR and SSIM per frame."""
    if reference.data.shape != reconstruction.data.shape:
        raise ValueError(
            f"shape mismatch: {reference.data.shape} vs {reconstruction.data.shape}"
        )
    ref_norm, ref_bounds = _minmax(reference)
    rec_norm, rec_bounds = _minmax(reconstruction)
    psnr_frames, psnr_mean = psnr(ref_norm, rec_norm)
    ssim_frames, ssim_mean = ssim(ref_norm, rec_norm)
    return EvalReport(
        psnr_per_frame=tuple(float(v) for v in psnr_frames),
        ssim_per_frame=tuple(float(v) for v in ssim_frames),
        mean_psnr=psnr_mean,
        mean_ssim=ssim_mean,
        psnr_excluded=int(np.sum(~np.isfinite(psnr_frames))),
        reference_bounds=ref_bounds,
        reconstruction_bounds=rec_bounds,
    )
