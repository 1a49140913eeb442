"""Full-batch Adam optimization of the coordinate network.

Every iteration renders all spatiotemporal coordinates, evaluates the
composite loss (data consistency + weighted temporal TV + weighted
nuclear norm), backpropagates the image-domain gradient through the MLP,
and applies one bias-corrected Adam step at an exponentially decaying
learning rate.

Weights and optimizer state are kept in float64; the heavy per-
coordinate arithmetic runs in ``config.dtype`` (float32 by default).
The image-domain gradient is scaled by the reciprocal of the initial
total loss before backpropagation: Adam is invariant to a global
gradient scale (up to its epsilon), and the scaling keeps the moment
accumulators well inside floating range for arbitrarily scaled
acquisition units.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError, DivergenceError
from .forward import ForwardOperator, Sinogram
from .geometry import ImageGrid, ImageSequence
from .inr import (
    CoordinateBatch,
    InrModel,
    _backward,
    _cast_params,
    _encode,
    _forward,
    init_model,
    normalized_frame_times,
    render,
    save_checkpoint,
)
from .regularizers import (
    DEFAULT_TV_EPSILON,
    LossBreakdown,
    dc_loss,
    nuclear_norm,
    temporal_tv,
)

log = logging.getLogger(__name__)

AUTO = "auto"
LAMBDA_D_FRACTION = 1e-3
LAMBDA_L_FRACTION = 1e-4


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one optimization run.

    ``lambda_d`` / ``lambda_l`` may be numbers or "auto"; auto weights
    are resolved from the iteration-0 loss terms so that the TV and
    nuclear contributions start at fixed small fractions of the data
    term, then stay frozen.
    """

    iterations: int = 2000
    lr_start: float = 1e-3
    lr_end: float = 1e-6
    lr_schedule: str = "exponential"
    lambda_d: float | str = AUTO
    lambda_l: float | str = AUTO
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    length: int = 256
    sigma: float = 10.0
    tv_epsilon: float = DEFAULT_TV_EPSILON
    dtype: str = "float32"
    log_every: int = 50
    checkpoint_every: int = 0
    divergence_factor: float = 10.0
    divergence_patience: int = 50

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if not (0.0 < self.lr_end <= self.lr_start):
            raise ConfigError(
                f"need 0 < lr_end <= lr_start, got lr_start={self.lr_start}, lr_end={self.lr_end}"
            )
        if self.lr_schedule != "exponential":
            raise ConfigError(f"unknown lr_schedule {self.lr_schedule!r}")
        for name in ("adam_beta1", "adam_beta2"):
            b = getattr(self, name)
            if not (0.0 < b < 1.0):
                raise ConfigError(f"{name} must be in (0, 1), got {b}")
        for name in ("lambda_d", "lambda_l"):
            lam = getattr(self, name)
            if not (lam == AUTO or (isinstance(lam, (int, float)) and lam >= 0)):
                raise ConfigError(f"{name} must be 'auto' or a nonnegative number, got {lam!r}")
        if self.length < 1:
            raise ConfigError(f"length must be >= 1, got {self.length}")
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be 'float32' or 'float64', got {self.dtype!r}")
        if not self.tv_epsilon > 0:
            raise ConfigError(f"tv_epsilon must be positive, got {self.tv_epsilon}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        if not isinstance(obj, dict):
            raise ConfigError("train config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown train config fields: {sorted(unknown)}")
        try:
            return cls(**obj)
        except TypeError as e:
            raise ConfigError(str(e)) from e


def lr_at(cfg: TrainConfig, iteration: int) -> float:
    """Geometric decay from ``lr_start`` (iteration 0) to ``lr_end`` (last)."""
    if iteration < 0 or iteration >= cfg.iterations:
        raise ValueError(f"iteration {iteration} outside [0, {cfg.iterations})")
    if cfg.iterations == 1:
        return cfg.lr_start
    frac = iteration / (cfg.iterations - 1)
    return cfg.lr_start * (cfg.lr_end / cfg.lr_start) ** frac


@dataclass
class AdamState:
    """First/second moment accumulators, one pair per parameter array."""

    m_weights: list
    v_weights: list
    m_biases: list
    v_biases: list
    step: int = 0

    @classmethod
    def for_model(cls, model: InrModel) -> "AdamState":
        return cls(
            m_weights=[np.zeros_like(w) for w in model.weights],
            v_weights=[np.zeros_like(w) for w in model.weights],
            m_biases=[np.zeros_like(b) for b in model.biases],
            v_biases=[np.zeros_like(b) for b in model.biases],
        )


def adam_step(model: InrModel, state: AdamState, grads, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update, in place on the float64 weights."""
    state.step += 1
    c1 = 1.0 - beta1 ** state.step
    c2 = 1.0 - beta2 ** state.step
    for k, (dw, db) in enumerate(grads):
        for param, grad, m, v in (
            (model.weights[k], dw, state.m_weights[k], state.v_weights[k]),
            (model.biases[k], db, state.m_biases[k], state.v_biases[k]),
        ):
            m *= beta1
            m += (1.0 - beta1) * grad
            v *= beta2
            v += (1.0 - beta2) * grad * grad
            param -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


@dataclass
class TrainingLog:
    """Loss history, one row per iteration, plus the resolved
    regularizer weights (useful when the config said "auto")."""

    rows: list = field(default_factory=list)
    resolved_lambda_d: float = 0.0
    resolved_lambda_l: float = 0.0

    COLUMNS = ("iteration", "dc", "tv", "lr", "total", "learning_rate")

    def append(self, iteration: int, loss: LossBreakdown, learning_rate: float) -> None:
        self.rows.append(
            (iteration, loss.dc, loss.tv, loss.lr, loss.total, learning_rate)
        )

    def totals(self) -> np.ndarray:
        return np.array([r[4] for r in self.rows], dtype=np.float64)

    def moving_average(self, window: int = 100) -> np.ndarray:
        t = self.totals()
        if t.size < window:
            return np.array([t.mean()]) if t.size else np.array([])
        kernel = np.ones(window) / window
        return np.convolve(t, kernel, mode="valid")

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(self.COLUMNS)
            writer.writerows(self.rows)


def _resolve_lambda(setting, fraction: float, dc0: float, term0: float) -> float:
    if setting != AUTO:
        return float(setting)
    if term0 <= 0.0:
        return 0.0
    return fraction * dc0 / term0


def fit(y: Sinogram, op: ForwardOperator, cfg: TrainConfig,
        checkpoint_path=None) -> tuple[InrModel, TrainingLog]:
    """Optimize a fresh model against the measured sinogram.

    Returns the trained model and the full loss log. Deterministic for a
    fixed config, seed, and BLAS thread count. Raises
    :class:`DivergenceError` when the loss turns non-finite or exceeds
    ``divergence_factor`` times its initial value for
    ``divergence_patience`` consecutive iterations.
    """
    if y.geometry.num_sensors != op.geometry.num_sensors or \
            y.geometry.num_samples != op.geometry.num_samples:
        raise ValueError("sinogram geometry does not match the operator")
    n = op.grid.n
    t_count = y.num_frames
    dtype = np.dtype(cfg.dtype)

    model = init_model(cfg.seed, cfg.length, cfg.sigma)
    model.compute_dtype = dtype

    times_n = normalized_frame_times(t_count)
    coords = CoordinateBatch.casorati(n, times_n).coords.reshape(n * n, t_count, 3)
    feats = [_encode(model.encoder, coords[:, t, :], dtype) for t in range(t_count)]

    state = AdamState.for_model(model)
    history = TrainingLog()
    lam_d = lam_l = None
    grad_scale = None
    runaway = 0
    total0 = None

    for it in range(cfg.iterations):
        ws, bs, wts = _cast_params(model, dtype)

        cas = np.empty((n * n, t_count), dtype=np.float64)
        per_frame = []
        for t in range(t_count):
            out, hiddens = _forward(feats[t], ws, bs, keep_hidden=True)
            cas[:, t] = out
            per_frame.append((out, hiddens))
        frames = ImageSequence(
            data=cas.reshape(n, n, t_count), grid=op.grid, frame_times=y.frame_times
        )

        dc_v, dc_g = dc_loss(op, frames, y)
        tv_v, tv_g = temporal_tv(frames, cfg.tv_epsilon)
        lr_v, lr_g = nuclear_norm(frames)

        if it == 0:
            lam_d = _resolve_lambda(cfg.lambda_d, LAMBDA_D_FRACTION, dc_v, tv_v)
            lam_l = _resolve_lambda(cfg.lambda_l, LAMBDA_L_FRACTION, dc_v, lr_v)
            history.resolved_lambda_d = lam_d
            history.resolved_lambda_l = lam_l
            log.info("resolved regularizer weights: lambda_d=%.6g lambda_l=%.6g", lam_d, lam_l)

        loss = LossBreakdown(dc=dc_v, tv=tv_v, lr=lr_v, lambda_d=lam_d, lambda_l=lam_l)
        total = loss.total
        if not np.isfinite(total):
            raise DivergenceError(
                f"non-finite loss at iteration {it}: dc={dc_v}, tv={tv_v}, nuclear={lr_v}", it
            )
        if it == 0:
            total0 = total
            grad_scale = 1.0 / max(total0, 1e-300)
        elif total > cfg.divergence_factor * total0:
            runaway += 1
            if runaway >= cfg.divergence_patience:
                raise DivergenceError(
                    f"loss exceeded {cfg.divergence_factor:g} x its initial value "
                    f"({total:.6g} vs {total0:.6g}) for {runaway} consecutive iterations, "
                    f"last at iteration {it}", it
                )
        else:
            runaway = 0

        rate = lr_at(cfg, it)
        history.append(it, loss, rate)
        if cfg.log_every and it % cfg.log_every == 0:
            log.info(
                "iter %5d  dc=%.6g  tv=%.6g  nuclear=%.6g  total=%.6g  lr=%.3g",
                it, dc_v, tv_v, lr_v, total, rate,
            )

        g = dc_g
        if lam_d:
            g = g + lam_d * tv_g
        if lam_l:
            g = g + lam_l * lr_g
        g_cas = (g.reshape(n * n, t_count) * grad_scale).astype(dtype)

        grads = None
        for t in range(t_count):
            out, hiddens = per_frame[t]
            frame_grads = _backward(feats[t], hiddens, out, g_cas[:, t], ws, wts)
            if grads is None:
                grads = [[dw.astype(np.float64), db.astype(np.float64)]
                         for dw, db in frame_grads]
            else:
                for k, (dw, db) in enumerate(frame_grads):
                    grads[k][0] += dw
                    grads[k][1] += db
        for k, (dw, db) in enumerate(grads):
            if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(db))):
                raise DivergenceError(f"non-finite gradient in layer {k} at iteration {it}", it)

        adam_step(model, state, grads, rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)

        if checkpoint_path and cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0 \
                and (it + 1) < cfg.iterations:
            save_checkpoint(model, f"{checkpoint_path}.iter{it + 1:06d}", iteration=it + 1)

    return model, history


def fit_image(target: ImageSequence, cfg: TrainConfig) -> tuple[InrModel, list]:
    """Least-squares fit of the network directly to an image stack.

    Utility for capacity checks and pilots: minimizes the mean squared
    error to ``target`` (no acquisition model, no regularizers) with the
    same Adam schedule as :func:`fit`. Returns the model and the MSE
    history.
    """
    n = target.grid.n
    t_count = target.num_frames
    dtype = np.dtype(cfg.dtype)
    model = init_model(cfg.seed, cfg.length, cfg.sigma)
    model.compute_dtype = dtype
    times_n = normalized_frame_times(t_count)
    coords = CoordinateBatch.casorati(n, times_n).coords.reshape(n * n, t_count, 3)
    feats = [_encode(model.encoder, coords[:, t, :], dtype) for t in range(t_count)]
    goal = target.casorati()
    state = AdamState.for_model(model)
    mses = []
    count = goal.size
    for it in range(cfg.iterations):
        ws, bs, wts = _cast_params(model, dtype)
        grads = None
        mse = 0.0
        for t in range(t_count):
            out, hiddens = _forward(feats[t], ws, bs, keep_hidden=True)
            resid = out - goal[:, t]
            mse += float(np.sum(resid * resid))
            gout = (2.0 / count) * resid
            frame_grads = _backward(feats[t], hiddens, out, gout.astype(dtype), ws, wts)
            if grads is None:
                grads = [[dw.astype(np.float64), db.astype(np.float64)]
                         for dw, db in frame_grads]
            else:
                for k, (dw, db) in enumerate(frame_grads):
                    grads[k][0] += dw
                    grads[k][1] += db
        mses.append(mse / count)
        adam_step(model, state, grads, lr_at(cfg, it), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    return model, mses


def temporal_superresolve(model: InrModel, factor: int, grid: ImageGrid,
                          trained_frame_times: np.ndarray) -> ImageSequence:
    """Query the trained network on a ``factor`` x denser time axis.

    Produces ``factor*(T-1)+1`` frames uniformly spanning the trained
    range; every trained time coordinate is included exactly, so those
    frames match plain rendering bit for bit.
    """
    if factor < 1:
        raise ValueError(f"upsampling factor must be >= 1, got {factor}")
    times = np.asarray(trained_frame_times, dtype=np.float64)
    t_count = times.size
    if t_count == 1:
        dense_n = np.zeros(1)
        out_times = times
    else:
        count = factor * (t_count - 1) + 1
        dense_n = np.arange(count, dtype=np.float64) / (count - 1)
        out_times = np.linspace(times[0], times[-1], count)
    batch = CoordinateBatch.casorati(grid.n, dense_n)
    return render(model, batch, grid.n, dense_n.size, grid=grid, frame_times=out_times)
