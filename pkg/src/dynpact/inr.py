"""Coordinate network for dynamic image stacks.

A random Fourier feature encoding lifts normalized (x, y, t) coordinates
into 2L sinusoids, and a small MLP (three ReLU hidden layers of 256
units, sigmoid output) maps the features to an intensity in (0, 1).
Forward evaluation and exact reverse-mode gradients are written out by
hand so the training loop has no framework dependencies; all matrix work
is plain BLAS through numpy.

Evaluation is chunked per frame (n*n coordinates at a time) so rendering
the same frame always issues identical BLAS calls, which keeps repeated
renders and super-resolution queries bit-identical.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import ImageGrid, ImageSequence

HIDDEN_WIDTH = 256
NUM_HIDDEN = 3


@dataclass(frozen=True)
class FourierEncoder:
    """Fixed random frequency bank: ``gamma(p) = [cos(2 pi B p), sin(2 pi B p)]``.

    ``b_matrix`` has shape (L, 3) with entries drawn from N(0, sigma^2);
    it is not trainable and is fully determined by ``seed``.
    """

    b_matrix: np.ndarray
    sigma: float
    length: int
    seed: int

    def __post_init__(self):
        b = np.asarray(self.b_matrix, dtype=np.float64)
        if b.shape != (self.length, 3):
            raise ValueError(f"b_matrix shape {b.shape} does not match length {self.length}")
        object.__setattr__(self, "b_matrix", b)

    def digest(self) -> str:
        """SHA-256 of the frequency bank bytes (little-endian float64)."""
        return hashlib.sha256(np.ascontiguousarray(self.b_matrix, dtype="<f8").tobytes()).hexdigest()


def make_encoder(seed: int, length: int, sigma: float) -> FourierEncoder:
    if length < 1:
        raise ValueError(f"encoder length must be >= 1, got {length}")
    if not sigma > 0:
        raise ValueError(f"encoder sigma must be positive, got {sigma}")
    rng = np.random.default_rng(seed)
    b = rng.standard_normal((length, 3)) * sigma
    return FourierEncoder(b_matrix=b, sigma=float(sigma), length=int(length), seed=int(seed))


def _encode(enc: FourierEncoder, coords: np.ndarray, dtype) -> np.ndarray:
    """Feature matrix (M, 2L): first L columns cos, last L columns sin."""
    c = np.ascontiguousarray(coords, dtype=dtype)
    bt = (2.0 * np.pi * enc.b_matrix.T).astype(dtype)
    phase = c @ bt
    out = np.empty((c.shape[0], 2 * enc.length), dtype=dtype)
    np.cos(phase, out=out[:, : enc.length])
    np.sin(phase, out=out[:, enc.length:])
    return out


def encode(enc: FourierEncoder, p) -> np.ndarray:
    """Encode one (x, y, t) triple or a batch of them.

    Components are expected in [0, 1]; values outside are allowed for
    extrapolation queries but trigger a warning.
    """
    arr = np.atleast_2d(np.asarray(p, dtype=np.float64))
    if arr.shape[1] != 3:
        raise ValueError(f"coordinates must be (x, y, t) triples, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("coordinates must be finite")
    if arr.min() < 0.0 or arr.max() > 1.0:
        warnings.warn("coordinates outside the normalized range [0, 1]", stacklevel=2)
    feats = _encode(enc, arr, np.float64)
    return feats[0] if np.asarray(p).ndim == 1 else feats


@dataclass(frozen=True)
class CoordinateBatch:
    """Normalized (x, y, t) triples in Casorati order: pixel-major, frame-minor.

    For a full grid the flat model output reshapes directly to the
    (pixels x frames) Casorati matrix.
    """

    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.float64)
        if c.ndim != 2 or c.shape[1] != 3:
            raise ValueError(f"coords must have shape (M, 3), got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coordinates must be finite")
        if c.size and (c.min() < 0.0 or c.max() > 1.0):
            warnings.warn("coordinate batch extends outside [0, 1]", stacklevel=2)
        object.__setattr__(self, "coords", c)

    def __len__(self) -> int:
        return self.coords.shape[0]

    @classmethod
    def casorati(cls, n: int, times: np.ndarray) -> "CoordinateBatch":
        """Full spatiotemporal grid: x and y at ``j/(n-1)``, t from ``times``."""
        times = np.asarray(times, dtype=np.float64)
        axis = np.arange(n, dtype=np.float64) / (n - 1)
        xx, yy = np.meshgrid(axis, axis)  # row-major pixels, x fastest
        pix = np.column_stack([xx.ravel(), yy.ravel()])
        t_count = times.size
        coords = np.empty((n * n, t_count, 3), dtype=np.float64)
        coords[:, :, 0] = pix[:, 0:1]
        coords[:, :, 1] = pix[:, 1:2]
        coords[:, :, 2] = times[None, :]
        return cls(coords=coords.reshape(n * n * t_count, 3))


def normalized_frame_times(t_count: int) -> np.ndarray:
    """Frame index k mapped to k/(T-1); a single frame maps to 0."""
    if t_count == 1:
        return np.zeros(1, dtype=np.float64)
    return np.arange(t_count, dtype=np.float64) / (t_count - 1)


@dataclass
class InrModel:
    """MLP weights plus the fixed encoder.

    ``weights[k]`` has shape (fan_in, fan_out); hidden activations are
    ReLU and the output is a sigmoid, so rendered values lie in (0, 1)
    (saturation can round to the boundary in float32). ``compute_dtype``
    selects the precision of forward/backward arithmetic; the weights
    themselves are always stored in float64.
    """

    encoder: FourierEncoder
    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)
    compute_dtype: np.dtype = np.float64

    @property
    def layer_dims(self) -> list:
        dims = [self.weights[0].shape[0]]
        dims += [w.shape[1] for w in self.weights]
        return dims

    def parameter_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def copy(self) -> "InrModel":
        return InrModel(
            encoder=self.encoder,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            compute_dtype=self.compute_dtype,
        )


def init_model(seed: int, L: int = 256, sigma: float = 10.0) -> InrModel:
    """Deterministic construction: encoder bank first, then uniform
    fan-based weights (sqrt(6/(fan_in+fan_out)) bounds) with zero biases."""
    enc = make_encoder(seed, L, sigma)
    rng = np.random.default_rng(seed)
    rng.standard_normal((L, 3))  # advance past the encoder draw
    dims = [2 * L] + [HIDDEN_WIDTH] * NUM_HIDDEN + [1]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return InrModel(encoder=enc, weights=weights, biases=biases)


def _cast_params(model: InrModel, dtype):
    ws = [np.ascontiguousarray(w, dtype=dtype) for w in model.weights]
    bs = [np.ascontiguousarray(b, dtype=dtype) for b in model.biases]
    wts = [np.ascontiguousarray(w.T) for w in ws]
    return ws, bs, wts


def _forward(feats: np.ndarray, ws, bs, keep_hidden: bool):
    """Shared forward pass; returns (out (M,), hidden activations or None)."""
    h = feats
    hiddens = [] if keep_hidden else None
    for k in range(len(ws) - 1):
        z = h @ ws[k]
        z += bs[k]
        np.maximum(z, 0.0, out=z)
        if keep_hidden:
            hiddens.append(z)
        h = z
    z = h @ ws[-1]
    z += bs[-1]
    np.negative(z, out=z)
    np.exp(z, out=z)
    z += 1.0
    np.reciprocal(z, out=z)
    return z[:, 0], hiddens


def model_forward(model: InrModel, coords: np.ndarray) -> np.ndarray:
    """Evaluate the network on an (M, 3) coordinate array, returning (M,)."""
    dtype = model.compute_dtype
    feats = _encode(model.encoder, coords, dtype)
    ws, bs, _ = _cast_params(model, dtype)
    out, _ = _forward(feats, ws, bs, keep_hidden=False)
    return out


def render(model: InrModel, batch: CoordinateBatch, n: int, t_count: int,
           grid: ImageGrid | None = None,
           frame_times: np.ndarray | None = None) -> ImageSequence:
    """Evaluate the full Casorati grid and reshape to an (n, n, T) stack.

    The batch must cover all ``n*n*t_count`` coordinates in Casorati
    order. ``grid``/``frame_times`` are metadata for the returned stack;
    they default to a unit-span grid and frame indices.
    """
    if len(batch) != n * n * t_count:
        raise ValueError(
            f"batch has {len(batch)} coordinates, expected n*n*t_count = {n * n * t_count}"
        )
    dtype = model.compute_dtype
    ws, bs, _ = _cast_params(model, dtype)
    by_frame = batch.coords.reshape(n * n, t_count, 3)
    cas = np.empty((n * n, t_count), dtype=np.float64)
    for t in range(t_count):
        feats = _encode(model.encoder, by_frame[:, t, :], dtype)
        out, _ = _forward(feats, ws, bs, keep_hidden=False)
        cas[:, t] = out
    if grid is None:
        grid = ImageGrid(n=n, pitch=1.0 / n)
    if frame_times is None:
        frame_times = np.arange(t_count, dtype=np.float64)
    return ImageSequence(data=cas.reshape(n, n, t_count), grid=grid, frame_times=frame_times)


def _backward(feats, hiddens, out, gout, ws, wts):
    """Gradients of sum(gout * out) for one evaluated chunk.

    Returns per-layer (dW, db) in the compute dtype. ReLU uses the
    zero-at-kink subgradient; the sigmoid derivative is out*(1-out).
    """
    d = (gout * out * (1.0 - out))[:, None].astype(feats.dtype)
    grads = [None] * len(ws)
    for k in range(len(ws) - 1, 0, -1):
        h_prev = hiddens[k - 1]
        grads[k] = (h_prev.T @ d, d.sum(axis=0))
        d = d @ wts[k]
        d *= h_prev > 0
    grads[0] = (feats.T @ d, d.sum(axis=0))
    return grads


def backward(model: InrModel, batch: CoordinateBatch, output_grad: np.ndarray):
    """Parameter gradients of ``sum_i output_grad[i] * model(coords[i])``.

    Returns a list of (dW, db) float64 pairs, one per layer. Non-finite
    gradients raise with the offending layer index.
    """
    gout = np.asarray(output_grad, dtype=np.float64).ravel()
    if gout.shape[0] != len(batch):
        raise ValueError(
            f"output_grad has {gout.shape[0]} entries for {len(batch)} coordinates"
        )
    if not np.all(np.isfinite(gout)):
        raise ValueError("output_grad contains non-finite values")
    dtype = model.compute_dtype
    ws, bs, wts = _cast_params(model, dtype)
    feats = _encode(model.encoder, batch.coords, dtype)
    out, hiddens = _forward(feats, ws, bs, keep_hidden=True)
    grads = _backward(feats, hiddens, out, gout.astype(dtype), ws, wts)
    result = []
    for k, (dw, db) in enumerate(grads):
        dw = dw.astype(np.float64)
        db = db.astype(np.float64)
        if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(db))):
            raise FloatingPointError(f"non-finite gradient in layer {k}")
        result.append((dw, db))
    return result


# --- checkpoints ---------------------------------------------------------
#
# Single file: one JSON manifest line, then the concatenated float64
# little-endian weight blob (W1, b1, W2, b2, ...). The encoder bank is
# regenerated from (seed, length, sigma) and verified against its digest,
# so the manifest alone pins the rendering bit-exactly.

CHECKPOINT_KIND = "inr_checkpoint"


def save_checkpoint(model: InrModel, path, iteration: int = 0, extra: dict | None = None) -> None:
    blob = b"".join(
        np.ascontiguousarray(arr, dtype="<f8").tobytes()
        for w, b in zip(model.weights, model.biases)
        for arr in (w, b)
    )
    manifest = {
        "kind": CHECKPOINT_KIND,
        "seed": model.encoder.seed,
        "length": model.encoder.length,
        "sigma": model.encoder.sigma,
        "layer_dims": model.layer_dims,
        "iteration": int(iteration),
        "b_matrix_sha256": model.encoder.digest(),
        "compute_dtype": np.dtype(model.compute_dtype).name,
        "payload_sha256": hashlib.sha256(blob).hexdigest(),
        "extra": extra or {},
    }
    with open(path, "wb") as f:
        f.write(json.dumps(manifest).encode("utf-8") + b"\n")
        f.write(blob)


def load_checkpoint(path) -> tuple[InrModel, dict]:
    with open(path, "rb") as f:
        header = f.readline()
        blob = f.read()
    manifest = json.loads(header.decode("utf-8"))
    if manifest.get("kind") != CHECKPOINT_KIND:
        raise ValueError(f"{path}: not a model checkpoint (kind={manifest.get('kind')!r})")
    if hashlib.sha256(blob).hexdigest() != manifest["payload_sha256"]:
        raise ValueError(f"{path}: checkpoint payload checksum mismatch")
    enc = make_encoder(manifest["seed"], manifest["length"], manifest["sigma"])
    if enc.digest() != manifest["b_matrix_sha256"]:
        raise ValueError(f"{path}: regenerated frequency bank does not match its digest")
    dims = manifest["layer_dims"]
    weights, biases, offset = [], [], 0
    flat = np.frombuffer(blob, dtype="<f8")
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w = flat[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out).astype(np.float64)
        offset += fan_in * fan_out
        b = flat[offset : offset + fan_out].astype(np.float64)
        offset += fan_out
        weights.append(w)
        biases.append(b)
    if offset != flat.size:
        raise ValueError(f"{path}: weight blob has {flat.size} values, expected {offset}")
    model = InrModel(
        encoder=enc,
        weights=weights,
        biases=biases,
        compute_dtype=np.dtype(manifest["compute_dtype"]),
    )
    return model, manifest
