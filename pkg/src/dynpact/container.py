"""Bit-exact persistence for sinograms and image stacks, plus frame export.

A container file is one JSON header line followed by a raw little-endian
float32 payload. The header documents the payload layout (index order),
dimensions, acquisition/grid parameters, an endianness tag, and a SHA-256
payload checksum, so third-party tools can ingest the format from the
header alone. Readers byte-swap when the endianness tag differs from
"little".

Payload index order:
  sinogram: frame, then sensor, then sample  -> C-order (T, S, F)
  image:    frame, then row, then column     -> C-order (T, n, n)
"""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np
from PIL import Image

from .forward import Sinogram
from .geometry import ImageGrid, ImageSequence, SensorGeometry

KIND_SINOGRAM = "sinogram"
KIND_IMAGE = "image_sequence"
_FORMAT = "dynpact-container-v1"


class ContainerError(Exception):
    """Base class for container format violations."""


class ChecksumMismatchError(ContainerError):
    pass


class TruncatedPayloadError(ContainerError):
    pass


class HeaderError(ContainerError):
    """Malformed or internally inconsistent header."""


class WrongKindError(ContainerError):
    pass


def _header_for(obj) -> tuple[dict, np.ndarray]:
    if isinstance(obj, Sinogram):
        geom = obj.geometry
        header = {
            "format": _FORMAT,
            "kind": KIND_SINOGRAM,
            "dims": [obj.num_frames, geom.num_sensors, geom.num_samples],
            "index_order": ["frame", "sensor", "sample"],
            "frame_times": obj.frame_times.tolist(),
            "geometry": {
                "positions": geom.positions.tolist(),
                "radius": geom.radius,
                "center": list(geom.center),
                "sound_speed": geom.sound_speed,
                "sample_rate": geom.sample_rate,
                "num_samples": geom.num_samples,
                "t_start": geom.t_start,
            },
        }
        payload = np.transpose(obj.data, (2, 0, 1))
    elif isinstance(obj, ImageSequence):
        header = {
            "format": _FORMAT,
            "kind": KIND_IMAGE,
            "dims": [obj.num_frames, obj.grid.n, obj.grid.n],
            "index_order": ["frame", "row", "col"],
            "frame_times": obj.frame_times.tolist(),
            "grid": {
                "n": obj.grid.n,
                "pitch": obj.grid.pitch,
                "origin": list(obj.grid.origin),
            },
        }
        payload = np.transpose(obj.data, (2, 0, 1))
    else:
        raise TypeError(f"cannot serialize object of type {type(obj).__name__}")
    return header, np.ascontiguousarray(payload, dtype="<f4")


def write_container(path, obj) -> None:
    """Write a :class:`Sinogram` or :class:`ImageSequence` to ``path``."""
    header, payload = _header_for(obj)
    raw = payload.tobytes()
    header["dtype"] = "float32"
    header["endianness"] = "little"
    header["payload_sha256"] = hashlib.sha256(raw).hexdigest()
    with open(path, "wb") as f:
        f.write(json.dumps(header).encode("utf-8") + b"\n")
        f.write(raw)


def _read_raw(path) -> tuple[dict, bytes]:
    with open(path, "rb") as f:
        line = f.readline()
        raw = f.read()
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise HeaderError(f"{path}: unreadable container header ({e})") from e
    if not isinstance(header, dict) or header.get("format") != _FORMAT:
        raise HeaderError(f"{path}: not a {_FORMAT} file")
    dims = header.get("dims")
    if (
        not isinstance(dims, list)
        or len(dims) != 3
        or any((not isinstance(d, int)) or d < 1 for d in dims)
    ):
        raise HeaderError(f"{path}: invalid dims {dims!r}")
    expected = int(np.prod(dims)) * 4
    if len(raw) < expected:
        raise TruncatedPayloadError(
            f"{path}: payload has {len(raw)} bytes, header promises {expected}"
        )
    if len(raw) > expected:
        raise HeaderError(
            f"{path}: payload has {len(raw)} bytes, header promises {expected}"
        )
    if hashlib.sha256(raw).hexdigest() != header.get("payload_sha256"):
        raise ChecksumMismatchError(f"{path}: payload checksum mismatch")
    return header, raw


def _decode_payload(header: dict, raw: bytes) -> np.ndarray:
    dtype = "<f4" if header.get("endianness", "little") == "little" else ">f4"
    arr = np.frombuffer(raw, dtype=dtype).astype(np.float32)  # native order copy
    return arr.reshape(header["dims"])


def read_container(path):
    """Read a container, returning a :class:`Sinogram` or :class:`ImageSequence`."""
    header, raw = _read_raw(path)
    kind = header.get("kind")
    data = _decode_payload(header, raw)
    if kind == KIND_SINOGRAM:
        g = header["geometry"]
        geom = SensorGeometry(
            positions=np.asarray(g["positions"], dtype=np.float64),
            radius=g["radius"],
            center=tuple(g["center"]),
            sound_speed=g["sound_speed"],
            sample_rate=g["sample_rate"],
            num_samples=g["num_samples"],
            t_start=g["t_start"],
        )
        return Sinogram(
            data=np.transpose(data, (1, 2, 0)),
            geometry=geom,
            frame_times=np.asarray(header["frame_times"], dtype=np.float64),
        )
    if kind == KIND_IMAGE:
        g = header["grid"]
        grid = ImageGrid(n=g["n"], pitch=g["pitch"], origin=tuple(g["origin"]))
        return ImageSequence(
            data=np.transpose(data, (1, 2, 0)),
            grid=grid,
            frame_times=np.asarray(header["frame_times"], dtype=np.float64),
        )
    raise HeaderError(f"{path}: unknown container kind {kind!r}")


def _read_kind(path, kind: str):
    header, _ = _read_raw(path)
    if header.get("kind") != kind:
        raise WrongKindError(
            f"{path}: expected a {kind} container, found {header.get('kind')!r}"
        )
    return read_container(path)


def read_sinogram(path) -> Sinogram:
    return _read_kind(path, KIND_SINOGRAM)


def read_image_sequence(path) -> ImageSequence:
    return _read_kind(path, KIND_IMAGE)


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def export_frames(seq: ImageSequence, directory, fmt: str = "png") -> list:
    """Write one 8-bit grayscale file per frame; returns the file paths.

    The sequence must already be normalized to [0, 1]; pixel values are
    ``255 * intensity`` rounded half-up. Frame indices in the filenames
    are zero-padded.
    """
    if fmt not in ("png", "pgm"):
        raise ValueError(f"format must be 'png' or 'pgm', got {fmt!r}")
    if seq.data.min() < 0.0 or seq.data.max() > 1.0:
        raise ValueError(
            f"sequence must be normalized to [0, 1] before export "
            f"(range [{seq.data.min():.4g}, {seq.data.max():.4g}])"
        )
    os.makedirs(directory, exist_ok=True)
    width = max(3, len(str(seq.num_frames - 1)))
    paths = []
    for t in range(seq.num_frames):
        gray = np.floor(255.0 * seq.data[:, :, t] + 0.5).astype(np.uint8)
        path = os.path.join(directory, f"frame_{t:0{width}d}.{fmt}")
        if fmt == "pgm":
            with open(path, "wb") as f:
                f.write(f"P5\n{gray.shape[1]} {gray.shape[0]}\n255\n".encode("ascii"))
                f.write(gray.tobytes())
        else:
            Image.fromarray(gray, mode="L").save(path)
        paths.append(path)
    return paths
