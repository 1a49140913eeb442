"""Command-line pipeline: simulate, reconstruct, upsample, evaluate, export.

Every run writes a JSON manifest next to its primary output recording
the fully resolved configuration, seeds, and the SHA-256 of every input
and output file, so identical manifests imply identical outputs.

Exit codes:
  0  success
  2  command-line usage error
  3  missing or unreadable input file
  4  configuration violates its schema
  5  dimension or value mismatch between inputs
  6  container format error (checksum, truncation, wrong kind)
  7  optimization diverged
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import __version__
from .baselines import reconstruct_das, reconstruct_ubp
from .container import (
    ContainerError,
    export_frames,
    file_sha256,
    read_image_sequence,
    read_sinogram,
    write_container,
)
from .errors import ConfigError, DivergenceError
from .forward import add_noise, apply_forward, build_forward_operator
from .geometry import ImageGrid, make_ring_array, samples_to_cover, subsample_sensors
from .inr import load_checkpoint, save_checkpoint
from .metrics import evaluate_pair
from .phantom import load_phantom_spec, render_phantom, two_disc_phantom
from .trainer import TrainConfig, fit, temporal_superresolve

EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_CONFIG = 4
EXIT_MISMATCH = 5
EXIT_CONTAINER = 6
EXIT_DIVERGED = 7

_EXIT_CODES_HELP = """exit codes:
  0  success
  2  command-line usage error
  3  missing or unreadable input file
  4  configuration violates its schema
  5  dimension or value mismatch between inputs
  6  container format error (checksum, truncation, wrong kind)
  7  optimization diverged
"""


def _emit_error(code: int, kind: str, message: str) -> int:
    print("error: " + json.dumps({"code": code, "kind": kind, "message": message}),
          file=sys.stderr)
    return code


def _write_manifest(path, command: str, config: dict, inputs: dict, outputs: dict) -> None:
    manifest = {
        "tool": "dynpact",
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": {str(p): file_sha256(p) for p in inputs},
        "outputs": {str(p): file_sha256(p) for p in outputs},
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _grid_args(parser):
    parser.add_argument("--grid-n", type=int, default=64, help="pixels per side (default 64)")
    parser.add_argument("--grid-span", type=float, default=0.020,
                        help="physical side length in meters (default 0.02)")


def _build_grid(args) -> ImageGrid:
    return ImageGrid.centered(args.grid_n, args.grid_span)


def _cmd_simulate(args) -> int:
    spec = load_phantom_spec(args.phantom) if args.phantom else two_disc_phantom()
    grid = _build_grid(args)
    num_samples = args.num_samples
    if num_samples <= 0:
        num_samples = samples_to_cover(
            grid, radius=args.radius, sound_speed=args.sound_speed,
            sample_rate=args.sample_rate, t_start=args.t_start,
        )
    geom = make_ring_array(
        num_sensors=args.sensors, radius=args.radius,
        sound_speed=args.sound_speed, sample_rate=args.sample_rate,
        num_samples=num_samples, t_start=args.t_start,
    )
    truth = render_phantom(spec, grid)
    op = build_forward_operator(grid, geom)
    sino = apply_forward(op, truth)
    if np.isfinite(args.snr_db):
        sino = add_noise(sino, args.snr_db, args.noise_seed)
    write_container(args.out_truth, truth)
    write_container(args.out_sino, sino)
    config = {
        "phantom": str(args.phantom) if args.phantom else "builtin:two_disc",
        "grid_n": args.grid_n, "grid_span": args.grid_span,
        "sensors": args.sensors, "radius": args.radius,
        "sound_speed": args.sound_speed, "sample_rate": args.sample_rate,
        "num_samples": num_samples, "t_start": args.t_start,
        "snr_db": args.snr_db, "noise_seed": args.noise_seed,
        "phantom_seed": spec.seed,
    }
    inputs = [args.phantom] if args.phantom else []
    _write_manifest(args.manifest or args.out_sino + ".manifest.json",
                    "simulate", config, inputs, [args.out_truth, args.out_sino])
    print(f"simulated {truth.num_frames} frames: truth -> {args.out_truth}, "
          f"sinogram ({geom.num_sensors}x{geom.num_samples}) -> {args.out_sino}")
    return 0


def _cmd_subsample(args) -> int:
    sino = read_sinogram(args.infile)
    geom = subsample_sensors(sino.geometry, args.keep)
    stride = sino.geometry.num_sensors // args.keep
    out = type(sino)(data=sino.data[::stride], geometry=geom, frame_times=sino.frame_times)
    write_container(args.out, out)
    _write_manifest(args.manifest or args.out + ".manifest.json", "subsample",
                    {"keep": args.keep}, [args.infile], [args.out])
    print(f"kept {args.keep} of {sino.geometry.num_sensors} sensors -> {args.out}")
    return 0


def _cmd_recon_baseline(args, method) -> int:
    sino = read_sinogram(args.infile)
    grid = _build_grid(args)
    recon = method(sino, grid)
    write_container(args.out, recon)
    name = "recon-das" if method is reconstruct_das else "recon-ubp"
    _write_manifest(args.manifest or args.out + ".manifest.json", name,
                    {"grid_n": args.grid_n, "grid_span": args.grid_span},
                    [args.infile], [args.out])
    print(f"{name}: {recon.num_frames} frames -> {args.out}")
    return 0


def _train_config_from(args) -> TrainConfig:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as f:
            try:
                obj = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{args.config}: invalid JSON ({e})") from e
        return TrainConfig.from_dict(obj)
    lam_d = "auto" if args.lambda_d == "auto" else float(args.lambda_d)
    lam_l = "auto" if args.lambda_l == "auto" else float(args.lambda_l)
    return TrainConfig(
        iterations=args.iterations, lr_start=args.lr_start, lr_end=args.lr_end,
        lambda_d=lam_d, lambda_l=lam_l, seed=args.seed, length=args.length,
        sigma=args.sigma, dtype=args.dtype, log_every=args.log_every,
        checkpoint_every=args.checkpoint_every,
    )


def _cmd_recon_inr(args) -> int:
    sino = read_sinogram(args.infile)
    grid = _build_grid(args)
    cfg = _train_config_from(args)
    op = build_forward_operator(grid, sino.geometry)
    model, history = fit(sino, op, cfg, checkpoint_path=args.checkpoint)
    recon = temporal_superresolve(model, 1, grid, sino.frame_times)
    write_container(args.out, recon)
    extra = {
        "grid": {"n": grid.n, "pitch": grid.pitch, "origin": list(grid.origin)},
        "frame_times": sino.frame_times.tolist(),
        "train_config": cfg.to_dict(),
    }
    save_checkpoint(model, args.checkpoint, iteration=cfg.iterations, extra=extra)
    if args.log:
        history.to_csv(args.log)
    outputs = [args.out, args.checkpoint] + ([args.log] if args.log else [])
    _write_manifest(args.manifest or args.out + ".manifest.json", "recon-inr",
                    {"grid_n": args.grid_n, "grid_span": args.grid_span,
                     "train_config": cfg.to_dict(),
                     "resolved_lambda_d": history.resolved_lambda_d,
                     "resolved_lambda_l": history.resolved_lambda_l},
                    [args.infile], outputs)
    final = history.rows[-1]
    print(f"recon-inr: {cfg.iterations} iterations, final total loss {final[4]:.6g} "
          f"-> {args.out} (checkpoint {args.checkpoint})")
    return 0


def _cmd_upsample(args) -> int:
    model, manifest = load_checkpoint(args.checkpoint)
    extra = manifest.get("extra", {})
    if "grid" not in extra or "frame_times" not in extra:
        raise ConfigError(
            f"{args.checkpoint}: checkpoint lacks grid/frame_times metadata for upsampling"
        )
    g = extra["grid"]
    grid = ImageGrid(n=g["n"], pitch=g["pitch"], origin=tuple(g["origin"]))
    times = np.asarray(extra["frame_times"], dtype=np.float64)
    seq = temporal_superresolve(model, args.factor, grid, times)
    write_container(args.out, seq)
    _write_manifest(args.manifest or args.out + ".manifest.json", "upsample",
                    {"factor": args.factor}, [args.checkpoint], [args.out])
    print(f"upsample x{args.factor}: {times.size} -> {seq.num_frames} frames -> {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    ref = read_image_sequence(args.reference)
    rec = read_image_sequence(args.reconstruction)
    report = evaluate_pair(ref, rec)
    out_json = args.out_json or args.reconstruction + ".report.json"
    report.to_json(out_json)
    outputs = [out_json]
    if args.out_csv:
        report.to_csv(args.out_csv)
        outputs.append(args.out_csv)
    _write_manifest(args.manifest or out_json + ".manifest.json", "evaluate", {},
                    [args.reference, args.reconstruction], outputs)
    print(f"evaluate: mean PSNR {report.mean_psnr:.2f} dB, mean SSIM {report.mean_ssim:.4f} "
          f"({len(report.psnr_per_frame)} frames) -> {out_json}")
    return 0


def _cmd_export(args) -> int:
    seq = read_image_sequence(args.infile)
    if args.normalize:
        lo, hi = float(seq.data.min()), float(seq.data.max())
        if hi == lo:
            raise ValueError("cannot normalize a constant sequence")
        seq = type(seq)(data=(seq.data - lo) / (hi - lo), grid=seq.grid,
                        frame_times=seq.frame_times)
    paths = export_frames(seq, args.dir, args.format)
    print(f"exported {len(paths)} frames to {args.dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynpact",
        description="Sparse-view dynamic photoacoustic tomography toolkit.",
        epilog=_EXIT_CODES_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"dynpact {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a phantom and simulate its sinogram")
    p.add_argument("--phantom", help="phantom spec JSON (default: built-in two-disc phantom)")
    _grid_args(p)
    p.add_argument("--sensors", type=int, default=128)
    p.add_argument("--radius", type=float, default=0.030, help="ring radius, m (default 0.03)")
    p.add_argument("--sound-speed", type=float, default=1500.0)
    p.add_argument("--sample-rate", type=float, default=40e6)
    p.add_argument("--num-samples", type=int, default=0,
                   help="samples per trace; 0 = cover the grid automatically")
    p.add_argument("--t-start", type=float, default=0.0)
    p.add_argument("--snr-db", type=float, default=float("inf"),
                   help="add white noise at this SNR (default: none)")
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--out-truth", required=True)
    p.add_argument("--out-sino", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("subsample", help="keep a uniform subset of sensors")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--keep", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=_cmd_subsample)

    for name, method in (("recon-das", reconstruct_das), ("recon-ubp", reconstruct_ubp)):
        p = sub.add_parser(name, help=f"frame-by-frame {name.split('-')[1].upper()} reconstruction")
        p.add_argument("--in", dest="infile", required=True)
        _grid_args(p)
        p.add_argument("--out", required=True)
        p.add_argument("--manifest")
        p.set_defaults(func=lambda a, m=method: _cmd_recon_baseline(a, m))

    p = sub.add_parser("recon-inr", help="coordinate-network reconstruction")
    p.add_argument("--in", dest="infile", required=True)
    _grid_args(p)
    p.add_argument("--config", help="train config JSON; overrides the individual flags below")
    p.add_argument("--iterations", type=int, default=2000)
    p.add_argument("--lr-start", type=float, default=1e-3)
    p.add_argument("--lr-end", type=float, default=1e-6)
    p.add_argument("--lambda-d", default="auto")
    p.add_argument("--lambda-l", default="auto")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--length", type=int, default=256, help="Fourier feature count L")
    p.add_argument("--sigma", type=float, default=10.0, help="frequency scale of the encoding")
    p.add_argument("--dtype", choices=["float32", "float64"], default="float32")
    p.add_argument("--log-every", type=int, default=50)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--log", help="CSV loss log path")
    p.add_argument("--manifest")
    p.set_defaults(func=_cmd_recon_inr)

    p = sub.add_parser("upsample", help="temporal super-resolution from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--factor", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=_cmd_upsample)

    p = sub.add_parser("evaluate", help="PSNR/SSIM report for a reconstruction")
    p.add_argument("--reference", required=True)
    p.add_argument("--reconstruction", required=True)
    p.add_argument("--out-json")
    p.add_argument("--out-csv")
    p.add_argument("--manifest")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("export", help="write frames as 8-bit PNG or PGM files")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--dir", required=True)
    p.add_argument("--format", choices=["png", "pgm"], default="png")
    p.add_argument("--normalize", action="store_true",
                   help="min-max normalize the sequence before export")
    p.set_defaults(func=_cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except FileNotFoundError as e:
        return _emit_error(EXIT_MISSING_FILE, "missing-file", str(e))
    except ConfigError as e:
        return _emit_error(EXIT_CONFIG, "config", str(e))
    except ContainerError as e:
        return _emit_error(EXIT_CONTAINER, "container", str(e))
    except DivergenceError as e:
        return _emit_error(EXIT_DIVERGED, "diverged", str(e))
    except ValueError as e:
        return _emit_error(EXIT_MISMATCH, "mismatch", str(e))


if __name__ == "__main__":
    sys.exit(main())
