"""``linmotion`` command line.

Every command writes its primary output to ``--out`` and a RunSpec next to
it (``<out>.runspec.json``) holding the command, seed, shapes and the full
flag set; ``linmotion replay <runspec>`` reruns it with bitwise-identical
numeric outputs (timings aside).

Seed splitting, all from ``--seed``:
  bench-attention   inputs for seq-len i: Rng(seed).split(i).split(0..2) for q, k, v
  dctinit           eps = randn(Rng(seed).split(0))
  dynamics          synthetic clip i: Rng(seed).split(i)
  train             params split(0), clips split(1), per-item noise split(2)
  animate           eps = randn(Rng(seed).split(0))
  transfer          deterministic (no randomness)
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, bench, dynamics, motion, spectral
from .denoiser import TRANSFER_REFINE, DenoiserConfig, TrainSettings, animate, load_checkpoint, motion_transfer, save_checkpoint, train
from .errors import LinMotionError, ParameterError, ShapeError
from .flowmatch import DEFAULT_GUIDANCE, DEFAULT_STEPS, TimestepSchedule, default_t_init
from .synth import KINDS, gradient_image, synth_dataset
from .tensor import Rng, load_tensor, randn, save_tensor

log = logging.getLogger("linmotion")

DYNAMICS_COLUMNS = ("clip_id", "interval", "mad", "ssim", "ms_ssim", "bucket", "time_ms", "mad_ms", "ssim_ms", "ms_ssim_ms")
LOSS_COLUMNS = ("step", "loss")
PROFILE_COLUMNS = ("radius", "dct", "fft")


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.replace(",", " ").split()]


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def runspec_path(out) -> Path:
    out = Path(out)
    return out / "runspec.json" if out.is_dir() else out.with_name(out.name + ".runspec.json")


def write_runspec(args, shapes: dict, inputs=()) -> Path:
    flags = {k: v for k, v in vars(args).items() if k not in ("func", "verbose")}
    spec = {
        "version": __version__,
        "command": args.command,
        "seed": getattr(args, "seed", None),
        "shapes": shapes,
        "flags": flags,
        "inputs": {str(p): _sha256(p) for p in inputs},
    }
    path = runspec_path(args.out)
    path.write_text(json.dumps(spec, indent=2, sort_keys=True))
    return path


def _write_csv(path, columns, rows):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=columns)
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def _report_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.stem + ".report.json")


# bench-attention


def cmd_bench_attention(args):
    records = bench.run_attention_bench(args.seq_lens, args.dim, args.repeats, args.dtype, args.methods, args.seed)
    _write_csv(args.out, bench.BenchRecord.CSV_COLUMNS, [r.row() for r in records])
    slopes = bench.fit_slopes(records)
    _report_path(args.out).write_text(json.dumps({"slopes": slopes}, indent=2))
    for m, s in slopes.items():
        print(f"{m:>22s}  log-log slope {s:.3f}")
    write_runspec(args, {"q": ["seq_len", args.dim], "k": ["seq_len", args.dim], "v": ["seq_len", args.dim]})


# dctinit


def cmd_dctinit(args):
    image = load_tensor(args.image).astype(np.float64)
    if image.ndim == 2:
        image = image[None]
    if image.ndim != 3:
        raise ShapeError(f"image must be (h, w) or (c, h, w), got {image.shape}")
    if args.frames < 2:
        raise ParameterError(f"frames must be >= 2, got {args.frames}")
    c, h, w = image.shape
    shape = (args.frames - 1, c, h, w)
    eps = randn(Rng(args.seed).split(0), shape)
    filt = spectral.make_lowpass((shape[0], h, w), args.mode, args.cutoff_t, args.cutoff_s)
    t_init = default_t_init(args.steps) if args.t_init is None else args.t_init
    out = spectral.dct_init(image, eps, t_init, filt)
    save_tensor(args.out, out)
    report = spectral.dct_init_report(image, eps, t_init, filt)
    _report_path(args.out).write_text(json.dumps(report, indent=2))
    print(json.dumps(report))
    write_runspec(args, {"image": list(image.shape), "noise": list(shape)}, [args.image])


# dynamics


def _interval_clip(clip, interval):
    sub = clip[::interval]
    if sub.shape[0] < 2:
        raise ParameterError(f"interval {interval} leaves fewer than 2 frames of a {clip.shape[0]}-frame clip")
    return sub


def _measure(clip_id, clip, interval):
    sub = _interval_clip(clip, interval)
    row = {"clip_id": clip_id, "interval": interval}
    timings = {}
    for name, fn in dynamics.ESTIMATORS.items():
        start = time.perf_counter()
        row[name] = fn(sub)
        timings[name] = 1e3 * (time.perf_counter() - start)
    row["bucket"] = dynamics.score_to_bucket(row["ms_ssim"])
    row["time_ms"] = sum(timings.values())
    row.update({f"{k}_ms": v for k, v in timings.items()})
    return row


def _source_clips(args):
    if args.clips:
        paths = sorted(Path(args.clips).glob("*.mkt"))
        return [(p.stem, load_tensor(p).astype(np.float64)) for p in paths], paths
    # Long enough that the widest interval still leaves `frames` frames.
    length = (args.frames - 1) * max(args.intervals) + 1
    stream = synth_dataset(args.synthetic, args.velocity, Rng(args.seed), args.count, length, args.size)
    return [(f"{args.synthetic}_{i}", clip) for i, clip in enumerate(stream)], []


def cmd_dynamics(args):
    if not args.intervals or min(args.intervals) < 1:
        raise ParameterError("intervals must be positive integers")
    clips, inputs = _source_clips(args)
    if not clips:
        raise ParameterError("no clips to score")
    jobs = [(cid, clip, k) for cid, clip in clips for k in args.intervals]
    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        rows = list(pool.map(lambda job: _measure(*job), jobs))
    _write_csv(args.out, DYNAMICS_COLUMNS, rows)
    write_runspec(args, {"clips": {cid: list(c.shape) for cid, c in clips}}, inputs)


# spectral-profile


def cmd_spectral_profile(args):
    if args.image:
        img = load_tensor(args.image).astype(np.float64)
        img = img.mean(axis=0) if img.ndim == 3 else img
        inputs = [args.image]
    else:
        img = gradient_image(args.size)
        inputs = []
    radii = np.asarray(args.radii) if args.radii else None
    r, dct_frac = spectral.spectral_energy_profile(img, "dct", radii)
    _, fft_frac = spectral.spectral_energy_profile(img, "fft", radii)
    rows = [{"radius": float(a), "dct": float(b), "fft": float(c)} for a, b, c in zip(r, dct_frac, fft_frac)]
    _write_csv(args.out, PROFILE_COLUMNS, rows)
    write_runspec(args, {"image": list(img.shape)}, inputs)


# train / animate / transfer


def _config_from(args) -> DenoiserConfig:
    return DenoiserConfig(frames=args.frames, channels=args.channels, height=args.latent_size,
                          width=args.latent_size, dim=args.dim, blocks=args.blocks, emb_dim=args.emb_dim)


def cmd_train(args):
    settings = TrainSettings(steps=args.steps, lr=args.lr, batch_size=args.batch_size, cond_drop=args.cond_drop,
                             kind=args.kind, schedule=TimestepSchedule(args.schedule.replace("-", "_")))
    params = opt = None
    inputs = []
    if args.resume:
        cfg, params, opt, _ = load_checkpoint(args.resume)
        inputs = [Path(args.resume) / "manifest.json"]
    else:
        cfg = _config_from(args)
    first = opt.step_count if opt else 0
    result = train(cfg, Rng(args.seed), settings, params=params, opt=opt)
    out = Path(args.out)
    save_checkpoint(out, cfg, result.params, result.opt, meta={"seed": args.seed, "steps": args.steps})
    _write_csv(out / "loss.csv", LOSS_COLUMNS, [{"step": first + i, "loss": l} for i, l in enumerate(result.losses)])
    if len(result.losses) >= 2:
        print(f"loss {result.losses[0]:.5f} -> {result.losses[-1]:.5f} over {len(result.losses)} steps")
    write_runspec(args, {"latent": list(cfg.latent_shape)}, inputs)


def cmd_animate(args):
    cfg, params, _, _ = load_checkpoint(args.checkpoint)
    z1 = load_tensor(args.image).astype(np.float64)
    filt = None
    if args.dct_init:
        filt = spectral.make_lowpass((cfg.frames - 1, cfg.height, cfg.width), args.mode, args.cutoff_t, args.cutoff_s)
    clip = animate(params, cfg, z1, args.bucket, Rng(args.seed).split(0), args.steps, args.guidance,
                   args.dct_init, filt, args.t_init)
    save_tensor(args.out, clip)
    write_runspec(args, {"image": list(z1.shape), "clip": list(clip.shape)},
                  [args.image, Path(args.checkpoint) / "manifest.json"])


def cmd_transfer(args):
    cfg, params, _, _ = load_checkpoint(args.checkpoint)
    source = load_tensor(args.source).astype(np.float64)
    edited = source[0] if args.edited is None else load_tensor(args.edited).astype(np.float64)
    clip = motion_transfer(params, cfg, source, edited, args.bucket, args.steps, args.guidance, args.t_init,
                           args.refine)
    save_tensor(args.out, clip)
    inputs = [args.source, Path(args.checkpoint) / "manifest.json"] + ([args.edited] if args.edited else [])
    write_runspec(args, {"source": list(source.shape), "clip": list(clip.shape)}, inputs)


# replay


def cmd_replay(args):
    spec = json.loads(Path(args.runspec).read_text())
    flags = dict(spec["flags"])
    if args.out:
        flags["out"] = args.out
    for path, digest in spec.get("inputs", {}).items():
        if Path(path).is_file() and _sha256(path) != digest:
            log.warning("input %s changed since the run was recorded", path)
    replayed = argparse.Namespace(**flags, verbose=args.verbose)
    COMMANDS[spec["command"]](replayed)


COMMANDS = {
    "bench-attention": cmd_bench_attention,
    "dctinit": cmd_dctinit,
    "dynamics": cmd_dynamics,
    "spectral-profile": cmd_spectral_profile,
    "train": cmd_train,
    "animate": cmd_animate,
    "transfer": cmd_transfer,
}


def _add_filter_flags(p):
    p.add_argument("--mode", choices=("ideal", "gaussian"), default="ideal")
    p.add_argument("--cutoff-t", type=float, default=0.25)
    p.add_argument("--cutoff-s", type=float, default=0.25)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="linmotion", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench-attention", help="attention wall time and live-element counts vs sequence length")
    p.add_argument("--seq-lens", type=_ints, default=[1024, 2048, 4096, 8192, 16384])
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--dtype", choices=("f32", "f64"), default="f32")
    p.add_argument("--methods", type=lambda s: s.split(","), default=list(bench.METHODS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("dctinit", help="refine inference noise with the image's low DCT band")
    p.add_argument("--image", required=True, help="TensorFile, (h, w) or (c, h, w) latent")
    p.add_argument("--frames", type=int, default=8, help="clip length including the anchor frame")
    _add_filter_flags(p)
    p.add_argument("--t-init", type=float, default=None)
    p.add_argument("--steps", type=int, default=DEFAULT_STEPS, help="sampler steps, sets the default t-init")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("dynamics", help="MAD / SSIM / MS-SSIM motion readings per clip and frame interval")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--synthetic", choices=KINDS)
    src.add_argument("--clips", help="directory of (N, C, H, W) TensorFiles")
    p.add_argument("--intervals", type=_ints, default=[3, 7, 11, 15])
    p.add_argument("--velocity", type=_floats, default=[1.0], help="per-frame displacement choices")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--frames", type=int, default=16)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("spectral-profile", help="cumulative DCT vs FFT energy by frequency radius")
    p.add_argument("--image", default=None, help="TensorFile; defaults to a smooth gradient")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--radii", type=_floats, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train the toy denoiser on synthetic clips")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--cond-drop", type=float, default=0.1)
    p.add_argument("--kind", choices=KINDS, default="moving_square")
    p.add_argument("--schedule", choices=("uniform", "logit-normal"), default="logit-normal")
    p.add_argument("--frames", type=int, default=8)
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--latent-size", type=int, default=16)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--blocks", type=int, default=2)
    p.add_argument("--emb-dim", type=int, default=16)
    p.add_argument("--resume", default=None, help="checkpoint directory to continue from")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint directory")

    p = sub.add_parser("animate", help="generate a latent clip from one latent frame")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True, help="TensorFile, (c, h, w) latent")
    p.add_argument("--bucket", type=int, default=None, help="dynamics bucket 0-19; omit for the null condition")
    p.add_argument("--steps", type=int, default=DEFAULT_STEPS)
    p.add_argument("--guidance", type=float, default=DEFAULT_GUIDANCE)
    p.add_argument("--t-init", type=float, default=None)
    p.add_argument("--dct-init", action="store_true")
    _add_filter_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("transfer", help="move a clip's motion onto an edited first frame")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--source", required=True, help="TensorFile, (N, c, h, w) latent clip")
    p.add_argument("--edited", default=None, help="TensorFile, (c, h, w); defaults to the source's frame 0")
    p.add_argument("--bucket", type=int, default=None)
    p.add_argument("--steps", type=int, default=DEFAULT_STEPS)
    p.add_argument("--guidance", type=float, default=DEFAULT_GUIDANCE)
    p.add_argument("--t-init", type=float, default=None)
    p.add_argument("--refine", type=int, default=TRANSFER_REFINE, help="fixed-point iterations per inversion step")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("replay", help="rerun a command from its RunSpec")
    p.add_argument("runspec")
    p.add_argument("--out", default=None, help="write outputs here instead of the recorded path")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "replay":
            cmd_replay(args)
        else:
            COMMANDS[args.command](args)
    except (LinMotionError, FileNotFoundError, MemoryError) as e:
        print(f"linmotion {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
