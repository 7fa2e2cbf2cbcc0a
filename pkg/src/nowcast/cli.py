"""Command-line entry point: synth, fetch, build-seq, train, predict, eval, render.

A config file in simple ``key=value`` lines (``--config PATH``) supplies
defaults; explicit flags win. Every subcommand is reproducible from the
config plus its seed. Exit codes: 0 success, 1 runtime failure with a
one-line diagnostic, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from . import data as D
from .client import FetchConfig, fetch_frames
from .errors import NowcastError
from .evaluate import evaluate
from .model import (
    ArchitectureConfig,
    build_model,
    init_optimizer,
    load_checkpoint,
    predict,
    save_checkpoint,
    train_step,
)
from .render import render_comparison, render_frame

DEFAULT_EPOCHS = 25
DEFAULT_BLOCKS = "64x5,64x3,64x3,64x1"


def parse_config_file(path) -> dict[str, str]:
    """key=value lines; blank lines and #-comments ignored."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def _parse_blocks(text: str) -> tuple[tuple[int, int], ...]:
    """'64x5,64x3' -> ((64,5),(64,3))"""
    blocks = []
    for part in text.split(","):
        f, _, k = part.strip().partition("x")
        blocks.append((int(f), int(k)))
    return tuple(blocks)


def _parse_hw(text: str) -> tuple[int, int]:
    h, _, w = text.partition("x")
    return int(h), int(w)


def _parse_when(text: str) -> datetime:
    dt = datetime.fromisoformat(text)
    return dt if dt.tzinfo else dt.replace(tzinfo=timezone.utc)


def _cfgget(cfg: dict, args, name: str, cast=str):
    """Flag value if given on the command line, else config-file value."""
    val = getattr(args, name.replace("-", "_"))
    if val is not None:
        return val
    if name in cfg:
        return cast(cfg[name])
    return None


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nowcast", description=__doc__)
    p.add_argument("--config", help="key=value config file")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic advection dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--sequences", type=int, default=16)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--size", type=_parse_hw, default=(16, 16), help="frame size HxW")
    sp.add_argument("--input-frames", type=int, default=18)
    sp.add_argument("--output-frames", type=int, default=18)
    sp.add_argument("--blobs", type=int, default=1)
    sp.add_argument("--radius", type=float, default=2.0)
    sp.add_argument("--velocity", default="1,0", help="vx,vy pixels/frame")
    sp.add_argument("--noise", type=float, default=0.0)

    fp = sub.add_parser("fetch", help="download frames from the radar API")
    fp.add_argument("--base-url")
    fp.add_argument("--cache-dir")
    fp.add_argument("--budget", type=int)
    fp.add_argument("--from", dest="window_from", required=True, help="ISO start instant")
    fp.add_argument("--to", dest="window_to", required=True, help="ISO end instant")
    fp.add_argument("--cadence-minutes", type=int, default=5)

    bp = sub.add_parser("build-seq", help="build 18/18 sequences from a frame directory")
    bp.add_argument("--frames-dir", required=True, help="directory of .png or .rfrm frames")
    bp.add_argument("--out", required=True)
    bp.add_argument("--cadence-minutes", type=int, default=5)
    bp.add_argument("--stride", type=int, default=1)
    bp.add_argument("--input-frames", type=int, default=18)
    bp.add_argument("--output-frames", type=int, default=18)
    bp.add_argument("--resize", type=_parse_hw, default=None, help="target HxW, e.g. 344x315")

    tp = sub.add_parser("train", help="train a model on a sequence dataset")
    tp.add_argument("--data", required=True)
    tp.add_argument("--checkpoint", required=True)
    tp.add_argument("--epochs", type=int, default=None)
    tp.add_argument("--batch-size", type=int, default=None)
    tp.add_argument("--seed", type=int, default=None)
    tp.add_argument("--blocks", default=None, help="e.g. 64x5,64x3,64x3,64x1")
    tp.add_argument("--no-strict", action="store_true", help="allow non-nine-layer stacks")
    tp.add_argument("--lr-scale", type=float, default=None)
    tp.add_argument("--input-frames", type=int, default=18)
    tp.add_argument("--output-frames", type=int, default=18)
    tp.add_argument("--resume", action="store_true", help="continue from the checkpoint")

    pp = sub.add_parser("predict", help="predict future frames for one sequence")
    pp.add_argument("--checkpoint", required=True)
    pp.add_argument("--data", required=True, help="dataset directory")
    pp.add_argument("--sample", type=int, default=0)
    pp.add_argument("--out", required=True)
    pp.add_argument("--format", choices=("rfrm", "png", "both"), default="both")
    pp.add_argument("--mode", choices=("direct", "autoregressive"), default=None)

    ep = sub.add_parser("eval", help="RMSE report for a dataset")
    ep.add_argument("--checkpoint", required=True)
    ep.add_argument("--data", required=True)
    ep.add_argument("--json", dest="json_out", default=None)

    rp = sub.add_parser("render", help="side-by-side comparison panels and GIF")
    rp.add_argument("--checkpoint", required=True)
    rp.add_argument("--data", required=True)
    rp.add_argument("--sample", type=int, default=0)
    rp.add_argument("--out", required=True)
    rp.add_argument("--delay", type=int, default=200, help="GIF frame delay ms")
    return p


def _cmd_synth(args, cfg):
    vx, vy = (float(v) for v in args.velocity.split(","))
    synth_cfg = D.SynthConfig(
        frame_h=args.size[0],
        frame_w=args.size[1],
        n_blobs=args.blobs,
        radius=args.radius,
        velocity=(vx, vy),
        noise=args.noise,
        seed=args.seed,
        input_frames=args.input_frames,
        output_frames=args.output_frames,
    )
    samples = D.synth_advection(synth_cfg, args.sequences)
    D.save_dataset(samples, args.out)
    print(f"wrote {len(samples)} sequences to {args.out}")
    return 0


def _cmd_fetch(args, cfg):
    base_url = _cfgget(cfg, args, "base-url") or cfg.get("base_url")
    cache_dir = _cfgget(cfg, args, "cache-dir") or cfg.get("cache_dir")
    budget = args.budget or int(cfg.get("budget_per_hour", 10))
    if not base_url or not cache_dir:
        raise ValueError("fetch needs base-url and cache-dir (flag or config file)")
    fetch_cfg = FetchConfig(base_url=base_url, cache_dir=Path(cache_dir), budget_per_hour=budget)
    result = fetch_frames(
        fetch_cfg,
        _parse_when(args.window_from),
        _parse_when(args.window_to),
        cadence=timedelta(minutes=args.cadence_minutes),
    )
    status = "partial" if result.partial else "complete"
    print(f"{status}: {len(result.paths)} frames ({result.requests_made} requests, "
          f"{len(result.missing)} missing)")
    return 0


def _cmd_build_seq(args, cfg):
    frames_dir = Path(args.frames_dir)
    paths = sorted(list(frames_dir.glob("*.png")) + list(frames_dir.glob("*.rfrm")))
    frames = []
    for p in paths:
        ts = None
        if p.suffix == ".png":
            # timestamps for PNGs come from the cache naming scheme
            ts = datetime.strptime(p.stem, "%Y%m%dT%H%M%S").replace(tzinfo=timezone.utc)
        frame = D.load_frame(p, timestamp=ts)
        if args.resize:
            frame = D.resize_area(frame, *args.resize)
        frames.append(frame)
    frames.sort(key=lambda f: f.timestamp)
    samples = D.build_sequences(
        frames,
        cadence=timedelta(minutes=args.cadence_minutes),
        stride=args.stride,
        input_frames=args.input_frames,
        output_frames=args.output_frames,
    )
    D.save_dataset(samples, args.out)
    print(f"built {len(samples)} sequences from {len(frames)} frames")
    return 0


def _cmd_train(args, cfg):
    epochs = args.epochs if args.epochs is not None else int(cfg.get("epochs", DEFAULT_EPOCHS))
    batch_size = args.batch_size if args.batch_size is not None else int(cfg.get("batch_size", 1))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    lr_scale = args.lr_scale if args.lr_scale is not None else float(cfg.get("lr_scale", 1.0))
    samples = D.load_dataset(args.data, args.input_frames, args.output_frames)
    if not samples:
        raise ValueError(f"no sequences found in {args.data}")
    h, w = samples[0].x_frames[0].height, samples[0].x_frames[0].width

    if args.resume:
        ckpt = load_checkpoint(args.checkpoint)
        params, opt = ckpt.params, ckpt.opt_state or init_optimizer(ckpt.params, lr_scale=lr_scale)
        history = list(ckpt.metadata.get("loss_history", []))
        start_epoch = int(ckpt.metadata.get("epoch", 0))
    else:
        blocks = _parse_blocks(args.blocks or cfg.get("blocks", DEFAULT_BLOCKS))
        arch = ArchitectureConfig(
            input_frames=args.input_frames,
            output_frames=args.output_frames,
            frame_h=h,
            frame_w=w,
            convlstm_blocks=blocks,
            strict_arch=not args.no_strict,
        )
        params = build_model(arch, seed=seed)
        opt = init_optimizer(params, lr_scale=lr_scale)
        history = []
        start_epoch = 0

    rng = np.random.default_rng(seed + 1)
    for epoch in range(start_epoch, start_epoch + epochs):
        order = rng.permutation(len(samples))
        losses = []
        for b in range(0, len(order), batch_size):
            idx = order[b : b + batch_size]
            x = np.stack([samples[i].x_array() for i in idx])
            y = np.stack([samples[i].y_array() for i in idx])
            losses.append(train_step(params, opt, x, y))
        history.append(float(np.mean(losses)))
        save_checkpoint(
            params,
            args.checkpoint,
            opt_state=opt,
            metadata={"epoch": epoch + 1, "loss_history": history},
        )
        print(f"epoch {epoch + 1}: loss {history[-1]:.6f}")
    return 0


def _load_model(path):
    return load_checkpoint(path).params


def _cmd_predict(args, cfg):
    params = _load_model(args.checkpoint)
    samples = D.load_dataset(args.data, params.arch.input_frames, params.arch.output_frames)
    sample = samples[args.sample]
    yhat = predict(params, sample.x_array()[None], mode=args.mode)[0]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cadence = sample.x_frames[1].timestamp - sample.x_frames[0].timestamp
    t0 = sample.x_frames[-1].timestamp
    for k in range(yhat.shape[0]):
        frame = D.RadarFrame(t0 + (k + 1) * cadence, yhat[k].astype(np.float32), source="synthetic")
        if args.format in ("rfrm", "both"):
            (out / f"pred_{k:02d}.rfrm").write_bytes(D.encode_frame(frame))
        if args.format in ("png", "both"):
            render_frame(frame, out / f"pred_{k:02d}.png")
    print(f"wrote {yhat.shape[0]} predicted frames to {out}")
    return 0


def _cmd_eval(args, cfg):
    params = _load_model(args.checkpoint)
    samples = D.load_dataset(args.data, params.arch.input_frames, params.arch.output_frames)
    report = evaluate(params, samples)
    print(report.table())
    if args.json_out:
        Path(args.json_out).write_text(report.to_json())
        print(f"wrote {args.json_out}")
    return 0


def _cmd_render(args, cfg):
    params = _load_model(args.checkpoint)
    samples = D.load_dataset(args.data, params.arch.input_frames, params.arch.output_frames)
    sample = samples[args.sample]
    yhat = predict(params, sample.x_array()[None])[0]
    paths = render_comparison(yhat, sample.y_array(), args.out, gif_delay_ms=args.delay)
    print(f"wrote {len(paths['panels'])} panels, {paths['gif']}, {paths['strip']}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "fetch": _cmd_fetch,
    "build-seq": _cmd_build_seq,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "eval": _cmd_eval,
    "render": _cmd_render,
}


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    cfg = parse_config_file(args.config) if args.config else {}
    try:
        return _COMMANDS[args.command](args, cfg)
    except (NowcastError, ValueError, OSError, KeyError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
