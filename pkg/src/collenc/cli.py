"""Command-line front end.

Subcommands:
  gen-dataset   render (depth, collision) pairs plus a manifest
  collide       run the collision pipeline on a single depth PFM
  compress      sparse-code a PFM with the FFT or wavelet codec
  train         fit an autoencoder (depth target or collision target)
  eval          write metrics CSVs for codecs and trained models
  report        write side-by-side PGM panels with error images

Common flags: --out for the output location, --seed for the RNG seed,
--config for a JSON settings file (scene settings for gen-dataset,
model settings for train).
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .codecs import (
    decompress,
    fft_compress,
    load_code,
    save_code,
    wavelet_compress,
)
from .collision import CollisionParams, collision_image
from .imagecore import CameraIntrinsics, load_image, save_image, write_pfm
from .harness import (
    build_dataset,
    emit_report,
    evaluate_codecs,
    evaluate_collision,
    load_manifest,
    manifest_arrays,
)
from .neural import (
    TrainConfig,
    VaeConfig,
    VaeModel,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .scenegen import RobotSpec, SceneConfig


def _add_camera_flags(p, width=80, height=60):
    p.add_argument("--width", type=int, default=width)
    p.add_argument("--height", type=int, default=height)
    p.add_argument("--fx", type=float, default=100.0)
    p.add_argument("--fy", type=float, default=100.0)
    p.add_argument("--cx", type=float, default=None,
                   help="optical center x (default: width/2)")
    p.add_argument("--cy", type=float, default=None,
                   help="optical center y (default: height/2)")


def _camera_from_args(args, width=None, height=None) -> CameraIntrinsics:
    w = width if width is not None else args.width
    h = height if height is not None else args.height
    cx = args.cx if args.cx is not None else w / 2.0
    cy = args.cy if args.cy is not None else h / 2.0
    return CameraIntrinsics(fx=args.fx, fy=args.fy, cx=cx, cy=cy,
                            width=w, height=h)


def _load_models(paths):
    """Load checkpoints; key by their latent size."""
    models = {}
    for path in paths or []:
        model = load_checkpoint(path)
        j = model.config.latent_dim
        if j in models:
            raise SystemExit(f"two models with latent size {j}: {path}")
        models[j] = model
    return models


def cmd_gen_dataset(args) -> int:
    if args.config:
        scene_config = SceneConfig.from_json(Path(args.config).read_text())
    else:
        scene_config = SceneConfig(max_range=args.max_range)
    K = _camera_from_args(args)
    manifest = build_dataset(
        args.out, args.count, args.seed, K, RobotSpec(args.r),
        scene_config=scene_config, max_range=scene_config.max_range,
        workers=args.workers,
    )
    print(f"wrote {len(manifest)} pairs to {args.out} "
          f"(hash {manifest.config_hash})")
    return 0


def cmd_collide(args) -> int:
    depth = load_image(args.depth, args.max_range)
    K = _camera_from_args(args, width=depth.width, height=depth.height)
    params = CollisionParams(r=args.r, edge_threshold=args.threshold,
                             edge_fraction=args.fraction, seed=args.seed)
    out = collision_image(depth, K, params)
    save_image(args.out, out)
    print(f"wrote {args.out}")
    return 0


def cmd_compress(args) -> int:
    img = load_image(args.image, args.max_range)
    if args.method == "fft":
        code = fft_compress(img.data, args.budget)
    else:
        code = wavelet_compress(img.data, args.budget)
    save_code(args.out, code)
    size = Path(args.out).stat().st_size
    print(f"wrote {args.out} ({size} bytes, budget {args.budget})")
    if args.decode:
        recon = decompress(load_code(args.out))
        write_pfm(args.decode, np.clip(recon, 0.0, None))
        mse = float(np.mean((recon - img.data) ** 2))
        print(f"wrote {args.decode} (mse {mse:.6g})")
    return 0


def cmd_train(args) -> int:
    manifest = load_manifest(args.dataset)
    x, t, m = manifest_arrays(manifest, args.mode)
    K = manifest.intrinsics
    if args.config:
        vae_config = VaeConfig.from_json(Path(args.config).read_text())
        vae_config = replace(vae_config, latent_dim=args.latent)
    else:
        vae_config = VaeConfig(height=K.height, width=K.width,
                               latent_dim=args.latent)
    if (vae_config.height, vae_config.width) != (K.height, K.width):
        raise SystemExit("model resolution does not match the dataset")
    model = VaeModel.create(vae_config, seed=args.seed)
    tc = TrainConfig(steps=args.steps, batch_size=args.batch_size,
                     lr=args.lr, beta=args.beta, seed=args.seed,
                     grad_workers=args.workers)
    curve = train(model, x, t, m, tc)
    save_checkpoint(args.out, model)
    last = curve[-1]
    print(f"wrote {args.out} after {args.steps} steps "
          f"(last epoch: total {last['total']:.6g}, recon {last['recon']:.6g},"
          f" kl {last['kl']:.6g})")
    return 0


def cmd_eval(args) -> int:
    manifest = load_manifest(args.dataset)
    budgets = tuple(int(b) for b in args.budgets.split(","))
    vanilla = _load_models(args.vanilla)
    collnet = _load_models(args.collnet)
    tables = {"codecs": evaluate_codecs(manifest, budgets,
                                        vanilla_models=vanilla or None)}
    if collnet or vanilla:
        tables["collision"] = evaluate_collision(manifest, collnet, vanilla)
    written = emit_report(args.out, tables)
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_report(args) -> int:
    manifest = load_manifest(args.dataset)
    vanilla = _load_models(args.vanilla)
    collnet = _load_models(args.collnet)
    panels = {}
    for i in range(min(args.samples, len(manifest))):
        depth, coll = manifest.load_pair(i)
        panels[f"sample{i}_pipeline"] = (depth, coll)
        x = (depth.data / manifest.max_range)[None, None]
        for j, model in sorted(collnet.items()):
            recon = model.reconstruct(x)[0, 0] * manifest.max_range
            panels[f"sample{i}_collnet{j}"] = (
                coll, type(coll)(recon, manifest.max_range))
        for j, model in sorted(vanilla.items()):
            recon = model.reconstruct(x)[0, 0] * manifest.max_range
            panels[f"sample{i}_vanilla{j}"] = (
                depth, type(depth)(recon, manifest.max_range))
    written = emit_report(args.out, {}, panels)
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="collenc",
        description="Collision-aware depth image encoding toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", help="render depth/collision pairs")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--r", type=float, default=0.25, help="robot radius (m)")
    p.add_argument("--max-range", type=float, default=10.0)
    p.add_argument("--config", default=None, help="scene settings JSON")
    p.add_argument("--workers", type=int, default=1)
    _add_camera_flags(p)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("collide", help="collision image from a depth PFM")
    p.add_argument("--depth", required=True, help="input depth PFM")
    p.add_argument("--out", required=True, help="output collision PFM")
    p.add_argument("--r", type=float, required=True, help="robot radius (m)")
    p.add_argument("--threshold", type=float, default=None,
                   help="edge depth-gap threshold (default max(0.1, r/2))")
    p.add_argument("--fraction", type=float, default=1.0,
                   help="fraction of edge pixels to inflate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-range", type=float, default=10.0)
    _add_camera_flags(p)
    p.set_defaults(func=cmd_collide)

    p = sub.add_parser("compress", help="sparse-code a PFM image")
    p.add_argument("--image", required=True, help="input PFM")
    p.add_argument("--out", required=True, help="output code file")
    p.add_argument("--method", choices=("fft", "wavelet"), required=True)
    p.add_argument("--budget", type=int, required=True,
                   help="stored real-coefficient budget")
    p.add_argument("--decode", default=None,
                   help="also write the reconstruction to this PFM")
    p.add_argument("--max-range", type=float, default=10.0)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("train", help="fit an autoencoder on a dataset")
    p.add_argument("--dataset", required=True,
                   help="dataset directory or manifest path")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--mode", choices=("vanilla", "collnet"), required=True,
                   help="vanilla reconstructs depth, collnet predicts the"
                        " collision image")
    p.add_argument("--latent", type=int, default=16, help="latent size J")
    p.add_argument("--beta", type=float, default=None,
                   help="KL weight (default: model setting)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--workers", type=int, default=1,
                   help="gradient shards per step")
    p.add_argument("--config", default=None, help="model settings JSON")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="write metrics CSVs")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--budgets", default="32,64,128,256",
                   help="comma-separated codec budgets")
    p.add_argument("--collnet", action="append", default=[],
                   metavar="CKPT", help="collision-model checkpoint (repeat)")
    p.add_argument("--vanilla", action="append", default=[],
                   metavar="CKPT", help="depth-model checkpoint (repeat)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="write PGM comparison panels")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--samples", type=int, default=2,
                   help="number of dataset images to panel")
    p.add_argument("--collnet", action="append", default=[], metavar="CKPT")
    p.add_argument("--vanilla", action="append", default=[], metavar="CKPT")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
