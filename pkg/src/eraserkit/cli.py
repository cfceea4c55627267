"""Command-line entry points.

    eraserkit erase --image IN --mask M --out OUT --strength 0.9 --seed S
    eraserkit serve --port P --store DIR
    eraserkit build-dataset --out DIR --scenes N --seed S
    eraserkit train --dataset DIR --steps N --lr 1e-4 --rank 4 --seed S
    eraserkit eval --results DIR --refs DIR --out report.json

All commands run on the desk-scale runtime: toy denoiser, stub clients.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .clients import StubFeatureExtractor, TemplateVlm, ToyVae
from .config import ErasureConfig
from .diffusion import build_schedule
from .metrics import evaluate
from .olrd import build_sample, load_train_samples, write_dataset
from .prompt_tuning import TrainConfig, init_placeholder, smoothed, train
from .refocus import RefocusConfig
from .service import EraserService, desk_clients, erase
from .synth import make_corpus
from .toy import ToyDenoiser, ToyTextEncoder


def _cmd_erase(args) -> int:
    image = np.array(Image.open(args.image).convert("RGB"))
    mask = np.array(Image.open(args.mask).convert("L")) > 127
    config = ErasureConfig(
        T=args.steps,
        strength=args.strength,
        sampler_seed=args.seed,
        guidance_scale=args.guidance,
        refocus=RefocusConfig(enabled=not args.no_refocus),
    )
    clients = desk_clients(seed=args.model_seed, model_dir=args.model_dir)
    result = erase(image, mask.astype(np.uint8), config, clients)
    Image.fromarray(result).save(args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .api import build_app

    service = EraserService(args.store, clients=desk_clients(model_dir=args.model_dir))
    service.start_worker()
    app = build_app(service)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def _cmd_build_dataset(args) -> int:
    scenes = make_corpus(args.scenes, seed=args.seed, size=(args.size, args.size))
    vlm = TemplateVlm()
    samples = []
    skipped = 0
    for i, scene in enumerate(scenes):
        try:
            samples.append(build_sample(scene, seed=args.seed + i, vlm=vlm, source_id=f"synth_{i}"))
        except Exception as exc:  # scenes without placeable objects are fine
            skipped += 1
            print(f"scene {i}: skipped ({exc})", file=sys.stderr)
    manifest = write_dataset(samples, args.out, shard_size=args.shard_size)
    print(f"wrote {len(manifest['samples'])} samples to {args.out} ({skipped} skipped)")
    return 0


def _cmd_train(args) -> int:
    vae = ToyVae()
    samples = load_train_samples(args.dataset, vae)
    encoder = ToyTextEncoder(seed=args.model_seed)
    denoiser = ToyDenoiser(seed=args.model_seed)
    schedule = build_schedule(args.T)

    token = None
    if args.ti_steps > 0 and args.resume is None:
        subset = samples[: min(len(samples), 256)]
        token = init_placeholder(
            subset, args.ti_steps, encoder, denoiser, schedule,
            lr=args.lr, seed=args.seed,
        )
        print(f"textual inversion done ({args.ti_steps} steps)")

    config = TrainConfig(
        steps=args.steps,
        lr=args.lr,
        rank=args.rank,
        seed=args.seed,
        batch_size=args.batch_size,
        checkpoint_every=args.checkpoint_every,
    )
    result = train(
        config, samples, encoder, denoiser, schedule,
        checkpoint_dir=args.out, resume_from=args.resume, token=token,
    )
    sm = smoothed(result.losses)
    print(
        f"trained {result.steps_run} steps: loss {result.losses[0]:.4f} -> "
        f"{result.losses[-1]:.4f} (smoothed tail {sm[-1]:.4f})"
    )
    telemetry = Path(args.out) / "telemetry.json"
    telemetry.parent.mkdir(parents=True, exist_ok=True)
    telemetry.write_text(json.dumps({"losses": result.losses}))
    return 0


def _cmd_eval(args) -> int:
    report = evaluate(args.results, args.refs, StubFeatureExtractor(), out_path=args.out)
    agg = report.aggregate
    print(
        f"pairs={len(report.pairs)} psnr={agg['psnr']:.3f}dB ssim={agg['ssim']:.4f} "
        f"lpips={agg['lpips']:.4f} fid={agg['fid']:.4f}"
    )
    if report.missing:
        print(f"missing pairs: {len(report.missing)}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eraserkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("erase", help="erase the masked region of one image")
    p.add_argument("--image", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--strength", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=50, help="schedule length T")
    p.add_argument("--guidance", type=float, default=7.5)
    p.add_argument("--no-refocus", action="store_true")
    p.add_argument("--model-dir", default=None)
    p.add_argument("--model-seed", type=int, default=0)
    p.set_defaults(fn=_cmd_erase)

    p = sub.add_parser("serve", help="run the HTTP job service")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--store", required=True)
    p.add_argument("--model-dir", default=None)
    p.set_defaults(fn=_cmd_serve)

    p = sub.add_parser("build-dataset", help="construct a synthetic removal dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--scenes", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--shard-size", type=int, default=64)
    p.set_defaults(fn=_cmd_build_dataset)

    p = sub.add_parser("train", help="tune the placeholder token and adapters")
    p.add_argument("--dataset", required=True)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--rank", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resume", default=None)
    p.add_argument("--out", default="checkpoints")
    p.add_argument("--batch-size", type=int, default=2)
    p.add_argument("--checkpoint-every", type=int, default=100)
    p.add_argument("--ti-steps", type=int, default=1000,
                   help="textual-inversion warmup steps (0 disables)")
    p.add_argument("--T", type=int, default=50, help="schedule length")
    p.add_argument("--model-seed", type=int, default=0)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="metric report over result/reference dirs")
    p.add_argument("--results", required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--out", default="report.json")
    p.set_defaults(fn=_cmd_eval)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
