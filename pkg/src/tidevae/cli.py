"""Command-line entry point: ``tide <subcommand> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .dataio.checkpoint import load_checkpoint, save_checkpoint
from .dataio.config import load_config
from .dataio.images import compose_grid
from .dataio.manifest import load_images, load_manifest, write_dataset
from .dataio.ppm import write_ppm
from .dataio.toy import KINDS, make_toy_dataset
from .engine.rng import Rng
from .evaluator.diversity import EncoderPatchExtractor, relative_diversity
from .evaluator.substitution import substitution_experiment, train_class_generators
from .model import build_model, generate
from .trainer import train

GRID_NAME = "grid.ppm"

log = logging.getLogger("tidevae")


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    ds = load_manifest(args.manifest, resolution=cfg.model.image_size, label=args.label)
    labels = set(ds.labels.tolist())
    if len(labels) > 1:
        print(f"warning: manifest mixes labels {sorted(labels)}; pass --label to train on one class",
              file=sys.stderr)
    model = build_model(cfg.model, Rng(cfg.train.seed))
    out = Path(args.out)
    log_path = Path(args.log) if args.log else out.with_name(out.name + ".log.jsonl")
    with open(log_path, "w", encoding="utf-8") as fh:
        def on_epoch(rec):
            fh.write(rec.to_json() + "\n")
            fh.flush()
            if args.verbose:
                print(f"epoch {rec.epoch}: total {rec.total:.3f} recon {rec.recon:.3f} kl {rec.kl:.3f}")

        model, report = train(model, ds.images, cfg.train, on_epoch=on_epoch)
    save_checkpoint(model, out)
    print(f"trained on {len(ds)} images for {len(report.epochs)} epochs ({report.stop_reason})")
    print(f"best epoch {report.best_epoch}, loss {report.best_loss:.4f}")
    print(f"checkpoint: {out}\ntraining log: {log_path}")
    return 0


def cmd_generate(args) -> int:
    model = load_checkpoint(args.ckpt)
    images = generate(model, Rng(args.seed), args.count)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(images):
        write_ppm(img, out / f"sample_{i:04d}.ppm")
    columns = args.columns or max(1, int(np.ceil(np.sqrt(len(images)))))
    write_ppm(compose_grid(list(images), columns, args.separator), out / GRID_NAME)
    print(f"wrote {len(images)} images and {GRID_NAME} to {out}")
    return 0


def cmd_diversity(args) -> int:
    extractor, resolution = None, None
    if args.ckpt:
        model = load_checkpoint(args.ckpt)
        resolution = model.config.image_size
        extractor = EncoderPatchExtractor(model)
    elif args.kernel == "feature":
        raise SystemExit(_usage_error(args, "--kernel feature requires --ckpt"))
    real = load_images(args.real, resolution, exclude=(GRID_NAME,))
    if resolution is None:
        resolution = real.shape[2:]
    gen = load_images(args.generated, resolution, exclude=(GRID_NAME,))
    ratio, g, r = relative_diversity(gen, real, args.kernel, extractor)
    print(f"kernel: {args.kernel}")
    print(f"delta_real: {r.delta:.6f}  (n={r.n})")
    print(f"delta_generated: {g.delta:.6f}  (n={g.n})")
    print(f"relative_diversity: {ratio:.6f}")
    return 0


def cmd_substitution(args) -> int:
    cfg = load_config(args.config)
    real = load_manifest(args.real_manifest, resolution=cfg.model.image_size)
    if args.normal_ckpt and args.abnormal_ckpt:
        gens = {0: load_checkpoint(args.normal_ckpt), 1: load_checkpoint(args.abnormal_ckpt)}
    else:
        def on_epoch(label, rec):
            if args.verbose:
                print(f"[class {label}] epoch {rec.epoch}: total {rec.total:.3f}")
        gens, reports = train_class_generators(real, cfg.model, cfg.train, on_epoch)
        for label, rep in reports.items():
            print(f"generator for class {label}: {len(rep.epochs)} epochs, best loss {rep.best_loss:.3f}")
    s = cfg.substitution
    report = substitution_experiment(real, gens, {0: s.n_normal, 1: s.n_abnormal}, k=s.k,
                                     repetitions=s.repetitions, seed=s.seed, classifier=cfg.classifier,
                                     progress=print if args.verbose else None)
    print(report.table())
    return 0


def cmd_gradcheck(args) -> int:
    from .gradsuite import TOLERANCE, check_primitives, check_tide_loss

    results = check_primitives(args.seed, args.trials)
    if not args.skip_model:
        results.append(check_tide_loss(args.seed, samples_per_param=args.samples))
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<24} max rel err {r.max_rel_error:.3e}")
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks below {TOLERANCE:g}")
    return 1 if failed else 0


def cmd_toyset(args) -> int:
    ds = make_toy_dataset(args.kind, args.n, args.resolution, args.seed)
    manifest = write_dataset(ds, args.out)
    print(f"wrote {len(ds)} images ({args.n} per class) and {manifest}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tide", description="Multiscale residual VAE for synthetic image datasets")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one TIDE model on one class subset")
    t.add_argument("--config", required=True)
    t.add_argument("--manifest", required=True)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--label", type=int, choices=(0, 1), help="train only on this class")
    t.add_argument("--log", help="training log path (default: <out>.log.jsonl)")
    t.set_defaults(func=cmd_train)

    g = sub.add_parser("generate", help="sample images from a checkpoint")
    g.add_argument("--ckpt", required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--columns", type=int)
    g.add_argument("--separator", type=int, default=2)
    g.set_defaults(func=cmd_generate)

    d = sub.add_parser("diversity", help="relative spectral diversity of generated vs real images")
    d.add_argument("--real", required=True, help="directory of PPMs or a manifest")
    d.add_argument("--generated", required=True, help="directory of PPMs or a manifest")
    d.add_argument("--kernel", choices=("pixel", "feature"), default="pixel")
    d.add_argument("--ckpt", help="checkpoint whose encoder drives the feature kernel")
    d.set_defaults(func=cmd_diversity)

    s = sub.add_parser("substitution", help="train on synthetic, test on real")
    s.add_argument("--real-manifest", required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--normal-ckpt")
    s.add_argument("--abnormal-ckpt")
    s.set_defaults(func=cmd_substitution)

    c = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--trials", type=int, default=1)
    c.add_argument("--samples", type=int, default=2, help="coordinates sampled per model parameter tensor")
    c.add_argument("--skip-model", action="store_true")
    c.set_defaults(func=cmd_gradcheck)

    y = sub.add_parser("toyset", help="write a procedural toy dataset and manifest")
    y.add_argument("--kind", choices=KINDS, default="blobs")
    y.add_argument("--n", type=int, default=64, help="images per class")
    y.add_argument("--resolution", type=int, default=32)
    y.add_argument("--seed", type=int, default=7)
    y.add_argument("--out", required=True)
    y.set_defaults(func=cmd_toyset)
    return p


def _usage_error(args, msg: str) -> int:
    print(f"tide {args.command}: error: {msg}", file=sys.stderr)
    return 2


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except SystemExit:
        raise
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
