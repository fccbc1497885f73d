"""Command line entry point: ``weakcod <verb> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .candidate_select import select_optimal
from .core import PipelineConfig, WeakCodError, binarize
from .distill import TransformSpec, gen_prompt_mask, pkd_loss, skd_loss, total_loss
from .gradcheck import run_gradcheck
from .io import load_annotation, load_image, load_manifest, load_mask, save_mask, write_json
from .metrics import evaluate_dataset
from .pipeline import load_candidates, run_pipeline
from .prompt_adapter import adapt
from .segmenter import make_segmenter

GRADCHECK_TOLERANCE = 1e-4


def _config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig.from_json(args.config) if args.config else PipelineConfig()
    return cfg.updated(
        alpha=args.alpha, tau_s=args.tau_s, tau_b=args.tau_b, epsilon=args.epsilon, resize=args.resize
    )


def _emit(data: dict, out: str | None) -> None:
    if out:
        write_json(out, data)
    else:
        json.dump(data, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")


def _image_dims(args: argparse.Namespace) -> tuple[int, int]:
    if args.image:
        h, w = load_image(args.image).shape[:2]
        return w, h
    if args.size:
        w, h = (int(v) for v in args.size.lower().split("x"))
        return w, h
    raise SystemExit("need --image or --size WxH")


def cmd_adapt(args: argparse.Namespace) -> int:
    cfg = _config(args)
    dims = _image_dims(args)
    prompt = adapt(load_annotation(args.annotation, dims), cfg, dims)
    _emit(prompt.to_dict(), args.out)
    return 0


def cmd_select(args: argparse.Namespace) -> int:
    cfg = _config(args)
    candidates = load_candidates(Path(args.candidates_dir))
    result = select_optimal(candidates, load_mask(args.coarse), cfg)
    if result.pseudo_label is not None:
        save_mask(args.out, result.pseudo_label)
    _emit(result.metadata(), args.meta)
    return 0


def cmd_distillmask(args: argparse.Namespace) -> int:
    cfg = _config(args)
    k_t = binarize(load_mask(args.pseudo_label), cfg.binarize_threshold)
    h, w = k_t.shape
    annotation = load_annotation(args.annotation, (w, h))
    mask, notes = gen_prompt_mask(annotation, k_t)
    save_mask(args.out, mask)
    if notes:
        _emit(notes, None)
    return 0


def cmd_loss(args: argparse.Namespace) -> int:
    cfg = _config(args)
    k_s = load_mask(args.student)
    pkd = pkd_loss(k_s, load_mask(args.teacher), binarize(load_mask(args.prompt_mask)), cfg.epsilon, args.reduction)
    report = {"pkd": pkd.value}
    result = pkd
    if args.transformed:
        specs = [TransformSpec.from_dict(d) for d in json.loads(args.transform or "[]")]
        skd = skd_loss(k_s, load_mask(args.transformed), specs, args.reduction)
        result = total_loss(pkd, skd)
        report["skd"] = skd.value
    report["total"] = result.value
    if args.grad_out:
        np.save(args.grad_out, result.gradient)
    _emit(report, args.out)
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    worst = run_gradcheck(instances=args.instances, seed=args.seed)
    for name, err in worst.items():
        print(f"{name:6s} max relative error {err:.3e}")
    return 0 if max(worst.values()) <= GRADCHECK_TOLERANCE else 1


def cmd_eval(args: argparse.Namespace) -> int:
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    gts = {p.stem: p for p in sorted(gt_dir.glob("*.png"))}
    preds = {p.stem: p for p in sorted(pred_dir.glob("*.png"))}
    missing = sorted(set(gts) - set(preds))
    if missing:
        logging.warning("%d ground-truth files have no prediction, e.g. %s", len(missing), missing[0])
    pairs = ((k, load_mask(preds[k]), load_mask(gts[k])) for k in sorted(set(gts) & set(preds)))
    report = evaluate_dataset(pairs).to_dict()
    _emit(report, args.out)
    return 0


def cmd_pipeline(args: argparse.Namespace) -> int:
    cfg = _config(args)
    segmenter = make_segmenter(args.segmenter, seed=args.seed)
    try:
        out = run_pipeline(load_manifest(args.manifest), cfg, args.out, segmenter, workers=args.workers)
    finally:
        close = getattr(segmenter, "close", None)
        if close:
            close()
    s = out.summary
    print(f"{s['succeeded']}/{s['records']} records, {s['fallbacks']} fallbacks, {s['failed']} failed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--alpha", type=float, help="scribble grid spacing fraction (default 0.075)")
    shared.add_argument("--tau-s", type=float, help="lower area-ratio bound (default 0.005)")
    shared.add_argument("--tau-b", type=float, help="upper area-ratio bound (default 0.6)")
    shared.add_argument("--epsilon", type=float, help="probability clamp (default 1e-7)")
    shared.add_argument("--resize", type=int, help="resample inputs to NxN before processing")
    shared.add_argument("--config", help="JSON file with PipelineConfig fields")
    shared.add_argument("--seed", type=int, default=0)
    shared.add_argument("--workers", type=int, default=1)

    parser = argparse.ArgumentParser(prog="weakcod", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("adapt", parents=[shared], help="annotation -> prompt JSON")
    p.add_argument("--annotation", required=True)
    p.add_argument("--image")
    p.add_argument("--size", help="WxH when no image is given")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("select", parents=[shared], help="candidates + coarse mask -> pseudo-label")
    p.add_argument("--candidates-dir", required=True)
    p.add_argument("--coarse", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--meta")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("distillmask", parents=[shared], help="annotation + pseudo-label -> prompt mask")
    p.add_argument("--annotation", required=True)
    p.add_argument("--pseudo-label", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_distillmask)

    p = sub.add_parser("loss", parents=[shared], help="evaluate distillation losses")
    p.add_argument("--student", required=True)
    p.add_argument("--teacher", required=True)
    p.add_argument("--prompt-mask", required=True)
    p.add_argument("--transformed", help="prediction on the transformed image")
    p.add_argument("--transform", help='JSON list, e.g. \'[{"kind": "flip"}]\'')
    p.add_argument("--reduction", choices=["sum", "mean"], default="sum")
    p.add_argument("--grad-out", help="save the gradient as .npy")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("gradcheck", parents=[shared], help="finite-difference gradient check")
    p.add_argument("--instances", type=int, default=50)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("eval", parents=[shared], help="prediction dir + GT dir -> metric report")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", parents=[shared], help="manifest -> pseudo-labels end to end")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--segmenter", default="stub", help="stub | cmd:<command> | http://host:port/path")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (WeakCodError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
