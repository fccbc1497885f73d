"""Batch pseudo-label production over a dataset manifest.

For each record: annotation -> prompt -> candidates (from disk or a
segmenter) -> filter and select against the coarse mask -> write the
teacher label, the prompt mask and a metadata JSON. Output layout::

    <out>/<id>/pseudo_label.png
    <out>/<id>/prompt_mask.png
    <out>/<id>/meta.json
    <out>/summary.json
"""
from __future__ import annotations

import json
import logging
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .candidate_select import MaskCandidate, select_optimal
from .core import Annotation, PipelineConfig, WeakCodError, binarize
from .distill import gen_prompt_mask
from .io import (
    DatasetManifest,
    FormatError,
    ManifestRecord,
    SchemaError,
    annotation_to_dict,
    load_annotation,
    load_image,
    load_mask,
    save_mask,
    write_json,
)
from .prompt_adapter import adapt
from .segmenter import Segmenter, SegmenterRequest, StubSegmenter, query_segmenter

log = logging.getLogger(__name__)


class PipelineError(WeakCodError, RuntimeError):
    pass


@dataclass(frozen=True)
class PipelineOutput:
    output_dir: Path
    records: list[dict]
    summary: dict


def load_candidates(candidates_dir: Path) -> list[MaskCandidate]:
    """Read ``cand_0.png`` .. ``cand_2.png`` plus ``scores.json`` (list of confidences)."""
    scores = json.loads((candidates_dir / "scores.json").read_text())
    if not isinstance(scores, list) or not 1 <= len(scores) <= 3:
        raise SchemaError(f"{candidates_dir}/scores.json must list 1-3 confidences")
    return [
        MaskCandidate(load_mask(candidates_dir / f"cand_{i}.png"), float(s)) for i, s in enumerate(scores)
    ]


def _resize_prob(m: np.ndarray, size: int) -> np.ndarray:
    img = Image.fromarray(m.astype(np.float32))
    return np.clip(np.asarray(img.resize((size, size), Image.BILINEAR), dtype=np.float64), 0.0, 1.0)


def _resize_binary(m: np.ndarray, size: int) -> np.ndarray:
    img = Image.fromarray((m * 255).astype(np.uint8))
    return (np.asarray(img.resize((size, size), Image.NEAREST)) > 127).astype(np.uint8)


def resize_inputs(
    image: np.ndarray,
    annotation: Annotation,
    coarse: np.ndarray,
    candidates: list[MaskCandidate] | None,
    size: int,
) -> tuple[np.ndarray, Annotation, np.ndarray, list[MaskCandidate] | None]:
    """Resample image, masks and annotation coordinates jointly to ``size x size``."""
    h, w = image.shape[:2]
    sx, sy = size / w, size / h
    image = np.asarray(Image.fromarray(image).resize((size, size), Image.BILINEAR))
    if annotation.kind == "point":
        x, y = annotation.point
        annotation = Annotation.from_point(min(size - 1, int(x * sx)), min(size - 1, int(y * sy)))
    elif annotation.kind == "box":
        x0, y0, x1, y1 = annotation.box
        nx0, ny0 = int(x0 * sx), int(y0 * sy)
        annotation = Annotation.from_box(
            nx0, ny0, max(nx0 + 1, min(size, math.ceil(x1 * sx))), max(ny0 + 1, min(size, math.ceil(y1 * sy)))
        )
    else:
        fg = _resize_binary(annotation.scribble_fg, size)
        if not fg.any():
            # keep thin strokes alive under downsampling
            ys, xs = np.nonzero(annotation.scribble_fg)
            fg[np.minimum((ys * sy).astype(int), size - 1), np.minimum((xs * sx).astype(int), size - 1)] = 1
        bg = _resize_binary(annotation.scribble_bg, size) & (1 - fg)
        annotation = Annotation.from_scribble(fg, bg)
    coarse = _resize_prob(coarse, size)
    if candidates is not None:
        candidates = [MaskCandidate(_resize_prob(c.mask, size), c.confidence) for c in candidates]
    return image, annotation, coarse, candidates


def process_record(
    record: ManifestRecord, cfg: PipelineConfig, segmenter: Segmenter, output_dir: Path
) -> dict:
    image = load_image(record.image_path)
    h, w = image.shape[:2]
    annotation = load_annotation(record.annotation_path, (w, h))
    coarse = load_mask(record.coarse_mask_path)
    if coarse.shape != (h, w):
        raise FormatError(f"coarse mask {coarse.shape} does not match image {(h, w)}")
    candidates = load_candidates(record.candidates_dir) if record.candidates_dir else None

    if cfg.resize:
        image, annotation, coarse, candidates = resize_inputs(image, annotation, coarse, candidates, cfg.resize)
        h, w = image.shape[:2]

    prompt = adapt(annotation, cfg, (w, h))
    source = "file"
    if candidates is None:
        candidates = query_segmenter(segmenter, SegmenterRequest(image, prompt))
        source = "segmenter"
    result = select_optimal(candidates, coarse, cfg)

    meta = {
        "id": record.id,
        "annotation": annotation_to_dict(annotation),
        "prompt": prompt.to_dict(),
        "candidate_source": source,
        "confidences": [c.confidence for c in candidates],
        "size": [w, h],
        **result.metadata(),
    }
    rec_dir = output_dir / record.id
    if result.dropped:
        write_json(rec_dir / "meta.json", meta)
        return meta

    k_t = result.pseudo_label
    prompt_mask, notes = gen_prompt_mask(annotation, binarize(k_t, cfg.binarize_threshold))
    meta.update(notes)
    save_mask(rec_dir / "pseudo_label.png", k_t)
    save_mask(rec_dir / "prompt_mask.png", prompt_mask)
    write_json(rec_dir / "meta.json", meta)
    return meta


def run_pipeline(
    manifest: DatasetManifest,
    cfg: PipelineConfig,
    output_dir: str | Path,
    segmenter: Segmenter | None = None,
    workers: int = 1,
) -> PipelineOutput:
    """Process every record; per-record failures are collected, not raised.

    Raises :class:`PipelineError` only when every record fails.
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    segmenter = segmenter or StubSegmenter()

    def run_one(record: ManifestRecord) -> dict:
        try:
            return process_record(record, cfg, segmenter, output_dir)
        except (WeakCodError, OSError, ValueError) as exc:
            log.warning("record %s failed: %s", record.id, exc)
            meta = {"id": record.id, "error": f"{type(exc).__name__}: {exc}"}
            write_json(output_dir / record.id / "meta.json", meta)
            return meta

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        metas = list(pool.map(run_one, manifest.records))

    ok = [m for m in metas if "error" not in m]
    kinds = Counter(m["annotation"]["type"] for m in ok)
    summary = {
        "records": len(metas),
        "succeeded": len(ok),
        "failed": len(metas) - len(ok),
        "fallbacks": sum(1 for m in ok if m["used_fallback"]),
        "dropped": sum(1 for m in ok if m["dropped"]),
        "by_prompt_type": {k: kinds[k] for k in sorted(kinds)},
        "fallbacks_by_prompt_type": {
            k: sum(1 for m in ok if m["annotation"]["type"] == k and m["used_fallback"]) for k in sorted(kinds)
        },
        "errors": [{"id": m["id"], "error": m["error"]} for m in metas if "error" in m],
        "config": cfg.to_dict(),
    }
    write_json(output_dir / "summary.json", summary)
    if metas and not ok:
        raise PipelineError(f"all {len(metas)} records failed; see {output_dir / 'summary.json'}")
    return PipelineOutput(output_dir, metas, summary)
