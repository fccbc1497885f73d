"""Mask, image, annotation and manifest files."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from PIL import Image, UnidentifiedImageError

from .core import Annotation, BinaryMask, ProbMap, RgbImage, WeakCodError, binarize


class FormatError(WeakCodError, ValueError):
    pass


class ParseError(WeakCodError, ValueError):
    pass


class SchemaError(WeakCodError, ValueError):
    pass


def _open(path: str | Path) -> Image.Image:
    try:
        img = Image.open(path)
        img.load()
    except UnidentifiedImageError as exc:
        raise FormatError(f"{path}: not a readable raster") from exc
    return img


def load_mask(path: str | Path) -> ProbMap:
    """Read an 8-bit single-channel raster as values ``v / 255``."""
    img = _open(path)
    if img.mode == "1":
        img = img.convert("L")
    if img.mode != "L":
        raise FormatError(f"{path}: expected 8-bit single-channel mask, got mode {img.mode}")
    return np.asarray(img, dtype=np.float64) / 255.0


def save_mask(path: str | Path, m: np.ndarray) -> None:
    """Write a probability map (or 0/1 mask) as ``round(255 * p)`` PNG."""
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise FormatError(f"mask must be 2-D, got shape {arr.shape}")
    out = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(out).save(path, format="PNG")


def load_binary_mask(path: str | Path, threshold: float = 0.5) -> BinaryMask:
    return binarize(load_mask(path), threshold)


def load_image(path: str | Path) -> RgbImage:
    return np.asarray(_open(path).convert("RGB"), dtype=np.uint8)


def save_image(path: str | Path, image: RgbImage) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(path, format="PNG")


def _read_json(path: str | Path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def _int_list(data: dict, key: str, n: int) -> list[int]:
    value = data.get(key)
    if not isinstance(value, list) or len(value) != n or not all(isinstance(v, int) for v in value):
        raise SchemaError(f"'{key}' must be a list of {n} integers")
    return value


def parse_annotation(data: Any, base_dir: str | Path = ".") -> Annotation:
    if not isinstance(data, dict) or "type" not in data:
        raise SchemaError("annotation must be an object with a 'type' field")
    kind = data["type"]
    if kind == "point":
        return Annotation.from_point(*_int_list(data, "point", 2))
    if kind == "box":
        return Annotation.from_box(*_int_list(data, "box", 4))
    if kind == "scribble":
        if not isinstance(data.get("fg_mask"), str):
            raise SchemaError("scribble annotation needs an 'fg_mask' path")
        base = Path(base_dir)
        fg = load_binary_mask(base / data["fg_mask"])
        bg = None
        if data.get("bg_mask") is not None:
            bg = load_binary_mask(base / data["bg_mask"])
            if bg.shape != fg.shape:
                raise SchemaError("scribble foreground and background masks differ in size")
            if np.any(fg & bg):
                raise SchemaError("scribble foreground and background strokes overlap")
        return Annotation.from_scribble(fg, bg)
    raise SchemaError(f"unknown annotation type {kind!r}")


def load_annotation(path: str | Path, image_dims: tuple[int, int] | None = None) -> Annotation:
    """Load and validate an annotation JSON; scribble mask paths are relative to it."""
    path = Path(path)
    ann = parse_annotation(_read_json(path), path.parent)
    if image_dims is not None:
        ann.validate(*image_dims)
    return ann


def annotation_to_dict(ann: Annotation) -> dict[str, Any]:
    if ann.kind == "point":
        return {"type": "point", "point": list(ann.point)}
    if ann.kind == "box":
        return {"type": "box", "box": list(ann.box)}
    return {"type": "scribble"}


_SAFE_ID = re.compile(r"^[A-Za-z0-9._-]+$")


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    image_path: Path
    annotation_path: Path
    coarse_mask_path: Path
    candidates_dir: Path | None = None
    ground_truth_path: Path | None = None


@dataclass(frozen=True)
class DatasetManifest:
    records: list[ManifestRecord]

    def __len__(self) -> int:
        return len(self.records)


def load_manifest(path: str | Path) -> DatasetManifest:
    """Read ``{"records": [...]}``; relative paths resolve against the manifest's folder."""
    path = Path(path)
    data = _read_json(path)
    if not isinstance(data, dict) or not isinstance(data.get("records"), list):
        raise SchemaError("manifest must be an object with a 'records' list")
    base = path.parent
    records, seen = [], set()
    for i, rec in enumerate(data["records"]):
        if not isinstance(rec, dict):
            raise SchemaError(f"record {i} is not an object")
        rid = rec.get("id")
        if not isinstance(rid, str) or not _SAFE_ID.match(rid) or rid in (".", ".."):
            raise SchemaError(f"record {i}: id must be a non-empty filename-safe string")
        if rid in seen:
            raise SchemaError(f"duplicate record id {rid!r}")
        seen.add(rid)
        for key in ("image", "annotation", "coarse_mask"):
            if not isinstance(rec.get(key), str):
                raise SchemaError(f"record {rid!r}: missing '{key}' path")

        def opt(key: str) -> Path | None:
            return base / rec[key] if rec.get(key) else None

        records.append(
            ManifestRecord(
                id=rid,
                image_path=base / rec["image"],
                annotation_path=base / rec["annotation"],
                coarse_mask_path=base / rec["coarse_mask"],
                candidates_dir=opt("candidates_dir"),
                ground_truth_path=opt("ground_truth"),
            )
        )
    return DatasetManifest(records)


def write_json(path: str | Path, data: Any) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
