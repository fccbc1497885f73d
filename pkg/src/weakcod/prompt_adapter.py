"""Turn weak annotations into segmenter prompts.

Points and boxes pass straight through. Scribbles are thinned to a
one-pixel skeleton with Zhang-Suen and the skeleton is sampled where it
crosses a regular grid, giving a small set of positive click prompts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .core import Annotation, BinaryMask, Box, EmptyScribble, PipelineConfig, Point, as_binary


@dataclass(frozen=True)
class PromptSet:
    positive_points: list[Point] = field(default_factory=list)
    box: Box | None = None
    negative_points: list[Point] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.positive_points and self.box is None:
            raise ValueError("a prompt needs at least one point or a box")

    def to_dict(self) -> dict[str, Any]:
        return {
            "positive_points": [list(p) for p in self.positive_points],
            "negative_points": [list(p) for p in self.negative_points],
            "box": None if self.box is None else list(self.box),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> PromptSet:
        box = data.get("box")
        return cls(
            positive_points=[(int(x), int(y)) for x, y in data.get("positive_points", [])],
            box=None if box is None else tuple(int(v) for v in box),
            negative_points=[(int(x), int(y)) for x, y in data.get("negative_points", [])],
        )


@dataclass(frozen=True)
class GridSpec:
    spacing: int
    line_xs: list[int]
    line_ys: list[int]


def _neighbours(img: np.ndarray) -> list[np.ndarray]:
    # P2..P9 clockwise from north; pixels beyond the border read as 0.
    pad = [(0, 0)] * (img.ndim - 2) + [(1, 1), (1, 1)]
    p = np.pad(img, pad)
    return [
        p[..., :-2, 1:-1],  # P2 N
        p[..., :-2, 2:],  # P3 NE
        p[..., 1:-1, 2:],  # P4 E
        p[..., 2:, 2:],  # P5 SE
        p[..., 2:, 1:-1],  # P6 S
        p[..., 2:, :-2],  # P7 SW
        p[..., 1:-1, :-2],  # P8 W
        p[..., :-2, :-2],  # P9 NW
    ]


def _deletable(img: np.ndarray, first: bool) -> np.ndarray:
    n = _neighbours(img)
    p2, p3, p4, p5, p6, p7, p8, p9 = n
    b = sum(v.astype(np.int8) for v in n)
    seq = n + [p2]
    a = sum(((seq[k] == 0) & (seq[k + 1] == 1)).astype(np.int8) for k in range(8))
    if first:
        c1 = (p2 & p4 & p6) == 0
        c2 = (p4 & p6 & p8) == 0
    else:
        c1 = (p2 & p4 & p8) == 0
        c2 = (p2 & p6 & p8) == 0
    return (img == 1) & (b >= 2) & (b <= 6) & (a == 1) & c1 & c2


def skeletonize(mask: BinaryMask) -> BinaryMask:
    """Zhang-Suen thinning run to its fixpoint.

    Works on the last two axes, so a stack of masks ``(..., H, W)`` is thinned
    independently in one call.
    """
    img = as_binary(mask).copy()
    while True:
        changed = False
        for first in (True, False):
            kill = _deletable(img, first)
            if kill.any():
                img[kill] = 0
                changed = True
        if not changed:
            return img


def grid_spacing(width: int, height: int, alpha: float) -> GridSpec:
    if width < 1 or height < 1:
        raise ValueError("image dimensions must be positive")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    # the tolerance keeps products like 0.29 * 100 from flooring to 28
    spacing = max(1, math.floor(min(alpha * width, alpha * height) + 1e-9))
    return GridSpec(spacing, list(range(0, width, spacing)), list(range(0, height, spacing)))


def sample_scribble(scribble_fg: BinaryMask, alpha: float) -> list[Point]:
    """Skeleton pixels lying on a vertical or horizontal grid line.

    Returned in raster order. If no skeleton pixel sits on a line, the
    skeleton pixel closest to the skeleton centroid is returned instead, and
    when thinning erases the whole stroke the raw stroke stands in for it.
    """
    fg = as_binary(scribble_fg)
    if not fg.any():
        raise EmptyScribble("scribble foreground has no pixels")
    skel = skeletonize(fg)
    if not skel.any():
        skel = fg
    h, w = skel.shape
    spacing = grid_spacing(w, h, alpha).spacing
    ys, xs = np.nonzero(skel)
    on_grid = (xs % spacing == 0) | (ys % spacing == 0)
    if on_grid.any():
        return [(int(x), int(y)) for x, y in zip(xs[on_grid], ys[on_grid])]
    d2 = (xs - xs.mean()) ** 2 + (ys - ys.mean()) ** 2
    k = int(np.argmin(d2))
    return [(int(xs[k]), int(ys[k]))]


def adapt(annotation: Annotation, cfg: PipelineConfig, image_dims: tuple[int, int]) -> PromptSet:
    width, height = image_dims
    annotation.validate(width, height)
    if annotation.kind == "point":
        return PromptSet(positive_points=[annotation.point])
    if annotation.kind == "box":
        return PromptSet(box=annotation.box)
    points = sample_scribble(annotation.scribble_fg, cfg.alpha)
    negatives: list[Point] = []
    if cfg.scribble_negatives and annotation.scribble_bg is not None and annotation.scribble_bg.any():
        negatives = sample_scribble(annotation.scribble_bg, cfg.alpha)
    return PromptSet(positive_points=points, negative_points=negatives)
