"""Distillation targets and loss kernels.

A prompt mask marks the key distillation region with 0. Its weight map
doubles the cross-entropy there. A self-consistency L1 term compares a
transformed student prediction against the prediction on a transformed
image. All gradients are analytic and taken with respect to the student
map only; the second branch is a constant (stop-gradient).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from scipy import ndimage

from .core import (
    Annotation,
    BinaryMask,
    Box,
    InvalidBox,
    OutOfBounds,
    Point,
    ProbMap,
    WeakCodError,
    as_binary,
    check_same_shape,
    clamp_prob,
)


class PointOutsideMask(WeakCodError, ValueError):
    """The point prompt falls on background of the teacher mask."""


class InvalidTransformParams(WeakCodError, ValueError):
    pass


class NonGeometricOnMap(WeakCodError, ValueError):
    pass


@dataclass(frozen=True)
class LossResult:
    value: float
    gradient: np.ndarray

    def __add__(self, other: LossResult) -> LossResult:
        return total_loss(self, other)


# -- prompt-adaptive masks -------------------------------------------------


def gen_mask_scribble(scribble_fg: BinaryMask) -> BinaryMask:
    """Zero on foreground strokes, one elsewhere."""
    return (1 - as_binary(scribble_fg)).astype(np.uint8)


def inscribed_radius(k_t: BinaryMask, point: Point) -> int:
    """Largest integer r whose closed disc around ``point`` stays in the foreground.

    Pixels outside the image count as background. Returns 0 when even the
    4-neighbours are not all foreground.
    """
    fg = as_binary(k_t)
    x, y = point
    h, w = fg.shape
    if not (0 <= x < w and 0 <= y < h):
        raise OutOfBounds(f"point {point} outside {w}x{h} mask")
    if not fg[y, x]:
        raise PointOutsideMask(f"point {point} is background in the teacher mask")
    dist = ndimage.distance_transform_edt(np.pad(fg, 1))
    d2 = int(round(dist[y + 1, x + 1] ** 2))
    return math.isqrt(d2 - 1)


def disc_mask(shape: tuple[int, int], center: Point, radius: int) -> np.ndarray:
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    return (xx - center[0]) ** 2 + (yy - center[1]) ** 2 <= radius * radius


def gen_mask_point(k_t: BinaryMask, point: Point) -> BinaryMask:
    r = max(1, inscribed_radius(k_t, point))
    return (~disc_mask(k_t.shape, point, r)).astype(np.uint8)


def box_band_thickness(box: Box) -> tuple[int, int]:
    x0, y0, x1, y1 = box
    # round half up of a quarter side, never below one pixel
    return max(1, (x1 - x0 + 2) // 4), max(1, (y1 - y0 + 2) // 4)


def gen_mask_box(box: Box, image_dims: tuple[int, int]) -> BinaryMask:
    """Zero on a frame band a quarter of the box side thick, inside the box."""
    width, height = image_dims
    x0, y0, x1, y1 = box
    if not (x0 < x1 and y0 < y1):
        raise InvalidBox(f"degenerate box {box}")
    if x0 < 0 or y0 < 0 or x1 > width or y1 > height:
        raise InvalidBox(f"box {box} outside {width}x{height} image")
    tx, ty = box_band_thickness(box)
    yy, xx = np.mgrid[0:height, 0:width]
    inside = (xx >= x0) & (xx < x1) & (yy >= y0) & (yy < y1)
    band = (xx < x0 + tx) | (xx >= x1 - tx) | (yy < y0 + ty) | (yy >= y1 - ty)
    return (~(inside & band)).astype(np.uint8)


def gen_prompt_mask(annotation: Annotation, k_t: BinaryMask) -> tuple[BinaryMask, dict]:
    """Dispatch on annotation type; a point on teacher background gets radius 1."""
    h, w = k_t.shape
    if annotation.kind == "scribble":
        return gen_mask_scribble(annotation.scribble_fg), {}
    if annotation.kind == "box":
        return gen_mask_box(annotation.box, (w, h)), {}
    try:
        return gen_mask_point(k_t, annotation.point), {}
    except PointOutsideMask:
        disc = disc_mask((h, w), annotation.point, 1)
        return (~disc).astype(np.uint8), {"point_outside_teacher": True}


def weight_map(m_f: BinaryMask) -> np.ndarray:
    return 1.0 + (np.asarray(m_f) == 0)


def _reduce(value: float, grad: np.ndarray, reduction: str) -> LossResult:
    if reduction == "mean":
        return LossResult(value / grad.size, grad / grad.size)
    if reduction != "sum":
        raise ValueError(f"unknown reduction {reduction!r}")
    return LossResult(value, grad)


def pkd_loss(
    k_s: ProbMap,
    k_t: ProbMap,
    m_f: BinaryMask,
    epsilon: float = 1e-7,
    reduction: Literal["sum", "mean"] = "sum",
) -> LossResult:
    """Prompt-weighted binary cross-entropy of student ``k_s`` against teacher ``k_t``."""
    check_same_shape(k_s, k_t, m_f)
    s = clamp_prob(k_s, epsilon)
    t = clamp_prob(k_t, epsilon)
    w = weight_map(m_f)
    value = float(-np.sum(w * (t * np.log(s) + (1.0 - t) * np.log1p(-s))))
    grad = -w * (t / s - (1.0 - t) / (1.0 - s))
    return _reduce(value, grad, reduction)


# -- transforms ------------------------------------------------------------

TransformKind = Literal["scale", "crop", "translate", "flip", "gaussblur"]


@dataclass(frozen=True)
class TransformSpec:
    """One augmentation step.

    ``factor`` for scale, ``rect`` (x0, y0, x1, y1, exclusive) for crop,
    ``offset`` (dx, dy) in pixels for translate with zero fill,
    ``axis`` "horizontal" or "vertical" for flip, ``ksize``/``sigma`` for blur.
    """

    kind: TransformKind
    factor: float = 1.0
    rect: tuple[int, int, int, int] | None = None
    offset: tuple[int, int] = (0, 0)
    axis: Literal["horizontal", "vertical"] = "horizontal"
    ksize: int = 3
    sigma: float = 1.0

    @property
    def geometric(self) -> bool:
        return self.kind != "gaussblur"

    @classmethod
    def from_dict(cls, data: dict) -> TransformSpec:
        data = dict(data)
        for key in ("rect", "offset"):
            if data.get(key) is not None:
                data[key] = tuple(int(v) for v in data[key])
        return cls(**data)

    def output_shape(self, shape: tuple[int, int]) -> tuple[int, int]:
        h, w = shape
        self.validate(shape)
        if self.kind == "scale":
            return max(1, round(h * self.factor)), max(1, round(w * self.factor))
        if self.kind == "crop":
            x0, y0, x1, y1 = self.rect
            return y1 - y0, x1 - x0
        return h, w

    def validate(self, shape: tuple[int, int]) -> None:
        h, w = shape
        if self.kind == "scale":
            if not (self.factor > 0 and math.isfinite(self.factor)):
                raise InvalidTransformParams(f"scale factor must be positive, got {self.factor}")
        elif self.kind == "crop":
            if self.rect is None:
                raise InvalidTransformParams("crop needs a rect")
            x0, y0, x1, y1 = self.rect
            if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
                raise InvalidTransformParams(f"crop rect {self.rect} invalid for {w}x{h}")
        elif self.kind == "flip":
            if self.axis not in ("horizontal", "vertical"):
                raise InvalidTransformParams(f"unknown flip axis {self.axis!r}")
        elif self.kind == "gaussblur":
            if self.ksize < 1 or self.ksize % 2 == 0 or self.sigma <= 0:
                raise InvalidTransformParams("blur needs an odd ksize >= 1 and sigma > 0")
        elif self.kind != "translate":
            raise InvalidTransformParams(f"unknown transform kind {self.kind!r}")


Transform = TransformSpec | Sequence[TransformSpec]


def _as_list(t: Transform) -> list[TransformSpec]:
    return [t] if isinstance(t, TransformSpec) else list(t)


def _bilinear_matrix(n_in: int, n_out: int) -> np.ndarray:
    # half-pixel centres, edge samples clamped
    scale = n_in / n_out
    src = np.clip((np.arange(n_out) + 0.5) * scale - 0.5, 0.0, n_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    r = np.zeros((n_out, n_in))
    np.add.at(r, (np.arange(n_out), lo), 1.0 - frac)
    np.add.at(r, (np.arange(n_out), hi), frac)
    return r


def _nearest_index(n_in: int, n_out: int) -> np.ndarray:
    return np.minimum(np.floor((np.arange(n_out) + 0.5) * n_in / n_out).astype(int), n_in - 1)


def _shift(x: np.ndarray, dx: int, dy: int) -> np.ndarray:
    out = np.zeros_like(x)
    h, w = x.shape[:2]
    if abs(dx) >= w or abs(dy) >= h:
        return out
    src_y = slice(max(0, -dy), h - max(0, dy))
    dst_y = slice(max(0, dy), h - max(0, -dy))
    src_x = slice(max(0, -dx), w - max(0, dx))
    dst_x = slice(max(0, dx), w - max(0, -dx))
    out[dst_y, dst_x] = x[src_y, src_x]
    return out


def _forward(x: np.ndarray, t: TransformSpec, nearest: bool) -> np.ndarray:
    h, w = x.shape[:2]
    if t.kind == "flip":
        return x[:, ::-1].copy() if t.axis == "horizontal" else x[::-1].copy()
    if t.kind == "translate":
        return _shift(x, t.offset[0], t.offset[1])
    if t.kind == "crop":
        x0, y0, x1, y1 = t.rect
        return x[y0:y1, x0:x1].copy()
    if t.kind == "scale":
        oh, ow = t.output_shape((h, w))
        if nearest:
            return x[_nearest_index(h, oh)][:, _nearest_index(w, ow)]
        ry, rx = _bilinear_matrix(h, oh), _bilinear_matrix(w, ow)
        return np.einsum("ij,jk...,lk->il...", ry, x, rx)
    raise NonGeometricOnMap(f"{t.kind} is not a coordinate transform")


def _adjoint(g: np.ndarray, t: TransformSpec, in_shape: tuple[int, int]) -> np.ndarray:
    h, w = in_shape
    if t.kind == "flip":
        return g[:, ::-1].copy() if t.axis == "horizontal" else g[::-1].copy()
    if t.kind == "translate":
        return _shift(g, -t.offset[0], -t.offset[1])
    if t.kind == "crop":
        x0, y0, x1, y1 = t.rect
        out = np.zeros((h, w), dtype=g.dtype)
        out[y0:y1, x0:x1] = g
        return out
    if t.kind == "scale":
        oh, ow = g.shape
        return _bilinear_matrix(h, oh).T @ g @ _bilinear_matrix(w, ow)
    raise NonGeometricOnMap(f"{t.kind} is not a coordinate transform")


def apply_transform(x: np.ndarray, t: Transform) -> np.ndarray:
    """Apply one transform or a sequence of them, in order.

    Dispatch is on the array: ``(H, W, 3)`` uint8 is an image (all kinds,
    bilinear resampling), 2-D uint8 is a binary mask (nearest neighbour),
    2-D float is a probability map (bilinear). Blur is refused on 2-D maps.
    """
    x = np.asarray(x)
    is_image = x.ndim == 3
    nearest = x.ndim == 2 and x.dtype == np.uint8
    out = x
    for spec in _as_list(t):
        spec.validate(out.shape[:2])
        if spec.kind == "gaussblur":
            if not is_image:
                raise NonGeometricOnMap("gaussblur applies to images, not prediction maps")
            radius = spec.ksize // 2
            out = ndimage.gaussian_filter(
                out.astype(np.float64),
                sigma=(spec.sigma, spec.sigma, 0),
                truncate=radius / spec.sigma,
                mode="mirror",
            )
        else:
            out = _forward(out if nearest else out.astype(np.float64), spec, nearest)
    if is_image:
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)
    if nearest:
        return out.astype(np.uint8)
    return out


def geometric_part(t: Transform) -> list[TransformSpec]:
    return [s for s in _as_list(t) if s.geometric]


def skd_loss(
    k_s: ProbMap,
    k_l: ProbMap,
    t: Transform,
    reduction: Literal["sum", "mean"] = "sum",
) -> LossResult:
    """L1 distance between the transformed student map and ``k_l``.

    Only the geometric steps of ``t`` are applied to ``k_s``. ``k_l`` is held
    constant; the gradient is pulled back through the transform to ``k_s``
    with sign(0) = 0.
    """
    specs = geometric_part(t)
    shapes = [np.shape(k_s)]
    y = np.asarray(k_s, dtype=np.float64)
    for spec in specs:
        y = _forward(y, spec, nearest=False)
        shapes.append(y.shape)
    check_same_shape(y, k_l)
    diff = y - np.asarray(k_l, dtype=np.float64)
    grad = np.sign(diff)
    for spec, shape in zip(reversed(specs), reversed(shapes[:-1])):
        grad = _adjoint(grad, spec, shape)
    value = float(np.abs(diff).sum())
    if reduction == "mean":
        # averaged over the aligned map, whose size can differ from k_s
        return LossResult(value / diff.size, grad / diff.size)
    if reduction != "sum":
        raise ValueError(f"unknown reduction {reduction!r}")
    return LossResult(value, grad)


def total_loss(pkd: LossResult, skd: LossResult) -> LossResult:
    check_same_shape(pkd.gradient, skd.gradient)
    return LossResult(pkd.value + skd.value, pkd.gradient + skd.gradient)
