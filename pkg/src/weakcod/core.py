"""Grid types, annotation records and pipeline configuration.

Masks are plain numpy arrays:

* binary masks are ``uint8`` arrays of shape ``(H, W)`` holding only 0 and 1,
* probability maps are ``float64`` arrays of shape ``(H, W)`` in ``[0, 1]``,
* RGB images are ``uint8`` arrays of shape ``(H, W, 3)``.

Coordinates are ``(x, y)`` with x to the right and y down, origin at the
top-left pixel, so pixel ``(x, y)`` lives at ``array[y, x]``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Literal

import numpy as np

BinaryMask = np.ndarray
ProbMap = np.ndarray
RgbImage = np.ndarray

Point = tuple[int, int]
Box = tuple[int, int, int, int]


class WeakCodError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(WeakCodError, ValueError):
    pass


class OutOfBounds(WeakCodError, ValueError):
    pass


class EmptyScribble(WeakCodError, ValueError):
    pass


class InvalidBox(WeakCodError, ValueError):
    pass


class ConfigError(WeakCodError, ValueError):
    pass


def check_same_shape(*arrays: np.ndarray) -> None:
    shapes = {a.shape[:2] for a in arrays}
    if len(shapes) > 1:
        raise DimensionMismatch(f"mismatched dimensions: {sorted(shapes)}")


def as_binary(m: np.ndarray) -> BinaryMask:
    """Coerce a boolean or 0/1 array to the canonical uint8 binary mask."""
    m = np.asarray(m)
    if m.dtype == bool:
        return m.astype(np.uint8)
    if not np.isin(m, (0, 1)).all():
        raise ValueError("binary mask must contain only 0 and 1")
    return m.astype(np.uint8, copy=False)


def as_prob(m: np.ndarray) -> ProbMap:
    m = np.asarray(m, dtype=np.float64)
    if m.size and (m.min() < 0.0 or m.max() > 1.0):
        raise ValueError("probability map values must lie in [0, 1]")
    return m


def binarize(m: ProbMap, threshold: float = 0.5) -> BinaryMask:
    """Pixels at or above ``threshold`` become 1."""
    if not 0.0 < threshold < 1.0:
        raise ConfigError(f"threshold must be in (0, 1), got {threshold}")
    return (np.asarray(m) >= threshold).astype(np.uint8)


def area_ratio(m: BinaryMask) -> float:
    """Foreground pixel count divided by ``H * W``."""
    m = np.asarray(m)
    return float(np.count_nonzero(m)) / float(m.shape[0] * m.shape[1])


def clamp_prob(m: ProbMap, epsilon: float = 1e-7) -> ProbMap:
    if not 0.0 < epsilon < 0.5:
        raise ConfigError(f"epsilon must be in (0, 0.5), got {epsilon}")
    return np.clip(np.asarray(m, dtype=np.float64), epsilon, 1.0 - epsilon)


@dataclass(frozen=True)
class Annotation:
    """A weak label: one point, one box, or a pair of scribble stroke masks.

    Boxes are ``(x0, y0, x1, y1)`` with exclusive upper corner, so the box
    covers columns ``x0 .. x1-1`` and rows ``y0 .. y1-1``.
    """

    kind: Literal["point", "box", "scribble"]
    point: Point | None = None
    box: Box | None = None
    scribble_fg: BinaryMask | None = field(default=None, repr=False, compare=False)
    scribble_bg: BinaryMask | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_point(cls, x: int, y: int) -> Annotation:
        return cls("point", point=(int(x), int(y)))

    @classmethod
    def from_box(cls, x0: int, y0: int, x1: int, y1: int) -> Annotation:
        return cls("box", box=(int(x0), int(y0), int(x1), int(y1)))

    @classmethod
    def from_scribble(cls, fg: np.ndarray, bg: np.ndarray | None = None) -> Annotation:
        fg = as_binary(fg)
        bg = np.zeros_like(fg) if bg is None else as_binary(bg)
        return cls("scribble", scribble_fg=fg, scribble_bg=bg)

    def validate(self, width: int, height: int) -> None:
        """Raise if the annotation does not fit a ``width x height`` image."""
        if self.kind == "point":
            x, y = self.point
            if not (0 <= x < width and 0 <= y < height):
                raise OutOfBounds(f"point {self.point} outside {width}x{height} image")
        elif self.kind == "box":
            x0, y0, x1, y1 = self.box
            if not (x0 < x1 and y0 < y1):
                raise InvalidBox(f"degenerate box {self.box}")
            if x0 < 0 or y0 < 0 or x1 > width or y1 > height:
                raise OutOfBounds(f"box {self.box} outside {width}x{height} image")
        elif self.kind == "scribble":
            fg, bg = self.scribble_fg, self.scribble_bg
            if fg is None:
                raise EmptyScribble("scribble annotation has no foreground mask")
            for m in (fg, bg):
                if m is not None and m.shape != (height, width):
                    raise DimensionMismatch(
                        f"scribble mask {m.shape[::-1]} does not match image {width}x{height}"
                    )
            if bg is not None and np.any(fg & bg):
                raise ValueError("scribble foreground and background strokes overlap")
        else:
            raise ValueError(f"unknown annotation kind {self.kind!r}")


@dataclass(frozen=True)
class PipelineConfig:
    """Hyperparameters shared by prompting, selection and distillation.

    ``alpha`` sets the scribble sampling grid spacing as a fraction of the
    shorter image side; ``tau_s`` and ``tau_b`` bound the admissible mask
    area ratio (both strict).
    """

    alpha: float = 0.075
    tau_s: float = 0.005
    tau_b: float = 0.6
    epsilon: float = 1e-7
    binarize_threshold: float = 0.5
    drop_unmatched: bool = False
    scribble_negatives: bool = False
    loss_reduction: Literal["sum", "mean"] = "sum"
    resize: int | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        if not 0.0 <= self.tau_s < self.tau_b <= 1.0:
            raise ConfigError(f"need 0 <= tau_s < tau_b <= 1, got {self.tau_s}, {self.tau_b}")
        if not 0.0 < self.epsilon < 0.5:
            raise ConfigError(f"epsilon must be in (0, 0.5), got {self.epsilon}")
        if not 0.0 < self.binarize_threshold < 1.0:
            raise ConfigError("binarize_threshold must be in (0, 1)")
        if self.loss_reduction not in ("sum", "mean"):
            raise ConfigError(f"unknown loss reduction {self.loss_reduction!r}")
        if self.resize is not None and self.resize < 1:
            raise ConfigError("resize must be a positive side length")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> PipelineConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | Path) -> PipelineConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def updated(self, **overrides: Any) -> PipelineConfig:
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})
