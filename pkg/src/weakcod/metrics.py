"""COD evaluation metrics: MAE, S-measure, E-measure and weighted F-measure.

Predictions are float maps in [0, 1]; ground truth is binary. Per-image
scores are averaged with equal weight for the dataset report.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .core import WeakCodError, area_ratio, check_same_shape

EPS = np.spacing(1)


class EmptyDataset(WeakCodError, ValueError):
    pass


def _pair(pred: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    check_same_shape(pred, gt)
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt) > 0.5
    return pred, gt


def mae(pred: np.ndarray, gt: np.ndarray) -> float:
    pred, gt = _pair(pred, gt)
    return float(np.mean(np.abs(pred - gt)))


# -- S-measure --------------------------------------------------------------


def _object_score(x: np.ndarray) -> float:
    mean = x.mean()
    std = x.std(ddof=1) if x.size > 1 else 0.0
    return 2.0 * mean / (mean * mean + 1.0 + std + EPS)


def _ssim(pred: np.ndarray, gt: np.ndarray) -> float:
    n = pred.size
    x, y = pred.mean(), gt.mean()
    dof = max(n - 1, 1)
    var_x = np.sum((pred - x) ** 2) / dof
    var_y = np.sum((gt - y) ** 2) / dof
    cov = np.sum((pred - x) * (gt - y)) / dof
    num = 4.0 * x * y * cov
    den = (x * x + y * y) * (var_x + var_y)
    if num != 0:
        return float(num / (den + EPS))
    return 1.0 if den == 0 else 0.0


def _centroid_split(gt: np.ndarray) -> tuple[int, int]:
    # rounded foreground centroid, plus one so the centroid row/column
    # falls in the top/left quadrants
    cy, cx = np.argwhere(gt).mean(axis=0).round()
    return int(cy) + 1, int(cx) + 1


def s_measure(pred: np.ndarray, gt: np.ndarray, alpha: float = 0.5) -> float:
    pred, gt = _pair(pred, gt)
    mu = gt.mean()
    if mu == 0:
        return float(1.0 - pred.mean())
    if mu == 1:
        return float(pred.mean())

    s_object = mu * _object_score(pred[gt]) + (1 - mu) * _object_score(1.0 - pred[~gt])

    h, w = gt.shape
    cy, cx = _centroid_split(gt)
    s_region = 0.0
    for rows in (slice(0, cy), slice(cy, h)):
        for cols in (slice(0, cx), slice(cx, w)):
            p, g = pred[rows, cols], gt[rows, cols].astype(np.float64)
            if p.size:
                s_region += _ssim(p, g) * p.size / (h * w)

    return float(max(0.0, alpha * s_object + (1 - alpha) * s_region))


# -- E-measure --------------------------------------------------------------


def e_measure(pred: np.ndarray, gt: np.ndarray) -> float:
    """Enhanced alignment with the prediction binarized at min(1, 2 * mean)."""
    pred, gt = _pair(pred, gt)
    threshold = min(1.0, 2.0 * pred.mean())
    # an all-zero map would otherwise binarize to all ones
    fm = (pred >= threshold if threshold > 0 else pred > 0).astype(np.float64)
    g = gt.astype(np.float64)
    if not gt.any():
        enhanced = 1.0 - fm
    elif gt.all():
        enhanced = fm
    else:
        phi_f = fm - fm.mean()
        phi_g = g - g.mean()
        align = 2.0 * phi_f * phi_g / (phi_f * phi_f + phi_g * phi_g + EPS)
        enhanced = (align + 1.0) ** 2 / 4.0
    return float(enhanced.mean())


# -- weighted F-measure -----------------------------------------------------


def _gauss_kernel(size: int = 7, sigma: float = 5.0) -> np.ndarray:
    r = (size - 1) / 2
    y, x = np.ogrid[-r : r + 1, -r : r + 1]
    k = np.exp(-(x * x + y * y) / (2 * sigma * sigma))
    return k / k.sum()


def nearest_foreground(gt: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Euclidean distance and coordinates of the nearest foreground pixel.

    Among equidistant foreground pixels the one first in raster order wins.
    Foreground pixels map to themselves at distance 0.
    """
    gt = np.asarray(gt, dtype=bool)
    h, w = gt.shape
    iy, ix = np.mgrid[0:h, 0:w]
    dist = np.zeros((h, w))
    ny, nx = iy.copy(), ix.copy()
    if gt.all():
        return dist, ny, nx

    # the nearest foreground pixel always has a background 4-neighbour
    interior = ndimage.binary_erosion(gt, structure=ndimage.generate_binary_structure(2, 1), border_value=1)
    edge = np.argwhere(gt & ~interior)
    tree = cKDTree(edge)
    queries = np.argwhere(~gt)
    k = min(8, len(edge))
    while True:
        _, idx = tree.query(queries, k=k)
        idx = idx.reshape(len(queries), k)
        cand = edge[idx]  # (q, k, 2)
        d2 = ((cand - queries[:, None, :]) ** 2).sum(axis=2)
        best = d2.min(axis=1)
        if k == len(edge) or not np.any(d2[:, -1] == best):
            break
        k = min(len(edge), 2 * k)
    raster = cand[..., 0] * w + cand[..., 1]
    raster = np.where(d2 == best[:, None], raster, np.iinfo(np.int64).max)
    pick = raster.min(axis=1)
    qy, qx = queries[:, 0], queries[:, 1]
    ny[qy, qx], nx[qy, qx] = pick // w, pick % w
    dist[qy, qx] = np.sqrt(best)
    return dist, ny, nx


def weighted_f(pred: np.ndarray, gt: np.ndarray, beta_sq: float = 1.0) -> float:
    pred, gt = _pair(pred, gt)
    if not gt.any():
        return 1.0 if not np.any(pred >= 0.5) else 0.0

    err = np.abs(pred - gt)
    dist, ny, nx = nearest_foreground(gt)
    et = err[ny, nx]
    ea = ndimage.convolve(et, _gauss_kernel(), mode="constant", cval=0.0)
    min_e = np.where(gt & (ea < err), ea, err)
    importance = np.where(gt, 1.0, 2.0 - np.exp(np.log(0.5) / 5.0 * dist))
    ew = min_e * importance

    tp = gt.sum() - ew[gt].sum()
    fp = ew[~gt].sum()
    recall = 1.0 - ew[gt].mean()
    precision = tp / (tp + fp + EPS)
    return float((1 + beta_sq) * recall * precision / (recall + beta_sq * precision + EPS))


# -- dataset report ---------------------------------------------------------


@dataclass(frozen=True)
class ImageRecord:
    id: str
    mae: float
    s_m: float
    e_m: float
    f_w: float
    object_size_ratio: float


@dataclass(frozen=True)
class MetricReport:
    mae: float
    s_measure: float
    e_measure: float
    weighted_f: float
    per_image: list[ImageRecord] = field(default_factory=list)
    e_measure_variant: str = "adaptive"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["count"] = len(self.per_image)
        return d


def evaluate_pair(image_id: str, pred: np.ndarray, gt: np.ndarray) -> ImageRecord:
    gt_bin = (np.asarray(gt) > 0.5).astype(np.uint8)
    return ImageRecord(
        id=image_id,
        mae=mae(pred, gt_bin),
        s_m=s_measure(pred, gt_bin),
        e_m=e_measure(pred, gt_bin),
        f_w=weighted_f(pred, gt_bin),
        object_size_ratio=area_ratio(gt_bin),
    )


def evaluate_dataset(pairs: Iterable[tuple[str, np.ndarray, np.ndarray]]) -> MetricReport:
    records = sorted((evaluate_pair(i, p, g) for i, p, g in pairs), key=lambda r: r.id)
    if not records:
        raise EmptyDataset("no prediction/ground-truth pairs to evaluate")
    n = len(records)
    return MetricReport(
        mae=sum(r.mae for r in records) / n,
        s_measure=sum(r.s_m for r in records) / n,
        e_measure=sum(r.e_m for r in records) / n,
        weighted_f=sum(r.f_w for r in records) / n,
        per_image=records,
    )
