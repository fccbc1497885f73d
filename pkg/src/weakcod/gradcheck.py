"""Central finite-difference check of the analytic loss gradients."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .distill import TransformSpec, pkd_loss, skd_loss, total_loss


def numeric_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    grad = np.zeros_like(x, dtype=np.float64)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        grad[idx] = (f(xp) - f(xm)) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    # pixels the loss ignores have both gradients exactly 0
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-12)
    err = np.abs(analytic - numeric) / scale
    err[(analytic == 0) & (np.abs(numeric) < 1e-12)] = 0.0
    return float(err.max())


def random_transform(rng: np.random.Generator, size: int) -> list[TransformSpec]:
    pick = rng.integers(0, 6)
    if pick == 0:
        return [TransformSpec("flip", axis="horizontal")]
    if pick == 1:
        return [TransformSpec("flip", axis="vertical"), TransformSpec("gaussblur", ksize=3, sigma=1.0)]
    if pick == 2:
        dx, dy = (int(v) for v in rng.integers(-2, 3, size=2))
        return [TransformSpec("translate", offset=(dx, dy))]
    if pick == 3:
        x0, y0 = (int(v) for v in rng.integers(0, size // 2, size=2))
        return [TransformSpec("crop", rect=(x0, y0, x0 + size // 2, y0 + size // 2))]
    if pick == 4:
        return [TransformSpec("scale", factor=float(rng.choice([0.75, 1.5])))]
    return [
        TransformSpec("flip", axis="horizontal"),
        TransformSpec("translate", offset=(1, -1)),
    ]


def run_gradcheck(instances: int = 50, seed: int = 0, size: int = 8, h: float = 1e-5) -> dict:
    """Worst relative error per loss over random ``size x size`` instances."""
    rng = np.random.default_rng(seed)
    worst = {"pkd": 0.0, "skd": 0.0, "total": 0.0}
    for _ in range(instances):
        k_s = rng.uniform(0.05, 0.95, (size, size))
        k_t = rng.uniform(0.05, 0.95, (size, size))
        m_f = rng.integers(0, 2, (size, size)).astype(np.uint8)
        t = random_transform(rng, size)
        k_l = rng.uniform(0.05, 0.95, _aligned_shape(k_s, t))

        def f_pkd(x):
            return pkd_loss(x, k_t, m_f).value

        def f_skd(x):
            return skd_loss(x, k_l, t).value

        def f_total(x):
            return f_pkd(x) + f_skd(x)

        pkd = pkd_loss(k_s, k_t, m_f)
        skd = skd_loss(k_s, k_l, t)
        tot = total_loss(pkd, skd)
        worst["pkd"] = max(worst["pkd"], relative_error(pkd.gradient, numeric_gradient(f_pkd, k_s, h)))
        worst["skd"] = max(worst["skd"], relative_error(skd.gradient, numeric_gradient(f_skd, k_s, h)))
        worst["total"] = max(worst["total"], relative_error(tot.gradient, numeric_gradient(f_total, k_s, h)))
    return worst


def _aligned_shape(k_s: np.ndarray, t: list[TransformSpec]) -> tuple[int, int]:
    shape = k_s.shape
    for spec in t:
        shape = spec.output_shape(shape)
    return shape
