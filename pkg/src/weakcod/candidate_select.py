"""Pick one pseudo-label out of the segmenter's candidate masks.

Candidates whose foreground covers too little or too much of the image are
discarded. Survivors are ranked by confidence divided by their cross-entropy
against a coarse semantic mask; the best one becomes the teacher label.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import PipelineConfig, ProbMap, area_ratio, as_prob, binarize, check_same_shape, clamp_prob


@dataclass(frozen=True)
class MaskCandidate:
    mask: ProbMap
    confidence: float

    def __post_init__(self) -> None:
        if self.confidence < 0:
            raise ValueError(f"confidence must be non-negative, got {self.confidence}")


@dataclass(frozen=True)
class SelectionResult:
    chosen_index: int | None
    pseudo_label: ProbMap | None
    passed_filter: list[bool]
    entropies: list[float]
    scores: list[float | None]
    used_fallback: bool
    dropped: bool = False

    def metadata(self) -> dict:
        return {
            "chosen_index": self.chosen_index,
            "passed_filter": list(self.passed_filter),
            "entropies": list(self.entropies),
            "scores": list(self.scores),
            "used_fallback": self.used_fallback,
            "dropped": self.dropped,
        }


def response_filter(
    candidate: MaskCandidate, tau_s: float, tau_b: float, binarize_threshold: float = 0.5
) -> bool:
    """True when the binarized foreground fraction lies strictly inside (tau_s, tau_b)."""
    if not 0.0 <= tau_s < tau_b <= 1.0:
        raise ValueError(f"need 0 <= tau_s < tau_b <= 1, got {tau_s}, {tau_b}")
    ratio = area_ratio(binarize(candidate.mask, binarize_threshold))
    return tau_s < ratio < tau_b


def semantic_entropy(coarse: ProbMap, candidate: ProbMap, epsilon: float = 1e-7) -> float:
    """Summed binary cross-entropy of ``candidate`` against ``coarse`` (natural log)."""
    check_same_shape(coarse, candidate)
    m = as_prob(coarse)
    v = clamp_prob(candidate, epsilon)
    return float(-np.sum(m * np.log(v) + (1.0 - m) * np.log1p(-v)))


def select_optimal(
    candidates: Sequence[MaskCandidate], coarse: ProbMap, cfg: PipelineConfig
) -> SelectionResult:
    if not 1 <= len(candidates) <= 3:
        raise ValueError(f"expected 1-3 candidates, got {len(candidates)}")
    check_same_shape(coarse, *(c.mask for c in candidates))

    passed = [response_filter(c, cfg.tau_s, cfg.tau_b, cfg.binarize_threshold) for c in candidates]
    entropies = [semantic_entropy(coarse, c.mask, cfg.epsilon) for c in candidates]
    scores: list[float | None] = [
        c.confidence / max(e, cfg.epsilon) if ok else None
        for c, e, ok in zip(candidates, entropies, passed)
    ]

    best = None
    for i, s in enumerate(scores):
        # strict > keeps the lowest index on ties
        if s is not None and (best is None or s > scores[best]):
            best = i

    if best is not None:
        label = as_prob(candidates[best].mask).copy()
        return SelectionResult(best, label, passed, entropies, scores, used_fallback=False)
    if cfg.drop_unmatched:
        return SelectionResult(None, None, passed, entropies, scores, used_fallback=True, dropped=True)
    label = binarize(coarse, cfg.binarize_threshold).astype(np.float64)
    return SelectionResult(None, label, passed, entropies, scores, used_fallback=True)
