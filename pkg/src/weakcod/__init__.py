"""Weak-annotation pseudo-labelling toolkit for camouflaged object detection."""
from .candidate_select import MaskCandidate, SelectionResult, response_filter, select_optimal, semantic_entropy
from .core import Annotation, PipelineConfig, area_ratio, binarize, clamp_prob
from .distill import (
    LossResult,
    TransformSpec,
    apply_transform,
    gen_mask_box,
    gen_mask_point,
    gen_mask_scribble,
    pkd_loss,
    skd_loss,
    total_loss,
    weight_map,
)
from .metrics import e_measure, evaluate_dataset, mae, s_measure, weighted_f
from .prompt_adapter import PromptSet, adapt, grid_spacing, sample_scribble, skeletonize

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "LossResult",
    "MaskCandidate",
    "PipelineConfig",
    "PromptSet",
    "SelectionResult",
    "TransformSpec",
    "adapt",
    "apply_transform",
    "area_ratio",
    "binarize",
    "clamp_prob",
    "e_measure",
    "evaluate_dataset",
    "gen_mask_box",
    "gen_mask_point",
    "gen_mask_scribble",
    "grid_spacing",
    "mae",
    "pkd_loss",
    "response_filter",
    "s_measure",
    "sample_scribble",
    "select_optimal",
    "semantic_entropy",
    "skd_loss",
    "skeletonize",
    "total_loss",
    "weight_map",
    "weighted_f",
]
