"""Situated 3D scene graphs, task generation and evaluation."""

from ._situated3d import (
    Scene,
    SituatedGraph,
    Situation,
    bleu4,
    evaluate,
    exact_match,
    fidelity_check,
    grad_check,
    offline_examples,
    render_prompt,
    render_svg,
    rouge_l,
    run_pipeline,
    split,
    stats,
)

__all__ = [
    "Scene",
    "SituatedGraph",
    "Situation",
    "bleu4",
    "evaluate",
    "exact_match",
    "fidelity_check",
    "grad_check",
    "offline_examples",
    "render_prompt",
    "render_svg",
    "rouge_l",
    "run_pipeline",
    "split",
    "stats",
]
