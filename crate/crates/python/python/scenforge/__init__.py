"""Adversarial driving-scene generation, simulation and scoring."""

from ._scenforge import (
    KnowledgeBase,
    PolicyParams,
    SampleState,
    SceneScript,
    SceneTrace,
    ade,
    evaluate,
    finetune,
    generate,
    replay,
    simulate,
)

__all__ = [
    "KnowledgeBase",
    "PolicyParams",
    "SampleState",
    "SceneScript",
    "SceneTrace",
    "ade",
    "evaluate",
    "finetune",
    "generate",
    "replay",
    "simulate",
]
