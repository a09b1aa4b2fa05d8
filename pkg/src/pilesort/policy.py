"""Grasp evaluation and selection.

Each proposal gets a utility value = PurityValue(predicted purity) *
expected recovered pixels of the target class * predicted success
probability; the best-value grasp is executed unless the stochastic skip
rule fires on a low-probability pick.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grasp import GraspRectangle
from .features import FeatureVector

NUM_CLASSES = 4          # red, yellow, bluegreen + unknown pseudo-class
UNKNOWN_CLASS = 3

DEFAULT_PURITY_CENTER = 0.8
DEFAULT_PURITY_SLOPE = 20.0
DEFAULT_PIXEL_SCALE = 5000.0
DEFAULT_SKIP_THRESHOLD = 0.1
DEFAULT_SKIP_PROBABILITY = 0.95


@dataclass
class Proposal:
    grasp: GraspRectangle
    success_features: FeatureVector
    color_features: FeatureVector


@dataclass
class EvaluatedGrasp:
    grasp: GraspRectangle
    p_success: float
    expected_colors: np.ndarray  # (4,) expected pixels per class
    target: int
    value: float


@dataclass
class Decision:
    execute: bool
    index: int = -1
    grasp: GraspRectangle | None = None
    evaluated: EvaluatedGrasp | None = None

    @property
    def skip(self) -> bool:
        return not self.execute


def purity_value(purity: float, center: float = DEFAULT_PURITY_CENTER,
                 slope: float = DEFAULT_PURITY_SLOPE) -> float:
    """Logistic preference for picks purer than `center`; monotone in purity."""
    if not 0.0 <= purity <= 1.0:
        raise ValueError("purity must be in [0, 1]")
    return 1.0 / (1.0 + math.exp(-slope * (purity - center)))


def evaluate(models, proposals: list[Proposal],
             pixel_scale: float = DEFAULT_PIXEL_SCALE,
             purity_center: float = DEFAULT_PURITY_CENTER,
             purity_slope: float = DEFAULT_PURITY_SLOPE) -> list[EvaluatedGrasp]:
    """Score every proposal with the success and color models.

    `models` must provide success_probabilities(X) and color_proportions(X);
    predicted proportions are scaled to nominal pixel counts so the recovered
    term has a stable magnitude."""
    if not proposals:
        return []
    Xs = np.vstack([p.success_features.values for p in proposals])
    Xc = np.vstack([p.color_features.values for p in proposals])
    p_success = np.asarray(models.success_probabilities(Xs), dtype=float)
    colors = np.clip(np.asarray(models.color_proportions(Xc), dtype=float),
                     0.0, None) * pixel_scale
    out = []
    for i, prop in enumerate(proposals):
        c = colors[i]
        total = c.sum()
        target = int(np.argmax(c))
        purity = float(c[target] / total) if total > 0 else 0.0
        recovered = float(c[target]) * float(p_success[i])
        value = purity_value(purity, purity_center, purity_slope) * recovered
        out.append(EvaluatedGrasp(prop.grasp, float(p_success[i]), c, target, value))
    return out


def select(evaluated: list[EvaluatedGrasp], rng: np.random.Generator,
           skip_threshold: float = DEFAULT_SKIP_THRESHOLD,
           skip_probability: float = DEFAULT_SKIP_PROBABILITY) -> Decision:
    """Choose the max-value grasp (ties to the lowest index); if its success
    probability is below the threshold, skip with the configured probability
    to avoid piling up failures without stalling learning entirely."""
    if not evaluated:
        return Decision(execute=False)
    values = np.array([e.value for e in evaluated])
    best = int(np.argmax(values))
    chosen = evaluated[best]
    if chosen.p_success < skip_threshold and rng.random() < skip_probability:
        return Decision(execute=False, index=best, grasp=chosen.grasp,
                        evaluated=chosen)
    return Decision(execute=True, index=best, grasp=chosen.grasp,
                    evaluated=chosen)
