"""Gradient saliency summarized to one scalar per image.

A fixed seeded two-layer network scores each class from the flattened
image; the saliency of an image is the mean absolute input gradient of its
predicted-class score, min-max normalized to [0, 1] across the job.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import INPUT_SIDE


class SaliencyError(ValueError):
    pass


@dataclass(frozen=True)
class ClassifierSpec:
    hidden: int
    seed: int


CLASSIFIERS = {
    "mlp32": ClassifierSpec(hidden=32, seed=7701),
    "mlp64": ClassifierSpec(hidden=64, seed=7702),
}

_INPUT_LEN = INPUT_SIDE * INPUT_SIDE * 3


class _Mlp:
    def __init__(self, spec: ClassifierSpec, classes: tuple[str, ...]):
        rng = np.random.default_rng(spec.seed)
        self.classes = classes
        self.w1 = rng.normal(size=(spec.hidden, _INPUT_LEN)) / np.sqrt(_INPUT_LEN)
        self.b1 = rng.normal(size=spec.hidden) * 0.1
        self.w2 = rng.normal(size=(len(classes), spec.hidden)) / np.sqrt(spec.hidden)

    def input_gradient(self, image: np.ndarray, class_name: str) -> np.ndarray:
        """Analytic gradient of the class score wrt the flattened input."""
        x = image.reshape(-1)
        h = np.tanh(self.w1 @ x + self.b1)
        row = self.w2[self.classes.index(class_name)]
        return (row * (1.0 - h * h)) @ self.w1


def normalize_unit_interval(raw: dict[str, float]) -> dict[str, float]:
    """Min-max normalize; a constant column (including all-zero) maps to 0."""
    values = list(raw.values())
    lo, hi = min(values), max(values)
    if hi == lo:
        return {iid: 0.0 for iid in raw}
    return {iid: (value - lo) / (hi - lo) for iid, value in raw.items()}


def saliency_scores(
    classifier_id: str,
    images: dict[str, np.ndarray],
    predicted: dict[str, str],
) -> dict[str, float]:
    """Per-image scalar saliency in [0, 1], keyed by instance id."""
    if classifier_id not in CLASSIFIERS:
        raise SaliencyError(
            f"classifier {classifier_id!r} unavailable; have {sorted(CLASSIFIERS)}"
        )
    classes = tuple(sorted(set(predicted.values())))
    model = _Mlp(CLASSIFIERS[classifier_id], classes)
    raw = {}
    for iid in sorted(images):
        gradient = model.input_gradient(images[iid], predicted[iid])
        raw[iid] = float(np.mean(np.abs(gradient)))
    return normalize_unit_interval(raw)
