"""Extraction jobs: images + prediction log in, CSV artifacts out.

The embedding CSV and the `id,value` feature columns are exactly the
formats the case-base tooling parses; rows are always sorted by id, so
reruns of the same job are byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .encoder import ENCODERS, EncoderError, encode_images
from .saliency import saliency_scores


class ExtractorError(ValueError):
    pass


@dataclass(frozen=True)
class ExtractionJob:
    """One extraction run over an image directory and a prediction log."""

    image_dir: Path
    encoder: str
    predictions: dict[str, tuple[str, str]]  # id -> (true_label, predicted_label)
    typical_exemplars: Mapping[str, str] = field(default_factory=dict)
    classifier: str = "mlp32"

    def __post_init__(self) -> None:
        if self.encoder not in ENCODERS:
            raise ExtractorError(f"unknown encoder {self.encoder!r}")
        if not self.predictions:
            raise ExtractorError("prediction log is empty")
        for name, iid in self.typical_exemplars.items():
            if iid not in self.predictions:
                raise ExtractorError(
                    f"typical exemplar {name!r} points at unknown id {iid!r}"
                )

    def image_paths(self) -> dict[str, Path]:
        paths = {}
        for iid in self.predictions:
            path = self.image_dir / f"{iid}.png"
            if not path.is_file():
                raise ExtractorError(f"prediction id {iid!r} has no image at {path}")
            paths[iid] = path
        return paths


def load_predictions(path) -> dict[str, tuple[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["id", "true_label", "predicted_label"]:
        raise ExtractorError(f"{path}: expected an id,true_label,predicted_label header")
    out: dict[str, tuple[str, str]] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise ExtractorError(f"{path}:{lineno}: expected 3 fields")
        iid, true_label, predicted = row
        if iid in out:
            raise ExtractorError(f"{path}:{lineno}: duplicate id {iid!r}")
        out[iid] = (true_label, predicted)
    return out


def load_job(path) -> ExtractionJob:
    base = Path(path).parent
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return ExtractionJob(
        image_dir=(base / doc["image_source"]).resolve(),
        encoder=doc["encoder"],
        predictions=load_predictions(base / doc["predictions"]),
        typical_exemplars=doc.get("typical_exemplars", {}),
        classifier=doc.get("classifier", "mlp32"),
    )


def extract_embeddings(job: ExtractionJob) -> dict[str, np.ndarray]:
    """One embedding per prediction id; every vector has positive L2 norm."""
    try:
        vectors = encode_images(job.encoder, job.image_paths())
    except EncoderError as exc:
        raise ExtractorError(str(exc)) from exc
    for iid, vector in vectors.items():
        if float(np.linalg.norm(vector)) == 0.0:
            raise ExtractorError(f"instance {iid!r}: zero embedding")
    return vectors


def saliency_summary(job: ExtractionJob) -> dict[str, float]:
    """Mean absolute predicted-class input gradient, normalized to [0, 1]."""
    from .encoder import load_image

    images = {iid: load_image(path) for iid, path in job.image_paths().items()}
    predicted = {iid: labels[1] for iid, labels in job.predictions.items()}
    return saliency_scores(job.classifier, images, predicted)


def exemplar_similarity(
    job: ExtractionJob,
    exemplar_name: str,
    vectors: dict[str, np.ndarray] | None = None,
    label_override: str | None = None,
) -> dict[str, float]:
    """Cosine of every image to a designated typical exemplar.

    With label_override set (the truck-style variant), instances whose true
    label equals the override get value 1 outright.
    """
    if exemplar_name not in job.typical_exemplars:
        raise ExtractorError(f"no typical exemplar named {exemplar_name!r}")
    if vectors is None:
        vectors = extract_embeddings(job)
    anchor = vectors[job.typical_exemplars[exemplar_name]]
    anchor_norm = float(np.linalg.norm(anchor))
    out = {}
    for iid in sorted(vectors):
        if label_override is not None and job.predictions[iid][0] == label_override:
            out[iid] = 1.0
            continue
        vector = vectors[iid]
        out[iid] = float(
            np.dot(vector, anchor) / (np.linalg.norm(vector) * anchor_norm)
        )
    return out


# --- output files -------------------------------------------------------------


def _format_float(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def write_embeddings(
    job: ExtractionJob, vectors: dict[str, np.ndarray], path
) -> None:
    """The embedding CSV: id,true_label,predicted_label,v0..; sorted by id."""
    dims = {v.shape[0] for v in vectors.values()}
    if len(dims) != 1:
        raise ExtractorError(f"inconsistent embedding dims: {sorted(dims)}")
    dim = dims.pop()
    header = ["id", "true_label", "predicted_label"] + [f"v{i}" for i in range(dim)]
    lines = [",".join(header)]
    for iid in sorted(vectors):
        true_label, predicted = job.predictions[iid]
        fields = [iid, true_label, predicted]
        fields.extend(repr(float(x)) for x in vectors[iid])
        lines.append(",".join(fields))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def write_feature_column(values: Mapping[str, float], path) -> None:
    """The `id,value` column file; sorted by id."""
    lines = ["id,value"]
    for iid in sorted(values):
        value = values[iid]
        if value is None or (isinstance(value, float) and math.isnan(value)):
            raise ExtractorError(f"instance {iid!r}: non-finite feature value")
        lines.append(f'"{iid}",{_format_float(float(value))}')
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
