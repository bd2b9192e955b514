"""Embedding and feature-column extraction for case-based explanation tooling.

Reads an image directory plus a prediction log and emits the embedding CSV
(`id,true_label,predicted_label,v0,...`) and `id,value` feature columns the
downstream case-base tooling parses. Encoders and the saliency classifier
use fixed seeded weights, so every output is a pure function of the job
file and the image bytes.
"""

__version__ = "0.1.0"

from .job import (
    ExtractionJob,
    ExtractorError,
    exemplar_similarity,
    extract_embeddings,
    load_job,
    saliency_summary,
    write_embeddings,
    write_feature_column,
)
from .encoder import ENCODERS, encode_images, load_image
from .saliency import CLASSIFIERS, saliency_scores

__all__ = [name for name in dir() if not name.startswith("_")]
