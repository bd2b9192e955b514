"""Fixed-weight image encoders.

Each encoder id names a frozen configuration: convolution filters and a
projection matrix drawn once from a seeded generator. Embeddings end with a
constant bias component, so no image can produce a zero vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

INPUT_SIDE = 32


class EncoderError(ValueError):
    pass


@dataclass(frozen=True)
class EncoderSpec:
    dim: int          # output dimension, including the bias component
    seed: int
    filters: int = 8
    kernel: int = 5
    stride: int = 2


ENCODERS = {
    "convrp16": EncoderSpec(dim=16, seed=1601),
    "convrp32": EncoderSpec(dim=32, seed=3201),
    "convrp64": EncoderSpec(dim=64, seed=6401),
}


def load_image(path) -> np.ndarray:
    """Decode to a 32x32x3 float array in [0, 1]."""
    try:
        with Image.open(path) as img:
            img = img.convert("RGB").resize((INPUT_SIDE, INPUT_SIDE), Image.BILINEAR)
            return np.asarray(img, dtype=np.float64) / 255.0
    except (OSError, ValueError) as exc:
        raise EncoderError(f"unreadable image {path}: {exc}") from exc


class _ConvEncoder:
    def __init__(self, spec: EncoderSpec):
        rng = np.random.default_rng(spec.seed)
        k, f = spec.kernel, spec.filters
        self.spec = spec
        self.filters = rng.normal(size=(f, k, k, 3)) / (k * np.sqrt(3.0))
        side = (INPUT_SIDE - k) // spec.stride + 1
        feat_len = f * side * side
        self.projection = rng.normal(size=(spec.dim - 1, feat_len)) / np.sqrt(feat_len)

    def __call__(self, image: np.ndarray) -> np.ndarray:
        spec = self.spec
        k, stride = spec.kernel, spec.stride
        side = (INPUT_SIDE - k) // stride + 1
        maps = np.empty((spec.filters, side, side))
        for i in range(side):
            for j in range(side):
                patch = image[i * stride:i * stride + k, j * stride:j * stride + k, :]
                maps[:, i, j] = np.tensordot(self.filters, patch, axes=3)
        features = np.maximum(maps, 0.0).reshape(-1)
        projected = self.projection @ features
        return np.concatenate([projected, [1.0]])


_cache: dict[str, _ConvEncoder] = {}


def get_encoder(encoder_id: str) -> _ConvEncoder:
    if encoder_id not in ENCODERS:
        raise EncoderError(
            f"unknown encoder {encoder_id!r}; available: {sorted(ENCODERS)}"
        )
    if encoder_id not in _cache:
        _cache[encoder_id] = _ConvEncoder(ENCODERS[encoder_id])
    return _cache[encoder_id]


def encode_images(encoder_id: str, paths: dict[str, Path]) -> dict[str, np.ndarray]:
    """Encode a mapping of instance id -> image path; dims are uniform."""
    encoder = get_encoder(encoder_id)
    out = {}
    for iid in sorted(paths):
        vector = encoder(load_image(paths[iid]))
        if vector.shape != (encoder.spec.dim,):
            raise EncoderError(f"instance {iid!r}: encoder dim drift")
        out[iid] = vector
    return out
