"""Deterministic stand-ins for the pretrained serving models.

Three networks with the surface of a text-to-image guidance stack: a
text encoder and an image encoder that both emit unit-norm 512-vectors,
and a conditional image generator driven by a 3840-element latent (one
input layer plus 14 hidden blocks, each conditioned on its own 128-dim
class and noise rows; the flat layout is class rows before noise rows,
matching the client's dump format). There is no training path and no
stochastic layer: every op is a pure function of its inputs, so
identical requests always produce identical answers.

Weights are synthesized from one fixed numpy seed, cached under
``MODEL_CACHE_DIR`` (default ``~/.cache/latentbridge``), and loaded
read-only. A missing or unreadable cache file is rebuilt bit-identically
because the weights are a pure function of the seed. Compute runs in
float64; the wire narrows results to float32.
"""

from __future__ import annotations

import os
import sys
from hashlib import blake2b
from pathlib import Path

import numpy as np
import torch

from .objective import resize_image

FEATURE_DIM = 512
LATENT_DIM = 128
HIDDEN_BLOCKS = 14
NUM_LAYERS = HIDDEN_BLOCKS + 1
LATENT_TOTAL = 2 * LATENT_DIM * NUM_LAYERS
RESOLUTION = 64
ENCODER_INPUT = 32
HIDDEN_DIM = 256
TEXT_BUCKETS = 2048
WEIGHTS_SEED = 271828182
WEIGHTS_FILE = "weights-v1.pt"
MODELS_ID = "synth-text512+synth-gan14x128/v1"

_WEIGHT_TABLE: list[tuple[str, tuple[int, ...], int]] = [
    ("text.w1", (FEATURE_DIM, TEXT_BUCKETS), TEXT_BUCKETS),
    ("text.b1", (FEATURE_DIM,), 0),
    ("text.w2", (FEATURE_DIM, FEATURE_DIM), FEATURE_DIM),
    ("text.b2", (FEATURE_DIM,), 0),
    ("image.w1", (FEATURE_DIM, 3 * ENCODER_INPUT * ENCODER_INPUT), 3 * ENCODER_INPUT * ENCODER_INPUT),
    ("image.b1", (FEATURE_DIM,), 0),
    ("image.w2", (FEATURE_DIM, FEATURE_DIM), FEATURE_DIM),
    ("image.b2", (FEATURE_DIM,), 0),
    ("gen.w_in", (HIDDEN_DIM, 2 * LATENT_DIM), 2 * LATENT_DIM),
    ("gen.b_in", (HIDDEN_DIM,), 0),
    ("gen.w_blk", (HIDDEN_BLOCKS, HIDDEN_DIM, HIDDEN_DIM + 2 * LATENT_DIM), HIDDEN_DIM + 2 * LATENT_DIM),
    ("gen.b_blk", (HIDDEN_BLOCKS, HIDDEN_DIM), 0),
    ("gen.w_out", (RESOLUTION * RESOLUTION * 3, HIDDEN_DIM), HIDDEN_DIM),
    ("gen.b_out", (RESOLUTION * RESOLUTION * 3,), 0),
]


def synthesize_weights() -> dict[str, np.ndarray]:
    """Draw every parameter from one fixed-seed stream, in table order.

    Matrices get 1/sqrt(fan_in) scaling so activations stay O(1)
    through the tanh stacks; biases get a small spread for asymmetry.
    """
    rng = np.random.default_rng(WEIGHTS_SEED)
    weights = {}
    for name, shape, fan_in in _WEIGHT_TABLE:
        scale = 1.0 / np.sqrt(fan_in) if fan_in else 0.05
        weights[name] = (scale * rng.standard_normal(shape)).astype(np.float32)
    return weights


def cache_dir() -> Path:
    """Weight storage root: $MODEL_CACHE_DIR, or ~/.cache/latentbridge."""
    env = os.environ.get("MODEL_CACHE_DIR", "").strip()
    if env:
        return Path(env)
    return Path.home() / ".cache" / "latentbridge"


def _weights_usable(weights) -> bool:
    expected = {name: shape for name, shape, _ in _WEIGHT_TABLE}
    if not isinstance(weights, dict) or set(weights) != set(expected):
        return False
    return all(
        isinstance(tensor, torch.Tensor)
        and tensor.dtype == torch.float32
        and tuple(tensor.shape) == expected[name]
        for name, tensor in weights.items()
    )


def load_weights(cache: Path | None = None) -> dict[str, torch.Tensor]:
    """Load the float32 weight set, synthesizing it on first use."""
    root = Path(cache) if cache is not None else cache_dir()
    path = root / WEIGHTS_FILE
    if path.exists():
        try:
            loaded = torch.load(path, map_location="cpu", weights_only=True)
            if _weights_usable(loaded):
                return loaded
            print(f"latentbridge: {path} has unexpected contents, regenerating", file=sys.stderr)
        except Exception as exc:
            print(f"latentbridge: could not read {path} ({exc}), regenerating", file=sys.stderr)
    weights = {name: torch.from_numpy(arr) for name, arr in synthesize_weights().items()}
    root.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    torch.save(weights, tmp)
    os.replace(tmp, path)
    return weights


def text_bag(text) -> np.ndarray:
    """Hashed byte n-gram counts (n = 1..3), L2-normalized.

    Buckets come from keyed blake2b so the mapping is stable across
    processes and platforms, unlike the salted builtin hash.
    """
    if not isinstance(text, str) or not text:
        raise ValueError("text must be a non-empty string")
    data = text.encode("utf-8")
    bag = np.zeros(TEXT_BUCKETS)
    for size in (1, 2, 3):
        for start in range(len(data) - size + 1):
            digest = blake2b(
                data[start : start + size], digest_size=8, person=b"latentbridge-txt"
            ).digest()
            bag[int.from_bytes(digest, "little") % TEXT_BUCKETS] += 1.0
    return bag / np.linalg.norm(bag)


def _unit(vector: torch.Tensor) -> torch.Tensor:
    norm = torch.linalg.vector_norm(vector)
    if float(norm.detach()) == 0.0:
        raise ValueError("encoder produced a zero feature vector")
    return vector / norm


class ModelStack:
    """The three served models behind one immutable weight set."""

    def __init__(self, weights: dict[str, torch.Tensor]):
        if not _weights_usable(weights):
            raise ValueError("weights do not match the expected tensor table")
        # float64 working copies; the float32 originals stay on disk
        self._w = {name: tensor.to(torch.float64) for name, tensor in weights.items()}

    @classmethod
    def load(cls, cache: Path | None = None) -> "ModelStack":
        return cls(load_weights(cache))

    def info(self) -> dict:
        return {
            "feature_dim": FEATURE_DIM,
            "latent_total": LATENT_TOTAL,
            "image_resolution": RESOLUTION,
            "hidden_blocks": HIDDEN_BLOCKS,
            "latent_dim": LATENT_DIM,
            "encoder_input": ENCODER_INPUT,
            "models": MODELS_ID,
        }

    def encode_text(self, text) -> np.ndarray:
        """Unit 512-vector for a prompt; identical text, identical vector."""
        bag = torch.from_numpy(text_bag(text))
        with torch.no_grad():
            hidden = torch.tanh(self._w["text.w1"] @ bag + self._w["text.b1"])
            return _unit(self._w["text.w2"] @ hidden + self._w["text.b2"]).numpy()

    def image_features(self, image: torch.Tensor) -> torch.Tensor:
        """Differentiable unit features of an (H, W, 3) float64 tensor.

        Input of any spatial size is resized to the encoder's own
        square input first, the way a fixed-resolution encoder would.
        """
        image = resize_image(image, ENCODER_INPUT)
        hidden = torch.tanh(self._w["image.w1"] @ image.reshape(-1) + self._w["image.b1"])
        return _unit(self._w["image.w2"] @ hidden + self._w["image.b2"])

    def encode_image(self, image) -> np.ndarray:
        image = np.asarray(image)
        if image.ndim != 3 or image.shape[2] != 3:
            raise ValueError(f"expected an (H, W, 3) image, got shape {image.shape}")
        if image.shape[0] < 1 or image.shape[1] < 1:
            raise ValueError(f"image must have positive extent, got shape {image.shape}")
        image = image.astype(np.float64)
        if not np.isfinite(image).all():
            raise ValueError("image contains non-finite values")
        with torch.no_grad():
            return self.image_features(torch.from_numpy(image)).numpy()

    def render(self, latent: torch.Tensor) -> torch.Tensor:
        """Differentiable (RESOLUTION, RESOLUTION, 3) image in [0, 1]."""
        half = LATENT_TOTAL // 2
        class_part = latent[:half].reshape(NUM_LAYERS, LATENT_DIM)
        noise_part = latent[half:].reshape(NUM_LAYERS, LATENT_DIM)
        hidden = torch.tanh(
            self._w["gen.w_in"] @ torch.cat([class_part[0], noise_part[0]])
            + self._w["gen.b_in"]
        )
        for block in range(HIDDEN_BLOCKS):
            mixed = torch.cat([hidden, class_part[block + 1], noise_part[block + 1]])
            hidden = torch.tanh(self._w["gen.w_blk"][block] @ mixed + self._w["gen.b_blk"][block])
        pixels = torch.sigmoid(self._w["gen.w_out"] @ hidden + self._w["gen.b_out"])
        return pixels.reshape(RESOLUTION, RESOLUTION, 3)

    def generate(self, latent) -> np.ndarray:
        with torch.no_grad():
            return self.render(torch.from_numpy(self.check_latent(latent))).numpy()

    def check_latent(self, latent) -> np.ndarray:
        """Validate and upcast a flat latent vector."""
        latent = np.asarray(latent)
        if latent.ndim != 1:
            raise ValueError(f"latent must be a flat vector, got shape {latent.shape}")
        if latent.size != LATENT_TOTAL:
            raise ValueError(f"latent length {latent.size} != {LATENT_TOTAL}")
        latent = latent.astype(np.float64)
        if not np.isfinite(latent).all():
            raise ValueError("latent contains non-finite values")
        return latent

    def check_features(self, features) -> np.ndarray:
        """Validate a target feature vector for scoring."""
        features = np.asarray(features)
        if features.ndim != 1 or features.size != FEATURE_DIM:
            raise ValueError(
                f"text features must be a flat vector of length {FEATURE_DIM}, "
                f"got shape {features.shape}"
            )
        features = features.astype(np.float64)
        if not np.isfinite(features).all():
            raise ValueError("text features contain non-finite values")
        if float(np.linalg.norm(features)) == 0.0:
            raise ValueError("text features must be nonzero")
        return features
