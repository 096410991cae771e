"""Fitness of a latent code against a target feature vector.

One evaluation generates an image from the latent, takes several square
window cuts of it, encodes every cut to a feature vector, and averages
the cosine similarity of each cut's features with the target. Higher is
better; the minimization loss handed to optimizers is the negation.

Conventions: images are (height, width, 3) float arrays with values in
[0, 1]; feature vectors are 1-D float arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import (
    CapabilityError,
    ConfigurationError,
    DegenerateInputError,
    EvaluationError,
    ShapeError,
)
from .latent import LatentCode


@dataclass(frozen=True)
class CutoutPolicy:
    """How window cuts are sampled from a generated image.

    Each cut is a square whose side is a uniform fraction of the image's
    short side, placed uniformly at random, then bilinearly resized to
    ``resize_to`` x ``resize_to``. Cut geometry is deterministic given
    (seed_stream, iteration), so repeated evaluations of the same
    iteration see identical windows.

    A fixed full-frame policy (min_fraction == max_fraction == 1.0)
    always takes the centered maximal square, making single-cut scoring
    deterministic center cropping.
    """

    num_cuts: int = 8
    min_fraction: float = 0.4
    max_fraction: float = 1.0
    resize_to: int = 64
    seed_stream: int = 0

    def __post_init__(self) -> None:
        if self.num_cuts < 1:
            raise ConfigurationError(f"num_cuts must be >= 1, got {self.num_cuts}")
        if not (0 < self.min_fraction <= self.max_fraction <= 1.0):
            raise ConfigurationError(
                f"cut fractions must satisfy 0 < min <= max <= 1, got "
                f"[{self.min_fraction}, {self.max_fraction}]"
            )
        if self.resize_to < 1:
            raise ConfigurationError(f"resize_to must be >= 1, got {self.resize_to}")


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two feature vectors, in [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"feature vectors must be 1-D and equal length, got {a.shape} vs {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise DegenerateInputError("cosine similarity of a zero vector is undefined")
    value = float(np.dot(a, b) / (norm_a * norm_b))
    return min(1.0, max(-1.0, value))


def sample_cut_windows(
    height: int, width: int, policy: CutoutPolicy, iteration: int
) -> list[tuple[int, int, int]]:
    """Sample the (top, left, side) geometry of each cut for one iteration."""
    rng = np.random.default_rng([policy.seed_stream, iteration])
    short_side = min(height, width)
    fixed_full_frame = policy.min_fraction == policy.max_fraction == 1.0
    windows = []
    for _ in range(policy.num_cuts):
        fraction = rng.uniform(policy.min_fraction, policy.max_fraction)
        side = max(1, int(round(fraction * short_side)))
        if fixed_full_frame:
            top = (height - side) // 2
            left = (width - side) // 2
        else:
            top = int(rng.integers(0, height - side + 1))
            left = int(rng.integers(0, width - side + 1))
        windows.append((top, left, side))
    return windows


def resize_coords(in_size: int, out_size: int) -> np.ndarray:
    """Corner-aligned source coordinates for a bilinear resize.

    Output sample j reads source position j * (in - 1) / (out - 1); a
    single output pixel reads the exact center. This fixes the sampling
    grid so resized images are bit-reproducible everywhere.
    """
    if out_size == 1:
        return np.array([(in_size - 1) / 2.0])
    return np.arange(out_size, dtype=np.float64) * ((in_size - 1) / (out_size - 1))


def resize_operator(in_size: int, out_size: int) -> np.ndarray:
    """Dense (in_size, out_size) matrix of bilinear interpolation weights.

    Column j holds the two source weights for output sample j, so a
    resize along one axis is a single matrix contraction. Bilinear
    interpolation is separable, which keeps the resize differentiable by
    the transposed operator.
    """
    coords = resize_coords(in_size, out_size)
    lo = np.floor(coords).astype(np.intp)
    hi = np.minimum(lo + 1, in_size - 1)
    frac = coords - lo
    mat = np.zeros((in_size, out_size))
    cols = np.arange(out_size)
    mat[lo, cols] += 1.0 - frac
    mat[hi, cols] += frac
    return mat


def resize_bilinear(img: np.ndarray, out_size: int) -> np.ndarray:
    """Bilinearly resize an image to out_size x out_size, corner-aligned."""
    h, w = img.shape[0], img.shape[1]
    rows = resize_operator(h, out_size)
    cols = rows if w == h else resize_operator(w, out_size)
    mixed = np.tensordot(rows, img, axes=(0, 0))
    return np.tensordot(mixed, cols, axes=(1, 0)).transpose(0, 2, 1)


def make_cutouts(img: np.ndarray, policy: CutoutPolicy, iteration: int) -> list[np.ndarray]:
    """Cut ``num_cuts`` square windows and resize each to the policy size."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"expected an (H, W, 3) image, got shape {img.shape}")
    windows = sample_cut_windows(img.shape[0], img.shape[1], policy, iteration)
    return [
        resize_bilinear(img[top : top + side, left : left + side], policy.resize_to)
        for top, left, side in windows
    ]


# Joint loss-and-gradient hook: (code, target, policy, iteration) -> (loss, flat gradient).
GradFn = Callable[[LatentCode, np.ndarray, CutoutPolicy, int], tuple[float, np.ndarray]]


@dataclass
class Objective:
    """Bundles a generator, an encoder, a target, and a cutout policy.

    ``generator`` must expose ``generate(code) -> image`` and ``encoder``
    ``encode(image) -> features``. When the backend can differentiate the
    whole pipeline, pass its joint hook as ``grad_fn``; gradient requests
    without one raise :class:`CapabilityError` (gradient-free strategies
    still work).
    """

    generator: object
    encoder: object
    target: np.ndarray
    cutouts: CutoutPolicy
    grad_fn: GradFn | None = None

    def __post_init__(self) -> None:
        self.target = np.asarray(self.target, dtype=np.float64)
        if float(np.linalg.norm(self.target)) == 0.0:
            raise DegenerateInputError("target feature vector must be nonzero")

    def fitness(self, code: LatentCode, iteration: int = 0) -> float:
        """Mean cosine similarity of the cut features with the target."""
        try:
            img = self.generator.generate(code)
            cuts = make_cutouts(img, self.cutouts, iteration)
            sims = [cosine_similarity(self.encoder.encode(c), self.target) for c in cuts]
        except (ShapeError, DegenerateInputError):
            raise
        except Exception as exc:
            raise EvaluationError(f"backend failed at iteration {iteration}: {exc}") from exc
        return float(np.mean(sims))

    def loss(self, code: LatentCode, iteration: int = 0) -> float:
        return -self.fitness(code, iteration)

    @property
    def differentiable(self) -> bool:
        return self.grad_fn is not None

    def loss_and_grad(self, code: LatentCode, iteration: int = 0) -> tuple[float, np.ndarray]:
        """Loss plus its gradient with respect to the flat latent."""
        if self.grad_fn is None:
            raise CapabilityError(
                "this objective's backend does not provide gradients; "
                "use a gradient-free strategy"
            )
        try:
            return self.grad_fn(code, self.target, self.cutouts, iteration)
        except (ShapeError, DegenerateInputError, CapabilityError):
            raise
        except Exception as exc:
            raise EvaluationError(f"gradient backend failed at iteration {iteration}: {exc}") from exc

    def gradient(self, code: LatentCode, iteration: int = 0) -> np.ndarray:
        return self.loss_and_grad(code, iteration)[1]


def save_features(features: np.ndarray, path: str | Path) -> None:
    """Write a feature dump: ``features v1 F`` header, one value per line."""
    features = np.asarray(features, dtype=np.float64)
    lines = [f"features v1 {features.size}"]
    lines.extend(f"{v:.17g}" for v in features)
    Path(path).write_text("\n".join(lines) + "\n")


def load_features(path: str | Path) -> np.ndarray:
    """Read a feature dump written by :func:`save_features`."""
    text = Path(path).read_text().strip().splitlines()
    if not text:
        raise ShapeError(f"feature dump {path} is empty")
    header = text[0].split()
    if len(header) != 3 or header[0] != "features" or header[1] != "v1":
        raise ShapeError(f"feature dump {path} has bad header {text[0]!r}")
    values = np.array([float(line) for line in text[1:]], dtype=np.float64)
    if values.size != int(header[2]):
        raise ShapeError(
            f"feature dump {path} declares {header[2]} values but holds {values.size}"
        )
    return values
