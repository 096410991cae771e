"""Server-side objective: cutout geometry and the fitness/gradient op.

The fitness of a latent against target text features is the mean
cosine similarity between the encoded features of several square
window cuts of the generated image and the target. generate_with_grad
returns that fitness together with the gradient of its NEGATION (the
client minimizes) with respect to the flat latent, taken by autograd.

Window geometry matches the latentsearch client convention draw for
draw: a numpy generator seeded with ``[seed_stream, iteration]`` yields
each cut's size fraction and then its corner, so fitness a client
computes itself from ``generate`` plus ``encode_image`` and fitness the
server differentiates see identical windows. Resizes are corner-aligned
separable bilinear operators expressed as dense matrix contractions,
which keeps them exact, reproducible, and differentiable.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import torch

from .wire import WireError

# Hygiene bounds, far beyond practical use; they keep a hostile config
# from asking the server to allocate absurd operators or window lists.
MAX_CUTS = 1024
MAX_RESIZE = 4096


@dataclass(frozen=True)
class CutConfig:
    """Validated cutout parameters for one generate_with_grad call."""

    num_cuts: int = 8
    min_fraction: float = 0.4
    max_fraction: float = 1.0
    resize_to: int = 224
    seed_stream: int = 0
    iteration: int = 0

    def __post_init__(self) -> None:
        if not 1 <= self.num_cuts <= MAX_CUTS:
            raise WireError(f"num_cuts must be in [1, {MAX_CUTS}], got {self.num_cuts}")
        if not (0 < self.min_fraction <= self.max_fraction <= 1.0):
            raise WireError(
                "cut fractions must satisfy 0 < min <= max <= 1, got "
                f"[{self.min_fraction}, {self.max_fraction}]"
            )
        if not 1 <= self.resize_to <= MAX_RESIZE:
            raise WireError(f"resize_to must be in [1, {MAX_RESIZE}], got {self.resize_to}")
        if self.seed_stream < 0 or self.iteration < 0:
            raise WireError(
                f"seed_stream and iteration must be non-negative, got "
                f"{self.seed_stream} and {self.iteration}"
            )


_INT_KEYS = ("num_cuts", "resize_to", "seed_stream", "iteration")
_REAL_KEYS = ("min_fraction", "max_fraction")


def cut_config_from_payload(payload) -> CutConfig:
    """Build a CutConfig from the wire payload.

    Strict on purpose: a misspelled key would otherwise silently fall
    back to a default and change the scored geometry.
    """
    if payload is None:
        payload = {}
    if not isinstance(payload, dict):
        raise WireError(f"cutouts must be an object, got {type(payload).__name__}")
    unknown = sorted(set(payload) - set(_INT_KEYS) - set(_REAL_KEYS))
    if unknown:
        raise WireError(f"unknown cutout keys: {unknown}")
    kwargs = {}
    for key in _INT_KEYS:
        if key in payload:
            value = payload[key]
            if not isinstance(value, int) or isinstance(value, bool):
                raise WireError(f"cutout {key} must be an integer, got {value!r}")
            kwargs[key] = value
    for key in _REAL_KEYS:
        if key in payload:
            value = payload[key]
            if (
                not isinstance(value, (int, float))
                or isinstance(value, bool)
                or not np.isfinite(value)
            ):
                raise WireError(f"cutout {key} must be a finite number, got {value!r}")
            kwargs[key] = float(value)
    return CutConfig(**kwargs)


def sample_windows(height: int, width: int, cfg: CutConfig) -> list[tuple[int, int, int]]:
    """The (top, left, side) geometry of each cut for one call.

    A fixed full-frame config (min == max == 1.0) always takes the
    centered maximal square; anything else places each cut uniformly.
    """
    rng = np.random.default_rng([cfg.seed_stream, cfg.iteration])
    short_side = min(height, width)
    fixed_full_frame = cfg.min_fraction == cfg.max_fraction == 1.0
    windows = []
    for _ in range(cfg.num_cuts):
        fraction = rng.uniform(cfg.min_fraction, cfg.max_fraction)
        side = max(1, int(round(fraction * short_side)))
        if fixed_full_frame:
            top = (height - side) // 2
            left = (width - side) // 2
        else:
            top = int(rng.integers(0, height - side + 1))
            left = int(rng.integers(0, width - side + 1))
        windows.append((top, left, side))
    return windows


def _resize_coords(in_size: int, out_size: int) -> np.ndarray:
    # output sample j reads source position j * (in - 1) / (out - 1)
    if out_size == 1:
        return np.array([(in_size - 1) / 2.0])
    return np.arange(out_size, dtype=np.float64) * ((in_size - 1) / (out_size - 1))


@lru_cache(maxsize=128)
def resize_matrix(in_size: int, out_size: int) -> torch.Tensor:
    """Dense (in_size, out_size) corner-aligned bilinear operator."""
    coords = _resize_coords(in_size, out_size)
    lo = np.floor(coords).astype(np.intp)
    hi = np.minimum(lo + 1, in_size - 1)
    frac = coords - lo
    mat = np.zeros((in_size, out_size))
    cols = np.arange(out_size)
    mat[lo, cols] += 1.0 - frac
    mat[hi, cols] += frac
    return torch.from_numpy(mat)


def resize_image(image: torch.Tensor, out_size: int) -> torch.Tensor:
    """Bilinearly resize an (H, W, 3) tensor to out_size x out_size."""
    height, width = int(image.shape[0]), int(image.shape[1])
    if height == out_size and width == out_size:
        return image
    rows = resize_matrix(height, out_size)
    cols = rows if width == height else resize_matrix(width, out_size)
    mixed = torch.tensordot(rows, image, dims=([0], [0]))
    return torch.tensordot(mixed, cols, dims=([1], [0])).permute(0, 2, 1)


def score_with_grad(
    stack, flat: np.ndarray, target: np.ndarray, cfg: CutConfig
) -> tuple[float, np.ndarray]:
    """Fitness of a latent and the gradient of its negation.

    Returns ``(fitness, d(-fitness)/dlatent)``. The fitness is a mean
    of cosines, so it lies in [-1, 1]; the gradient has one entry per
    latent element. Everything is a pure function of (flat, target,
    cfg), so repeated identical calls give identical answers.
    """
    flat = stack.check_latent(flat)
    target = stack.check_features(target)
    latent = torch.tensor(flat, dtype=torch.float64, requires_grad=True)
    image = stack.render(latent)
    unit_target = torch.from_numpy(target / np.linalg.norm(target))
    similarities = []
    for top, left, side in sample_windows(int(image.shape[0]), int(image.shape[1]), cfg):
        cut = resize_image(image[top : top + side, left : left + side, :], cfg.resize_to)
        similarities.append(stack.image_features(cut) @ unit_target)
    mean_sim = torch.stack(similarities).mean()
    (-mean_sim).backward()
    fitness = min(1.0, max(-1.0, float(mean_sim.detach())))
    return fitness, latent.grad.detach().numpy().copy()
