"""Structured latent codes and their flat-vector view.

A latent code provides one (class, noise) input pair per generator layer:
the input layer plus every hidden block receives its own slice, so each
stage of the generator can be steered independently. Optimizers work on
the flat view; generators consume the structured form.

Flat layout (stable contract, used by the dump file format and all
optimizer state): all class rows in layer order, then all noise rows in
layer order.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, NumericError, ShapeError

INIT_STRATEGIES = ("standard_normal", "truncated_normal", "zeros")


@dataclass(frozen=True)
class LatentShape:
    """Dimensions of a layered latent input.

    ``total`` is always ``(1 + num_hidden_layers) * 2 * latent_dim``: one
    class vector and one noise vector per layer.
    """

    num_hidden_layers: int
    latent_dim: int

    def __post_init__(self) -> None:
        if self.num_hidden_layers < 0:
            raise ConfigurationError(
                f"num_hidden_layers must be >= 0, got {self.num_hidden_layers}"
            )
        if self.latent_dim < 1:
            raise ConfigurationError(f"latent_dim must be >= 1, got {self.latent_dim}")

    @property
    def num_layers(self) -> int:
        return 1 + self.num_hidden_layers

    @property
    def total(self) -> int:
        return self.num_layers * 2 * self.latent_dim


@dataclass
class LatentCode:
    """Per-layer class/noise latents; the variable every optimizer moves.

    ``class_part`` and ``noise_part`` are (num_layers, latent_dim) float
    arrays. All entries must be finite.
    """

    shape: LatentShape
    class_part: np.ndarray
    noise_part: np.ndarray

    def __post_init__(self) -> None:
        expected = (self.shape.num_layers, self.shape.latent_dim)
        self.class_part = np.asarray(self.class_part, dtype=np.float64)
        self.noise_part = np.asarray(self.noise_part, dtype=np.float64)
        if self.class_part.shape != expected or self.noise_part.shape != expected:
            raise ShapeError(
                f"latent parts must have shape {expected}, got "
                f"{self.class_part.shape} and {self.noise_part.shape}"
            )
        if not (np.isfinite(self.class_part).all() and np.isfinite(self.noise_part).all()):
            raise NumericError("latent code contains non-finite entries")

    def copy(self) -> "LatentCode":
        return LatentCode(self.shape, self.class_part.copy(), self.noise_part.copy())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LatentCode):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.class_part, other.class_part)
            and np.array_equal(self.noise_part, other.noise_part)
        )


@dataclass(frozen=True)
class LatentInit:
    """Initialization policy for fresh latent codes.

    strategy: one of ``standard_normal``, ``truncated_normal``, ``zeros``.
    ``bound`` only applies to the truncated strategy (resampling beyond
    ``|x| > bound``), the usual feed for large-scale generators.
    """

    strategy: str = "standard_normal"
    seed: int = 0
    bound: float = 2.0

    def __post_init__(self) -> None:
        if self.strategy not in INIT_STRATEGIES:
            raise ConfigurationError(
                f"unknown init strategy {self.strategy!r}; expected one of {INIT_STRATEGIES}"
            )
        if self.strategy == "truncated_normal" and not self.bound > 0:
            raise ConfigurationError(f"truncation bound must be > 0, got {self.bound}")


def _truncated_normal(rng: np.random.Generator, shape: tuple[int, int], bound: float) -> np.ndarray:
    out = rng.standard_normal(shape)
    bad = np.abs(out) > bound
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > bound
    return out


def new_latent(shape: LatentShape, init: LatentInit) -> LatentCode:
    """Create a latent code following the init policy, deterministic in seed."""
    dims = (shape.num_layers, shape.latent_dim)
    if init.strategy == "zeros":
        return LatentCode(shape, np.zeros(dims), np.zeros(dims))
    rng = np.random.default_rng(init.seed)
    if init.strategy == "standard_normal":
        return LatentCode(shape, rng.standard_normal(dims), rng.standard_normal(dims))
    return LatentCode(
        shape,
        _truncated_normal(rng, dims, init.bound),
        _truncated_normal(rng, dims, init.bound),
    )


def flatten(code: LatentCode) -> np.ndarray:
    """Flat view: class rows in layer order, then noise rows in layer order."""
    return np.concatenate([code.class_part.ravel(), code.noise_part.ravel()])


def unflatten(vector: np.ndarray, shape: LatentShape) -> LatentCode:
    """Inverse of :func:`flatten`; rejects vectors of the wrong length."""
    vector = np.asarray(vector, dtype=np.float64)
    if vector.ndim != 1 or vector.size != shape.total:
        raise ShapeError(
            f"expected a flat vector of length {shape.total}, got size {vector.size}"
        )
    half = shape.total // 2
    dims = (shape.num_layers, shape.latent_dim)
    return LatentCode(shape, vector[:half].reshape(dims).copy(), vector[half:].reshape(dims).copy())


def save_latent(code: LatentCode, path: str | Path) -> None:
    """Write a latent dump: ``latent v1 H Z`` header, one value per line.

    Values are printed with 17 significant digits, enough to round-trip
    float64 exactly.
    """
    lines = [f"latent v1 {code.shape.num_hidden_layers} {code.shape.latent_dim}"]
    lines.extend(f"{v:.17g}" for v in flatten(code))
    Path(path).write_text("\n".join(lines) + "\n")


def load_latent(path: str | Path) -> LatentCode:
    """Read a latent dump written by :func:`save_latent`."""
    text = Path(path).read_text().strip().splitlines()
    if not text:
        raise ShapeError(f"latent dump {path} is empty")
    header = text[0].split()
    if len(header) != 4 or header[0] != "latent" or header[1] != "v1":
        raise ShapeError(f"latent dump {path} has bad header {text[0]!r}")
    shape = LatentShape(num_hidden_layers=int(header[2]), latent_dim=int(header[3]))
    values = np.array([float(line) for line in text[1:]], dtype=np.float64)
    return unflatten(values, shape)
