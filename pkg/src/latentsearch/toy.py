"""Small deterministic generator/encoder pair with an exact gradient.

The pair mirrors the layered conditioning of a full-scale generator at
desk scale: stage 0 consumes the first layer's (class, noise) pair, and
every later stage consumes the previous hidden state concatenated with
its own layer's pair, so each layer of the latent influences the image.
All weights are frozen pseudorandom draws from a seed; nothing is ever
trained. Activations are tanh throughout, keeping the whole objective
smooth so gradient checks have no subgradient ambiguity.

``ToyPipeline.loss_and_grad`` implements reverse-mode differentiation of
the full evaluation (generator, window cuts, bilinear resize, encoder,
cosine aggregation) by hand; :func:`finite_diff_grad` is the independent
oracle used to verify it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NumericError, ShapeError
from .latent import LatentCode, LatentShape, unflatten
from .objective import CutoutPolicy, Objective, resize_bilinear, resize_operator, sample_cut_windows
from .seeds import derive_seed

TOY_SHAPE = LatentShape(num_hidden_layers=2, latent_dim=16)


class ToyGenerator:
    """Layered tanh network from a latent code to a small RGB image.

    Output values are mapped to [0, 1] via (tanh + 1) / 2, so images are
    bounded for any latent.
    """

    def __init__(
        self,
        shape: LatentShape = TOY_SHAPE,
        hidden_dim: int = 64,
        image_size: int = 32,
        seed: int = 0,
    ):
        self.shape = shape
        self.hidden_dim = hidden_dim
        self.image_size = image_size
        self.seed = seed
        rng = np.random.default_rng(seed)
        layer_in = 2 * shape.latent_dim
        self.weights = [rng.standard_normal((hidden_dim, layer_in)) / np.sqrt(layer_in)]
        self.biases = [0.2 * rng.standard_normal(hidden_dim)]
        stage_in = hidden_dim + layer_in
        for _ in range(shape.num_hidden_layers):
            self.weights.append(rng.standard_normal((hidden_dim, stage_in)) / np.sqrt(stage_in))
            self.biases.append(0.2 * rng.standard_normal(hidden_dim))
        out_dim = image_size * image_size * 3
        self.image_weight = rng.standard_normal((out_dim, hidden_dim)) / np.sqrt(hidden_dim)
        self.image_bias = 0.2 * rng.standard_normal(out_dim)

    def _layer_inputs(self, code: LatentCode) -> np.ndarray:
        if code.shape != self.shape:
            raise ShapeError(f"latent shape {code.shape} does not match generator {self.shape}")
        return np.concatenate([code.class_part, code.noise_part], axis=1)

    def forward(self, code: LatentCode) -> tuple[np.ndarray, list[np.ndarray], np.ndarray]:
        """Image plus the cached activations the backward pass needs."""
        inputs = self._layer_inputs(code)
        hidden = [np.tanh(self.weights[0] @ inputs[0] + self.biases[0])]
        for i in range(1, self.shape.num_layers):
            stacked = np.concatenate([hidden[-1], inputs[i]])
            hidden.append(np.tanh(self.weights[i] @ stacked + self.biases[i]))
        pre_image = np.tanh(self.image_weight @ hidden[-1] + self.image_bias)
        img = ((pre_image + 1.0) / 2.0).reshape(self.image_size, self.image_size, 3)
        return img, hidden, pre_image

    def generate(self, code: LatentCode) -> np.ndarray:
        return self.forward(code)[0]

    def backward(
        self, code: LatentCode, hidden: list[np.ndarray], pre_image: np.ndarray, d_img: np.ndarray
    ) -> np.ndarray:
        """Flat-latent gradient given the gradient w.r.t. the image."""
        d_pre = d_img.ravel() * (1.0 - pre_image**2) / 2.0
        d_h = self.image_weight.T @ d_pre
        latent_dim = self.shape.latent_dim
        layer_grads = np.empty((self.shape.num_layers, 2 * latent_dim))
        for i in range(self.shape.num_layers - 1, 0, -1):
            d_stage = d_h * (1.0 - hidden[i] ** 2)
            d_stacked = self.weights[i].T @ d_stage
            d_h = d_stacked[: self.hidden_dim]
            layer_grads[i] = d_stacked[self.hidden_dim :]
        layer_grads[0] = self.weights[0].T @ (d_h * (1.0 - hidden[0] ** 2))
        return np.concatenate([layer_grads[:, :latent_dim].ravel(), layer_grads[:, latent_dim:].ravel()])


class ToyEncoder:
    """Frozen affine-tanh map from an image to a unit-norm feature vector."""

    def __init__(self, input_size: int = 64, feature_dim: int = 32, seed: int = 1, gain: float = 1.0):
        self.input_size = input_size
        self.feature_dim = feature_dim
        self.seed = seed
        self.gain = gain
        rng = np.random.default_rng(seed)
        flat = input_size * input_size * 3
        self.weight = gain * rng.standard_normal((feature_dim, flat)) / np.sqrt(flat)
        self.bias = 0.2 * gain * rng.standard_normal(feature_dim)

    def _check(self, img: np.ndarray) -> np.ndarray:
        img = np.asarray(img, dtype=np.float64)
        if img.shape != (self.input_size, self.input_size, 3):
            raise ShapeError(
                f"encoder expects a ({self.input_size}, {self.input_size}, 3) image, "
                f"got {img.shape}"
            )
        return img

    def encode(self, img: np.ndarray) -> np.ndarray:
        img = self._check(img)
        raw = np.tanh(self.weight @ img.ravel() + self.bias)
        norm = float(np.linalg.norm(raw))
        if norm == 0.0:
            raise NumericError("encoder produced a zero feature vector")
        return raw / norm


@dataclass(frozen=True)
class ToyTextTarget:
    """Pseudorandom unit target derived from a stable hash of the text."""

    text: str
    features: np.ndarray

    @classmethod
    def from_text(cls, text: str, feature_dim: int = 32) -> "ToyTextTarget":
        rng = np.random.default_rng(derive_seed("text-target", text))
        raw = rng.standard_normal(feature_dim)
        return cls(text=text, features=raw / np.linalg.norm(raw))


class ToyPipeline:
    """Generator/encoder pair wired for joint differentiation.

    The ``loss_and_grad`` hook returns the loss (negated mean cosine
    similarity over cuts) and its exact gradient with respect to the flat
    latent, computed in one documented accumulation order: cuts are
    processed in sampling order and their image gradients summed
    sequentially.
    """

    def __init__(
        self,
        shape: LatentShape = TOY_SHAPE,
        hidden_dim: int = 64,
        image_size: int = 32,
        feature_dim: int = 32,
        encoder_input_size: int = 64,
        encoder_gain: float = 1.0,
        seed: int = 0,
    ):
        self.seed = seed
        self.generator = ToyGenerator(
            shape, hidden_dim=hidden_dim, image_size=image_size, seed=derive_seed(seed, "generator")
        )
        self.encoder = ToyEncoder(
            input_size=encoder_input_size,
            feature_dim=feature_dim,
            seed=derive_seed(seed, "encoder"),
            gain=encoder_gain,
        )

    @property
    def shape(self) -> LatentShape:
        return self.generator.shape

    def generate(self, code: LatentCode) -> np.ndarray:
        return self.generator.generate(code)

    def encode(self, img: np.ndarray) -> np.ndarray:
        return self.encoder.encode(img)

    def encode_image(self, img: np.ndarray) -> np.ndarray:
        """Encode an image of any square size, resizing to the encoder input."""
        img = np.asarray(img, dtype=np.float64)
        if img.shape[0] != self.encoder.input_size or img.shape[1] != self.encoder.input_size:
            img = resize_bilinear(img, self.encoder.input_size)
        return self.encoder.encode(img)

    def encode_text(self, text: str) -> np.ndarray:
        return ToyTextTarget.from_text(text, self.encoder.feature_dim).features

    def identity(self) -> str:
        gen, enc = self.generator, self.encoder
        return (
            f"toy:h{gen.shape.num_hidden_layers},z{gen.shape.latent_dim},"
            f"hidden{gen.hidden_dim},img{gen.image_size},feat{enc.feature_dim},"
            f"enc_in{enc.input_size},gain{enc.gain:g},seed{self.seed}"
        )

    def objective(self, target: np.ndarray, cutouts: CutoutPolicy | None = None) -> Objective:
        return Objective(
            generator=self.generator,
            encoder=self.encoder,
            target=target,
            cutouts=cutouts if cutouts is not None else CutoutPolicy(),
            grad_fn=self.loss_and_grad,
        )

    def loss_and_grad(
        self, code: LatentCode, target: np.ndarray, policy: CutoutPolicy, iteration: int
    ) -> tuple[float, np.ndarray]:
        gen, enc = self.generator, self.encoder
        if policy.resize_to != enc.input_size:
            raise ShapeError(
                f"cut size {policy.resize_to} does not match encoder input {enc.input_size}"
            )
        target = np.asarray(target, dtype=np.float64)
        unit_target = target / np.linalg.norm(target)

        img, hidden, pre_image = gen.forward(code)
        size = gen.image_size
        windows = sample_cut_windows(size, size, policy, iteration)
        out = policy.resize_to

        # cuts are square, so one interpolation operator serves both axes
        operators = {side: resize_operator(side, out) for _, _, side in windows}
        flat_cuts = np.empty((len(windows), out * out * 3))
        for k, (top, left, side) in enumerate(windows):
            op = operators[side]
            crop = img[top : top + side, left : left + side]
            mixed = np.tensordot(op, crop, axes=(0, 0))
            flat_cuts[k] = np.tensordot(mixed, op, axes=(1, 0)).transpose(0, 2, 1).ravel()

        raw = np.tanh(flat_cuts @ enc.weight.T + enc.bias)
        norms = np.linalg.norm(raw, axis=1)
        projections = raw @ unit_target
        sims = projections / norms
        loss = -float(np.mean(sims))

        # d(sims_k)/d(raw_k) = (t - sims_k * raw_k / norms_k) / norms_k
        d_sim = -1.0 / len(windows)
        d_raw = d_sim * (unit_target[None, :] - (sims / norms)[:, None] * raw) / norms[:, None]
        d_flat_cuts = (d_raw * (1.0 - raw**2)) @ enc.weight

        d_img = np.zeros_like(img)
        for k, (top, left, side) in enumerate(windows):
            op = operators[side]
            d_resized = d_flat_cuts[k].reshape(out, out, 3)
            mixed = np.tensordot(op, d_resized, axes=(1, 0))
            d_crop = np.tensordot(mixed, op, axes=(1, 1)).transpose(0, 2, 1)
            d_img[top : top + side, left : left + side] += d_crop

        return loss, gen.backward(code, hidden, pre_image, d_img)


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray, step: float) -> np.ndarray:
    """Central-difference gradient oracle, one coordinate at a time."""
    if step <= 0:
        raise ValueError(f"step must be > 0, got {step}")
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(x)
    for i in range(x.size):
        forward = x.copy()
        backward = x.copy()
        forward[i] += step
        backward[i] -= step
        grad[i] = (f(forward) - f(backward)) / (2.0 * step)
    return grad


def multimodal_target(
    pipeline: ToyPipeline,
    policy: CutoutPolicy,
    num_modes: int = 4,
    separation: float = 8.0,
    seed: int = 0,
) -> tuple[np.ndarray, list[LatentCode]]:
    """Target feature reachable from several separated latent basins.

    Anchor latents sit on mutually orthogonal directions scaled to norm
    ``separation``; the target is the normalized sum of the anchors'
    full-frame features, so each anchor neighborhood scores highly while
    no single anchor matches the target outright.
    """
    total = pipeline.shape.total
    if num_modes < 2 or num_modes > total:
        raise ValueError(f"num_modes must be in [2, {total}], got {num_modes}")
    rng = np.random.default_rng(derive_seed("multimodal-target", seed))
    basis, _ = np.linalg.qr(rng.standard_normal((total, num_modes)))
    anchors = [unflatten(separation * basis[:, i], pipeline.shape) for i in range(num_modes)]
    feats = [
        pipeline.encode(resize_bilinear(pipeline.generate(anchor), policy.resize_to))
        for anchor in anchors
    ]
    mixed = np.sum(feats, axis=0)
    return mixed / np.linalg.norm(mixed), anchors
