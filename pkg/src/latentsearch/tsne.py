"""Exact t-SNE for modest point counts.

Dense O(N^2) implementation: per-row Gaussian bandwidths calibrated by
bisection to a target perplexity, Student-t low-dimensional affinities,
and plain momentum gradient descent with early exaggeration. Everything
is deterministic in the config seed.

Perplexity here is 2 to the Shannon entropy (bits) of a conditional
affinity row, the usual smooth stand-in for a neighbor count.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericError, NumericWarning, ShapeError


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 40.0
    iterations: int = 1000
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    learning_rate: float = 200.0
    momentum_initial: float = 0.5
    momentum_final: float = 0.8
    momentum_switch_iter: int = 250
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.perplexity > 1.0:
            raise ConfigurationError(f"perplexity must be > 1, got {self.perplexity}")
        if self.iterations < 1:
            raise ConfigurationError(f"iterations must be >= 1, got {self.iterations}")
        if self.learning_rate <= 0 or self.early_exaggeration < 1:
            raise ConfigurationError("learning_rate must be > 0 and early_exaggeration >= 1")


@dataclass
class TsneResult:
    """Embedded points plus KL(P||Q) checkpoints, keyed by 1-based iteration.

    KL checkpoints are always computed against the plain (unexaggerated)
    P, so values at different iterations are directly comparable.
    """

    points: np.ndarray
    kl_checkpoints: dict[int, float]


def _pairwise_sq_distances(features: np.ndarray) -> np.ndarray:
    sq = np.sum(features**2, axis=1)
    dist = sq[:, None] + sq[None, :] - 2.0 * (features @ features.T)
    np.fill_diagonal(dist, 0.0)
    return np.maximum(dist, 0.0)


def _row_affinities(dist_row: np.ndarray, beta: float) -> tuple[np.ndarray, float]:
    """Conditional affinities and perplexity for one row at bandwidth beta."""
    shifted = dist_row - dist_row.min()
    weights = np.exp(-beta * shifted)
    total = weights.sum()
    probs = weights / total
    positive = probs[probs > 0]
    entropy_bits = -float(np.sum(positive * np.log2(positive)))
    return probs, 2.0**entropy_bits


def conditional_affinities(
    features: np.ndarray, perplexity: float, tol: float = 1e-5, max_steps: int = 200
) -> tuple[np.ndarray, np.ndarray]:
    """Per-row conditional Gaussian affinities calibrated by bisection.

    Returns (P_conditional, betas). Each row's perplexity matches the
    target within tol; rows that fail to converge in max_steps keep the
    closest bandwidth found and raise a NumericWarning stating the
    achieved value.
    """
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    if features.ndim != 2 or n < 3:
        raise ShapeError(f"need at least 3 feature vectors in a 2-D array, got shape {features.shape}")
    if perplexity > n - 1:
        raise ConfigurationError(f"perplexity must be at most N-1 = {n - 1}, got {perplexity}")

    distances = _pairwise_sq_distances(features)
    off_diag = ~np.eye(n, dtype=bool)
    cond = np.zeros((n, n))
    betas = np.ones(n)
    worst_gap = 0.0
    worst_achieved = perplexity
    for i in range(n):
        row = distances[i][off_diag[i]]
        beta, lo, hi = 1.0, 0.0, np.inf
        probs, perp = _row_affinities(row, beta)
        for _ in range(max_steps):
            if abs(perp - perplexity) <= tol:
                break
            if perp > perplexity:
                lo = beta
                beta = beta * 2.0 if np.isinf(hi) else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (lo + beta) / 2.0
            probs, perp = _row_affinities(row, beta)
        gap = abs(perp - perplexity)
        if gap > tol and gap > worst_gap:
            worst_gap = gap
            worst_achieved = perp
        cond[i][off_diag[i]] = probs
        betas[i] = beta
    if worst_gap > tol:
        warnings.warn(
            f"bandwidth bisection left a row at perplexity {worst_achieved:.6f} "
            f"(target {perplexity}, tolerance {tol})",
            NumericWarning,
        )
    return cond, betas


def calibrate_affinities(features: np.ndarray, perplexity: float) -> np.ndarray:
    """Symmetrized joint affinities P = (P_cond + P_cond^T) / 2N, sum 1."""
    cond, _ = conditional_affinities(features, perplexity)
    joint = (cond + cond.T) / (2.0 * cond.shape[0])
    return joint / joint.sum()


def _kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    p_safe = np.maximum(p, 1e-12)
    q_safe = np.maximum(q, 1e-12)
    return float(np.sum(p * np.log(p_safe / q_safe)))


def _student_t_affinities(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    kernel = 1.0 / (1.0 + _pairwise_sq_distances(points))
    np.fill_diagonal(kernel, 0.0)
    return kernel / kernel.sum(), kernel


def tsne_embed(features: np.ndarray, cfg: TsneConfig) -> TsneResult:
    """Project features to 2D by gradient descent on KL(P || Q).

    Early exaggeration scales P for the first exaggeration_iters
    iterations; momentum switches at momentum_switch_iter. KL checkpoints
    are recorded at iteration 50 (when reached) and at the final
    iteration, both against the unexaggerated P.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 5:
        raise ShapeError(f"need at least 5 feature vectors, got shape {features.shape}")
    # identical feature vectors share one embedded point, so two copies of
    # the same sample set always occupy the same grid cells
    unique, inverse = np.unique(features, axis=0, return_inverse=True)
    joint = calibrate_affinities(unique, cfg.perplexity)

    n = unique.shape[0]
    rng = np.random.default_rng(cfg.seed)
    points = 1e-4 * rng.standard_normal((n, 2))
    velocity = np.zeros_like(points)
    # per-coordinate adaptive gains keep the fixed learning rate stable
    gains = np.ones_like(points)
    checkpoints: dict[int, float] = {}

    for iteration in range(1, cfg.iterations + 1):
        p_eff = joint * cfg.early_exaggeration if iteration <= cfg.exaggeration_iters else joint
        # overflow surfaces as non-finite values, reported with the iteration
        with np.errstate(over="ignore", invalid="ignore"):
            q, kernel = _student_t_affinities(points)
            graded = (p_eff - q) * kernel
            grad = 4.0 * ((np.diag(graded.sum(axis=1)) - graded) @ points)
        if not np.isfinite(grad).all():
            raise NumericError(f"embedding diverged at iteration {iteration}")

        momentum = (
            cfg.momentum_initial
            if iteration <= cfg.momentum_switch_iter
            else cfg.momentum_final
        )
        flipped = np.sign(grad) != np.sign(velocity)
        gains = np.where(flipped, gains + 0.2, gains * 0.8)
        np.clip(gains, 0.01, None, out=gains)
        velocity = momentum * velocity - cfg.learning_rate * gains * grad
        points = points + velocity
        points = points - points.mean(axis=0)
        if not np.isfinite(points).all():
            raise NumericError(f"embedding diverged at iteration {iteration}")

        if iteration == 50 or iteration == cfg.iterations:
            q_plain, _ = _student_t_affinities(points)
            checkpoints[iteration] = _kl_divergence(joint, q_plain)

    return TsneResult(points=points[inverse], kl_checkpoints=checkpoints)
