"""CMA-ES: covariance matrix adaptation with cumulative step-size control.

Implements the standard (mu/mu_w, lambda) scheme with rank-1 plus rank-mu
covariance updates and lazy eigendecomposition. Strategy constants follow
the published defaults as functions of the dimension and mu_eff; they are
spelled out in :func:`cma_init` so the state is self-describing.

Selection is rank-based with a stable sort, so any strictly monotone
transformation of the losses yields a bit-identical next state.

``cma_tell`` is functional (returns a new state). ``cma_ask`` mutates
nothing but the eigendecomposition cache, which holds derived data only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericError, ShapeError


@dataclass
class EigenCache:
    """Cached eigendecomposition of C, refreshed lazily.

    ``eigenvectors @ diag(eigenvalues) @ eigenvectors.T`` reproduces the C
    it was computed from; ``age`` counts tells since that refresh.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    age: int = 0


@dataclass
class CmaState:
    """Full sampling-distribution state after ``generation`` tells."""

    mean: np.ndarray
    sigma: float
    cov: np.ndarray
    p_sigma: np.ndarray
    p_c: np.ndarray
    weights: np.ndarray
    mu_eff: float
    c_sigma: float
    d_sigma: float
    c_c: float
    c_1: float
    c_mu: float
    chi_n: float
    lam: int
    generation: int
    eigen: EigenCache
    # tells between eigendecomposition refreshes; O(1/(D*(c_1+c_mu)))
    # keeps the decomposition cost below the sampling cost
    refresh_every: int

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def mu(self) -> int:
        return self.weights.size


def cma_init(dim: int, mean0: np.ndarray, sigma0: float, lam: int) -> CmaState:
    """Identity-covariance state centered on mean0.

    Recombination weights are log-rank: w_i proportional to
    ln(mu + 1/2) - ln(i) over the best mu = floor(lambda/2) candidates,
    normalized to sum 1.
    """
    if dim < 1:
        raise ConfigurationError(f"dim must be >= 1, got {dim}")
    if not sigma0 > 0:
        raise ConfigurationError(f"sigma0 must be > 0, got {sigma0}")
    if lam < 2:
        raise ConfigurationError(f"population size must be >= 2, got {lam}")
    mean0 = np.asarray(mean0, dtype=np.float64)
    if mean0.shape != (dim,):
        raise ShapeError(f"mean0 must be a vector of length {dim}, got shape {mean0.shape}")

    mu = lam // 2
    raw = np.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    weights = raw / raw.sum()
    mu_eff = 1.0 / float(np.sum(weights**2))

    c_sigma = (mu_eff + 2.0) / (dim + mu_eff + 5.0)
    d_sigma = 1.0 + 2.0 * max(0.0, np.sqrt((mu_eff - 1.0) / (dim + 1.0)) - 1.0) + c_sigma
    c_c = (4.0 + mu_eff / dim) / (dim + 4.0 + 2.0 * mu_eff / dim)
    c_1 = 2.0 / ((dim + 1.3) ** 2 + mu_eff)
    c_mu = min(1.0 - c_1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((dim + 2.0) ** 2 + mu_eff))
    chi_n = np.sqrt(dim) * (1.0 - 1.0 / (4.0 * dim) + 1.0 / (21.0 * dim**2))

    return CmaState(
        mean=mean0.copy(),
        sigma=float(sigma0),
        cov=np.eye(dim),
        p_sigma=np.zeros(dim),
        p_c=np.zeros(dim),
        weights=weights,
        mu_eff=mu_eff,
        c_sigma=float(c_sigma),
        d_sigma=float(d_sigma),
        c_c=float(c_c),
        c_1=float(c_1),
        c_mu=float(c_mu),
        chi_n=float(chi_n),
        lam=lam,
        generation=0,
        eigen=EigenCache(eigenvalues=np.ones(dim), eigenvectors=np.eye(dim), age=0),
        refresh_every=max(1, int(1.0 / (10.0 * dim * (c_1 + c_mu)))),
    )


def _refresh_eigen(state: CmaState) -> None:
    sym = (state.cov + state.cov.T) / 2.0
    values, vectors = np.linalg.eigh(sym)
    if not np.isfinite(values).all() or values.min() <= 0.0:
        raise NumericError(
            f"covariance lost positive definiteness at generation {state.generation} "
            f"(min eigenvalue {values.min():.3g})"
        )
    state.eigen.eigenvalues = values
    state.eigen.eigenvectors = vectors
    state.eigen.age = 0


def cma_ask(state: CmaState, rng_seed) -> list[np.ndarray]:
    """Sample lambda candidates: mean + sigma * B * sqrt(d) * n_i.

    Deterministic in rng_seed. Refreshes the eigendecomposition cache
    first when it is stale.
    """
    if state.eigen.age >= state.refresh_every:
        _refresh_eigen(state)
    rng = np.random.default_rng(rng_seed)
    normals = rng.standard_normal((state.lam, state.dim))
    transform = state.eigen.eigenvectors * np.sqrt(state.eigen.eigenvalues)
    candidates = state.mean + state.sigma * (normals @ transform.T)
    return [candidates[i] for i in range(state.lam)]


def cma_tell(state: CmaState, candidates: list[np.ndarray], losses) -> CmaState:
    """Rank candidates by loss (ascending, ties by input order) and adapt.

    Updates mean (weighted recombination), both evolution paths, the step
    size (cumulative step-size adaptation), and the covariance (rank-1
    plus rank-mu, with the stall correction when the sigma path is long).
    """
    losses = np.asarray(losses, dtype=np.float64)
    if len(candidates) != state.lam or losses.shape != (state.lam,):
        raise ShapeError(
            f"expected {state.lam} candidates and losses, got {len(candidates)} and {losses.shape}"
        )
    matrix = np.asarray(candidates, dtype=np.float64)
    if matrix.shape != (state.lam, state.dim):
        raise ShapeError(f"candidates must each have length {state.dim}")
    if not np.isfinite(losses).all():
        raise NumericError(f"non-finite loss at generation {state.generation}")

    order = np.argsort(losses, kind="stable")
    selected = matrix[order[: state.mu]]

    old_mean = state.mean
    new_mean = state.weights @ selected
    shift = (new_mean - old_mean) / state.sigma

    # whitened shift via the cached decomposition (B d^-1/2 B^T)
    basis = state.eigen.eigenvectors
    whitened = basis @ ((basis.T @ shift) / np.sqrt(state.eigen.eigenvalues))

    generation = state.generation + 1
    p_sigma = (1.0 - state.c_sigma) * state.p_sigma + np.sqrt(
        state.c_sigma * (2.0 - state.c_sigma) * state.mu_eff
    ) * whitened
    path_norm = float(np.linalg.norm(p_sigma))
    expected = np.sqrt(1.0 - (1.0 - state.c_sigma) ** (2 * generation))
    h_sigma = 1.0 if path_norm / expected / state.chi_n < 1.4 + 2.0 / (state.dim + 1.0) else 0.0

    p_c = (1.0 - state.c_c) * state.p_c + h_sigma * np.sqrt(
        state.c_c * (2.0 - state.c_c) * state.mu_eff
    ) * shift

    steps = (selected - old_mean) / state.sigma
    rank_mu = steps.T @ (state.weights[:, None] * steps)
    stall_fill = (1.0 - h_sigma) * state.c_c * (2.0 - state.c_c)
    cov = (
        (1.0 - state.c_1 - state.c_mu) * state.cov
        + state.c_1 * (np.outer(p_c, p_c) + stall_fill * state.cov)
        + state.c_mu * rank_mu
    )
    cov = (cov + cov.T) / 2.0

    sigma = state.sigma * float(
        np.exp((state.c_sigma / state.d_sigma) * (path_norm / state.chi_n - 1.0))
    )
    if not np.isfinite(sigma) or sigma <= 0.0:
        raise NumericError(f"step size became {sigma} at generation {generation}")

    return CmaState(
        mean=new_mean,
        sigma=sigma,
        cov=cov,
        p_sigma=p_sigma,
        p_c=p_c,
        weights=state.weights,
        mu_eff=state.mu_eff,
        c_sigma=state.c_sigma,
        d_sigma=state.d_sigma,
        c_c=state.c_c,
        c_1=state.c_1,
        c_mu=state.c_mu,
        chi_n=state.chi_n,
        lam=state.lam,
        generation=generation,
        eigen=EigenCache(
            eigenvalues=state.eigen.eigenvalues,
            eigenvectors=state.eigen.eigenvectors,
            age=state.eigen.age + 1,
        ),
        refresh_every=state.refresh_every,
    )
