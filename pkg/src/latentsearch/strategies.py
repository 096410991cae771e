"""Run drivers: Adam descent, CMA-ES, and the hybrid of the two.

All three strategies spend one evaluation per objective forward pass and
record the best and current fitness at every evaluation, so runs with
equal budgets are directly comparable point by point. A gradient step's
own forward pass is the evaluation; no extra scoring calls are made.

Every driver evaluates with a fixed cutout iteration (0), so the
objective is stationary within a run: a zero-learning-rate run leaves
both the latent and the trace flat. Callers wanting different cut
geometry across runs vary the policy's seed_stream per run instead.

Determinism: given (seed, config, backend), every trace is
bit-reproducible. CMA-ES sampling seeds derive from the run seed and the
generation index, so strategies never share or disturb each other's
streams.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .adam import AdamState, adam_init, adam_step
from .cma import cma_ask, cma_init, cma_tell
from .errors import CapabilityError, ConfigurationError, EvaluationError, ShapeError
from .latent import LatentCode, flatten, unflatten
from .objective import Objective
from .seeds import derive_seed


@dataclass
class Budget:
    """Hard cap on objective evaluations; ``used`` never exceeds the cap."""

    max_evaluations: int
    used: int = 0

    def __post_init__(self) -> None:
        if self.max_evaluations < 0:
            raise ConfigurationError(f"max_evaluations must be >= 0, got {self.max_evaluations}")
        if not 0 <= self.used <= self.max_evaluations:
            raise ConfigurationError(
                f"used ({self.used}) must lie in [0, {self.max_evaluations}]"
            )

    @property
    def remaining(self) -> int:
        return self.max_evaluations - self.used

    def charge(self, count: int = 1) -> None:
        if self.used + count > self.max_evaluations:
            raise EvaluationError(
                f"budget exceeded: {self.used} used + {count} > {self.max_evaluations}"
            )
        self.used += count


@dataclass(frozen=True)
class AdamConfig:
    iterations: int = 1000
    lr: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ConfigurationError(f"iterations must be >= 1, got {self.iterations}")


@dataclass(frozen=True)
class CmaConfig:
    generations: int = 100
    population: int = 10
    sigma0: float = 0.2

    def __post_init__(self) -> None:
        if self.generations < 1:
            raise ConfigurationError(f"generations must be >= 1, got {self.generations}")


@dataclass(frozen=True)
class HybridConfig:
    """CMA-ES outer loop with k Adam refinement steps per candidate.

    Each candidate costs k + 1 evaluations per generation (k gradient
    steps plus scoring the refined point), so the defaults spend
    50 x 10 x 2 = 1000 evaluations. Refined vectors are fed back to
    selection (set ``lamarckian=False`` to rank refined losses against
    the raw vectors instead). ``persist_moments`` carries each population
    slot's Adam moments across generations; default is a fresh optimizer
    per candidate.
    """

    generations: int = 50
    population: int = 10
    k: int = 1
    sigma0: float = 0.2
    lr: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lamarckian: bool = True
    persist_moments: bool = False

    def __post_init__(self) -> None:
        if self.generations < 1:
            raise ConfigurationError(f"generations must be >= 1, got {self.generations}")
        if self.k < 0:
            raise ConfigurationError(f"k must be >= 0, got {self.k}")


@dataclass
class RunRecord:
    """One strategy execution: per-evaluation traces and the best result.

    ``final_latent`` is the best latent ever evaluated, so final_fitness
    always equals the last entry of the (nondecreasing) best trace.
    ``partial`` marks runs stopped early by the evaluation budget.
    """

    strategy: str
    run_index: int
    seed: int
    best_fitness_trace: np.ndarray
    current_fitness_trace: np.ndarray
    final_latent: LatentCode
    final_image: np.ndarray
    final_fitness: float
    wall_time: float
    partial: bool = False

    def __post_init__(self) -> None:
        self.best_fitness_trace = np.asarray(self.best_fitness_trace, dtype=np.float64)
        self.current_fitness_trace = np.asarray(self.current_fitness_trace, dtype=np.float64)
        if self.best_fitness_trace.size == 0:
            raise ConfigurationError("a run record needs at least one evaluation")
        if self.best_fitness_trace.shape != self.current_fitness_trace.shape:
            raise ShapeError("best and current traces must have equal length")
        if (np.diff(self.best_fitness_trace) < 0).any():
            raise EvaluationError("best-fitness trace must be nondecreasing")
        if self.final_fitness != self.best_fitness_trace[-1]:
            raise EvaluationError(
                "final_fitness must equal the last best-trace entry, got "
                f"{self.final_fitness} vs {self.best_fitness_trace[-1]}"
            )

    @property
    def evaluations(self) -> int:
        return int(self.best_fitness_trace.size)


class _Tracker:
    """Accumulates traces and the best evaluated vector."""

    def __init__(self):
        self.best_trace: list[float] = []
        self.current_trace: list[float] = []
        self.best_fitness = -np.inf
        self.best_vector: np.ndarray | None = None

    def note(self, fitness: float, vector: np.ndarray) -> None:
        if fitness > self.best_fitness:
            self.best_fitness = fitness
            self.best_vector = vector.copy()
        self.best_trace.append(self.best_fitness)
        self.current_trace.append(fitness)


def _finish(
    tracker: _Tracker,
    strategy: str,
    run_index: int,
    seed: int,
    obj: Objective,
    shape,
    started: float,
    partial: bool,
) -> RunRecord:
    if tracker.best_vector is None:
        raise ConfigurationError(f"budget allowed no {strategy} evaluations")
    final_latent = unflatten(tracker.best_vector, shape)
    final_image = obj.generator.generate(final_latent)
    return RunRecord(
        strategy=strategy,
        run_index=run_index,
        seed=seed,
        best_fitness_trace=np.array(tracker.best_trace),
        current_fitness_trace=np.array(tracker.current_trace),
        final_latent=final_latent,
        final_image=np.asarray(final_image),
        final_fitness=tracker.best_fitness,
        wall_time=time.perf_counter() - started,
        partial=partial,
    )


def run_adam(
    obj: Objective, init: LatentCode, cfg: AdamConfig, budget: Budget, seed: int = 0, run_index: int = 0
) -> RunRecord:
    """Gradient descent from init; every iteration is one evaluation."""
    if not obj.differentiable:
        raise CapabilityError("Adam needs a differentiable objective backend")
    started = time.perf_counter()
    shape = init.shape
    state = adam_init(flatten(init), lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    tracker = _Tracker()
    steps = min(cfg.iterations, budget.remaining)
    for _ in range(steps):
        loss, grad = obj.loss_and_grad(unflatten(state.params, shape), iteration=0)
        budget.charge(1)
        tracker.note(-loss, state.params)
        state = adam_step(state, grad)
    return _finish(
        tracker, "adam", run_index, seed, obj, shape, started, partial=steps < cfg.iterations
    )


def run_cmaes(
    obj: Objective, init: LatentCode, cfg: CmaConfig, budget: Budget, seed: int = 0, run_index: int = 0
) -> RunRecord:
    """CMA-ES from init; population evaluations per generation."""
    started = time.perf_counter()
    shape = init.shape
    state = cma_init(shape.total, flatten(init), cfg.sigma0, cfg.population)
    tracker = _Tracker()
    partial = False
    for gen in range(cfg.generations):
        if budget.remaining < cfg.population:
            partial = True
            break
        candidates = cma_ask(state, derive_seed(seed, "ask", gen))
        losses = []
        for vector in candidates:
            fitness = obj.fitness(unflatten(vector, shape), iteration=0)
            budget.charge(1)
            tracker.note(fitness, vector)
            losses.append(-fitness)
        state = cma_tell(state, candidates, losses)
    return _finish(tracker, "cmaes", run_index, seed, obj, shape, started, partial=partial)


def run_hybrid(
    obj: Objective,
    init: LatentCode,
    cfg: HybridConfig,
    budget: Budget,
    seed: int = 0,
    run_index: int = 0,
) -> RunRecord:
    """CMA-ES where each candidate takes k Adam steps before selection."""
    if cfg.k > 0 and not obj.differentiable:
        raise CapabilityError("the hybrid strategy needs a differentiable objective backend")
    started = time.perf_counter()
    shape = init.shape
    state = cma_init(shape.total, flatten(init), cfg.sigma0, cfg.population)
    tracker = _Tracker()
    partial = False
    cost_per_generation = cfg.population * (cfg.k + 1)
    moments: list[tuple[np.ndarray, np.ndarray, int] | None] = [None] * cfg.population
    for gen in range(cfg.generations):
        if budget.remaining < cost_per_generation:
            partial = True
            break
        candidates = cma_ask(state, derive_seed(seed, "ask", gen))
        refined = []
        losses = []
        for slot, vector in enumerate(candidates):
            adam_state = adam_init(
                vector, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps
            )
            if cfg.persist_moments and moments[slot] is not None:
                m, v, t = moments[slot]
                adam_state = AdamState(
                    params=adam_state.params, m=m, v=v, t=t,
                    lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps,
                )
            for _ in range(cfg.k):
                loss, grad = obj.loss_and_grad(unflatten(adam_state.params, shape), iteration=0)
                budget.charge(1)
                tracker.note(-loss, adam_state.params)
                adam_state = adam_step(adam_state, grad)
            fitness = obj.fitness(unflatten(adam_state.params, shape), iteration=0)
            budget.charge(1)
            tracker.note(fitness, adam_state.params)
            if cfg.persist_moments:
                moments[slot] = (adam_state.m, adam_state.v, adam_state.t)
            refined.append(adam_state.params)
            losses.append(-fitness)
        state = cma_tell(state, refined if cfg.lamarckian else candidates, losses)
    return _finish(tracker, "hybrid", run_index, seed, obj, shape, started, partial=partial)


def save_trace(record: RunRecord, path: str | Path) -> None:
    """Write the per-evaluation trace CSV (1-based evaluation index).

    Floats are printed with 17 significant digits so reloading reproduces
    the trace bit for bit.
    """
    lines = ["evaluation,best_fitness,current_fitness"]
    for i, (best, current) in enumerate(
        zip(record.best_fitness_trace, record.current_fitness_trace), start=1
    ):
        lines.append(f"{i},{best:.17g},{current:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_trace(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read a trace CSV back as (best_fitness, current_fitness) arrays."""
    lines = Path(path).read_text().strip().splitlines()
    if not lines or lines[0] != "evaluation,best_fitness,current_fitness":
        raise ShapeError(f"trace file {path} has a bad header")
    best, current = [], []
    for number, line in enumerate(lines[1:], start=1):
        cells = line.split(",")
        if len(cells) != 3 or int(cells[0]) != number:
            raise ShapeError(f"trace file {path} is corrupt at row {number}")
        best.append(float(cells[1]))
        current.append(float(cells[2]))
    return np.array(best), np.array(current)
