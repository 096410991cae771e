"""Experiment orchestration: configured sweeps, artifacts, and reports.

An experiment is a text target plus a list of labeled strategies, each
executed ``runs_per_strategy`` times against one backend. Every run gets
a seed derived from (master_seed, strategy label, run index), so adding
a strategy to the config never changes the seeds of existing runs, and
a finished run directory is always reproducible from the config file.

Layout under ``output_dir``::

    <name>/experiment.json            frozen canonical config
    <name>/<label>/run_0000/trace.csv
    <name>/<label>/run_0000/latent.txt
    <name>/<label>/run_0000/final.png
    <name>/<label>/run_0000/manifest
    <name>/reports/...               written by evaluate_experiment
"""

from __future__ import annotations

import hashlib
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import (
    BridgeProtocolError,
    ConfigurationError,
    EvaluationError,
    NumericError,
)
from .evaluation import (
    FitnessCurves,
    JaccardReport,
    evaluate_methods,
    fitness_curves,
    point_cells,
    save_curves,
    save_grid_montage,
    save_report,
)
from .latent import LatentInit, LatentShape, new_latent, save_latent
from .objective import CutoutPolicy
from .seeds import derive_seed
from .strategies import (
    AdamConfig,
    Budget,
    CmaConfig,
    HybridConfig,
    RunRecord,
    load_trace,
    run_adam,
    run_cmaes,
    run_hybrid,
    save_trace,
)
from .toy import ToyPipeline
from .tsne import TsneConfig, tsne_embed

MANIFEST_SCHEMA = 1

_STRATEGY_KINDS = {"adam": AdamConfig, "cmaes": CmaConfig, "hybrid": HybridConfig}


@dataclass(frozen=True)
class StrategySpec:
    """One labeled entry in an experiment's strategy list."""

    label: str
    kind: str
    config: AdamConfig | CmaConfig | HybridConfig

    def __post_init__(self) -> None:
        if not self.label or "/" in self.label or self.label == "reports":
            raise ConfigurationError(f"unusable strategy label {self.label!r}")
        if self.kind not in _STRATEGY_KINDS:
            raise ConfigurationError(
                f"unknown strategy kind {self.kind!r}; expected one of {sorted(_STRATEGY_KINDS)}"
            )


@dataclass(frozen=True)
class EvalSettings:
    perplexity: float = 40.0
    tsne_iterations: int = 1000
    repeats: int = 30
    samples_per_model: int = 500
    grid_size: int = 0  # 0 means ceil(sqrt(pooled sample count))
    baseline: str = ""  # empty means highest mean final fitness

    def __post_init__(self) -> None:
        if self.samples_per_model < 1:
            raise ConfigurationError(
                f"samples_per_model must be >= 1, got {self.samples_per_model}"
            )
        if self.grid_size < 0:
            raise ConfigurationError(f"grid_size must be >= 0, got {self.grid_size}")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    text: str
    strategies: tuple[StrategySpec, ...]
    output_dir: Path = Path("out")
    backend_kind: str = "toy"
    backend_seed: int = 0
    endpoint: str = ""
    encoder_gain: float = 1.0
    hidden_layers: int = 2
    latent_dim: int = 16
    runs_per_strategy: int = 500
    evaluations: int = 1000
    master_seed: int = 0
    parallelism: int = 1
    num_cuts: int = 8
    min_fraction: float = 0.4
    max_fraction: float = 1.0
    resize_to: int = 64
    evaluation: EvalSettings = field(default_factory=EvalSettings)

    def __post_init__(self) -> None:
        if not self.name or "/" in self.name:
            raise ConfigurationError(f"unusable experiment name {self.name!r}")
        if not self.strategies:
            raise ConfigurationError("an experiment needs at least one strategy")
        labels = [spec.label for spec in self.strategies]
        if len(set(labels)) != len(labels):
            raise ConfigurationError(f"strategy labels must be unique, got {labels}")
        if self.runs_per_strategy < 1:
            raise ConfigurationError(
                f"runs_per_strategy must be >= 1, got {self.runs_per_strategy}"
            )
        if self.evaluations < 1:
            raise ConfigurationError(f"evaluations must be >= 1, got {self.evaluations}")
        if self.parallelism < 1:
            raise ConfigurationError(f"parallelism must be >= 1, got {self.parallelism}")
        if self.backend_kind not in ("toy", "bridge"):
            raise ConfigurationError(
                f"backend kind must be 'toy' or 'bridge', got {self.backend_kind!r}"
            )
        if self.backend_kind == "bridge" and not self.endpoint:
            raise ConfigurationError("bridge backend needs an endpoint")

    @property
    def shape(self) -> LatentShape:
        return LatentShape(self.hidden_layers, self.latent_dim)

    def cutout_policy(self, seed_stream: int) -> CutoutPolicy:
        return CutoutPolicy(
            num_cuts=self.num_cuts,
            min_fraction=self.min_fraction,
            max_fraction=self.max_fraction,
            resize_to=self.resize_to,
            seed_stream=seed_stream,
        )

    def canonical(self) -> dict:
        """JSON-ready dict: the frozen description written to experiment.json."""
        payload = asdict(self)
        payload["output_dir"] = str(self.output_dir)
        payload["strategies"] = [
            {"label": spec.label, "kind": spec.kind, **asdict(spec.config)}
            for spec in self.strategies
        ]
        return payload

    def run_hash(self) -> str:
        """Hash of every field that affects run artifacts (not evaluation)."""
        payload = self.canonical()
        for key in ("output_dir", "name", "evaluation", "parallelism"):
            payload.pop(key)
        blob = json.dumps(payload, sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _take_section(data: dict, name: str, allowed: set[str]) -> dict:
    section = data.pop(name, {})
    if not isinstance(section, dict):
        raise ConfigurationError(f"[{name}] must be a table")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigurationError(f"unknown keys in [{name}]: {sorted(unknown)}")
    return section


def _parse_strategy(entry: dict) -> StrategySpec:
    entry = dict(entry)
    label = entry.pop("label", None)
    kind = entry.pop("kind", None)
    if label is None or kind is None:
        raise ConfigurationError("every [[strategy]] needs 'label' and 'kind'")
    cls = _STRATEGY_KINDS.get(kind)
    if cls is None:
        raise ConfigurationError(
            f"unknown strategy kind {kind!r}; expected one of {sorted(_STRATEGY_KINDS)}"
        )
    allowed = set(cls.__dataclass_fields__)
    unknown = set(entry) - allowed
    if unknown:
        raise ConfigurationError(
            f"unknown keys for strategy {label!r} ({kind}): {sorted(unknown)}"
        )
    return StrategySpec(label=label, kind=kind, config=cls(**entry))


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse an experiment config file (TOML) into an ExperimentConfig."""
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid TOML: {exc}") from None

    experiment = _take_section(
        data,
        "experiment",
        {
            "name",
            "text",
            "output_dir",
            "runs_per_strategy",
            "evaluations",
            "master_seed",
            "parallelism",
        },
    )
    backend = _take_section(
        data,
        "backend",
        {"kind", "seed", "endpoint", "encoder_gain"},
    )
    latent = _take_section(data, "latent", {"hidden_layers", "latent_dim"})
    cutouts = _take_section(
        data, "cutouts", {"count", "min_fraction", "max_fraction", "resize_to"}
    )
    evaluation = _take_section(
        data,
        "evaluation",
        {
            "perplexity",
            "tsne_iterations",
            "repeats",
            "samples_per_model",
            "grid_size",
            "baseline",
        },
    )
    strategies = data.pop("strategy", [])
    if data:
        raise ConfigurationError(f"unknown config sections: {sorted(data)}")
    if not isinstance(strategies, list):
        raise ConfigurationError("[[strategy]] must be an array of tables")

    if "name" not in experiment or "text" not in experiment:
        raise ConfigurationError("[experiment] needs 'name' and 'text'")

    kwargs = dict(
        name=experiment["name"],
        text=experiment["text"],
        strategies=tuple(_parse_strategy(entry) for entry in strategies),
        evaluation=EvalSettings(**evaluation),
    )
    if "output_dir" in experiment:
        kwargs["output_dir"] = Path(experiment["output_dir"])
    for key in ("runs_per_strategy", "evaluations", "master_seed", "parallelism"):
        if key in experiment:
            kwargs[key] = experiment[key]
    if "kind" in backend:
        kwargs["backend_kind"] = backend["kind"]
    if "seed" in backend:
        kwargs["backend_seed"] = backend["seed"]
    if "endpoint" in backend:
        kwargs["endpoint"] = backend["endpoint"]
    if "encoder_gain" in backend:
        kwargs["encoder_gain"] = backend["encoder_gain"]
    for key in ("hidden_layers", "latent_dim"):
        if key in latent:
            kwargs[key] = latent[key]
    if "count" in cutouts:
        kwargs["num_cuts"] = cutouts["count"]
    for key in ("min_fraction", "max_fraction", "resize_to"):
        if key in cutouts:
            kwargs[key] = cutouts[key]
    return ExperimentConfig(**kwargs)


def build_backend(cfg: ExperimentConfig):
    """Instantiate the pipeline the config names (toy or bridge client)."""
    if cfg.backend_kind == "toy":
        # the encoder consumes resized cuts, so its input tracks resize_to
        return ToyPipeline(
            shape=cfg.shape,
            encoder_input_size=cfg.resize_to,
            encoder_gain=cfg.encoder_gain,
            seed=cfg.backend_seed,
        )
    from .bridge_client import BridgeBackend

    return BridgeBackend.connect(cfg.endpoint)


def _save_png(image: np.ndarray, path: Path) -> None:
    from PIL import Image

    raster = np.clip(np.round(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(raster).save(path, format="PNG")


def _load_png(path: Path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as handle:
        raster = np.asarray(handle.convert("RGB"), dtype=np.float64)
    return raster / 255.0


def _write_json(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


def _dispatch(spec: StrategySpec, obj, init, budget: Budget, seed: int, index: int) -> RunRecord:
    if spec.kind == "adam":
        return run_adam(obj, init, spec.config, budget, seed=seed, run_index=index)
    if spec.kind == "cmaes":
        return run_cmaes(obj, init, spec.config, budget, seed=seed, run_index=index)
    return run_hybrid(obj, init, spec.config, budget, seed=seed, run_index=index)


def _package_version() -> str:
    from . import __version__

    return __version__


def _execute_run(cfg: ExperimentConfig, backend, target, spec: StrategySpec, index: int) -> dict:
    """Run one strategy execution and persist its directory; returns the manifest."""
    run_dir = cfg.output_dir / cfg.name / spec.label / f"run_{index:04d}"
    manifest_path = run_dir / "manifest"
    if manifest_path.exists():
        manifest = _read_json(manifest_path)
        if manifest.get("status") == "complete":
            return manifest
    run_dir.mkdir(parents=True, exist_ok=True)

    seed = derive_seed(cfg.master_seed, spec.label, index)
    base = {
        "schema": MANIFEST_SCHEMA,
        "strategy": spec.label,
        "kind": spec.kind,
        "run_index": index,
        "seed": seed,
        "config_hash": cfg.run_hash(),
        "code_version": _package_version(),
        "backend_identity": backend.identity(),
    }
    policy = cfg.cutout_policy(seed_stream=derive_seed(seed, "cutouts"))
    objective = backend.objective(target, policy)
    init = new_latent(backend.shape, LatentInit(seed=derive_seed(seed, "init")))
    budget = Budget(cfg.evaluations)
    try:
        record = _dispatch(spec, objective, init, budget, seed, index)
    except (EvaluationError, NumericError, BridgeProtocolError, OSError) as exc:
        manifest = dict(base, status="failed", error=str(exc))
        _write_json(manifest, manifest_path)
        return manifest

    save_trace(record, run_dir / "trace.csv")
    save_latent(record.final_latent, run_dir / "latent.txt")
    _save_png(record.final_image, run_dir / "final.png")
    manifest = dict(
        base,
        status="complete",
        evaluations=record.evaluations,
        partial=record.partial,
        final_fitness=record.final_fitness,
        wall_time=record.wall_time,
    )
    _write_json(manifest, manifest_path)
    return manifest


def run_experiment(cfg: ExperimentConfig, log=None) -> Path:
    """Execute every (strategy, run index) pair, skipping completed runs.

    Failed runs are recorded in their manifest and do not stop the sweep;
    config errors raise immediately. Returns the experiment directory.
    """
    exp_dir = cfg.output_dir / cfg.name
    exp_dir.mkdir(parents=True, exist_ok=True)
    frozen_path = exp_dir / "experiment.json"
    if frozen_path.exists():
        frozen = _read_json(frozen_path)
        if frozen.get("run_hash") != cfg.run_hash():
            raise ConfigurationError(
                f"{exp_dir} holds runs from a different configuration; "
                "change the experiment name or output_dir"
            )
    else:
        _write_json(dict(cfg.canonical(), run_hash=cfg.run_hash()), frozen_path)

    backend = build_backend(cfg)
    target = backend.encode_text(cfg.text)
    started = time.perf_counter()
    jobs = [
        (spec, index)
        for spec in cfg.strategies
        for index in range(cfg.runs_per_strategy)
    ]
    if cfg.parallelism == 1:
        manifests = [_execute_run(cfg, backend, target, spec, index) for spec, index in jobs]
    else:
        # jobs touch disjoint run directories, so completion order is irrelevant;
        # the shared backend serializes wire calls internally
        with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
            manifests = list(
                pool.map(lambda job: _execute_run(cfg, backend, target, *job), jobs)
            )
    if log is not None:
        complete = sum(1 for m in manifests if m["status"] == "complete")
        failed = len(manifests) - complete
        log(
            f"{cfg.name}: {complete} runs complete, {failed} failed, "
            f"{time.perf_counter() - started:.1f}s"
        )
    return exp_dir


def load_experiment_config(exp_dir: str | Path) -> ExperimentConfig:
    """Rebuild the ExperimentConfig frozen into an experiment directory."""
    exp_dir = Path(exp_dir)
    frozen_path = exp_dir / "experiment.json"
    if not frozen_path.exists():
        raise ConfigurationError(f"{exp_dir} has no experiment.json; not an experiment directory")
    payload = _read_json(frozen_path)
    payload.pop("run_hash", None)
    strategies = []
    for entry in payload.pop("strategies"):
        label, kind = entry.pop("label"), entry.pop("kind")
        strategies.append(StrategySpec(label, kind, _STRATEGY_KINDS[kind](**entry)))
    evaluation = EvalSettings(**payload.pop("evaluation"))
    payload["output_dir"] = Path(payload["output_dir"])
    return ExperimentConfig(strategies=tuple(strategies), evaluation=evaluation, **payload)


@dataclass(frozen=True)
class EvaluationOutputs:
    """Everything evaluate_experiment computed and where it was written."""

    baseline: str
    report: JaccardReport
    curves: FitnessCurves
    failed_runs: dict[str, int]
    reports_dir: Path
    montages: dict[str, Path]


def _collect_runs(exp_dir: Path, cfg: ExperimentConfig):
    """Complete manifests plus failure counts, keyed by strategy label."""
    complete: dict[str, list[tuple[Path, dict]]] = {}
    failed: dict[str, int] = {}
    for spec in cfg.strategies:
        label_dir = exp_dir / spec.label
        complete[spec.label] = []
        failed[spec.label] = 0
        if not label_dir.is_dir():
            continue
        for run_dir in sorted(label_dir.iterdir()):
            manifest_path = run_dir / "manifest"
            if not manifest_path.is_file():
                continue
            manifest = _read_json(manifest_path)
            if manifest.get("status") == "complete":
                complete[spec.label].append((run_dir, manifest))
            else:
                failed[spec.label] += 1
    return complete, failed


def evaluate_experiment(
    exp_dir: str | Path,
    baseline: str | None = None,
    repeats: int | None = None,
    grid_size: int | None = None,
) -> EvaluationOutputs:
    """Score an experiment directory and write reports under it.

    Encodes each complete run's final image with the experiment's
    encoder, pools the features per strategy, and runs the Jaccard
    comparison and fitness curves. Writes report.csv, curves.csv, one
    montage PNG per method, and summary.json under <exp_dir>/reports/.
    """
    exp_dir = Path(exp_dir)
    cfg = load_experiment_config(exp_dir)
    backend = build_backend(cfg)
    identity = backend.identity()

    complete, failed = _collect_runs(exp_dir, cfg)
    cap = cfg.evaluation.samples_per_model
    for label, runs in complete.items():
        if len(runs) < 5:
            raise EvaluationError(
                f"method {label!r} has {len(runs)} complete runs; need at least 5 to evaluate"
            )
        del runs[cap:]
        for run_dir, manifest in runs:
            if manifest["backend_identity"] != identity:
                raise ConfigurationError(
                    f"{run_dir} was produced by backend {manifest['backend_identity']!r} "
                    f"but the experiment config builds {identity!r}; refusing to pool"
                )

    if baseline is None:
        baseline = cfg.evaluation.baseline
    if not baseline:
        means = {
            label: float(np.mean([m["final_fitness"] for _, m in runs]))
            for label, runs in complete.items()
        }
        baseline = max(means, key=lambda label: (means[label], label))
    if baseline not in complete:
        raise ConfigurationError(
            f"baseline {baseline!r} not among strategies {sorted(complete)}"
        )

    images: dict[str, list[np.ndarray]] = {}
    samples: dict[str, np.ndarray] = {}
    traces: dict[str, list[np.ndarray]] = {}
    for label, runs in complete.items():
        images[label] = [_load_png(run_dir / "final.png") for run_dir, _ in runs]
        samples[label] = np.stack([backend.encode_image(img) for img in images[label]])
        traces[label] = [load_trace(run_dir / "trace.csv")[0] for run_dir, _ in runs]

    eval_seed = derive_seed(cfg.master_seed, "evaluation")
    tsne_cfg = TsneConfig(
        perplexity=cfg.evaluation.perplexity,
        iterations=cfg.evaluation.tsne_iterations,
        seed=eval_seed,
    )
    if repeats is None:
        repeats = cfg.evaluation.repeats
    if grid_size is None:
        grid_size = cfg.evaluation.grid_size or None

    report = evaluate_methods(samples, baseline, tsne_cfg, grid_size=grid_size, repeats=repeats)
    curves = fitness_curves(traces)

    reports_dir = exp_dir / "reports"
    reports_dir.mkdir(exist_ok=True)
    save_report(report, reports_dir / "report.csv")
    save_curves(curves, reports_dir / "curves.csv")

    pooled = np.vstack([samples[label] for label in samples])
    labels = [label for label in samples for _ in range(samples[label].shape[0])]
    montage_embed = tsne_embed(
        pooled, TsneConfig(
            perplexity=cfg.evaluation.perplexity,
            iterations=cfg.evaluation.tsne_iterations,
            seed=derive_seed(eval_seed, "montage"),
        )
    )
    cells = point_cells(montage_embed.points, report.grid_size)
    montages: dict[str, Path] = {}
    offset = 0
    for label in samples:
        count = samples[label].shape[0]
        path = reports_dir / f"montage_{label}.png"
        save_grid_montage(
            images[label], cells[offset : offset + count], report.grid_size, path
        )
        montages[label] = path
        offset += count

    _write_json(
        {
            "baseline": baseline,
            "repeats": report.repeats,
            "grid_size": report.grid_size,
            "samples": {label: int(arr.shape[0]) for label, arr in samples.items()},
            "failed_runs": failed,
            "scores": {
                label: {"jaccard_mean": s.mean, "jaccard_ci95": s.half_width_95}
                for label, s in report.scores.items()
            },
        },
        reports_dir / "summary.json",
    )
    return EvaluationOutputs(
        baseline=baseline,
        report=report,
        curves=curves,
        failed_runs=failed,
        reports_dir=reports_dir,
        montages=montages,
    )
