"""Latent-space search toolkit: strategies, toy backend, diversity evaluation."""

__version__ = "0.1.0"

from .errors import (
    BridgeProtocolError,
    CapabilityError,
    ConfigurationError,
    DegenerateExtentError,
    DegenerateInputError,
    EvaluationError,
    LatentSearchError,
    NumericError,
    NumericWarning,
    ShapeError,
)
from .evaluation import (
    FitnessCurves,
    GridOccupancy,
    JaccardReport,
    MethodScore,
    confidence_interval,
    default_grid_size,
    evaluate_methods,
    fitness_curves,
    grid_assign,
    jaccard_index,
    pick_baseline,
    point_cells,
    save_curves,
    save_grid_montage,
    save_report,
)
from .experiment import (
    EvalSettings,
    EvaluationOutputs,
    ExperimentConfig,
    StrategySpec,
    build_backend,
    evaluate_experiment,
    load_config,
    load_experiment_config,
    run_experiment,
)
from .latent import (
    LatentCode,
    LatentInit,
    LatentShape,
    flatten,
    load_latent,
    new_latent,
    save_latent,
    unflatten,
)
from .objective import (
    CutoutPolicy,
    Objective,
    cosine_similarity,
    make_cutouts,
    resize_bilinear,
)
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
from .toy import (
    TOY_SHAPE,
    ToyEncoder,
    ToyGenerator,
    ToyPipeline,
    ToyTextTarget,
    finite_diff_grad,
    multimodal_target,
)
from .tsne import TsneConfig, TsneResult, calibrate_affinities, conditional_affinities, tsne_embed

__all__ = [
    "__version__",
    "LatentSearchError",
    "ConfigurationError",
    "ShapeError",
    "DegenerateInputError",
    "DegenerateExtentError",
    "NumericError",
    "NumericWarning",
    "CapabilityError",
    "EvaluationError",
    "BridgeProtocolError",
    "LatentShape",
    "LatentCode",
    "LatentInit",
    "new_latent",
    "flatten",
    "unflatten",
    "save_latent",
    "load_latent",
    "CutoutPolicy",
    "Objective",
    "cosine_similarity",
    "make_cutouts",
    "resize_bilinear",
    "derive_seed",
    "Budget",
    "AdamConfig",
    "CmaConfig",
    "HybridConfig",
    "RunRecord",
    "run_adam",
    "run_cmaes",
    "run_hybrid",
    "save_trace",
    "load_trace",
    "TOY_SHAPE",
    "ToyGenerator",
    "ToyEncoder",
    "ToyPipeline",
    "ToyTextTarget",
    "finite_diff_grad",
    "multimodal_target",
    "TsneConfig",
    "TsneResult",
    "calibrate_affinities",
    "conditional_affinities",
    "tsne_embed",
    "GridOccupancy",
    "MethodScore",
    "JaccardReport",
    "FitnessCurves",
    "point_cells",
    "grid_assign",
    "jaccard_index",
    "confidence_interval",
    "default_grid_size",
    "evaluate_methods",
    "fitness_curves",
    "pick_baseline",
    "save_report",
    "save_curves",
    "save_grid_montage",
    "StrategySpec",
    "EvalSettings",
    "ExperimentConfig",
    "EvaluationOutputs",
    "load_config",
    "run_experiment",
    "evaluate_experiment",
    "load_experiment_config",
    "build_backend",
]
