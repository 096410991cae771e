"""Distribution diversity scoring for sets of generated samples.

Each search strategy produces a set of feature vectors (one per run).
The pooled vectors are projected to 2D, binned into a square occupancy
grid, and every method's occupied cell set is compared against a chosen
baseline with the Jaccard index. The projection is stochastic, so the
comparison repeats with fresh derived seeds and reports mean and 95%
confidence interval per method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateExtentError,
    DegenerateInputError,
    ShapeError,
)
from .seeds import derive_seed
from .strategies import RunRecord
from .tsne import TsneConfig, tsne_embed

Z_SCORES = {0.90: 1.645, 0.95: 1.96, 0.99: 2.576}


@dataclass(frozen=True)
class GridOccupancy:
    """Set of grid cells occupied by one method's samples."""

    grid_size: int
    cells: frozenset[tuple[int, int]]
    method_label: str

    def __post_init__(self) -> None:
        if self.grid_size < 1:
            raise ConfigurationError(f"grid_size must be >= 1, got {self.grid_size}")
        for row, col in self.cells:
            if not (0 <= row < self.grid_size and 0 <= col < self.grid_size):
                raise ShapeError(
                    f"cell ({row}, {col}) outside a {self.grid_size}x{self.grid_size} grid"
                )


@dataclass(frozen=True)
class MethodScore:
    mean: float
    half_width_95: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.mean <= 1.0:
            raise ConfigurationError(f"Jaccard mean must lie in [0, 1], got {self.mean}")


@dataclass(frozen=True)
class JaccardReport:
    """Per-method Jaccard scores against one baseline method."""

    baseline_label: str
    repeats: int
    grid_size: int
    scores: dict[str, MethodScore]

    def __post_init__(self) -> None:
        if self.repeats < 2:
            raise ConfigurationError(f"a CI needs repeats >= 2, got {self.repeats}")


def point_cells(points: np.ndarray, grid_size: int) -> list[tuple[int, int]]:
    """Grid cell (row, col) of each 2D point.

    Both axes are min-max normalized over the pooled point set, then
    cell = (floor(y*G), floor(x*G)) with the top edge clamped into the
    last bin. An axis with zero extent collapses into bin 0.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ShapeError(f"expected (N, 2) points, got shape {points.shape}")
    if not np.isfinite(points).all():
        raise DegenerateInputError("points must be finite")
    if grid_size < 1:
        raise ConfigurationError(f"grid_size must be >= 1, got {grid_size}")

    mins = points.min(axis=0)
    extents = points.max(axis=0) - mins
    if (extents == 0).all():
        raise DegenerateExtentError("all points identical; occupancy grid is undefined")
    safe = np.where(extents > 0, extents, 1.0)
    unit = (points - mins) / safe
    bins = np.clip(np.floor(unit * grid_size).astype(int), 0, grid_size - 1)
    return [(int(r), int(c)) for c, r in bins]


def grid_assign(
    points: np.ndarray, labels: list[str], grid_size: int
) -> dict[str, GridOccupancy]:
    """Bin 2D points into a G x G grid, one occupancy set per label."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 2 and len(labels) != points.shape[0]:
        raise ShapeError(f"{points.shape[0]} points but {len(labels)} labels")
    cells = point_cells(points, grid_size)

    occupancies: dict[str, GridOccupancy] = {}
    for label in dict.fromkeys(labels):
        occupied = frozenset(cell for cell, lab in zip(cells, labels) if lab == label)
        occupancies[label] = GridOccupancy(grid_size, occupied, label)
    return occupancies


def jaccard_index(a: GridOccupancy, b: GridOccupancy) -> float:
    """Intersection over union of two occupancy sets on the same grid."""
    if a.grid_size != b.grid_size:
        raise ShapeError(f"grid sizes differ: {a.grid_size} vs {b.grid_size}")
    union = a.cells | b.cells
    if not union:
        raise DegenerateInputError("both occupancy sets are empty")
    return len(a.cells & b.cells) / len(union)


def confidence_interval(values, level: float = 0.95) -> tuple[float, float]:
    """Mean and half-width of a normal-approximation confidence interval."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 2:
        raise DegenerateInputError(f"need at least 2 values, got shape {arr.shape}")
    z = Z_SCORES.get(level)
    if z is None:
        raise ConfigurationError(f"level must be one of {sorted(Z_SCORES)}, got {level}")
    mean = float(arr.mean())
    if np.ptp(arr) == 0.0:
        return float(arr[0]), 0.0
    half_width = z * float(arr.std(ddof=1)) / math.sqrt(arr.size)
    return mean, half_width


def default_grid_size(total_samples: int) -> int:
    return math.ceil(math.sqrt(total_samples))


def evaluate_methods(
    samples: dict[str, np.ndarray],
    baseline: str,
    cfg: TsneConfig,
    grid_size: int | None = None,
    repeats: int = 30,
) -> JaccardReport:
    """Score each method's grid occupancy against the baseline's.

    Pools every method's feature vectors, then for each repeat embeds the
    pool with a fresh derived seed, grid-assigns, and records the Jaccard
    index of each non-baseline method against the baseline. Reports the
    mean and 95% CI over repeats.
    """
    if len(samples) < 2:
        raise ConfigurationError(f"need at least 2 methods, got {len(samples)}")
    if baseline not in samples:
        raise ConfigurationError(f"baseline {baseline!r} not among methods {sorted(samples)}")
    if repeats < 2:
        raise ConfigurationError(f"repeats must be >= 2 for a CI, got {repeats}")

    blocks = []
    labels: list[str] = []
    width = None
    for label, features in samples.items():
        arr = np.asarray(features, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise ShapeError(f"method {label!r}: expected a nonempty (N, F) array")
        if width is None:
            width = arr.shape[1]
        elif arr.shape[1] != width:
            raise ShapeError(
                f"method {label!r} has feature width {arr.shape[1]}, expected {width}"
            )
        blocks.append(arr)
        labels.extend([label] * arr.shape[0])
    pooled = np.vstack(blocks)
    if grid_size is None:
        grid_size = default_grid_size(pooled.shape[0])

    values: dict[str, list[float]] = {lab: [] for lab in samples if lab != baseline}
    for repeat in range(repeats):
        seeded = replace(cfg, seed=derive_seed(cfg.seed, "jaccard-repeat", repeat))
        embedded = tsne_embed(pooled, seeded)
        occupancy = grid_assign(embedded.points, labels, grid_size)
        for label in values:
            values[label].append(jaccard_index(occupancy[label], occupancy[baseline]))

    scores = {
        label: MethodScore(*confidence_interval(vals)) for label, vals in values.items()
    }
    return JaccardReport(baseline, repeats, grid_size, scores)


def save_report(report: JaccardReport, path: str | Path) -> None:
    lines = ["method,baseline,repeats,grid_size,jaccard_mean,jaccard_ci95"]
    for label, score in report.scores.items():
        lines.append(
            f"{label},{report.baseline_label},{report.repeats},{report.grid_size},"
            f"{score.mean:.17g},{score.half_width_95:.17g}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def pick_baseline(records: dict[str, list[RunRecord]]) -> str:
    """Label whose runs have the highest mean final fitness."""
    if not records:
        raise DegenerateInputError("no run records")
    means = {}
    for label, runs in records.items():
        if not runs:
            raise DegenerateInputError(f"method {label!r} has no runs")
        means[label] = float(np.mean([run.final_fitness for run in runs]))
    return max(means, key=lambda label: (means[label], label))


@dataclass(frozen=True)
class FitnessCurves:
    """Best-fitness means (and CIs) on a shared iteration-percentage axis."""

    percents: np.ndarray
    means: dict[str, np.ndarray]
    half_widths: dict[str, np.ndarray | None]


def _best_trace(run) -> np.ndarray:
    trace = getattr(run, "best_fitness_trace", run)
    return np.asarray(trace, dtype=np.float64)


def _resample_trace(trace: np.ndarray, percents: np.ndarray) -> np.ndarray:
    length = trace.size
    indices = [max(math.ceil(p * length / 100), 1) - 1 for p in percents]
    return trace[indices]


def fitness_curves(records: dict[str, list]) -> FitnessCurves:
    """Resample best-fitness traces onto 0..100% and average per label.

    Traces of different lengths align by iteration percentage, so a
    1000-evaluation run and a 100-evaluation run contribute to the same
    column. Labels with a single run get no confidence interval. Each
    run may be a RunRecord or a bare best-fitness array.
    """
    if not records:
        raise DegenerateInputError("no run records")
    percents = np.arange(101)
    means: dict[str, np.ndarray] = {}
    half_widths: dict[str, np.ndarray | None] = {}
    for label, runs in records.items():
        if not runs:
            raise DegenerateInputError(f"method {label!r} has no runs")
        resampled = np.stack([_resample_trace(_best_trace(run), percents) for run in runs])
        means[label] = resampled.mean(axis=0)
        if len(runs) >= 2:
            stats = [confidence_interval(resampled[:, j]) for j in range(101)]
            half_widths[label] = np.array([hw for _, hw in stats])
        else:
            half_widths[label] = None
    return FitnessCurves(percents, means, half_widths)


def save_curves(curves: FitnessCurves, path: str | Path) -> None:
    """Write curves as CSV; CI columns appear only for multi-run labels."""
    header = ["percent"]
    for label in curves.means:
        header.append(f"{label}_mean")
        if curves.half_widths[label] is not None:
            header.append(f"{label}_ci95")
    lines = [",".join(header)]
    for j, percent in enumerate(curves.percents):
        row = [str(int(percent))]
        for label in curves.means:
            row.append(f"{curves.means[label][j]:.17g}")
            widths = curves.half_widths[label]
            if widths is not None:
                row.append(f"{widths[j]:.17g}")
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_grid_montage(
    images: list[np.ndarray],
    cells: list[tuple[int, int]],
    grid_size: int,
    path: str | Path,
    cell_pixels: int = 32,
) -> None:
    """Render thumbnails at their grid cells and save a PNG.

    When several samples share a cell the first one claims it; later
    arrivals in the same cell are skipped (plain binning, no relocation).
    """
    from PIL import Image

    from .objective import resize_bilinear

    if len(images) != len(cells):
        raise ShapeError(f"{len(images)} images but {len(cells)} cells")
    canvas = np.zeros((grid_size * cell_pixels, grid_size * cell_pixels, 3))
    claimed: set[tuple[int, int]] = set()
    for image, (row, col) in zip(images, cells):
        if not (0 <= row < grid_size and 0 <= col < grid_size):
            raise ShapeError(f"cell ({row}, {col}) outside a {grid_size}x{grid_size} grid")
        if (row, col) in claimed:
            continue
        claimed.add((row, col))
        thumb = image if image.shape[:2] == (cell_pixels, cell_pixels) else resize_bilinear(
            image, cell_pixels
        )
        canvas[
            row * cell_pixels : (row + 1) * cell_pixels,
            col * cell_pixels : (col + 1) * cell_pixels,
        ] = thumb
    raster = np.clip(np.round(canvas * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(raster).save(Path(path), format="PNG")
