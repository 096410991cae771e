import math

import numpy as np
import pytest

from latentsearch.errors import (
    ConfigurationError,
    DegenerateExtentError,
    DegenerateInputError,
    ShapeError,
)
from latentsearch.evaluation import (
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
    save_curves,
    save_grid_montage,
    save_report,
)
from latentsearch.strategies import RunRecord
from latentsearch.latent import LatentShape, LatentInit, new_latent
from latentsearch.tsne import TsneConfig


def occupancy(cells, grid_size=4, label="m"):
    return GridOccupancy(grid_size, frozenset(cells), label)


def make_record(trace, label="adam", index=0):
    trace = np.asarray(trace, dtype=np.float64)
    best = np.maximum.accumulate(trace)
    code = new_latent(LatentShape(2, 16), LatentInit(seed=index))
    return RunRecord(
        strategy=label,
        run_index=index,
        seed=index,
        best_fitness_trace=best,
        current_fitness_trace=trace,
        final_latent=code,
        final_image=np.zeros((4, 4, 3)),
        final_fitness=float(best[-1]),
        wall_time=0.1,
    )


class TestGridAssign:
    def test_corner_binning(self):
        points = np.array([[0.0, 0.0], [1.0, 1.0]])
        occ = grid_assign(points, ["a", "b"], 2)
        assert occ["a"].cells == {(0, 0)}
        assert occ["b"].cells == {(1, 1)}

    def test_every_point_lands_in_exactly_one_cell(self):
        rng = np.random.default_rng(0)
        points = rng.standard_normal((120, 2))
        occ = grid_assign(points, ["only"] * 120, 8)
        cells = occ["only"].cells
        assert 1 <= len(cells) <= min(120, 64)
        for row, col in cells:
            assert 0 <= row < 8 and 0 <= col < 8

    def test_affine_rescaling_leaves_cells_unchanged(self):
        rng = np.random.default_rng(1)
        points = rng.standard_normal((60, 2))
        labels = ["x"] * 30 + ["y"] * 30
        base = grid_assign(points, labels, 5)
        scaled = grid_assign(points * 37.0 + np.array([4.0, -2.0]), labels, 5)
        assert base["x"].cells == scaled["x"].cells
        assert base["y"].cells == scaled["y"].cells

    def test_zero_extent_axis_collapses_to_first_bin(self):
        points = np.array([[0.0, 3.0], [1.0, 3.0], [2.0, 3.0]])
        occ = grid_assign(points, ["m"] * 3, 3)
        assert occ["m"].cells == {(0, 0), (0, 1), (0, 2)}

    def test_identical_points_are_degenerate(self):
        points = np.ones((4, 2))
        with pytest.raises(DegenerateExtentError):
            grid_assign(points, ["m"] * 4, 3)

    def test_validation(self):
        with pytest.raises(ShapeError):
            grid_assign(np.zeros((3, 3)), ["m"] * 3, 2)
        with pytest.raises(ShapeError):
            grid_assign(np.zeros((3, 2)), ["m"] * 2, 2)
        with pytest.raises(DegenerateInputError):
            grid_assign(np.array([[0.0, 0.0], [np.inf, 1.0]]), ["m"] * 2, 2)
        with pytest.raises(ConfigurationError):
            grid_assign(np.array([[0.0, 0.0], [1.0, 1.0]]), ["m"] * 2, 0)


class TestJaccard:
    def test_identical_is_one(self):
        a = occupancy({(0, 0), (1, 2)})
        assert jaccard_index(a, a) == 1.0

    def test_disjoint_is_zero(self):
        assert jaccard_index(occupancy({(0, 0)}), occupancy({(1, 1)})) == 0.0

    def test_enumerated_third(self):
        a = occupancy({(0, 0), (1, 1)})
        b = occupancy({(1, 1), (2, 2)})
        assert jaccard_index(a, b) == pytest.approx(1 / 3)

    def test_symmetry_and_bounds(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            cells_a = {(int(r), int(c)) for r, c in rng.integers(0, 4, (6, 2))}
            cells_b = {(int(r), int(c)) for r, c in rng.integers(0, 4, (6, 2))}
            a, b = occupancy(cells_a), occupancy(cells_b)
            forward = jaccard_index(a, b)
            assert forward == jaccard_index(b, a)
            assert 0.0 <= forward <= 1.0
            assert (forward == 1.0) == (cells_a == cells_b)

    def test_both_empty_rejected(self):
        with pytest.raises(DegenerateInputError):
            jaccard_index(occupancy(set()), occupancy(set()))

    def test_grid_size_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            jaccard_index(occupancy({(0, 0)}, grid_size=4), occupancy({(0, 0)}, grid_size=5))


class TestConfidenceInterval:
    def test_equal_values_have_zero_width(self):
        mean, half = confidence_interval([0.4, 0.4, 0.4])
        assert mean == pytest.approx(0.4)
        assert half == 0.0

    def test_hand_evaluated_pair(self):
        mean, half = confidence_interval([0.0, 1.0])
        assert mean == 0.5
        assert half == pytest.approx(1.96 * math.sqrt(0.5) / math.sqrt(2), abs=1e-12)
        assert half == pytest.approx(0.98, abs=1e-12)

    def test_single_value_rejected(self):
        with pytest.raises(DegenerateInputError):
            confidence_interval([0.7])

    def test_unknown_level_rejected(self):
        with pytest.raises(ConfigurationError):
            confidence_interval([0.0, 1.0], level=0.5)


def clustered(rng, center, count, spread=0.3):
    return center + spread * rng.standard_normal((count, len(center)))


class TestEvaluateMethods:
    def test_identical_sample_sets_score_one(self):
        rng = np.random.default_rng(3)
        features = rng.standard_normal((30, 6))
        report = evaluate_methods(
            {"base": features, "twin": features.copy()},
            baseline="base",
            cfg=TsneConfig(perplexity=10.0, iterations=150, seed=0),
            repeats=3,
        )
        assert report.scores["twin"].mean == 1.0
        assert report.scores["twin"].half_width_95 == 0.0
        assert report.baseline_label == "base"
        assert "base" not in report.scores

    def test_repeats_count_and_grid_default(self):
        rng = np.random.default_rng(4)
        report = evaluate_methods(
            {"a": rng.standard_normal((20, 5)), "b": rng.standard_normal((20, 5))},
            baseline="a",
            cfg=TsneConfig(perplexity=8.0, iterations=120, seed=1),
            repeats=4,
        )
        assert report.repeats == 4
        assert report.grid_size == default_grid_size(40) == math.ceil(math.sqrt(40))

    def test_subset_method_outscores_disjoint_method(self):
        rng = np.random.default_rng(5)
        center = np.zeros(6)
        far = np.full(6, 25.0)
        baseline = clustered(rng, center, 40)
        inside = clustered(rng, center, 40)
        outside = clustered(rng, far, 40)
        report = evaluate_methods(
            {"base": baseline, "inside": inside, "outside": outside},
            baseline="base",
            cfg=TsneConfig(perplexity=12.0, iterations=300, seed=2),
            repeats=5,
        )
        assert report.scores["inside"].mean > report.scores["outside"].mean

    def test_determinism(self):
        rng = np.random.default_rng(6)
        samples = {"a": rng.standard_normal((15, 4)), "b": rng.standard_normal((15, 4))}
        cfg = TsneConfig(perplexity=6.0, iterations=100, seed=7)
        first = evaluate_methods(samples, "a", cfg, repeats=3)
        second = evaluate_methods(samples, "a", cfg, repeats=3)
        assert first.scores["b"] == second.scores["b"]

    def test_validation(self):
        rng = np.random.default_rng(7)
        features = rng.standard_normal((10, 4))
        cfg = TsneConfig(perplexity=5.0, iterations=50)
        with pytest.raises(ConfigurationError):
            evaluate_methods({"a": features}, "a", cfg)
        with pytest.raises(ConfigurationError):
            evaluate_methods({"a": features, "b": features}, "missing", cfg)
        with pytest.raises(ConfigurationError):
            evaluate_methods({"a": features, "b": features}, "a", cfg, repeats=1)
        with pytest.raises(ShapeError):
            evaluate_methods({"a": features, "b": rng.standard_normal((10, 5))}, "a", cfg)


class TestReportCsv:
    def test_round_trippable_header_and_rows(self, tmp_path):
        report = JaccardReport(
            baseline_label="cmaes",
            repeats=30,
            grid_size=23,
            scores={"adam": MethodScore(0.2978, 0.0111), "hybrid": MethodScore(0.371, 0.0124)},
        )
        path = tmp_path / "report.csv"
        save_report(report, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "method,baseline,repeats,grid_size,jaccard_mean,jaccard_ci95"
        assert lines[1].startswith("adam,cmaes,30,23,0.2978")
        assert lines[2].startswith("hybrid,cmaes,30,23,0.371")


class TestPickBaseline:
    def test_highest_mean_final_fitness_wins(self):
        records = {
            "low": [make_record([0.1, 0.2], "low", i) for i in range(3)],
            "high": [make_record([0.1, 0.9], "high", i) for i in range(3)],
        }
        assert pick_baseline(records) == "high"

    def test_empty_rejected(self):
        with pytest.raises(DegenerateInputError):
            pick_baseline({})
        with pytest.raises(DegenerateInputError):
            pick_baseline({"a": []})


class TestFitnessCurves:
    def test_single_run_curve_matches_resampled_trace(self):
        trace = np.linspace(0.0, 1.0, 200)
        curves = fitness_curves({"adam": [make_record(trace)]})
        assert curves.half_widths["adam"] is None
        assert curves.means["adam"][0] == trace[0]
        assert curves.means["adam"][100] == trace[199]
        assert curves.means["adam"][50] == trace[99]

    def test_lengths_align_by_percentage(self):
        long = fitness_curves({"m": [make_record(np.linspace(0, 1, 1000))]})
        short = fitness_curves({"m": [make_record(np.linspace(0, 1, 100))]})
        # evaluation 500 of 1000 and evaluation 50 of 100 are both the 50% column
        assert long.means["m"][50] == np.linspace(0, 1, 1000)[499]
        assert short.means["m"][50] == np.linspace(0, 1, 100)[49]

    def test_constant_traces_give_flat_curve_with_zero_width(self):
        records = {"m": [make_record([0.3] * 50, index=i) for i in range(5)]}
        curves = fitness_curves(records)
        assert np.all(curves.means["m"] == 0.3)
        assert np.all(curves.half_widths["m"] == 0.0)

    def test_curve_ci_matches_formula(self):
        rng = np.random.default_rng(8)
        records = {
            "m": [make_record(np.sort(rng.random(40)), index=i) for i in range(6)]
        }
        curves = fitness_curves(records)
        finals = np.array([run.final_fitness for run in records["m"]])
        expected = 1.96 * finals.std(ddof=1) / math.sqrt(6)
        assert curves.half_widths["m"][100] == pytest.approx(expected, abs=1e-12)

    def test_csv_omits_ci_column_for_single_run(self, tmp_path):
        records = {
            "solo": [make_record([0.1, 0.5])],
            "both": [make_record([0.2, 0.4], index=i) for i in range(2)],
        }
        path = tmp_path / "curves.csv"
        save_curves(fitness_curves(records), path)
        lines = path.read_text().splitlines()
        assert lines[0] == "percent,solo_mean,both_mean,both_ci95"
        assert len(lines) == 102

    def test_empty_rejected(self):
        with pytest.raises(DegenerateInputError):
            fitness_curves({})


class TestGridMontage:
    def test_writes_png_with_first_claim_per_cell(self, tmp_path):
        from PIL import Image

        red = np.zeros((8, 8, 3))
        red[..., 0] = 1.0
        blue = np.zeros((8, 8, 3))
        blue[..., 2] = 1.0
        path = tmp_path / "montage.png"
        save_grid_montage([red, blue], [(0, 0), (0, 0)], grid_size=2, path=path, cell_pixels=8)
        raster = np.asarray(Image.open(path))
        assert raster.shape == (16, 16, 3)
        assert (raster[:8, :8, 0] == 255).all()
        assert (raster[:8, :8, 2] == 0).all()
        assert (raster[8:, :, :] == 0).all()

    def test_resizes_foreign_thumbnails(self, tmp_path):
        img = np.full((32, 32, 3), 0.5)
        path = tmp_path / "resized.png"
        save_grid_montage([img], [(1, 1)], grid_size=2, path=path, cell_pixels=8)
        from PIL import Image

        raster = np.asarray(Image.open(path))
        assert raster.shape == (16, 16, 3)
        assert (raster[8:, 8:] == 128).all()

    def test_cell_out_of_range_rejected(self, tmp_path):
        with pytest.raises(ShapeError):
            save_grid_montage(
                [np.zeros((8, 8, 3))], [(2, 0)], grid_size=2, path=tmp_path / "x.png", cell_pixels=8
            )
