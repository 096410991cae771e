import numpy as np
import pytest

from latentsearch.errors import ConfigurationError, NumericError, ShapeError
from latentsearch.latent import (
    LatentCode,
    LatentInit,
    LatentShape,
    flatten,
    load_latent,
    new_latent,
    save_latent,
    unflatten,
)

TOY = LatentShape(num_hidden_layers=2, latent_dim=16)


@pytest.mark.parametrize(
    "hidden,dim,total",
    [(14, 128, 3840), (2, 16, 96), (0, 4, 8), (1, 1, 4)],
)
def test_total_counts_one_pair_per_layer(hidden, dim, total):
    shape = LatentShape(hidden, dim)
    assert shape.num_layers == hidden + 1
    assert shape.total == total


@pytest.mark.parametrize("hidden,dim", [(-1, 128), (2, 0), (3, -5)])
def test_shape_rejects_bad_dimensions(hidden, dim):
    with pytest.raises(ConfigurationError):
        LatentShape(hidden, dim)


def test_code_rejects_mismatched_parts():
    good = np.zeros((TOY.num_layers, TOY.latent_dim))
    with pytest.raises(ShapeError):
        LatentCode(TOY, good[:2], good)
    with pytest.raises(ShapeError):
        LatentCode(TOY, good, np.zeros((TOY.num_layers, TOY.latent_dim + 1)))


def test_code_rejects_non_finite_entries():
    bad = np.zeros((TOY.num_layers, TOY.latent_dim))
    bad[1, 3] = np.nan
    with pytest.raises(NumericError):
        LatentCode(TOY, bad, np.zeros_like(bad))
    bad[1, 3] = np.inf
    with pytest.raises(NumericError):
        LatentCode(TOY, np.zeros_like(bad), bad)


def test_new_latent_is_deterministic_in_seed():
    a = new_latent(TOY, LatentInit(seed=7))
    b = new_latent(TOY, LatentInit(seed=7))
    c = new_latent(TOY, LatentInit(seed=8))
    assert a == b
    assert a != c


def test_zeros_strategy_gives_zero_code():
    code = new_latent(TOY, LatentInit(strategy="zeros", seed=123))
    assert not code.class_part.any()
    assert not code.noise_part.any()


def test_truncated_normal_respects_bound():
    init = LatentInit(strategy="truncated_normal", seed=3, bound=0.5)
    code = new_latent(TOY, init)
    assert np.abs(code.class_part).max() <= 0.5
    assert np.abs(code.noise_part).max() <= 0.5
    assert code == new_latent(TOY, init)


def test_init_validation():
    with pytest.raises(ConfigurationError):
        LatentInit(strategy="uniform")
    with pytest.raises(ConfigurationError):
        LatentInit(strategy="truncated_normal", bound=0.0)


def test_flatten_puts_class_rows_before_noise_rows():
    n_layers, dim = TOY.num_layers, TOY.latent_dim
    class_part = np.arange(n_layers * dim, dtype=np.float64).reshape(n_layers, dim)
    noise_part = 1000.0 + class_part
    flat = flatten(LatentCode(TOY, class_part, noise_part))
    assert flat.shape == (TOY.total,)
    assert np.array_equal(flat[: n_layers * dim], class_part.ravel())
    assert np.array_equal(flat[n_layers * dim :], noise_part.ravel())
    # row-major within each half: layer 0's class vector leads
    assert np.array_equal(flat[:dim], class_part[0])


def test_flatten_unflatten_round_trip():
    rng = np.random.default_rng(0)
    code = LatentCode(
        TOY,
        rng.standard_normal((TOY.num_layers, TOY.latent_dim)),
        rng.standard_normal((TOY.num_layers, TOY.latent_dim)),
    )
    assert unflatten(flatten(code), TOY) == code


def test_unflatten_rejects_wrong_length():
    with pytest.raises(ShapeError):
        unflatten(np.zeros(TOY.total - 1), TOY)
    with pytest.raises(ShapeError):
        unflatten(np.zeros((2, TOY.total // 2)), TOY)


def test_unflatten_does_not_alias_the_input():
    vec = np.zeros(TOY.total)
    code = unflatten(vec, TOY)
    code.class_part[0, 0] = 5.0
    assert vec[0] == 0.0


def test_dump_round_trips_exactly(tmp_path):
    code = new_latent(TOY, LatentInit(seed=42))
    path = tmp_path / "code.txt"
    save_latent(code, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "latent v1 2 16"
    assert len(lines) == 1 + TOY.total
    loaded = load_latent(path)
    assert loaded.shape == TOY
    assert np.array_equal(flatten(loaded), flatten(code))


def test_dump_rejects_bad_files(tmp_path):
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    with pytest.raises(ShapeError):
        load_latent(empty)

    bad_header = tmp_path / "bad.txt"
    bad_header.write_text("latent v2 2 16\n0.0\n")
    with pytest.raises(ShapeError):
        load_latent(bad_header)

    truncated = tmp_path / "short.txt"
    truncated.write_text("latent v1 2 16\n" + "0.0\n" * (TOY.total - 1))
    with pytest.raises(ShapeError):
        load_latent(truncated)
