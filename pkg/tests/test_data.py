import numpy as np
import pytest

from specgp.data import (
    generate_synthetic,
    read_csv,
    target_function,
    write_csv,
    write_predictions,
)
from specgp.errors import DomainError


def test_three_points_are_equispaced():
    data = generate_synthetic(3, 0.5, 0)
    np.testing.assert_array_equal(data.xs, [-1.0, 0.0, 1.0])


def test_seed_fixes_dataset():
    a = generate_synthetic(100, 0.5, 7)
    b = generate_synthetic(100, 0.5, 7)
    np.testing.assert_array_equal(a.ys, b.ys)
    assert not np.array_equal(a.ys, generate_synthetic(100, 0.5, 8).ys)


def test_noise_variance():
    data = generate_synthetic(100_000, 0.5, 0)
    residual = data.ys - target_function(data.xs)
    assert residual.var() == pytest.approx(0.5, abs=0.02)


def test_noiseless_dataset():
    data = generate_synthetic(11, 0.0, 0)
    np.testing.assert_array_equal(data.ys, np.cos(3.0 * np.exp(data.xs)))


@pytest.mark.parametrize("N, variance", [(1, 0.5), (0, 0.5), (10, -1.0)])
def test_bad_arguments(N, variance):
    with pytest.raises(DomainError):
        generate_synthetic(N, variance, 0)


def test_csv_is_lossless(tmp_path):
    data = generate_synthetic(25, 0.5, 3)
    path = tmp_path / "data.csv"
    write_csv(path, data)
    assert path.read_text().splitlines()[0] == "x,y"
    loaded = read_csv(path)
    np.testing.assert_array_equal(loaded.xs, data.xs)
    np.testing.assert_array_equal(loaded.ys, data.ys)


def test_single_row_csv(tmp_path):
    path = tmp_path / "one.csv"
    path.write_text("x,y\n0.25,1.5\n")
    loaded = read_csv(path)
    assert loaded.N == 1
    assert (loaded.xs[0], loaded.ys[0]) == (0.25, 1.5)


@pytest.mark.parametrize("text", ["a,b\n0,1\n", "x,y\n0,1,2\n", "x,y\n0,abc\n", "x,y\n0,nan\n"])
def test_malformed_csv(tmp_path, text):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(DomainError):
        read_csv(path)


def test_prediction_file(tmp_path):
    path = tmp_path / "pred.csv"
    xs = np.linspace(-1, 1, 4)
    write_predictions(path, xs, np.sin(xs), np.full(4, 0.1))
    lines = path.read_text().splitlines()
    assert lines[0] == "x,mean,variance"
    assert len(lines) == 5
    table = np.loadtxt(path, delimiter=",", skiprows=1)
    np.testing.assert_array_equal(table[:, 0], xs)
