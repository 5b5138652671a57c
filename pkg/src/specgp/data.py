"""Synthetic data and the ``x,y`` CSV format."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .errors import DomainError
from .fourier import standard_normals
from .regression import Dataset

CSV_HEADER = "x,y"
PREDICTION_HEADER = "x,mean,variance"
FLOAT_FORMAT = "%.17g"


def target_function(xs: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.cos(3.0 * np.exp(xs))


def generate_synthetic(
    N: int,
    noise_variance: float = 0.5,
    seed: int = 0,
    *,
    a: float = -1.0,
    b: float = 1.0,
) -> Dataset:
    """``y = cos(3eˣ) + ε`` on ``N`` equispaced points of ``[a, b]``, ``ε ~ N(0, noise_variance)``."""
    if N < 2:
        raise DomainError(f"N must be at least 2, got {N}")
    if noise_variance < 0:
        raise DomainError(f"noise variance must be non-negative, got {noise_variance}")
    xs = np.linspace(a, b, N)
    noise = standard_normals(np.random.SeedSequence(seed), N)
    return Dataset(xs, target_function(xs) + np.sqrt(noise_variance) * noise)


def _read_table(path: str | Path, header: str) -> NDArray[np.float64]:
    path = Path(path)
    with path.open(encoding="ascii") as fh:
        first = fh.readline().strip()
    if first != header:
        raise DomainError(f"{path}: expected header {header!r}, got {first!r}")
    try:
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, dtype=np.float64)
    except ValueError as e:
        raise DomainError(f"{path}: {e}") from e
    columns = header.count(",") + 1
    if table.size and table.shape[1] != columns:
        raise DomainError(f"{path}: expected {columns} columns, got {table.shape[1]}")
    return table.reshape(-1, columns)


def read_csv(path: str | Path) -> Dataset:
    table = _read_table(path, CSV_HEADER)
    return Dataset(table[:, 0], table[:, 1])


def write_csv(path: str | Path, data: Dataset) -> None:
    np.savetxt(
        path,
        np.column_stack([data.xs, data.ys]),
        fmt=FLOAT_FORMAT,
        delimiter=",",
        header=CSV_HEADER,
        comments="",
    )


def write_predictions(
    path: str | Path,
    xs: NDArray[np.float64],
    mean: NDArray[np.float64],
    variance: NDArray[np.float64],
) -> None:
    np.savetxt(
        path,
        np.column_stack([xs, mean, variance]),
        fmt=FLOAT_FORMAT,
        delimiter=",",
        header=PREDICTION_HEADER,
        comments="",
    )
