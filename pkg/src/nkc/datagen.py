"""Synthetic multimodal data, CSV ingestion and column standardization."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import logsumexp


class DataError(ValueError):
    """Malformed or unusable input data."""


@dataclass
class Dataset:
    y: np.ndarray  # (T, d_y)
    x: np.ndarray  # (T, d_x)
    y_mean: Optional[np.ndarray] = None
    y_scale: Optional[np.ndarray] = None
    x_mean: Optional[np.ndarray] = None
    x_scale: Optional[np.ndarray] = None
    tag: str = "all"

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.float64)
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.y.ndim == 1:
            self.y = self.y[:, None]
        if self.x.ndim == 1:
            self.x = self.x[:, None]
        if len(self.y) != len(self.x):
            raise DataError(f"y has {len(self.y)} rows but x has {len(self.x)}")
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.x))):
            raise DataError("dataset contains non-finite values")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def d_y(self) -> int:
        return self.y.shape[1]

    @property
    def d_x(self) -> int:
        return self.x.shape[1]

    @property
    def standardized(self) -> bool:
        return self.y_scale is not None

    def subset(self, idx, tag: Optional[str] = None) -> "Dataset":
        return replace(self, y=self.y[idx], x=self.x[idx], tag=tag or self.tag)

    def standardization(self) -> Optional[dict]:
        if not self.standardized:
            return None
        return {
            "y_mean": self.y_mean.tolist(),
            "y_scale": self.y_scale.tolist(),
            "x_mean": self.x_mean.tolist(),
            "x_scale": self.x_scale.tolist(),
        }


def _leaky(z, slope):
    return np.where(z > 0, z, slope * z)


@dataclass
class MixtureGenerator:
    """``y | x ~ sum_k (1/K) N(mu_k(x), sigma^2)`` with ``x ~ N(0, I)``.

    Each ``mu_k`` is a random leaky-ReLU network with layer widths
    ``[d_x, d_x, 1]``; weights ~ N(0, 1/fan_in), biases ~ N(0, bias_scale^2).
    """

    d_x: int
    seed: int = 0
    n_components: int = 3
    sigma: float = 0.25
    leaky_slope: float = 0.2
    bias_scale: float = 0.5
    nets: list = field(init=False, repr=False)

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        rng = np.random.default_rng([self.seed, 0])
        dims = [self.d_x, self.d_x, self.d_x, 1]
        self.nets = []
        for _ in range(self.n_components):
            layers = []
            for fan_in, fan_out in zip(dims[:-1], dims[1:]):
                w = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))
                b = rng.normal(0.0, self.bias_scale, size=fan_out)
                layers.append((w, b))
            self.nets.append(layers)

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n_components, 1.0 / self.n_components)

    def means(self, x) -> np.ndarray:
        """Component means, shape ``(n, K)``."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.d_x:
            raise ValueError(f"expected x with {self.d_x} columns, got {x.shape}")
        out = []
        for layers in self.nets:
            a = x
            for k, (w, b) in enumerate(layers):
                a = a @ w + b
                if k < len(layers) - 1:
                    a = _leaky(a, self.leaky_slope)
            out.append(a[:, 0])
        return np.stack(out, axis=1)

    def sample(self, T: int, rng=None):
        """Return ``(y, x, component)`` arrays."""
        rng = rng if rng is not None else np.random.default_rng([self.seed, 1])
        x = rng.standard_normal((T, self.d_x))
        comp = rng.choice(self.n_components, size=T, p=self.weights)
        mu = self.means(x)[np.arange(T), comp]
        y = mu + self.sigma * rng.standard_normal(T)
        return y[:, None], x, comp

    def true_cond_loglik(self, y, x) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        mu = self.means(x)
        z = (y[:, None] - mu) / self.sigma
        logc = np.log(self.weights)[None, :]
        return logsumexp(logc - 0.5 * z**2, axis=1) - np.log(self.sigma * np.sqrt(2 * np.pi))

    def to_dict(self) -> dict:
        return {
            "kind": "mixture",
            "d_x": self.d_x,
            "seed": self.seed,
            "n_components": self.n_components,
            "sigma": self.sigma,
            "leaky_slope": self.leaky_slope,
            "bias_scale": self.bias_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MixtureGenerator":
        d = {k: v for k, v in d.items() if k != "kind"}
        return cls(**d)


def generate(gen: MixtureGenerator, T: int) -> Dataset:
    if T < 1:
        raise ValueError("T must be positive")
    y, x, _ = gen.sample(T)
    return Dataset(y, x)


def load_csv(path) -> Dataset:
    """Read a ``y_1..y_dy, x_1..x_dx`` CSV file."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        y_cols = [i for i, h in enumerate(header) if h.startswith("y_")]
        x_cols = [i for i, h in enumerate(header) if h.startswith("x_")]
        if not y_cols or not x_cols or len(y_cols) + len(x_cols) != len(header):
            raise DataError(f"{path}: header must be y_1..y_k,x_1..x_m, got {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as e:
                raise DataError(f"{path}:{lineno}: {e}") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    data = np.asarray(rows)
    return Dataset(data[:, y_cols], data[:, x_cols])


def write_csv(dataset: Dataset, path) -> None:
    header = [f"y_{j + 1}" for j in range(dataset.d_y)] + [f"x_{j + 1}" for j in range(dataset.d_x)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in np.hstack([dataset.y, dataset.x]):
            w.writerow([repr(float(v)) for v in row])


def _column_stats(a: np.ndarray, name: str):
    mean = a.mean(axis=0)
    scale = a.std(axis=0)
    bad = np.flatnonzero(scale <= 1e-12 * np.maximum(1.0, np.abs(mean)))
    if bad.size:
        raise DataError(f"constant column {name}_{bad[0] + 1} cannot be standardized")
    return mean, scale


def standardize(dataset: Dataset, reference: Optional[Dataset] = None) -> Dataset:
    """Standardize columns with statistics from ``reference`` (default: ``dataset`` itself).

    Statistics are always expressed in the raw scale, so standardizing an
    already standardized dataset is a no-op apart from rounding.
    """
    if reference is not None and reference.standardized:
        y_mean, y_scale, x_mean, x_scale = reference.y_mean, reference.y_scale, reference.x_mean, reference.x_scale
    else:
        ref_y, ref_x = unstandardize_arrays(reference if reference is not None else dataset)
        y_mean, y_scale = _column_stats(ref_y, "y")
        x_mean, x_scale = _column_stats(ref_x, "x")
    raw_y, raw_x = unstandardize_arrays(dataset)
    return Dataset(
        (raw_y - y_mean) / y_scale,
        (raw_x - x_mean) / x_scale,
        y_mean, y_scale, x_mean, x_scale, tag=dataset.tag,
    )


def unstandardize_arrays(dataset: Dataset):
    if not dataset.standardized:
        return dataset.y, dataset.x
    return (dataset.y * dataset.y_scale + dataset.y_mean,
            dataset.x * dataset.x_scale + dataset.x_mean)


def apply_standardization(std: Optional[dict], y=None, x=None):
    """Map raw ``y``/``x`` into the coordinates described by a standardization record."""
    out = []
    if y is not None:
        y = np.asarray(y, dtype=np.float64)
        out.append(y if std is None else (y - np.asarray(std["y_mean"])) / np.asarray(std["y_scale"]))
    if x is not None:
        x = np.asarray(x, dtype=np.float64)
        out.append(x if std is None else (x - np.asarray(std["x_mean"])) / np.asarray(std["x_scale"]))
    return out[0] if len(out) == 1 else tuple(out)


def split(dataset: Dataset, test_fraction: float = 0.1, seed: int = 0):
    """Seeded uniform split into ``(train, test)``; test size is ``round(T * test_fraction)``."""
    T = len(dataset)
    if T < 10:
        raise DataError(f"need at least 10 rows to split, got {T}")
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1)")
    n_test = int(round(T * test_fraction))
    perm = np.random.default_rng([seed, 2]).permutation(T)
    test_idx, train_idx = np.sort(perm[:n_test]), np.sort(perm[n_test:])
    return dataset.subset(train_idx, "train"), dataset.subset(test_idx, "test")
