"""Gaussian-kernel derivative features for the y-part of the model.

Feature ``(j, b)`` (flattened to ``j * B + b``) is the partial derivative of
``k(y, y') = exp(-|y - y'|^2 / (2 sigma^2))`` with respect to ``y'_j``,
evaluated at center ``c_b``::

    phi_{j,b}(y) = (y_j - c_{b,j}) / sigma^2 * k(y, c_b)

All functions accept a single point ``(d_y,)`` or a batch ``(n, d_y)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class KernelBasis:
    centers: np.ndarray  # (B, d_y)
    bandwidth: float

    def __post_init__(self):
        c = np.array(self.centers, dtype=np.float64)
        if c.ndim == 1:
            c = c[:, None]
        if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 1:
            raise ValueError(f"centers must be a non-empty (B, d_y) array, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("centers must be finite")
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        c.setflags(write=False)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "bandwidth", float(self.bandwidth))

    @property
    def n_centers(self) -> int:
        return self.centers.shape[0]

    @property
    def d_y(self) -> int:
        return self.centers.shape[1]

    @property
    def n_features(self) -> int:
        return self.n_centers * self.d_y

    @classmethod
    def from_data(cls, y, n_centers: int, bandwidth: float, rng: np.random.Generator) -> "KernelBasis":
        """Draw ``n_centers`` rows of ``y`` without replacement (all rows if fewer)."""
        y = np.asarray(y, dtype=np.float64)
        if y.ndim == 1:
            y = y[:, None]
        b = min(n_centers, y.shape[0])
        idx = rng.choice(y.shape[0], size=b, replace=False)
        return cls(y[np.sort(idx)], bandwidth)

    def _prepare(self, y):
        y = np.asarray(y, dtype=np.float64)
        single = y.ndim == 1
        if single:
            y = y[None, :]
        if y.ndim != 2 or y.shape[1] != self.d_y:
            raise ValueError(f"expected y with {self.d_y} columns, got shape {y.shape}")
        diff = y[:, None, :] - self.centers[None, :, :]  # (n, B, d_y)
        k = np.exp(-0.5 * np.sum(diff**2, axis=2) / self.bandwidth**2)  # (n, B)
        return single, diff, k

    def features(self, y) -> np.ndarray:
        single, diff, k = self._prepare(y)
        s2 = self.bandwidth**2
        # (n, d_y, B) -> j-major flattening
        out = (np.transpose(diff, (0, 2, 1)) / s2 * k[:, None, :]).reshape(len(k), -1)
        return out[0] if single else out

    def feature_jacobian(self, y) -> np.ndarray:
        """Rows ``l`` hold d/dy_l of every feature: shape ``(d_y, B*d_y)`` or ``(n, d_y, B*d_y)``."""
        single, diff, k = self._prepare(y)
        s2 = self.bandwidth**2
        d = np.transpose(diff, (0, 2, 1))  # (n, d_y, B), index [t, j, b]
        eye = np.eye(self.d_y)
        # [t, l, j, b]
        g = (eye[None, :, :, None] / s2 - d[:, None, :, :] * d[:, :, None, :] / s2**2) * k[:, None, None, :]
        out = g.reshape(len(k), self.d_y, -1)
        return out[0] if single else out

    def feature_laplacian_rows(self, y) -> np.ndarray:
        """Rows ``l`` hold d^2/dy_l^2 of every feature (no mixed partials)."""
        single, diff, k = self._prepare(y)
        s2 = self.bandwidth**2
        d = np.transpose(diff, (0, 2, 1))  # [t, j, b]
        eye = np.eye(self.d_y)
        dl = d[:, :, None, :]  # [t, l, 1, b]
        dj = d[:, None, :, :]  # [t, 1, j, b]
        q = (-(2.0 * eye[None, :, :, None] * dl + dj) / s2**2 + dj * dl**2 / s2**3) * k[:, None, None, :]
        out = q.reshape(len(k), self.d_y, -1)
        return out[0] if single else out

    def to_dict(self) -> dict:
        return {
            "centers": self.centers.tolist(),
            "bandwidth": self.bandwidth,
            "d_y": self.d_y,
            "n_centers": self.n_centers,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KernelBasis":
        centers = np.asarray(d["centers"], dtype=np.float64).reshape(d["n_centers"], d["d_y"])
        return cls(centers, d["bandwidth"])
