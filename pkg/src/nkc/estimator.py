"""Fitted model, importance-sampled partition functions and likelihood evaluation."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from .datagen import Dataset
from .kernel_basis import KernelBasis
from .mlp import Mlp

MODEL_VERSION = 1


class NumericalError(RuntimeError):
    """Raised when an estimate cannot be formed from non-finite values."""


@dataclass
class NkcModel:
    basis: KernelBasis
    alpha: np.ndarray  # (d, B * d_y)
    net: Mlp
    standardization: Optional[dict] = None
    meta: Optional[dict] = None

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        if self.alpha.shape != (self.net.d_out, self.basis.n_features):
            raise ValueError(
                f"alpha shape {self.alpha.shape} inconsistent with d={self.net.d_out}, "
                f"features={self.basis.n_features}"
            )

    @property
    def d(self) -> int:
        return self.net.d_out

    @property
    def d_y(self) -> int:
        return self.basis.d_y

    @property
    def d_x(self) -> int:
        return self.net.d_in

    def w(self, y) -> np.ndarray:
        """``w(y)``: shape ``(n, d)`` (or ``(d,)`` for a single point)."""
        return self.basis.features(y) @ self.alpha.T

    def h(self, x) -> np.ndarray:
        return self.net(x)

    def copy(self) -> "NkcModel":
        return NkcModel(self.basis, self.alpha.copy(), self.net.copy(), self.standardization, self.meta)

    def to_dict(self) -> dict:
        meta = dict(self.meta or {})
        meta.update(d=self.d, d_y=self.d_y, d_x=self.d_x, version=MODEL_VERSION)
        return {
            "basis": self.basis.to_dict(),
            "alpha": self.alpha.tolist(),
            "mlp": self.net.to_dict(),
            "standardization": self.standardization,
            "meta": meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NkcModel":
        return cls(
            KernelBasis.from_dict(d["basis"]),
            np.asarray(d["alpha"], dtype=np.float64),
            Mlp.from_dict(d["mlp"]),
            d.get("standardization"),
            d.get("meta"),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "NkcModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _pairs(model: NkcModel, y, x):
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    single = y.ndim == 1 and x.ndim == 1
    y2 = y.reshape(-1, model.d_y) if y.ndim == 1 else y
    x2 = x[None, :] if x.ndim == 1 else x
    if y2.shape[1] != model.d_y or x2.shape[1] != model.d_x:
        raise ValueError(f"expected y with {model.d_y} and x with {model.d_x} columns")
    if len(x2) == 1 and len(y2) > 1:
        x2 = np.broadcast_to(x2, (len(y2), model.d_x))
    if len(x2) != len(y2):
        raise ValueError(f"{len(y2)} y rows vs {len(x2)} x rows")
    return single, y2, x2


def log_unnormalized(model: NkcModel, y, x):
    """``w(y)^T h(x)`` for paired rows (a single ``x`` broadcasts over many ``y``)."""
    single, y2, x2 = _pairs(model, y, x)
    out = np.sum(model.w(y2) * model.h(x2), axis=1)
    return float(out[0]) if single else out


def score_y(model: NkcModel, y, x) -> np.ndarray:
    """Gradient of ``log q(y|x)`` in ``y``; shape ``(d_y,)`` or ``(n, d_y)``."""
    single, y2, x2 = _pairs(model, y, x)
    jac = model.basis.feature_jacobian(y2)  # (n, d_y, F)
    out = np.einsum("tjf,if,ti->tj", jac, model.alpha, model.h(x2))
    return out[0] if single else out


@dataclass
class Proposal:
    """Diagonal Gaussian over y-space."""

    mean: np.ndarray
    var: np.ndarray
    n_samples: int = 10_000

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        self.var = np.atleast_1d(np.asarray(self.var, dtype=np.float64))
        if self.mean.shape != self.var.shape:
            raise ValueError("mean and var must have the same shape")
        if np.any(self.var <= 0):
            raise ValueError("proposal variances must be positive")
        if self.n_samples < 100:
            raise ValueError("need at least 100 importance samples")

    @classmethod
    def fit(cls, y, inflate: float = 2.0, n_samples: int = 10_000) -> "Proposal":
        y = np.asarray(y, dtype=np.float64)
        y = y[:, None] if y.ndim == 1 else y
        return cls(y.mean(axis=0), inflate * y.var(axis=0), n_samples)

    def sample(self, rng: np.random.Generator, n: Optional[int] = None) -> np.ndarray:
        n = self.n_samples if n is None else n
        return self.mean + np.sqrt(self.var) * rng.standard_normal((n, len(self.mean)))

    def logpdf(self, y) -> np.ndarray:
        z = (y - self.mean) ** 2 / self.var
        return -0.5 * np.sum(z + np.log(2 * np.pi * self.var), axis=1)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "var": self.var.tolist(), "n_samples": self.n_samples}


def log_mean_exp_jackknife(log_w):
    """``log(mean(exp(log_w)))`` and its jackknife standard error."""
    log_w = np.asarray(log_w, dtype=np.float64)
    if np.any(np.isnan(log_w)) or np.any(log_w == np.inf):
        raise NumericalError("non-finite log-weights")
    m = len(log_w)
    top = np.max(log_w)
    if top == -np.inf:
        raise NumericalError("all importance weights are zero")
    w = np.exp(log_w - top)
    total = w.sum()
    est = top + np.log(total / m)
    loo_sum = np.maximum(total - w, np.finfo(float).tiny * total)
    loo = np.log(loo_sum / (m - 1))
    se = np.sqrt((m - 1) / m * np.sum((loo - loo.mean()) ** 2))
    return float(est), float(se)


def log_partition(unnorm_logdensity: Callable, proposal: Proposal, seed=0):
    """Importance-sampling estimate of ``log int exp(f(y)) dy`` with its jackknife SE."""
    rng = np.random.default_rng(seed)
    ys = proposal.sample(rng)
    f = np.asarray(unnorm_logdensity(ys), dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(f)):
        raise NumericalError("unnormalized log-density returned non-finite values")
    return log_mean_exp_jackknife(f - proposal.logpdf(ys))


def cond_log_likelihood(model: NkcModel, y, x, proposal: Proposal, seed=0,
                        original_scale: bool = False, log_unnorm: Optional[Callable] = None):
    """Per-sample ``log p(y_t | x_t)`` with an importance-sampled partition per ``x_t``.

    ``y`` and ``x`` are in the model's (possibly standardized) coordinates.
    Sample ``t`` draws its proposal stream from ``default_rng([seed, t])``.
    ``log_unnorm(y, x)`` overrides the model's unnormalized log-density.

    Returns a dict with ``mean``, ``se`` (over test samples), ``per_sample``
    and ``partition_se`` (per-sample importance-sampling SE).
    """
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    y = y.reshape(len(y), -1)
    x = x.reshape(len(x), -1)
    if len(y) == 0:
        raise ValueError("empty test set")
    f = log_unnorm if log_unnorm is not None else (lambda yy, xx: log_unnormalized(model, yy, xx))
    own = log_unnorm is None
    if own:
        h_all = model.h(x)
    per, pse = np.empty(len(y)), np.empty(len(y))
    for t in range(len(y)):
        rng = np.random.default_rng([seed, t])
        ys = proposal.sample(rng)
        if own:
            vals = model.w(ys) @ h_all[t]
            at = float(model.w(y[t:t + 1])[0] @ h_all[t])
        else:
            vals = np.asarray(f(ys, x[t]), dtype=np.float64).reshape(-1)
            at = float(np.asarray(f(y[t:t + 1], x[t])).reshape(-1)[0])
        if not np.all(np.isfinite(vals)):
            raise NumericalError(f"non-finite unnormalized log-density for test sample {t}")
        logz, se = log_mean_exp_jackknife(vals - proposal.logpdf(ys))
        per[t], pse[t] = at - logz, se
    if original_scale and model.standardization is not None:
        per = per - np.sum(np.log(model.standardization["y_scale"]))
    n = len(per)
    return {
        "mean": float(per.mean()),
        "se": float(per.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
        "per_sample": per,
        "partition_se": pse,
    }


def evaluate(model: NkcModel, test: Dataset, n_samples: int = 10_000, seed: int = 0,
             proposal: Optional[Proposal] = None, original_scale: bool = False) -> dict:
    """Likelihood report for a dataset already in model coordinates."""
    if proposal is None:
        ref = (model.meta or {}).get("proposal")
        proposal = Proposal(ref["mean"], ref["var"], n_samples) if ref else Proposal.fit(test.y, n_samples=n_samples)
    res = cond_log_likelihood(model, test.y, test.x, proposal, seed, original_scale)
    return {
        "method": f"NKC{model.d}",
        "mean_loglik": res["mean"],
        "se": res["se"],
        "n": len(test),
        "per_sample": res["per_sample"].tolist(),
        "mean_partition_se": float(res["partition_se"].mean()),
        "config": {"proposal": proposal.to_dict(), "seed": seed, "original_scale": original_scale},
    }


def density_grid(model: NkcModel, x, y_grid, log_unnorm: Optional[Callable] = None) -> np.ndarray:
    """Grid-normalized conditional density for ``d_y = 1`` (trapezoid rule)."""
    if model is not None and model.d_y != 1:
        raise ValueError("density_grid needs d_y = 1")
    g = np.asarray(y_grid, dtype=np.float64).reshape(-1)
    if len(g) < 3 or np.any(np.diff(g) <= 0):
        raise ValueError("grid must be strictly increasing with at least 3 points")
    if log_unnorm is None:
        vals = log_unnormalized(model, g[:, None], np.asarray(x, dtype=np.float64).reshape(1, -1))
    else:
        vals = np.asarray(log_unnorm(g), dtype=np.float64)
    log_z = logsumexp(vals + np.log(_trapezoid_weights(g)))
    return np.exp(vals - log_z)


def _trapezoid_weights(g):
    dw = np.diff(g)
    w = np.zeros_like(g)
    w[:-1] += dw / 2
    w[1:] += dw / 2
    return w
