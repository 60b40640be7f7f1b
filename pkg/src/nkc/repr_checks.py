"""Desk-scale checks that the learned ``h(x)`` behaves as a representation.

* :func:`ica_experiment` -- data from a conditionally exponential-family
  source model ``x = f(s)``; the sufficient statistics ``-s_i^2 / 2`` should be
  an affine function of the fitted ``h(x)``.
* :func:`sdr_experiment` -- ``y`` depends on ``x`` only through a low
  dimensional ``z``; a model with ``d = dim(z)`` should lose essentially no
  likelihood against a wider one, and ``h(x)`` should predict as well as ``x``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .datagen import Dataset
from .estimator import Proposal, cond_log_likelihood
from .mlp import Mlp
from .trainer import TrainConfig, fit, rmsprop_step


def _leaky(z, slope):
    return np.where(z > 0, z, slope * z)


def _well_conditioned(rng, d, max_cond=50.0):
    while True:
        a = rng.standard_normal((d, d))
        if np.linalg.cond(a) < max_cond:
            return a


@dataclass
class IcaGenerator:
    """Sources with ``s_i | y ~ N(0, 1 / lambda_i(y))`` mixed by a leaky-ReLU network.

    ``lambda_i(y) = exp(y^2 / d + a_i(y))`` where ``a_i`` are random sinusoids
    centred across ``i`` (they sum to zero), and ``y ~ N(0, 1)``.  With this
    choice ``sum_i log(lambda_i) / 2 + log p(y)`` is constant in ``y``, so
    ``log p(y|x) = sum_i lambda_i(y) * (-s_i^2 / 2) + c(x)`` has exactly ``d``
    product terms. ``modulate=False`` makes every ``lambda_i`` constant.
    """

    d: int = 2
    seed: int = 0
    amplitude: float = 1.0
    modulate: bool = True
    n_layers: int = 2
    leaky_slope: float = 0.2
    freqs: np.ndarray = field(init=False, repr=False)
    phases: np.ndarray = field(init=False, repr=False)
    layers: list = field(init=False, repr=False)

    def __post_init__(self):
        rng = np.random.default_rng([self.seed, 20])
        self.freqs = rng.uniform(1.0, 2.5, size=self.d)
        self.phases = rng.uniform(0.0, 2 * np.pi, size=self.d)
        self.layers = [(_well_conditioned(rng, self.d), rng.normal(0.0, 0.5, size=self.d))
                       for _ in range(self.n_layers)]

    def _a(self, y):
        y = np.asarray(y, dtype=np.float64).reshape(-1, 1)
        raw = self.amplitude * np.sin(self.freqs * y + self.phases)
        return raw - raw.mean(axis=1, keepdims=True)

    def _da(self, y):
        y = np.asarray(y, dtype=np.float64).reshape(-1, 1)
        raw = self.amplitude * self.freqs * np.cos(self.freqs * y + self.phases)
        return raw - raw.mean(axis=1, keepdims=True)

    def modulators(self, y) -> np.ndarray:
        """``lambda(y)``, shape ``(n, d)``; strictly positive."""
        y = np.asarray(y, dtype=np.float64).reshape(-1, 1)
        if not self.modulate:
            return np.ones((len(y), self.d))
        return np.exp(y**2 / self.d + self._a(y))

    def modulator_grad(self, y) -> np.ndarray:
        """``d lambda_i / dy``, shape ``(n, d)``."""
        y = np.asarray(y, dtype=np.float64).reshape(-1, 1)
        if not self.modulate:
            return np.zeros((len(y), self.d))
        return self.modulators(y) * (2 * y / self.d + self._da(y))

    def mix(self, s) -> np.ndarray:
        a = np.asarray(s, dtype=np.float64)
        for k, (w, b) in enumerate(self.layers):
            a = a @ w.T + b
            if k < len(self.layers) - 1:
                a = _leaky(a, self.leaky_slope)
        return a

    def sufficient_stats(self, s) -> np.ndarray:
        return -0.5 * np.asarray(s) ** 2

    def sample(self, T: int, rng=None):
        """Return ``(y, s, x)`` with ``y`` of shape ``(T, 1)``."""
        rng = rng if rng is not None else np.random.default_rng([self.seed, 21])
        y = rng.standard_normal((T, 1))
        s = rng.standard_normal((T, self.d)) / np.sqrt(self.modulators(y))
        return y, s, self.mix(s)

    def to_dict(self) -> dict:
        return {"kind": "ica", "d": self.d, "seed": self.seed, "amplitude": self.amplitude,
                "modulate": self.modulate, "n_layers": self.n_layers, "leaky_slope": self.leaky_slope}


def i5_gram(gen: IcaGenerator, n_points: Optional[int] = None, seed: int = 0):
    """``sum_n grad lambda(y_n) grad lambda(y_n)^T`` over random ``y_n`` and its smallest eigenvalue."""
    n_points = n_points or 10 * gen.d
    y = np.random.default_rng([seed, 22]).standard_normal(n_points)
    g = gen.modulator_grad(y)
    gram = g.T @ g
    return gram, float(np.linalg.eigvalsh(gram)[0])


@dataclass
class AffineRecoveryReport:
    r2: list
    mean_r2: float
    B: list
    b: list
    cond_B: float
    mean_abs_corr: float
    gram_min_eig: float
    n_heldout: int
    train: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def affine_fit(h: np.ndarray, target: np.ndarray):
    """Least squares ``target ~ h @ B.T + b``; returns ``(B, b, r2)``."""
    A = np.hstack([h, np.ones((len(h), 1))])
    coef, *_ = np.linalg.lstsq(A, target, rcond=None)
    pred = A @ coef
    resid = np.mean((target - pred) ** 2, axis=0)
    r2 = 1.0 - resid / target.var(axis=0)
    return coef[:-1].T, coef[-1], np.clip(r2, 0.0, 1.0)


def mean_abs_corr(a: np.ndarray, b: np.ndarray) -> float:
    """Mean |corr| between columns of ``a`` and ``b`` after optimal one-to-one matching."""
    k = a.shape[1]
    c = np.corrcoef(a.T, b.T)[:k, k:]
    rows, cols = linear_sum_assignment(-np.abs(c))
    return float(np.mean(np.abs(c[rows, cols])))


def ica_experiment(gen: IcaGenerator, T: int, train_config: TrainConfig, heldout_fraction: float = 0.2):
    if train_config.d != gen.d:
        raise ValueError(f"train_config.d={train_config.d} must equal the source dimension {gen.d}")
    y, s, x = gen.sample(T)
    n_hold = int(round(T * heldout_fraction))
    model, report = fit(Dataset(y[n_hold:], x[n_hold:]), train_config)
    h = model.h(x[:n_hold])
    q = gen.sufficient_stats(s[:n_hold])
    B, b, r2 = affine_fit(h, q)
    _, min_eig = i5_gram(gen)
    return AffineRecoveryReport(
        r2=r2.tolist(),
        mean_r2=float(np.mean(r2)),
        B=B.tolist(),
        b=b.tolist(),
        cond_B=float(np.linalg.cond(B)),
        mean_abs_corr=mean_abs_corr(q, h),
        gram_min_eig=min_eig,
        n_heldout=n_hold,
        train={"chosen_lr": report.chosen_lr, "chosen_width": report.chosen_width,
               "best_epoch": report.best_epoch, "best_val": report.best_val},
    )


@dataclass
class SdrGenerator:
    """``x ~ N(0, I)``, ``z = tanh(x[:, :d_true])`` and ``y | z ~ N(0, 1 / eta(z))``.

    ``eta(z) = exp(gain * mean(z))``; with ``d_true = 0`` ``y`` is independent of ``x``.
    A scale family keeps ``log p(y|x)`` a single product ``(-y^2/2) * eta(z)``
    plus a function of ``x``, so ``d = d_true`` terms suffice.
    """

    d_x: int = 20
    d_true: int = 1
    gain: float = 1.5
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.d_true < self.d_x:
            raise ValueError("need 0 <= d_true < d_x")

    def precision(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.d_true == 0:
            return np.ones(len(x))
        return np.exp(self.gain * np.mean(np.tanh(x[:, :self.d_true]), axis=1))

    def sample(self, T: int, rng=None):
        rng = rng if rng is not None else np.random.default_rng([self.seed, 30])
        x = rng.standard_normal((T, self.d_x))
        y = rng.standard_normal(T) / np.sqrt(self.precision(x))
        return y[:, None], x

    def true_cond_loglik(self, y, x) -> np.ndarray:
        eta = self.precision(x)
        y = np.asarray(y).reshape(-1)
        return -0.5 * eta * y**2 + 0.5 * np.log(eta / (2 * np.pi))

    def to_dict(self) -> dict:
        return asdict(self) | {"kind": "sdr"}


def fit_regressor(inputs, target, hidden=(64, 32), epochs=30, lr=1e-3, minibatch=128, seed=0):
    """Small MLP regressor trained with RMSprop on squared error; returns a predict function."""
    inputs = np.asarray(inputs, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64).reshape(-1, 1)
    mu, sd = inputs.mean(axis=0), inputs.std(axis=0) + 1e-12
    t_mu, t_sd = target.mean(), target.std() + 1e-12
    xs, ts = (inputs - mu) / sd, (target - t_mu) / t_sd
    net = Mlp.init([seed, 40], [inputs.shape[1], *hidden, 1])
    params = net.params()
    state = [np.zeros_like(p) for p in params]
    rng = np.random.default_rng([seed, 41])
    for _ in range(epochs):
        perm = rng.permutation(len(xs))
        for start in range(0, len(xs), minibatch):
            idx = perm[start:start + minibatch]
            out, cache = net.forward(xs[idx])
            grads = net.backward(cache, 2.0 * (out - ts[idx]) / len(idx))
            rmsprop_step(params, grads, state, lr)

    def predict(new_inputs):
        return net((np.asarray(new_inputs) - mu) / sd)[:, 0] * t_sd + t_mu

    return predict


def sdr_experiment(gen: SdrGenerator, T: int, train_config: TrainConfig, ds=None,
                   test_fraction: float = 0.2, n_is_samples: int = 10_000, eval_limit: int = 2000):
    """Fit models with ``d`` in ``ds`` (default ``{d_true, d_true + 2}``) and compare them.

    Returns a dict with the test log-likelihood per ``d``, the true test
    log-likelihood, and test MSEs for predicting ``|y|`` from ``h(x)`` of the
    smallest model, from ``x`` directly, and from the training mean alone.
    """
    d_small = max(gen.d_true, 1)
    ds = tuple(ds) if ds is not None else (d_small, d_small + 2)
    y, x = gen.sample(T)
    n_test = int(round(T * test_fraction))
    y_te, x_te, y_tr, x_tr = y[:n_test], x[:n_test], y[n_test:], x[n_test:]
    train = Dataset(y_tr, x_tr)
    proposal = Proposal.fit(y_tr, n_samples=n_is_samples)
    ev = slice(0, min(eval_limit, n_test))

    out = {"generator": gen.to_dict(), "T": T, "loglik": {}, "train": {}}
    models, per = {}, {}
    for d in ds:
        model, rep = fit(train, replace(train_config, d=d))
        models[d] = model
        res = cond_log_likelihood(model, y_te[ev], x_te[ev], proposal, seed=train_config.seed)
        per[d] = res["per_sample"]
        out["loglik"][str(d)] = {"mean": res["mean"], "se": res["se"]}
        out["train"][str(d)] = {"chosen_lr": rep.chosen_lr, "chosen_width": rep.chosen_width,
                                "best_epoch": rep.best_epoch, "best_val": rep.best_val}
    out["true_loglik"] = float(np.mean(gen.true_cond_loglik(y_te[ev], x_te[ev])))

    target_tr, target_te = np.abs(y_tr[:, 0]), np.abs(y_te[:, 0])
    small = models[ds[0]]
    pred_h = fit_regressor(small.h(x_tr), target_tr, seed=train_config.seed)
    pred_x = fit_regressor(x_tr, target_tr, seed=train_config.seed)
    out["predict_mse"] = {
        "from_h": float(np.mean((pred_h(small.h(x_te)) - target_te) ** 2)),
        "from_x": float(np.mean((pred_x(x_te) - target_te) ** 2)),
        "unconditional": float(np.mean((target_tr.mean() - target_te) ** 2)),
    }
    ll = out["loglik"]
    out["loglik_gap"] = ll[str(ds[-1])]["mean"] - ll[str(ds[0])]["mean"]
    diff = per[ds[-1]] - per[ds[0]]
    out["loglik_gap_se"] = float(diff.std(ddof=1) / np.sqrt(len(diff))) if len(diff) > 1 else 0.0
    return out
