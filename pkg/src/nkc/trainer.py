"""Minibatch RMSprop fitting with validation-based model selection."""
from __future__ import annotations

import itertools
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from .datagen import Dataset
from .estimator import NkcModel, NumericalError, Proposal
from .kernel_basis import KernelBasis
from .mlp import Mlp
from .objective import objective_gradients, objective_value

ARTIFICIAL_WIDTHS = (0.5, 1.0, 3.0, 5.0)
BENCHMARK_WIDTHS = (0.5, 1.0, 2.0, 3.0)
LEARNING_RATES = (1e-3, 5e-4, 1e-4, 5e-5, 1e-5)


@dataclass
class TrainConfig:
    d: int = 3
    n_centers: int = 100
    minibatch: int = 128
    epochs: int = 100
    val_fraction: float = 0.2
    lr_grid: tuple = LEARNING_RATES
    width_grid: tuple = ARTIFICIAL_WIDTHS
    # "absolute" uses width_grid as is; "median" multiplies it by the median heuristic of y
    width_mode: str = "absolute"
    l2_alpha: float = 1e-4
    rmsprop_decay: float = 0.9
    rmsprop_epsilon: float = 1e-8
    hidden: tuple = (100, 50)
    output_activation: str = "linear"
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        self.lr_grid = tuple(float(v) for v in self.lr_grid)
        self.width_grid = tuple(float(v) for v in self.width_grid)
        self.hidden = tuple(int(v) for v in self.hidden)
        if not self.lr_grid or not self.width_grid:
            raise ValueError("hyperparameter grids must be non-empty")
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must be in (0, 1)")
        if self.minibatch < 1 or self.epochs < 1 or self.d < 1 or self.n_centers < 1:
            raise ValueError("minibatch, epochs, d and n_centers must be positive")
        if self.width_mode not in ("absolute", "median"):
            raise ValueError("width_mode must be 'absolute' or 'median'")

    @classmethod
    def artificial(cls, **kw) -> "TrainConfig":
        return cls(**{"width_grid": ARTIFICIAL_WIDTHS, "width_mode": "absolute", "l2_alpha": 1e-4, **kw})

    @classmethod
    def benchmark(cls, **kw) -> "TrainConfig":
        return cls(**{"width_grid": BENCHMARK_WIDTHS, "width_mode": "median", "l2_alpha": 0.0, **kw})

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown TrainConfig keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("lr_grid", "width_grid", "hidden"):
            d[k] = list(d[k])
        return d


@dataclass
class TrainReport:
    candidates: list = field(default_factory=list)
    chosen_lr: Optional[float] = None
    chosen_width: Optional[float] = None
    best_epoch: Optional[int] = None
    best_val: Optional[float] = None
    width_scale: float = 1.0
    n_train: int = 0
    n_val: int = 0
    seconds: float = 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["timing"] = {"seconds": d.pop("seconds")}
        return d


def median_heuristic(y, max_points: int = 2000, seed: int = 0) -> float:
    """Median pairwise Euclidean distance between rows of ``y``."""
    y = np.asarray(y, dtype=np.float64)
    y = y[:, None] if y.ndim == 1 else y
    if len(y) < 2:
        raise ValueError("median heuristic needs at least 2 samples")
    if len(y) > max_points:
        y = y[np.random.default_rng([seed, 4]).choice(len(y), max_points, replace=False)]
    sq = np.sum(y**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * y @ y.T
    iu = np.triu_indices(len(y), k=1)
    return float(np.median(np.sqrt(np.maximum(d2[iu], 0.0))))


def rmsprop_step(params, grads, state, lr, decay=0.9, epsilon=1e-8):
    """One RMSprop update, in place over lists of arrays; returns ``(params, state)``."""
    if len(params) != len(grads) or len(params) != len(state):
        raise ValueError("params, grads and state must align")
    for p, g, s in zip(params, grads, state):
        if p.shape != g.shape or p.shape != s.shape:
            raise ValueError(f"shape mismatch {p.shape} / {g.shape} / {s.shape}")
        s *= decay
        s += (1.0 - decay) * g * g
        p -= lr * g / np.sqrt(s + epsilon)
    return params, state


def _batched_objective(y, x, alpha, net, basis, chunk=4096):
    total = 0.0
    for start in range(0, len(y), chunk):
        sl = slice(start, start + chunk)
        total += objective_value(y[sl], x[sl], alpha, net, basis) * len(y[sl])
    return total / len(y)


def _train_candidate(args):
    """Train one ``(lr, width)`` candidate; returns its record and best snapshot."""
    # overflow is expected for diverging candidates and is detected below
    with np.errstate(over="ignore", invalid="ignore"):
        return _run_candidate(*args)


def _run_candidate(cfg, lr, width, centers, net0, y_tr, x_tr, y_va, x_va):
    basis = KernelBasis(centers, width)
    net = net0.copy()
    alpha = np.zeros((cfg.d, basis.n_features))
    params = [alpha] + net.params()
    state = [np.zeros_like(p) for p in params]
    rng = np.random.default_rng([cfg.seed, 3])
    rec = {"lr": lr, "width": width, "train_J": [], "val_J": [], "best_epoch": None,
           "best_val": None, "diverged": False}
    best = None
    n = len(y_tr)
    l2_term = lambda: cfg.l2_alpha * float(np.sum(alpha**2))  # noqa: E731
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        running, count = 0.0, 0
        for start in range(0, n, cfg.minibatch):
            idx = perm[start:start + cfg.minibatch]
            pen = l2_term()
            g_alpha, g_theta, value = objective_gradients(y_tr[idx], x_tr[idx], alpha, net, basis, cfg.l2_alpha)
            if not np.isfinite(value):
                rec["diverged"] = True
                break
            running += (value - pen) * len(idx)
            count += len(idx)
            rmsprop_step(params, [g_alpha] + g_theta, state, lr, cfg.rmsprop_decay, cfg.rmsprop_epsilon)
        if rec["diverged"]:
            break
        val = _batched_objective(y_va, x_va, alpha, net, basis)
        if not (np.isfinite(val) and np.all(np.isfinite(alpha))):
            rec["diverged"] = True
            break
        rec["train_J"].append(running / count)
        rec["val_J"].append(float(val))
        if rec["best_val"] is None or val < rec["best_val"]:
            rec["best_val"], rec["best_epoch"] = float(val), epoch
            best = (alpha.copy(), net.copy())
    return rec, best


def _make_dims(cfg: TrainConfig, d_x: int) -> list:
    return [d_x, *cfg.hidden, cfg.d]


def fit(dataset: Dataset, config: TrainConfig):
    """Fit the model on ``dataset`` (already in model coordinates).

    Returns ``(NkcModel, TrainReport)``. The training/validation split,
    kernel centers, network initialization and minibatch order all derive
    from ``config.seed``; centers and initialization are shared by every
    grid candidate.
    """
    t0 = time.perf_counter()
    cfg = config
    T = len(dataset)
    n_val = int(round(T * cfg.val_fraction))
    n_tr = T - n_val
    if n_tr < max(cfg.n_centers, cfg.minibatch) or n_val < 1:
        raise ValueError(f"dataset of {T} rows too small for {cfg.n_centers} centers / minibatch {cfg.minibatch}")
    perm = np.random.default_rng([cfg.seed, 5]).permutation(T)
    tr_idx, va_idx = np.sort(perm[n_val:]), np.sort(perm[:n_val])
    y_tr, x_tr = dataset.y[tr_idx], dataset.x[tr_idx]
    y_va, x_va = dataset.y[va_idx], dataset.x[va_idx]

    scale = median_heuristic(y_tr, seed=cfg.seed) if cfg.width_mode == "median" else 1.0
    centers = KernelBasis.from_data(y_tr, cfg.n_centers, 1.0, np.random.default_rng([cfg.seed, 6])).centers
    net0 = Mlp.init([cfg.seed, 7], _make_dims(cfg, dataset.d_x), cfg.output_activation)

    jobs = [(cfg, lr, w * scale, centers, net0, y_tr, x_tr, y_va, x_va)
            for lr, w in itertools.product(cfg.lr_grid, cfg.width_grid)]
    if cfg.n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.n_jobs) as ex:
            results = list(ex.map(_train_candidate, jobs))
    else:
        results = [_train_candidate(j) for j in jobs]

    report = TrainReport(width_scale=scale, n_train=n_tr, n_val=n_val)
    best_model = None
    for rec, snap in results:
        report.candidates.append(rec)
        if snap is None:
            continue
        if report.best_val is None or rec["best_val"] < report.best_val:
            report.best_val = rec["best_val"]
            report.chosen_lr, report.chosen_width, report.best_epoch = rec["lr"], rec["width"], rec["best_epoch"]
            best_model = snap
    report.seconds = time.perf_counter() - t0
    if best_model is None:
        raise NumericalError("every hyperparameter candidate diverged")
    alpha, net = best_model
    meta = {
        "seed": cfg.seed,
        "proposal": Proposal.fit(y_tr).to_dict(),
        "train_config": cfg.to_dict(),
    }
    model = NkcModel(KernelBasis(centers, report.chosen_width), alpha, net, dataset.standardization(), meta)
    return model, report
