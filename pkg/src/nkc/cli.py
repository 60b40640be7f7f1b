"""Command-line entry point: ``python -m nkc <command> [flags]``.

Every command reads one JSON config (``--config``); flags override the
matching config keys. Exit codes: 0 success, 2 config error, 3 data error,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import os
import sys

import numpy as np

from . import __version__
from . import lscde as lscde_mod
from .datagen import DataError, MixtureGenerator, apply_standardization, generate, load_csv, split, standardize, write_csv
from .estimator import NkcModel, NumericalError, Proposal, density_grid, evaluate
from .repr_checks import IcaGenerator, SdrGenerator, ica_experiment, sdr_experiment
from .trainer import TrainConfig, fit

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

DEFAULTS = {
    "seed": 0,
    "T": 30_000,
    "test_fraction": 0.1,
    "standardize": False,
    "n_is_samples": 10_000,
    "eval_limit": None,
    "protocol": "artificial",
    "generator": {"d_x": 50},
    "train": {},
    "lscde": {"center_count": 1000, "folds": 5},
    "compare_ds": [3, 5],
    "rows": [0],
    "grid": {"lo": -4.0, "hi": 4.0, "n": 801},
    "ica": {"d": 2, "T": 30_000, "amplitude": 1.0},
    "sdr": {"d_x": 20, "d_true": 1, "T": 20_000},
}
VOLATILE_KEYS = ("started", "finished", "timing")


class ConfigError(ValueError):
    pass


def strip_volatile(obj):
    """Drop timestamps and timings so two reports can be compared for equality."""
    if isinstance(obj, dict):
        return {k: strip_volatile(v) for k, v in obj.items() if k not in VOLATILE_KEYS}
    if isinstance(obj, list):
        return [strip_volatile(v) for v in obj]
    return obj


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


class Run:
    """Collects the manifest for one command invocation."""

    def __init__(self, args, cfg):
        self.cfg = cfg
        self.out = args.out
        os.makedirs(self.out, exist_ok=True)
        self.manifest = {
            "command": args.command,
            "config_path": args.config,
            "config": cfg,
            "seed": cfg["seed"],
            "inputs": {k: getattr(args, k) for k in ("data", "model") if getattr(args, k, None)},
            "outputs": [],
            "version": __version__,
            "started": _now(),
        }

    def path(self, name):
        p = os.path.join(self.out, name)
        self.manifest["outputs"].append(name)
        return p

    def write_json(self, name, payload):
        payload = dict(payload)
        payload["manifest"] = {**self.manifest, "finished": _now()}
        with open(self.path(name), "w") as fh:
            json.dump(_jsonable(payload), fh, indent=1, sort_keys=True)

    def close(self):
        m = {**self.manifest, "finished": _now()}
        with open(os.path.join(self.out, "manifest.json"), "w") as fh:
            json.dump(_jsonable(m), fh, indent=1, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def load_config(args) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS))
    if args.config:
        try:
            with open(args.config) as fh:
                user = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from None
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(user) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for k, v in user.items():
            cfg[k] = {**cfg[k], **v} if isinstance(cfg[k], dict) and isinstance(v, dict) else v
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.d is not None:
        cfg["train"]["d"] = args.d
    if args.threads is not None:
        cfg["train"]["n_jobs"] = args.threads
    return cfg


def train_config(cfg, **overrides) -> TrainConfig:
    try:
        base = TrainConfig.benchmark if cfg["protocol"] == "benchmark" else TrainConfig.artificial
        return base(**{**cfg["train"], "seed": cfg["seed"], **overrides})
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad train config: {e}") from None


def prepare(cfg, data_path):
    """Load, split and (optionally) standardize; returns ``(train, test)``."""
    ds = load_csv(data_path)
    train, test = split(ds, cfg["test_fraction"], cfg["seed"])
    if cfg["standardize"]:
        train = standardize(train)
        test = standardize(test, reference=train)
    return train, test


def _limit(test, cfg):
    lim = cfg.get("eval_limit")
    return test if not lim else test.subset(np.arange(min(lim, len(test))), "test")


def _nkc_eval(model, test, cfg):
    prop = model.meta["proposal"]
    proposal = Proposal(prop["mean"], prop["var"], cfg["n_is_samples"])
    return evaluate(model, _limit(test, cfg), cfg["n_is_samples"], cfg["seed"], proposal)


def cmd_generate(args, run: Run):
    cfg = run.cfg
    gen = MixtureGenerator(**{**cfg["generator"], "seed": cfg["seed"]})
    ds = generate(gen, cfg["T"])
    write_csv(ds, run.path("data.csv"))
    run.write_json("generator.json", {"generator": gen.to_dict(), "T": cfg["T"]})


def cmd_train(args, run: Run):
    cfg = run.cfg
    train, _ = prepare(cfg, _need(args.data, "--data"))
    model, report = fit(train, train_config(cfg))
    model.meta.update(test_fraction=cfg["test_fraction"], split_seed=cfg["seed"], standardize=cfg["standardize"])
    with open(run.path("model.json"), "w") as fh:
        json.dump(model.to_dict(), fh)
    run.write_json("train_report.json", report.to_dict())


def cmd_eval(args, run: Run):
    cfg = run.cfg
    model = NkcModel.load(_need(args.model, "--model"))
    meta = model.meta or {}
    cfg = {**cfg, "test_fraction": meta.get("test_fraction", cfg["test_fraction"]),
           "standardize": meta.get("standardize", cfg["standardize"])}
    cfg["seed"] = meta.get("split_seed", cfg["seed"])
    _, test = prepare(cfg, _need(args.data, "--data"))
    report = _nkc_eval(model, test, cfg)
    run.write_json("eval.json", report)


def cmd_compare(args, run: Run):
    cfg = run.cfg
    train, test = prepare(cfg, _need(args.data, "--data"))
    rows, details = [], {}
    for d in cfg["compare_ds"]:
        model, report = fit(train, train_config(cfg, d=d))
        ev = _nkc_eval(model, test, cfg)
        rows.append({"method": f"NKC{d}", "mean_loglik": ev["mean_loglik"], "se": ev["se"], "n": ev["n"]})
        details[f"NKC{d}"] = {"eval": ev, "train": report.to_dict()}
    lm = lscde_mod.lscde_fit(train, seed=cfg["seed"], **cfg["lscde"])
    ev = lscde_mod.evaluate(lm, _limit(test, cfg))
    rows.append({"method": "LSCDE", "mean_loglik": ev["mean_loglik"], "se": ev["se"], "n": ev["n"]})
    details["LSCDE"] = {"eval": ev}
    with open(run.path("compare.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["method", "mean_loglik", "se", "n"])
        w.writeheader()
        w.writerows(rows)
    run.write_json("compare.json", {"table": rows, "details": details})
    for r in rows:
        print(f"{r['method']:>6}  {r['mean_loglik']:8.4f} +- {r['se']:.4f}")


def cmd_grid(args, run: Run):
    cfg = run.cfg
    model = NkcModel.load(_need(args.model, "--model"))
    if model.d_y != 1:
        raise ConfigError("grid needs a model with d_y = 1")
    ds = load_csv(_need(args.data, "--data"))
    g = cfg["grid"]
    grid = np.linspace(g["lo"], g["hi"], int(g["n"]))
    for r in cfg["rows"]:
        if not 0 <= r < len(ds):
            raise DataError(f"row {r} out of range")
        x = apply_standardization(model.standardization, x=ds.x[r])
        dens = density_grid(model, x, grid)
        with open(run.path(f"grid_row{r}.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["y", "density"])
            for yy, dd in zip(grid, dens):
                w.writerow([repr(float(yy)), repr(float(dd))])


def cmd_ica(args, run: Run):
    cfg = run.cfg
    ica = dict(cfg["ica"])
    T = ica.pop("T")
    gen = IcaGenerator(**{**ica, "seed": cfg["seed"]})
    rep = ica_experiment(gen, T, train_config(cfg, d=gen.d))
    run.write_json("ica_report.json", {"generator": gen.to_dict(), "T": T, "report": rep.to_dict()})


def cmd_sdr(args, run: Run):
    cfg = run.cfg
    sdr = dict(cfg["sdr"])
    T = sdr.pop("T")
    gen = SdrGenerator(**{**sdr, "seed": cfg["seed"]})
    rep = sdr_experiment(gen, T, train_config(cfg), n_is_samples=cfg["n_is_samples"])
    run.write_json("sdr_report.json", rep)


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "grid": cmd_grid,
    "ica-check": cmd_ica,
    "sdr-check": cmd_sdr,
}


def _need(value, flag):
    if not value:
        raise ConfigError(f"{flag} is required for this command")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nkc", description="Neural-kernelized conditional density estimation")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--data", help="input CSV (y_1..,x_1..)")
    p.add_argument("--model", help="model JSON")
    p.add_argument("--d", type=int, choices=(3, 5), help="dimension of h")
    p.add_argument("--threads", type=int, help="parallel grid candidates")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on bad usage
    try:
        cfg = load_config(args)
        run = Run(args, cfg)
        COMMANDS[args.command](args, run)
        run.close()
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, TypeError) as e:
        # remaining validation failures come from config values
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
