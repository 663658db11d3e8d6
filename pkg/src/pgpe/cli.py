"""Experiment command line: config files in, CSV artifacts out.

Commands
--------
run           execute the experiment described by a YAML config
validate      check a config without running anything
list-methods  print the estimator roster

Every run writes into its own directory, named from a hash of the resolved
config plus the seed, containing a resolved-config echo, a manifest (the only
file with timing information), and the result CSVs.  Re-running the same
config and seed reproduces the CSV bodies byte for byte.

CSV schemas (schema_version 1):
    returns.csv   iteration, method, seed, mean_return, se
    path.csv      iteration, method, seed, eta_0..., tau_0...
    weights.csv   iteration, method, seed, w_max
    var_bias.csv  iteration, method, var, bias2, mse, w_max   (mean block)
    var_bias_tau.csv  same columns for the deviation block
    angles.csv    trial, method, angle_deg
    bounds.csv    iteration, block, check, method, empirical_var, bound, pass
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .analysis import angle_experiment, bound_check, gradient_study
from .envs import ENVIRONMENTS, make_env
from .methods import COMPARISON_METHODS, METHODS
from .prior import HyperParams
from .trainer import TrainerConfig, evaluate_policy, run_training

SCHEMA_VERSION = 1
OUT_DIR_ENV_VAR = "PGPE_OUT_DIR"

COMMANDS = ("train", "gradient-study", "angle-study", "bounds-check", "eval")


class ConfigError(Exception):
    """Invalid configuration; the message names the offending field."""


# ---------------------------------------------------------------------------
# config schema

def _int(name, v, minimum=None):
    if not isinstance(v, int) or isinstance(v, bool):
        raise ConfigError(f"field '{name}': expected an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(f"field '{name}': must be >= {minimum}, got {v}")
    return v


def _number(name, v, minimum=None, maximum=None):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"field '{name}': expected a number, got {v!r}")
    v = float(v)
    if minimum is not None and v < minimum:
        raise ConfigError(f"field '{name}': must be >= {minimum}, got {v}")
    if maximum is not None and v > maximum:
        raise ConfigError(f"field '{name}': must be <= {maximum}, got {v}")
    return v


def _string(name, v, choices=None):
    if not isinstance(v, str):
        raise ConfigError(f"field '{name}': expected a string, got {v!r}")
    if choices is not None and v not in choices:
        raise ConfigError(f"field '{name}': must be one of {', '.join(choices)}; got {v!r}")
    return v


def _method_list(name, v):
    if isinstance(v, str):
        v = [v]
    if not isinstance(v, list) or not v:
        raise ConfigError(f"field '{name}': expected a non-empty list of method names")
    for m in v:
        if m not in METHODS:
            raise ConfigError(
                f"field '{name}': unknown method {m!r} (known: {', '.join(METHODS)})"
            )
    return list(v)


def _float_list(name, v):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [v]
    if not isinstance(v, list) or not v:
        raise ConfigError(f"field '{name}': expected a number or non-empty list of numbers")
    out = []
    for x in v:
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ConfigError(f"field '{name}': expected numbers, got {x!r}")
        out.append(float(x))
    return out


def _window(name, v):
    if v == "all":
        return v
    if isinstance(v, int) and not isinstance(v, bool) and v >= 1:
        return v
    raise ConfigError(f"field '{name}': expected a positive integer or \"all\", got {v!r}")


# Per-command field specs: name -> (validator, default).  A default of
# REQUIRED makes the field mandatory; defaults of None are resolved later
# (environment or method defaults).
REQUIRED = object()

_COMMON_FIELDS = {
    "command": (lambda n, v: _string(n, v, COMMANDS), REQUIRED),
    "env": (lambda n, v: _string(n, v, tuple(ENVIRONMENTS)), REQUIRED),
    "seed": (lambda n, v: _int(n, v, 0), 0),
    "out": (lambda n, v: _string(n, v), "runs"),
    "threads": (lambda n, v: _int(n, v, 1), 1),
}

_TRAIN_FIELDS = {
    "methods": (_method_list, ["IW-PGPE_OB"]),
    "n_seeds": (lambda n, v: _int(n, v, 1), 1),
    "iterations": (lambda n, v: _int(n, v, 1), 20),
    "n_per_iteration": (lambda n, v: _int(n, v, 1), 10),
    "horizon": (lambda n, v: _int(n, v, 1), None),
    "gamma": (lambda n, v: _number(n, v, 0.0, 1.0), None),
    "step_size": (lambda n, v: _number(n, v), None),
    "tau_floor": (lambda n, v: _number(n, v), 0.05),
    "n_test": (lambda n, v: _int(n, v, 1), 100),
    "reuse_window": (_window, None),
    "truncation_cap": (lambda n, v: _number(n, v), None),
    "init_tau": (lambda n, v: _number(n, v), 1.0),
}

_STUDY_FIELDS = {
    "methods": (_method_list, list(COMPARISON_METHODS)),
    "trials": (lambda n, v: _int(n, v, 2), 1000),
    "iterations": (lambda n, v: _int(n, v, 1), 20),
    "n_per_iteration": (lambda n, v: _int(n, v, 1), 10),
    "horizon": (lambda n, v: _int(n, v, 1), None),
    "gamma": (lambda n, v: _number(n, v, 0.0, 1.0), None),
    "step_size": (lambda n, v: _number(n, v), None),
    "tau_floor": (lambda n, v: _number(n, v), 0.05),
    "oracle_samples": (lambda n, v: _int(n, v, 1000), 10_000),
    "init_eta": (_float_list, None),
    "init_tau": (lambda n, v: _number(n, v), 1.0),
}

_BOUNDS_FIELDS = dict(
    _STUDY_FIELDS,
    reward_low=(lambda n, v: _number(n, v), None),
    reward_high=(lambda n, v: _number(n, v), None),
)

_ANGLE_FIELDS = {
    "methods": (_method_list, ["NIW-PGPE", "IW-PGPE", "IW-PGPE_OB"]),
    "trials": (lambda n, v: _int(n, v, 1), 20),
    "n_samples": (lambda n, v: _int(n, v, 1), 10),
    "target_eta": (_float_list, [-0.8]),
    "target_tau": (_float_list, [0.5]),
    "behavior_eta": (_float_list, [-1.6]),
    "behavior_tau": (_float_list, [1.0]),
    "horizon": (lambda n, v: _int(n, v, 1), None),
    "gamma": (lambda n, v: _number(n, v, 0.0, 1.0), None),
    "oracle_samples": (lambda n, v: _int(n, v, 1000), 10_000),
}

_EVAL_FIELDS = {
    "eta": (_float_list, REQUIRED),
    "tau": (_float_list, REQUIRED),
    "n_test": (lambda n, v: _int(n, v, 1), 100),
    "horizon": (lambda n, v: _int(n, v, 1), None),
    "gamma": (lambda n, v: _number(n, v, 0.0, 1.0), None),
}

_COMMAND_FIELDS = {
    "train": _TRAIN_FIELDS,
    "gradient-study": _STUDY_FIELDS,
    "bounds-check": _BOUNDS_FIELDS,
    "angle-study": _ANGLE_FIELDS,
    "eval": _EVAL_FIELDS,
}


def load_config(path: str, overrides: list[str]) -> dict:
    """Read, override, validate, and fill defaults; raises ConfigError."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        where = f" (line {mark.line + 1})" if mark is not None else ""
        raise ConfigError(f"config is not valid YAML{where}: {err}")
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping of field names to values")
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        try:
            raw[key] = yaml.safe_load(value)
        except yaml.YAMLError:
            raw[key] = value
    return validate_config(raw)


def validate_config(raw: dict) -> dict:
    if "command" not in raw:
        raise ConfigError("missing required field 'command'")
    command = _string("command", raw["command"], COMMANDS)
    fields = dict(_COMMON_FIELDS)
    fields.update(_COMMAND_FIELDS[command])

    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ConfigError(f"unknown field(s) for command '{command}': {', '.join(unknown)}")

    resolved = {}
    for name, (check, default) in fields.items():
        if name in raw and raw[name] is not None:
            resolved[name] = check(name, raw[name])
        elif default is REQUIRED:
            raise ConfigError(f"missing required field '{name}'")
        else:
            resolved[name] = default

    if command in ("angle-study",) and resolved["env"] != "toy":
        raise ConfigError("field 'env': angle-study requires the 1-d 'toy' environment")
    if command == "bounds-check":
        env = make_env(resolved["env"])
        if resolved["reward_low"] is None:
            resolved["reward_low"] = float(env.reward_low)
        if resolved["reward_high"] is None:
            resolved["reward_high"] = float(env.reward_high)
        if resolved["reward_low"] <= 0.0:
            raise ConfigError(
                "field 'reward_low': bound checks need a positive reward lower bound "
                f"(environment '{resolved['env']}' has {resolved['reward_low']})"
            )
    return resolved


def config_hash(config: dict) -> str:
    """Hash of the run identity: everything except seed, output, parallelism."""
    identity = {k: v for k, v in config.items() if k not in ("seed", "out", "threads")}
    blob = json.dumps(identity, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# CSV output

def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


# ---------------------------------------------------------------------------
# commands

def _run_seeds(master_seed: int, n: int) -> list[int]:
    """Derive per-run seeds from the master seed, stable across platforms."""
    state = np.random.SeedSequence(master_seed).generate_state(n, dtype=np.uint64)
    return [int(s) for s in state]


def _cmd_train(config: dict, outdir: Path) -> list[str]:
    env = make_env(config["env"])
    ell = env.feature_dim
    methods = config["methods"]
    seeds = _run_seeds(config["seed"], config["n_seeds"])
    returns_rows, path_rows, weight_rows = [], [], []
    for method in methods:
        for seed in seeds:
            history = run_training(
                TrainerConfig(
                    env=config["env"],
                    method=method,
                    iterations=config["iterations"],
                    n_per_iteration=config["n_per_iteration"],
                    horizon=config["horizon"],
                    gamma=config["gamma"],
                    step_size=config["step_size"],
                    tau_floor=config["tau_floor"],
                    reuse_window=config["reuse_window"],
                    truncation_cap=config["truncation_cap"],
                    n_test=config["n_test"],
                    seed=seed,
                    init_tau=config["init_tau"],
                )
            )
            for rec in history.records:
                returns_rows.append((rec.iteration, method, seed, rec.eval_mean, rec.eval_se))
                path_rows.append(
                    (rec.iteration, method, seed)
                    + tuple(rec.hyperparams.eta)
                    + tuple(rec.hyperparams.tau)
                )
                weight_rows.append((rec.iteration, method, seed, rec.gradient.weight_max))
    write_csv(outdir / "returns.csv", ["iteration", "method", "seed", "mean_return", "se"], returns_rows)
    path_header = (
        ["iteration", "method", "seed"]
        + [f"eta_{i}" for i in range(ell)]
        + [f"tau_{i}" for i in range(ell)]
    )
    write_csv(outdir / "path.csv", path_header, path_rows)
    write_csv(outdir / "weights.csv", ["iteration", "method", "seed", "w_max"], weight_rows)
    return ["returns.csv", "path.csv", "weights.csv"]


def _study_rho_init(config: dict, env, rng: np.random.Generator) -> HyperParams:
    if config["init_eta"] is not None:
        eta = np.asarray(config["init_eta"], dtype=float)
        if eta.shape != (env.feature_dim,):
            raise ConfigError(f"field 'init_eta': expected {env.feature_dim} entries")
    else:
        eta = rng.standard_normal(env.feature_dim)
    tau = np.full(env.feature_dim, float(config["init_tau"]))
    return HyperParams(eta, tau)


def _run_study(config: dict):
    env = make_env(config["env"])
    rng = np.random.default_rng(config["seed"])
    rho_init = _study_rho_init(config, env, rng.spawn(1)[0])
    return gradient_study(
        env,
        rho_init,
        rng,
        methods=tuple(config["methods"]),
        iterations=config["iterations"],
        trials=config["trials"],
        n_per_iteration=config["n_per_iteration"],
        horizon=config["horizon"],
        gamma=config["gamma"],
        oracle_samples=config["oracle_samples"],
        step_size=config["step_size"],
        tau_floor=config["tau_floor"],
        threads=config["threads"],
    )


def _write_var_bias(study, outdir: Path) -> list[str]:
    header = ["iteration", "method", "var", "bias2", "mse", "w_max"]
    files = []
    for block, fname in (("eta", "var_bias.csv"), ("tau", "var_bias_tau.csv")):
        rows = [
            (c.iteration, c.method, c.var, c.bias2, c.mse, c.weight_max)
            for c in study.cells
            if c.block == block
        ]
        write_csv(outdir / fname, header, rows)
        files.append(fname)
    return files


def _cmd_gradient_study(config: dict, outdir: Path) -> list[str]:
    return _write_var_bias(_run_study(config), outdir)


def _cmd_bounds_check(config: dict, outdir: Path) -> list[str]:
    study = _run_study(config)
    files = _write_var_bias(study, outdir)
    report = bound_check(study, config["reward_low"], config["reward_high"])
    rows = [
        (r.iteration, r.block, r.check, r.method, r.empirical, r.bound, r.passed)
        for r in report.rows
    ]
    write_csv(
        outdir / "bounds.csv",
        ["iteration", "block", "check", "method", "empirical_var", "bound", "pass"],
        rows,
    )
    return files + ["bounds.csv"]


def _cmd_angle_study(config: dict, outdir: Path) -> list[str]:
    env = make_env(config["env"])
    rng = np.random.default_rng(config["seed"])
    target = HyperParams(np.asarray(config["target_eta"]), np.asarray(config["target_tau"]))
    behavior = HyperParams(np.asarray(config["behavior_eta"]), np.asarray(config["behavior_tau"]))
    results = angle_experiment(
        env,
        target,
        behavior,
        rng,
        methods=tuple(config["methods"]),
        n_samples=config["n_samples"],
        trials=config["trials"],
        horizon=config["horizon"],
        gamma=config["gamma"],
        oracle_samples=config["oracle_samples"],
    )
    rows = []
    for method in config["methods"]:
        res = results[method]
        for trial, angle in zip(res.kept_indices, res.angles):
            rows.append((int(trial), method, float(angle)))
    write_csv(outdir / "angles.csv", ["trial", "method", "angle_deg"], rows)
    return ["angles.csv"]


def _cmd_eval(config: dict, outdir: Path) -> list[str]:
    env = make_env(config["env"])
    rho = HyperParams(np.asarray(config["eta"]), np.asarray(config["tau"]))
    horizon = config["horizon"] if config["horizon"] is not None else env.default_horizon
    gamma = config["gamma"] if config["gamma"] is not None else env.default_discount
    rng = np.random.default_rng(config["seed"])
    mean, se = evaluate_policy(env, rho, config["n_test"], horizon, gamma, rng)
    write_csv(
        outdir / "returns.csv",
        ["iteration", "method", "seed", "mean_return", "se"],
        [(0, "eval", config["seed"], mean, se)],
    )
    return ["returns.csv"]


_COMMAND_IMPL = {
    "train": _cmd_train,
    "gradient-study": _cmd_gradient_study,
    "bounds-check": _cmd_bounds_check,
    "angle-study": _cmd_angle_study,
    "eval": _cmd_eval,
}


def run_experiment(config: dict) -> Path:
    """Execute a validated config; returns the run directory."""
    outdir = Path(config["out"]) / f"{config_hash(config)}-s{config['seed']}"
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "resolved_config.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(config, fh, sort_keys=True)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "command": config["command"],
        "config_hash": config_hash(config),
        "seed": config["seed"],
        "versions": {
            "pgpe": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    start = time.perf_counter()
    try:
        files = _COMMAND_IMPL[config["command"]](config, outdir)
    except Exception as err:
        manifest["status"] = "failed"
        manifest["error"] = str(err)
        manifest["wall_time_s"] = time.perf_counter() - start
        with open(outdir / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
        raise
    manifest["status"] = "ok"
    manifest["outputs"] = files
    manifest["wall_time_s"] = time.perf_counter() - start
    with open(outdir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return outdir


def list_methods() -> str:
    """A fixed-order text table of the estimator roster."""
    header = ("method", "weight_mode", "baseline_mode", "window", "description")
    rows = [header]
    for m in METHODS.values():
        rows.append(
            (m.name, m.estimator.weight_mode, m.estimator.baseline_mode,
             str(m.reuse_window), m.description)
        )
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# entry point

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pgpe", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_config_args(p):
        p.add_argument("--config", required=True, help="path to a YAML experiment config")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field (repeatable)")

    p_run = sub.add_parser("run", help="execute an experiment config")
    add_config_args(p_run)
    p_run.add_argument("--out", help="output directory root (overrides config and env var)")
    p_run.add_argument("--seed", type=int, help="master seed (overrides config)")
    p_run.add_argument("--threads", type=int, help="worker cap for trial-parallel studies")

    p_val = sub.add_parser("validate", help="validate a config without running")
    add_config_args(p_val)

    sub.add_parser("list-methods", help="print the estimator roster")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.subcommand == "list-methods":
        print(list_methods())
        return 0
    try:
        config = load_config(args.config, args.set)
    except ConfigError as err:
        print(f"error: invalid config: {err}", file=sys.stderr)
        return 2
    if args.subcommand == "validate":
        print("config OK")
        print(yaml.safe_dump(config, sort_keys=True).rstrip())
        return 0

    if os.environ.get(OUT_DIR_ENV_VAR):
        config["out"] = os.environ[OUT_DIR_ENV_VAR]
    if args.out is not None:
        config["out"] = args.out
    if args.seed is not None:
        config["seed"] = args.seed
    if args.threads is not None:
        config["threads"] = max(1, args.threads)
    try:
        outdir = run_experiment(config)
    except Exception as err:
        print(f"error: run failed: {err}", file=sys.stderr)
        return 1
    print(outdir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
