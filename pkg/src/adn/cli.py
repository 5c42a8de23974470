"""Command-line front end: data ingestion, run configuration, metrics output.

Configuration is a flat key=value file mirroring the flags; flags override
the file.  The metrics CSV and JSON summary formats live in the engine
module.  The ADN_LOG environment variable (debug/info/warning) controls
verbosity.
"""

import argparse
import logging
import os
import sys

import numpy as np

from .control import TrustConfig
from .data import SyntheticSpec, generate_synthetic, parse_libsvm
from .engine import (EngineOptions, LineSearchConfig, StopCriteria, run_adn,
                     run_cocoa, run_line_search, summary_dict,
                     write_metrics_csv, write_summary_json)
from .errors import AdnError, ConfigError, NonFiniteValue
from .objectives import ProblemSpec, Regularizer, SmoothLoss
from .solver import SolverBudget
from .sparse import SparseColMatrix, partition_columns

logger = logging.getLogger("adn.cli")

# name -> (type tag, default); order defines the canonical serialization
CONFIG_FIELDS = {
    "mode": ("str", "adn"),
    "data": ("optstr", None),
    "layout": ("str", "primal"),
    "normalize": ("bool", True),
    "synthetic": ("optstr", None),
    "loss": ("str", "logistic"),
    "f_scale": ("float", 1.0),
    "reg": ("str", "l2"),
    "mu": ("float", 1e-3),
    "lam": ("float", 1e-3),
    "support_bound": ("optfloat", None),
    "workers": ("int", 1),
    "partition": ("str", "contiguous"),
    "partition_seed": ("int", 0),
    "schedule": ("str", "threshold"),
    "sigma0": ("float", 1.0),
    "gamma": ("float", 1.2),
    "zeta": ("float", 1.2),
    "xi": ("float", 1e-6),
    "sigma_min": ("float", 1e-8),
    "sigma_max": ("float", 1e8),
    "sigma_fixed": ("optfloat", None),
    "epochs": ("int", 5),
    "solver_seed": ("int", 0),
    "max_rounds": ("int", 100),
    "gap_tol": ("optfloat", None),
    "subopt_tol": ("optfloat", None),
    "reference_objective": ("optfloat", None),
    "ls_c1": ("float", 1e-4),
    "ls_backtrack": ("float", 0.5),
    "ls_max_backtracks": ("int", 30),
    "executor": ("str", "serial"),
    "debug": ("bool", False),
    "metrics": ("optstr", None),
    "summary": ("optstr", None),
}

_SCHEDULE_ALIASES = {"auto": "parameter_free"}


class RunConfig:
    """Flat run configuration with a canonical text form."""

    __slots__ = tuple(CONFIG_FIELDS)

    def __init__(self, **kwargs):
        for name, (_, default) in CONFIG_FIELDS.items():
            setattr(self, name, kwargs.pop(name, default))
        if kwargs:
            raise ConfigError(f"unknown config keys: {sorted(kwargs)}")
        self.schedule = _SCHEDULE_ALIASES.get(self.schedule, self.schedule)


def _parse_value(name, tag, raw):
    raw = raw.strip()
    if tag.startswith("opt") and raw.lower() == "none":
        return None
    try:
        if tag in ("str", "optstr"):
            return raw
        if tag == "int":
            return int(raw)
        if tag in ("float", "optfloat"):
            return float(raw)
        if tag == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}")
    raise ConfigError(f"unknown field type {tag}")


def _format_value(tag, value):
    if value is None:
        return "none"
    if tag == "bool":
        return "true" if value else "false"
    if tag in ("float", "optfloat"):
        return repr(float(value))
    return str(value)


def parse_config(text):
    """Parse key=value lines ('#' starts a comment) into a RunConfig."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        if not sep:
            raise ConfigError(f"config line {lineno}: expected key=value")
        key = key.strip()
        if key not in CONFIG_FIELDS:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, CONFIG_FIELDS[key][0], raw)
    return RunConfig(**values)


def serialize_config(cfg):
    """Canonical text form; parse(serialize(cfg)) reproduces cfg exactly."""
    lines = []
    for name, (tag, _) in CONFIG_FIELDS.items():
        lines.append(f"{name}={_format_value(tag, getattr(cfg, name))}")
    return "\n".join(lines) + "\n"


def _parse_synthetic(text, default_task):
    spec = {"task": default_task}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"synthetic spec needs key=value, got {item!r}")
        key = key.strip()
        if key in ("d", "n", "seed"):
            spec[key] = int(raw)
        elif key in ("density", "coherence", "sparsity", "noise"):
            spec[key] = float(raw)
        elif key == "task":
            spec[key] = raw.strip()
        else:
            raise ConfigError(f"unknown synthetic key {key!r}")
    if "d" not in spec or "n" not in spec:
        raise ConfigError("synthetic spec needs at least d= and n=")
    return SyntheticSpec(**spec)


def _scale_columns_by_labels(matrix, labels):
    data = matrix.data.copy()
    for col in range(matrix.n_cols):
        lo, hi = matrix.indptr[col], matrix.indptr[col + 1]
        data[lo:hi] *= labels[col]
    return SparseColMatrix(matrix.n_rows, matrix.n_cols, matrix.indptr,
                           matrix.indices, data)


def build_problem(cfg):
    """Materialize (matrix, ProblemSpec) from a RunConfig."""
    if (cfg.data is None) == (cfg.synthetic is None):
        raise ConfigError("exactly one of data path or synthetic spec is required")
    if cfg.synthetic is not None:
        default_task = {"least_squares": "regression",
                        "logistic": "classification",
                        "quadratic_dual": "dual_classification"}.get(cfg.loss)
        if default_task is None:
            raise ConfigError(f"unknown loss {cfg.loss!r}")
        spec = _parse_synthetic(cfg.synthetic, default_task)
        matrix, outcome, _ = generate_synthetic(spec)
    else:
        matrix, outcome = parse_libsvm(cfg.data, layout=cfg.layout,
                                       normalize=cfg.normalize)
        if cfg.loss == "quadratic_dual" and cfg.layout == "dual":
            matrix = _scale_columns_by_labels(matrix, outcome)

    if cfg.loss == "least_squares":
        loss = SmoothLoss.least_squares(np.asarray(outcome, float))
    elif cfg.loss == "logistic":
        labels = np.where(np.asarray(outcome, float) > 0, 1.0, -1.0)
        if labels.size != matrix.n_rows:
            raise ConfigError(
                "logistic needs one label per row; use the primal layout")
        loss = SmoothLoss.logistic(labels)
    elif cfg.loss == "quadratic_dual":
        loss = SmoothLoss.quadratic_dual(cfg.f_scale, dim=matrix.n_rows)
    else:
        raise ConfigError(f"unknown loss {cfg.loss!r}")

    if cfg.reg == "l2":
        reg = Regularizer.l2(cfg.mu)
    elif cfg.reg == "l1":
        reg = Regularizer.l1(cfg.lam, support_bound=cfg.support_bound)
    elif cfg.reg == "elastic_net":
        reg = Regularizer.elastic_net(cfg.lam, cfg.mu)
    elif cfg.reg == "box_entropy_dual":
        reg = Regularizer.box_entropy_dual()
    else:
        raise ConfigError(f"unknown regularizer {cfg.reg!r}")
    return matrix, ProblemSpec(loss, reg)


def execute_run(cfg):
    """Run the configured mode; returns the RunResult."""
    matrix, problem = build_problem(cfg)
    partition = partition_columns(
        matrix.n_cols, cfg.workers, strategy=cfg.partition,
        seed=cfg.partition_seed if cfg.partition == "seeded_random" else None)
    budget = SolverBudget(cfg.epochs, seed=cfg.solver_seed)
    stop = StopCriteria(cfg.max_rounds, gap_tol=cfg.gap_tol,
                        subopt_tol=cfg.subopt_tol,
                        reference_objective=cfg.reference_objective)
    options = EngineOptions(executor=cfg.executor, debug=cfg.debug)
    if cfg.mode == "adn":
        trust = TrustConfig(sigma0=cfg.sigma0, gamma=cfg.gamma, zeta=cfg.zeta,
                            xi=cfg.xi, schedule=cfg.schedule,
                            sigma_min=cfg.sigma_min, sigma_max=cfg.sigma_max,
                            sigma_fixed=cfg.sigma_fixed)
        result = run_adn(problem, matrix, partition, trust, budget, stop,
                         options=options)
    elif cfg.mode == "cocoa":
        result = run_cocoa(problem, matrix, partition, budget, stop,
                           sigma_fixed=cfg.sigma_fixed, options=options)
    elif cfg.mode == "ls":
        ls = LineSearchConfig(cfg.ls_c1, cfg.ls_backtrack, cfg.ls_max_backtracks)
        result = run_line_search(problem, matrix, partition, budget, stop,
                                 ls=ls, options=options)
    else:
        raise ConfigError(f"unknown mode {cfg.mode!r}")
    if cfg.metrics:
        write_metrics_csv(result.records, cfg.metrics)
    if cfg.summary:
        write_summary_json(result, cfg.summary)
    return result


def _build_parser():
    parser = argparse.ArgumentParser(prog="adn",
                                     description="Adaptive distributed Newton solver")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute one training run")
    run.add_argument("--config", help="key=value config file; flags override")
    for name, (tag, _) in CONFIG_FIELDS.items():
        flag = "--" + name.replace("_", "-")
        if tag == "bool":
            group = run.add_mutually_exclusive_group()
            group.add_argument(flag, dest=name, action="store_const", const=True)
            group.add_argument("--no-" + name.replace("_", "-"), dest=name,
                               action="store_const", const=False)
        elif tag == "int":
            run.add_argument(flag, dest=name, type=int)
        elif tag in ("float", "optfloat"):
            run.add_argument(flag, dest=name, type=float)
        else:
            run.add_argument(flag, dest=name)
    return parser


def run_command(argv=None):
    """Entry point logic; returns the process exit code."""
    level = {"debug": logging.DEBUG, "info": logging.INFO,
             "warning": logging.WARNING}.get(
                 os.environ.get("ADN_LOG", "").lower(), logging.WARNING)
    logging.basicConfig(level=level, force=True)
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        values = {}
        if args.config:
            with open(args.config) as fh:
                file_cfg = parse_config(fh.read())
            values = {name: getattr(file_cfg, name) for name in CONFIG_FIELDS}
        for name in CONFIG_FIELDS:
            flag_value = getattr(args, name, None)
            if flag_value is not None:
                values[name] = flag_value
        cfg = RunConfig(**values)
        result = execute_run(cfg)
    except NonFiniteValue as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 2
    except (AdnError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    info = summary_dict(result)
    print(f"mode={info['mode']} rounds={info['rounds']} "
          f"accepted={info['accepted']} final_gap={info['final_gap']:.3e} "
          f"bytes_up={info['bytes_up']} bytes_down={info['bytes_down']} "
          f"stop={info['stop_reason']}")
    return 0


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
