"""Config-driven command-line front end.

Subcommands map one-to-one onto the experiment pipelines: ``estimate``,
``bench-patterns``, ``gaussian-sweep``, ``synthetic``, ``train``. Runs
are parameterized by an INI file (one section per subcommand) plus the
flags ``--config``, ``--seed``, ``--out``, ``--overwrite``; the
FAIRREG_CONFIG environment variable supplies the config path when the
flag is absent. Outputs are JSON and CSV files that are byte-identical
across reruns with the same config and seed. Exit codes: 0 success,
1 config error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import json
import os
import sys

import numpy as np

from . import experiments
from .data import PATTERN_KINDS, gen_bivariate_gaussian, gen_pattern, load_csv
from .estimators import (
    KdeConfig,
    SamplePairs,
    default_chi2_config,
    default_hgr_config,
    default_mine_config,
)
from .metrics import DOMINANCE_CSV_FIELDS, EVAL_CSV_FIELDS, EvalConfig
from .training import FAIRNESS_MODES, PENALTY_KINDS

__all__ = ["CONFIG_ENV_VAR", "ConfigError", "main", "run"]

CONFIG_ENV_VAR = "FAIRREG_CONFIG"


class ConfigError(Exception):
    """Invalid configuration; maps to exit code 1."""


# -- config key converters ---------------------------------------------------
# Converters raise ValueError; the loader wraps it into a ConfigError that
# names the section and key.


def _int(text: str) -> int:
    return int(text)


def _float(text: str) -> float:
    return float(text)


def _floats(text: str) -> tuple[float, ...]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("expected a comma-separated list of numbers")
    return tuple(float(p) for p in parts)


def _names(text: str) -> tuple[str, ...]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("expected a comma-separated list of names")
    return tuple(parts)


def _text(text: str) -> str:
    return text.strip()


def _choice(*options: str):
    def convert(text: str) -> str:
        text = text.strip()
        if text not in options:
            raise ValueError(f"expected one of {options}, got {text!r}")
        return text

    return convert


def _variants(text: str) -> tuple[tuple[str, str, float], ...]:
    """Fair-training variants as 'label:penalty:lambda' entries.

    An empty value means the standard model only.
    """
    out = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = [p.strip() for p in chunk.split(":")]
        if len(parts) != 3:
            raise ValueError(f"expected label:penalty:lambda, got {chunk!r}")
        label, penalty, lam = parts
        if penalty not in PENALTY_KINDS:
            raise ValueError(f"unknown penalty {penalty!r} in {chunk!r}")
        out.append((label, penalty, float(lam)))
    return tuple(out)


# Section schemas: key -> (converter, default). A default of None means
# "fall back to the library default". Unknown sections or keys are
# rejected before any computation.
_SCHEMAS: dict[str, dict] = {
    "estimate": {
        "seed": (_int, 0),
        "source": (_choice("gaussian", "pattern", "csv"), "gaussian"),
        "n": (_int, 2000),
        "rho": (_float, 0.5),
        "pattern": (_choice(*PATTERN_KINDS), "sine"),
        "sigma": (_float, 0.0),
        "csv": (_text, ""),
        "u_column": (_text, "u"),
        "v_column": (_text, "v"),
        "batch_size": (_int, None),
        "hgr_iterations": (_int, None),
        "chi2_iterations": (_int, None),
        "mine_iterations": (_int, None),
        "kde_grid": (_int, None),
    },
    "bench-patterns": {
        "seed": (_int, 0),
        "n": (_int, 500),
        "sigmas": (_floats, (0.0, 1.0, 2.0, 3.0)),
        "hgr_iterations": (_int, None),
        "hgr_batch_size": (_int, None),
        "kde_grid": (_int, None),
        "rdc_k": (_int, 20),
        "rdc_scale": (_float, 1.0 / 6.0),
    },
    "gaussian-sweep": {
        "seed": (_int, 0),
        "n": (_int, 5000),
        "rho_grid": (_floats, (-0.8, -0.6, -0.4, -0.2, 0.0, 0.2, 0.4, 0.6, 0.8)),
        "batch_size": (_int, None),
        "hgr_iterations": (_int, None),
        "chi2_iterations": (_int, None),
        "mine_iterations": (_int, None),
    },
    "synthetic": {
        "seed": (_int, 0),
        "n": (_int, 10000),
        "mode": (_choice(*FAIRNESS_MODES), "demographic_parity"),
        "variants": (_variants, (("fair_hgr", "hgr_nn", 0.5),)),
        "train_fraction": (_float, 0.8),
        "epochs": (_int, 200),
        "batch_size": (_int, 128),
        "age_bins": (_int, 20),
        "eval_iterations": (_int, None),
        "eval_batch_size": (_int, None),
    },
    "train": {
        "seed": (_int, 0),
        "csv": (_text, ""),
        "features": (_names, ()),
        "sensitive": (_text, ""),
        "target": (_text, ""),
        "mode": (_choice(*FAIRNESS_MODES), "demographic_parity"),
        "penalty": (_choice(*PENALTY_KINDS), "hgr_nn"),
        "lambda": (_float, 0.0),
        "repetitions": (_int, 5),
        "train_fraction": (_float, 0.8),
        "epochs": (_int, 200),
        "batch_size": (_int, 128),
        "eval_iterations": (_int, None),
        "eval_batch_size": (_int, None),
    },
}


def _load_params(command: str, config_path: str | None) -> dict:
    """Defaults for ``command`` overlaid with its config-file section.

    The whole file is validated (known sections, known keys) so a typo
    fails fast no matter which subcommand runs.
    """
    params = {key: default for key, (_, default) in _SCHEMAS[command].items()}
    path = config_path or os.environ.get(CONFIG_ENV_VAR)
    if not path:
        return params
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
    if parser.defaults():
        raise ConfigError("[DEFAULT] section is not supported; use per-command sections")
    for section in parser.sections():
        if section not in _SCHEMAS:
            raise ConfigError(f"unknown config section [{section}]")
        for key in parser.options(section):
            if key not in _SCHEMAS[section]:
                raise ConfigError(f"unknown config key '{key}' in section [{section}]")
    if parser.has_section(command):
        for key, text in parser.items(command):
            convert = _SCHEMAS[command][key][0]
            try:
                params[key] = convert(text)
            except ValueError as exc:
                raise ConfigError(f"[{command}] {key}: {exc}") from exc
    return params


# -- output writing ----------------------------------------------------------


def _prepare_out(out_dir: str, filenames: list[str], overwrite: bool) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = [os.path.join(out_dir, name) for name in filenames]
    if not overwrite:
        for p in paths:
            if os.path.exists(p):
                raise ConfigError(f"output file exists: {p} (pass --overwrite to replace)")
    return paths


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: str, fieldnames, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fieldnames), extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _spawn_ints(seed: int, count: int) -> list[int]:
    return [int(c.generate_state(1)[0]) for c in np.random.SeedSequence(seed).spawn(count)]


# -- subcommands -------------------------------------------------------------


def _neural_cfg(factory, n: int, batch_size: int | None, iterations: int | None):
    """Estimator config from CLI knobs; batch size is capped at n."""
    cfg = factory()
    batch = min(batch_size or cfg.batch_size, n)
    return dataclasses.replace(
        cfg, batch_size=batch, iterations=iterations or cfg.iterations
    )


def _cmd_estimate(params: dict, out_dir: str, overwrite: bool) -> int:
    data_seed, suite_seed = _spawn_ints(params["seed"], 2)
    source = params["source"]
    if source == "gaussian":
        pairs = gen_bivariate_gaussian(params["n"], params["rho"], seed=data_seed)
    elif source == "pattern":
        pairs = gen_pattern(params["pattern"], params["n"], params["sigma"], seed=data_seed)
    else:
        if not params["csv"]:
            raise ConfigError("[estimate] csv: a path is required when source = csv")
        ds = load_csv(
            params["csv"], (params["u_column"],), params["v_column"], params["u_column"]
        )
        pairs = SamplePairs(ds.x[:, 0], ds.s)
    n = pairs.n
    kde_cfg = KdeConfig(grid_size=params["kde_grid"]) if params["kde_grid"] else None
    values = experiments.estimate_suite(
        pairs,
        hgr_cfg=_neural_cfg(default_hgr_config, n, params["batch_size"], params["hgr_iterations"]),
        chi2_cfg=_neural_cfg(default_chi2_config, n, params["batch_size"], params["chi2_iterations"]),
        mine_cfg=_neural_cfg(default_mine_config, n, params["batch_size"], params["mine_iterations"]),
        kde_cfg=kde_cfg,
        seed=suite_seed,
    )
    (json_path,) = _prepare_out(out_dir, ["estimate.json"], overwrite)
    _write_json(json_path, {"source": source, "n": n, "estimates": values})
    width = max(len(name) for name in values)
    for name, value in values.items():
        print(f"{name:<{width}}  {value: .6f}")
    print(f"wrote {json_path}")
    return 0


def _cmd_bench_patterns(params: dict, out_dir: str, overwrite: bool) -> int:
    n = params["n"]
    hgr_cfg = None
    if params["hgr_iterations"] or params["hgr_batch_size"]:
        hgr_cfg = _neural_cfg(
            lambda: default_hgr_config(batch_size=n, iterations=20000),
            n,
            params["hgr_batch_size"],
            params["hgr_iterations"],
        )
    kde_cfg = KdeConfig(grid_size=params["kde_grid"]) if params["kde_grid"] else None
    rows = experiments.pattern_bench(
        n=n,
        sigmas=params["sigmas"],
        hgr_cfg=hgr_cfg,
        kde_cfg=kde_cfg,
        rdc_k=params["rdc_k"],
        rdc_scale=params["rdc_scale"],
        seed=params["seed"],
    )
    json_path, csv_path = _prepare_out(
        out_dir, ["pattern_bench.json", "pattern_bench.csv"], overwrite
    )
    _write_json(json_path, {"n": n, "rows": rows})
    _write_csv(csv_path, ("pattern", "sigma", "estimator", "value"), rows)
    print(f"wrote {json_path}")
    print(f"wrote {csv_path}")
    return 0


def _cmd_gaussian_sweep(params: dict, out_dir: str, overwrite: bool) -> int:
    n = params["n"]
    result = experiments.gaussian_sweep(
        rho_grid=params["rho_grid"],
        n=n,
        hgr_cfg=_neural_cfg(default_hgr_config, n, params["batch_size"], params["hgr_iterations"]),
        chi2_cfg=_neural_cfg(default_chi2_config, n, params["batch_size"], params["chi2_iterations"]),
        mine_cfg=_neural_cfg(default_mine_config, n, params["batch_size"], params["mine_iterations"]),
        seed=params["seed"],
    )
    json_path, curves_path, dom_path = _prepare_out(
        out_dir, ["gaussian_sweep.json", "gaussian_curves.csv", "dominance.csv"], overwrite
    )
    _write_json(json_path, result)
    curve_fields = (
        "rho",
        "chi2_nn",
        "chi2_analytic",
        "hgr_sq_est",
        "hgr_sq_analytic",
        "mi_bound_est",
        "mi_nats_analytic",
        "mi_bound_analytic",
    )
    _write_csv(curves_path, curve_fields, result["curves"])
    _write_csv(dom_path, DOMINANCE_CSV_FIELDS, result["dominance"]["rows"])
    print(f"wrote {json_path}")
    print(f"wrote {curves_path}")
    print(f"wrote {dom_path}")
    print(f"dominance threshold t = {result['dominance']['t']:.6f}")
    return 0


def _eval_cfg_from(params: dict) -> EvalConfig | None:
    iters = params["eval_iterations"]
    batch = params["eval_batch_size"]
    if iters is None and batch is None:
        return None
    hgr = default_hgr_config()
    chi2 = default_chi2_config()
    return EvalConfig(
        hgr=dataclasses.replace(
            hgr, iterations=iters or hgr.iterations, batch_size=batch or hgr.batch_size
        ),
        chi2=dataclasses.replace(
            chi2, iterations=iters or chi2.iterations, batch_size=batch or chi2.batch_size
        ),
        seed=params["seed"],
    )


def _cmd_synthetic(params: dict, out_dir: str, overwrite: bool) -> int:
    result = experiments.synthetic_experiment(
        n=params["n"],
        mode=params["mode"],
        variants=params["variants"],
        train_fraction=params["train_fraction"],
        epochs=params["epochs"],
        batch_size=params["batch_size"],
        eval_cfg=_eval_cfg_from(params),
        age_bins=params["age_bins"],
        seed=params["seed"],
    )
    json_path, reports_path, bins_path = _prepare_out(
        out_dir, ["synthetic.json", "eval_reports.csv", "age_bins.csv"], overwrite
    )
    _write_json(json_path, result)
    report_rows = []
    for label, report in result["reports"].items():
        row = {"model": label}
        row.update(report)
        report_rows.append(row)
    _write_csv(reports_path, ("model",) + EVAL_CSV_FIELDS, report_rows)
    _write_csv(
        bins_path,
        ("model", "bin", "age_mean", "prediction_mean", "residual_mean"),
        result["age_bins"],
    )
    print(f"wrote {json_path}")
    print(f"wrote {reports_path}")
    print(f"wrote {bins_path}")
    return 0


def _cmd_train(params: dict, out_dir: str, overwrite: bool) -> int:
    for key in ("csv", "sensitive", "target"):
        if not params[key]:
            raise ConfigError(f"[train] {key}: a value is required")
    if not params["features"]:
        raise ConfigError("[train] features: a value is required")
    dataset = load_csv(
        params["csv"], params["features"], params["sensitive"], params["target"]
    )
    result = experiments.repeated_csv_experiment(
        dataset,
        mode=params["mode"],
        penalty=params["penalty"],
        lam=params["lambda"],
        repetitions=params["repetitions"],
        train_fraction=params["train_fraction"],
        epochs=params["epochs"],
        batch_size=params["batch_size"],
        eval_cfg=_eval_cfg_from(params),
        seed=params["seed"],
    )
    json_path, reps_path = _prepare_out(
        out_dir, ["train.json", "repetitions.csv"], overwrite
    )
    _write_json(json_path, result)
    _write_csv(reps_path, ("repetition",) + EVAL_CSV_FIELDS, result["repetitions"])
    print(f"wrote {json_path}")
    print(f"wrote {reps_path}")
    for name, stats in result["summary"].items():
        print(f"{name}: mean {stats['mean']:.6f} std {stats['std']:.6f}")
    return 0


_COMMANDS = {
    "estimate": _cmd_estimate,
    "bench-patterns": _cmd_bench_patterns,
    "gaussian-sweep": _cmd_gaussian_sweep,
    "synthetic": _cmd_synthetic,
    "train": _cmd_train,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairreg",
        description="Dependence estimation and fairness-penalized regression experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="INI config file path")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument(
            "--overwrite", action="store_true", help="replace existing output files"
        )
    return parser


def run(argv=None) -> int:
    """Parse, validate, dispatch. Returns the process exit code."""
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; fold that into the config-error code
        return 0 if not exc.code else 1
    try:
        params = _load_params(args.command, args.config)
        if args.seed is not None:
            params["seed"] = args.seed
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](params, args.out, args.overwrite)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - boundary: report and set exit code
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))
