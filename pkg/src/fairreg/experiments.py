"""Composite experiment pipelines: estimator suites, benchmarks, sweeps,
and the synthetic fair-training study.

Each function is a pure mapping from (parameters, seed) to JSON-ready
rows; file writing and layout belong to the command-line layer. Every
sub-task (one grid cell, one repetition, one variant) runs on its own
seed substream, so results are deterministic per (parameters, seed).
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .data import Dataset, PATTERN_KINDS, gen_pattern, gen_synthetic_scenario, split
from .estimators import (
    KdeConfig,
    NeuralEstimatorConfig,
    SamplePairs,
    chi2_kde,
    chi2_nn,
    default_chi2_config,
    default_hgr_config,
    default_mine_config,
    hgr_kde,
    hgr_nn,
    mine,
    pearson,
    rdc,
)
from .metrics import EvalConfig, EvalReport, evaluate, gaussian_dominance_check
from .training import FairTrainConfig, default_train_config, predict, train_fair

__all__ = [
    "estimate_suite",
    "gaussian_sweep",
    "pattern_bench",
    "repeated_csv_experiment",
    "synthetic_experiment",
]


def _spawn_ints(seed: int, count: int) -> list[int]:
    return [int(c.generate_state(1)[0]) for c in np.random.SeedSequence(seed).spawn(count)]


def estimate_suite(
    pairs: SamplePairs,
    hgr_cfg: NeuralEstimatorConfig | None = None,
    chi2_cfg: NeuralEstimatorConfig | None = None,
    mine_cfg: NeuralEstimatorConfig | None = None,
    kde_cfg: KdeConfig | None = None,
    rdc_k: int = 20,
    rdc_scale: float = 1.0 / 6.0,
    seed: int = 0,
) -> dict[str, float]:
    """Every estimator on one sample pair, keyed by estimator name."""
    hgr_cfg = hgr_cfg or default_hgr_config()
    chi2_cfg = chi2_cfg or default_chi2_config()
    mine_cfg = mine_cfg or default_mine_config()
    kde_cfg = kde_cfg or KdeConfig()
    seeds = _spawn_ints(seed, 4)
    return {
        "pearson": pearson(pairs),
        "hgr_nn": hgr_nn(pairs, dataclasses.replace(hgr_cfg, seed=seeds[0])).value,
        "hgr_kde": hgr_kde(pairs, kde_cfg).value,
        "rdc": rdc(pairs, rdc_k, rdc_scale, seed=seeds[1]).value,
        "chi2_kde": chi2_kde(pairs, kde_cfg).value,
        "chi2_nn": chi2_nn(pairs, dataclasses.replace(chi2_cfg, seed=seeds[2])).value,
        "mine": mine(pairs, dataclasses.replace(mine_cfg, seed=seeds[3])).value,
    }


def pattern_bench(
    n: int = 500,
    sigmas: tuple[float, ...] = (0.0, 1.0, 2.0, 3.0),
    hgr_cfg: NeuralEstimatorConfig | None = None,
    kde_cfg: KdeConfig | None = None,
    rdc_k: int = 20,
    rdc_scale: float = 1.0 / 6.0,
    seed: int = 0,
) -> list[dict]:
    """The association-pattern grid: patterns x noise levels x estimators.

    Returns one row per (pattern, sigma, estimator) with the estimate.
    """
    hgr_cfg = hgr_cfg or default_hgr_config(batch_size=n, iterations=20000)
    kde_cfg = kde_cfg or KdeConfig()
    rows = []
    cells = [(kind, sigma) for kind in PATTERN_KINDS for sigma in sigmas]
    children = _spawn_ints(seed, len(cells))
    for (kind, sigma), cell_seed in zip(cells, children):
        data_seed, hgr_seed, rdc_seed = _spawn_ints(cell_seed, 3)
        pairs = gen_pattern(kind, n, sigma, seed=data_seed)
        estimates = {
            "hgr_nn": hgr_nn(pairs, dataclasses.replace(hgr_cfg, seed=hgr_seed)).value,
            "hgr_kde": hgr_kde(pairs, kde_cfg).value,
            "rdc": rdc(pairs, rdc_k, rdc_scale, seed=rdc_seed).value,
        }
        for name, value in estimates.items():
            rows.append(
                {"pattern": kind, "sigma": sigma, "estimator": name, "value": value}
            )
    return rows


def gaussian_sweep(
    rho_grid=(0.0, 0.2, -0.2, 0.4, -0.4, 0.6, -0.6, 0.8, -0.8),
    n: int = 5000,
    hgr_cfg: NeuralEstimatorConfig | None = None,
    chi2_cfg: NeuralEstimatorConfig | None = None,
    mine_cfg: NeuralEstimatorConfig | None = None,
    seed: int = 0,
) -> dict:
    """Bivariate-Gaussian sweep: estimates next to their closed forms.

    The analytic references are chi2 = rho^2/(1-rho^2), HGR = |rho|,
    I = -0.5 ln(1-rho^2); the MI bound 1 - 2**(-2 I bits) then equals
    rho^2 exactly. Returns curve rows plus the dominance report built
    from the same estimates.
    """
    report = gaussian_dominance_check(
        rho_grid, n, hgr_cfg=hgr_cfg, chi2_cfg=chi2_cfg, mine_cfg=mine_cfg, seed=seed
    )
    curves = []
    for row in report.rows:
        r2 = row.rho * row.rho
        mi_nats = -0.5 * math.log(1.0 - r2)
        curves.append(
            {
                "rho": row.rho,
                "chi2_nn": row.chi2_est,
                "hgr_sq_est": row.hgr_sq_est,
                "mi_bound_est": row.mi_bound_est,
                "chi2_analytic": r2 / (1.0 - r2),
                "hgr_sq_analytic": r2,
                "mi_nats_analytic": mi_nats,
                "mi_bound_analytic": 1.0 - math.exp(-2.0 * mi_nats),
            }
        )
    return {"curves": curves, "dominance": report.to_json_dict()}


def synthetic_experiment(
    n: int = 10000,
    mode: str = "demographic_parity",
    variants: tuple[tuple[str, str, float], ...] = (("fair_hgr", "hgr_nn", 0.5),),
    train_fraction: float = 0.8,
    epochs: int = 200,
    batch_size: int = 128,
    eval_cfg: EvalConfig | None = None,
    age_bins: int = 20,
    seed: int = 0,
    **train_overrides,
) -> dict:
    """The synthetic pricing study: standard model vs fair variants.

    ``variants`` lists (label, penalty, lambda) triples trained on top of
    the always-included ("standard", "none", 0) baseline, all with the
    same training substream so they differ only in the penalty. Returns
    evaluation reports per label plus per-age-bin mean predictions and
    residuals (the data behind the prediction-stability figures).
    """
    data_seed, split_seed, train_seed, eval_seed = _spawn_ints(seed, 4)
    dataset = gen_synthetic_scenario(n, seed=data_seed)
    train, test = split(dataset, train_fraction, seed=split_seed)
    eval_cfg = eval_cfg or EvalConfig(seed=eval_seed)
    runs = (("standard", "none", 0.0),) + tuple(variants)
    reports: dict[str, EvalReport] = {}
    models = {}
    for label, penalty, lam in runs:
        cfg = default_train_config(
            mode=mode,
            penalty=penalty,
            lam=lam,
            n_features=train.x.shape[1],
            epochs=epochs,
            batch_size=batch_size,
            seed=train_seed,
            **train_overrides,
        )
        model = train_fair(train, cfg)
        models[label] = model
        reports[label] = evaluate(model, test, mode, eval_cfg)
    bins = _age_bin_series(models, test, age_bins)
    return {
        "mode": mode,
        "n": n,
        "reports": {label: r.to_json_dict() for label, r in reports.items()},
        "age_bins": bins,
    }


def _age_bin_series(models: dict, test: Dataset, bins: int) -> list[dict]:
    order = np.argsort(test.s, kind="stable")
    groups = np.array_split(order, bins)
    rows = []
    for label, model in models.items():
        yhat = predict(model, test.x)
        residual = yhat - test.y
        for b, idx in enumerate(groups):
            rows.append(
                {
                    "model": label,
                    "bin": b,
                    "age_mean": float(test.s[idx].mean()),
                    "prediction_mean": float(yhat[idx].mean()),
                    "residual_mean": float(residual[idx].mean()),
                }
            )
    return rows


def repeated_csv_experiment(
    dataset: Dataset,
    mode: str,
    penalty: str,
    lam: float,
    repetitions: int = 5,
    train_fraction: float = 0.8,
    epochs: int = 200,
    batch_size: int = 128,
    eval_cfg: EvalConfig | None = None,
    seed: int = 0,
    **train_overrides,
) -> dict:
    """Train/evaluate over several resampled splits and aggregate.

    Every repetition gets its own split, training, and evaluation
    substreams. Returns per-repetition report rows plus mean and standard
    deviation per metric column.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    rows = []
    for rep, rep_seed in enumerate(_spawn_ints(seed, repetitions)):
        split_seed, train_seed, eval_seed = _spawn_ints(rep_seed, 3)
        train, test = split(dataset, train_fraction, seed=split_seed)
        cfg = default_train_config(
            mode=mode,
            penalty=penalty,
            lam=lam,
            n_features=train.x.shape[1],
            epochs=epochs,
            batch_size=batch_size,
            seed=train_seed,
            **train_overrides,
        )
        model = train_fair(train, cfg)
        report = evaluate(model, test, mode, eval_cfg or EvalConfig(seed=eval_seed))
        row = report.to_json_dict()
        row["repetition"] = rep
        rows.append(row)
    metric_names = ("mse", "hgr_nn", "hgr_kde", "rdc", "chi2_kde", "chi2_nn", "fairquant")
    table = {name: np.array([row[name] for row in rows]) for name in metric_names}
    summary = {
        name: {"mean": float(vals.mean()), "std": float(vals.std(ddof=0))}
        for name, vals in table.items()
    }
    return {"mode": mode, "penalty": penalty, "lambda": lam,
            "repetitions": rows, "summary": summary}
