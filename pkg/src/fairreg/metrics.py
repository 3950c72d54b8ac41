"""Evaluation metrics and composite reports.

MSE is reported on the z-scored target scale (the scale the models are
trained on), FairQuant on the original prediction scale. The dependence
columns mirror the estimator family: adversarial, kernel, and rank-based
measures of how much the prediction (or residual) still carries about
the sensitive attribute.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .data import gen_bivariate_gaussian
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
    rdc,
)
from .training import TrainedModel, predict, select_uv

__all__ = [
    "DOMINANCE_CSV_FIELDS",
    "EVAL_CSV_FIELDS",
    "DominanceReport",
    "DominanceRow",
    "EvalConfig",
    "EvalReport",
    "dominance_threshold",
    "evaluate",
    "fair_quant",
    "gaussian_dominance_check",
    "mse",
]

EVAL_CSV_FIELDS = (
    "mse", "hgr_nn", "hgr_kde", "rdc", "chi2_kde", "chi2_nn", "fairquant", "mode",
)
DOMINANCE_CSV_FIELDS = ("rho", "hgr_sq_est", "chi2_est", "mi_bound_est")


def mse(yhat: np.ndarray, y: np.ndarray) -> float:
    """Mean squared error."""
    yhat = np.asarray(yhat, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if yhat.size != y.size:
        raise ValueError(f"length mismatch: {yhat.size} vs {y.size}")
    if yhat.size == 0:
        raise ValueError("need at least one value")
    d = yhat - y
    return float((d * d).mean())


def fair_quant(values: np.ndarray, s: np.ndarray, q: int) -> float:
    """Mean absolute deviation of per-sensitive-quantile means.

    Rows are sorted by s (stable, so ties keep input order) and split
    into q groups; sizes differ by at most one, with the remainder spread
    over the first n mod q groups. Returns the mean over groups of
    |group mean - global mean| of ``values``. Shift invariant in values,
    absolutely scale equivariant, and depends on s only through its sort
    order.
    """
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    s = np.asarray(s, dtype=np.float64).reshape(-1)
    if values.size != s.size:
        raise ValueError(f"length mismatch: {values.size} vs {s.size}")
    if q < 1:
        raise ValueError("q must be >= 1")
    n = values.size
    if n < q:
        raise ValueError(f"need at least q={q} rows, got {n}")
    if np.all(values == values[0]):
        # constant predictions are exactly fair; skipping the arithmetic
        # avoids ulp-level dust from means taken over unequal group sizes
        return 0.0
    ordered = values[np.argsort(s, kind="stable")]
    base, remainder = divmod(n, q)
    global_mean = values.mean()
    total = 0.0
    start = 0
    for g in range(q):
        size = base + (1 if g < remainder else 0)
        total += abs(ordered[start : start + size].mean() - global_mean)
        start += size
    return float(total / q)


@dataclass(frozen=True)
class EvalConfig:
    """Estimator settings used by :func:`evaluate`.

    ``seed`` reseeds the neural estimators per evaluation (one substream
    each), keeping reports deterministic without tying them to whatever
    seeds the configs were built with.
    """

    hgr: NeuralEstimatorConfig = field(default_factory=default_hgr_config)
    chi2: NeuralEstimatorConfig = field(default_factory=default_chi2_config)
    kde: KdeConfig = field(default_factory=KdeConfig)
    rdc_k: int = 20
    rdc_scale: float = 1.0 / 6.0
    quantile_groups: int = 50
    seed: int = 0


@dataclass
class EvalReport:
    """One evaluated model: accuracy plus the dependence metric columns."""

    mse: float
    hgr_nn: float
    hgr_kde: float
    rdc: float
    chi2_kde: float
    chi2_nn: float
    fairquant: float
    mode: str
    config: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        out = {name: getattr(self, name) for name in EVAL_CSV_FIELDS}
        out["config"] = self.config
        return out

    def csv_row(self) -> list:
        return [getattr(self, name) for name in EVAL_CSV_FIELDS]


def evaluate(
    model: TrainedModel, test, mode: str, cfg: EvalConfig | None = None
) -> EvalReport:
    """Score a trained model on held-out data.

    U is the prediction (demographic parity) or residual (equalized
    residuals); every dependence column measures (U, s). A constant U
    (e.g. a perfect predictor's residuals) short-circuits the dependence
    columns to their independence value 0.
    """
    cfg = cfg or EvalConfig()
    if test.n < 2:
        raise ValueError("test set must have at least 2 rows")
    yhat = predict(model, test.x)
    pairs = select_uv(mode, yhat, test.y, test.s)
    seeds = [int(c.generate_state(1)[0]) for c in np.random.SeedSequence(cfg.seed).spawn(3)]
    mse_norm = mse(yhat, test.y) / (model.y_std ** 2)
    if pairs.u.std() == 0.0 or pairs.v.std() == 0.0:
        hgr_nn_v = hgr_kde_v = rdc_v = chi2_kde_v = chi2_nn_v = 0.0
    else:
        hgr_nn_v = hgr_nn(pairs, dataclasses.replace(cfg.hgr, seed=seeds[0])).value
        hgr_kde_v = hgr_kde(pairs, cfg.kde).value
        rdc_v = rdc(pairs, cfg.rdc_k, cfg.rdc_scale, seed=seeds[1]).value
        chi2_kde_v = chi2_kde(pairs, cfg.kde).value
        chi2_nn_v = chi2_nn(pairs, dataclasses.replace(cfg.chi2, seed=seeds[2])).value
    return EvalReport(
        mse=mse_norm,
        hgr_nn=hgr_nn_v,
        hgr_kde=hgr_kde_v,
        rdc=rdc_v,
        chi2_kde=chi2_kde_v,
        chi2_nn=chi2_nn_v,
        fairquant=fair_quant(pairs.u, test.s, cfg.quantile_groups),
        mode=mode,
        config={
            "seed": cfg.seed,
            "hgr_iterations": cfg.hgr.iterations,
            "chi2_iterations": cfg.chi2.iterations,
            "kde_grid": cfg.kde.grid_size,
            "quantile_groups": cfg.quantile_groups,
        },
    )


def dominance_threshold() -> float:
    """The constant above which the chi-square divergence provably
    dominates the mutual-information bound 1 - 2**(-2 I)."""
    a = math.exp(-1.0 / (2.0 * math.log(2.0)))
    return (1.0 - a) / (1.0 + a)


@dataclass
class DominanceRow:
    rho: float
    hgr_sq_est: float
    chi2_est: float
    mi_bound_est: float

    def to_json_dict(self) -> dict:
        return {name: getattr(self, name) for name in DOMINANCE_CSV_FIELDS}


@dataclass
class DominanceReport:
    """Per-correlation comparison of the three dependence bounds.

    Rows are sorted by rho. ``mi_bound_est`` converts the estimated
    mutual information to bits and applies 1 - 2**(-2 I); ``t`` is the
    analytic threshold above which chi-square dominates that bound.
    """

    rows: tuple[DominanceRow, ...]
    t: float

    def to_json_dict(self) -> dict:
        return {"rows": [r.to_json_dict() for r in self.rows], "t": self.t}


def gaussian_dominance_check(
    rho_grid,
    n: int,
    hgr_cfg: NeuralEstimatorConfig | None = None,
    chi2_cfg: NeuralEstimatorConfig | None = None,
    mine_cfg: NeuralEstimatorConfig | None = None,
    seed: int = 0,
) -> DominanceReport:
    """Estimate HGR^2, chi-square, and the MI bound on bivariate Gaussians.

    One row per correlation in ``rho_grid`` (sorted ascending), each with
    its own data and estimator substreams derived from ``seed``.
    """
    rhos = sorted(float(r) for r in rho_grid)
    for r in rhos:
        if not -1.0 < r < 1.0:
            raise ValueError(f"rho must lie in (-1, 1), got {r}")
    hgr_cfg = hgr_cfg or default_hgr_config()
    chi2_cfg = chi2_cfg or default_chi2_config()
    mine_cfg = mine_cfg or default_mine_config()
    rows = []
    children = np.random.SeedSequence(seed).spawn(len(rhos))
    for rho, child in zip(rhos, children):
        sub = [int(c.generate_state(1)[0]) for c in child.spawn(4)]
        pairs = gen_bivariate_gaussian(n, rho, seed=sub[0])
        hgr_est = hgr_nn(pairs, dataclasses.replace(hgr_cfg, seed=sub[1])).value
        chi2_est = chi2_nn(pairs, dataclasses.replace(chi2_cfg, seed=sub[2])).value
        mi_nats = mine(pairs, dataclasses.replace(mine_cfg, seed=sub[3])).value
        mi_bits = mi_nats / math.log(2.0)
        rows.append(
            DominanceRow(
                rho=rho,
                hgr_sq_est=hgr_est * hgr_est,
                chi2_est=chi2_est,
                mi_bound_est=1.0 - 2.0 ** (-2.0 * mi_bits),
            )
        )
    return DominanceReport(rows=tuple(rows), t=dominance_threshold())
