"""Fair regression training: MSE descent against an adversarial dependence penalty.

The predictor h minimizes MSE + lambda * J, where J measures the
dependence between U and the sensitive attribute S. U is the prediction
for demographic parity and the residual for equalized residuals. Each
batch gets exactly one adversary ascent step followed by one predictor
descent step; the predictor's gradient flows through the adversary's
forward pass (including the batch standardization statistics) while the
adversary's parameters stay fixed.

Four penalties share this loop: the standardized-product maximal
correlation, the variational chi-square, the Donsker-Varadhan mutual
information bound, and the squared batch Pearson correlation. A penalty
of "none", or lambda = 0, leaves the descent identical to plain MSE
training bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .estimators import MINE_CLIP, SamplePairs
from .nn import (
    LayerSpec,
    Mlp,
    OptimizerState,
    Tape,
    dense_stack,
    forward,
    mlp_apply_bound,
    mlp_bind,
    mlp_new,
    optimizer_step,
    standardize_batch,
)

__all__ = [
    "EpochStats",
    "FAIRNESS_MODES",
    "FairTrainConfig",
    "PENALTY_KINDS",
    "TrainedModel",
    "TrainingError",
    "default_train_config",
    "predict",
    "select_uv",
    "train_fair",
]

FAIRNESS_MODES = ("demographic_parity", "equalized_residuals")
PENALTY_KINDS = ("hgr_nn", "chi2_nn", "mine", "pearson", "none")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class FairTrainConfig:
    """Everything one training run depends on besides the data.

    ``lam`` is the fairness weight (0 disables the penalty term in the
    predictor loss; the adversary still trains so its objective can be
    logged). Adversary learning rates ``alpha_f``/``alpha_g`` and shapes
    ``f_layers``/``g_layers`` are ignored for penalty "pearson"/"none";
    ``g_layers`` only matters for the two-network "hgr_nn" penalty.
    """

    mode: str = "demographic_parity"
    penalty: str = "none"
    lam: float = 0.0
    predictor_layers: tuple[LayerSpec, ...] = ()
    f_layers: tuple[LayerSpec, ...] = ()
    g_layers: tuple[LayerSpec, ...] = ()
    alpha_h: float = 1e-3
    alpha_f: float = 1e-3
    alpha_g: float = 1e-3
    batch_size: int = 128
    epochs: int = 200
    seed: int = 0
    epsilon: float = 1e-8
    optimizer: str = "adam"

    def __post_init__(self) -> None:
        if self.mode not in FAIRNESS_MODES:
            raise ValueError(f"unknown fairness mode {self.mode!r}")
        if self.penalty not in PENALTY_KINDS:
            raise ValueError(f"unknown penalty {self.penalty!r}")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if min(self.alpha_h, self.alpha_f, self.alpha_g) <= 0:
            raise ValueError("learning rates must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def default_train_config(
    mode: str = "demographic_parity",
    penalty: str = "none",
    lam: float = 0.0,
    n_features: int = 3,
    **overrides,
) -> FairTrainConfig:
    """Sensible shapes for the synthetic-scale experiments: a 3x32 tanh
    predictor, 3x10 adversaries for the maximal-correlation penalty and
    3x32 pair-input adversaries otherwise."""
    base = dict(
        mode=mode,
        penalty=penalty,
        lam=lam,
        predictor_layers=dense_stack((n_features, 32, 32, 32, 1)),
        f_layers=dense_stack((1, 10, 10, 10, 1))
        if penalty == "hgr_nn"
        else dense_stack((2, 32, 32, 32, 1)),
        g_layers=dense_stack((1, 10, 10, 10, 1)),
        alpha_h=1e-3,
        alpha_f=5e-3,
        alpha_g=5e-3,
    )
    base.update(overrides)
    return FairTrainConfig(**base)


@dataclass
class EpochStats:
    """Batch-mean training MSE and penalty objective for one epoch."""

    mse: float
    penalty: float
    weighted_penalty: float


@dataclass(frozen=True, eq=False)
class TrainedModel:
    """A trained predictor plus the normalization frozen at fit time.

    Features and target are z-scored with training-split statistics;
    ``predict`` undoes the target scaling. ``history`` has one entry per
    epoch, on the normalized scale.
    """

    predictor: Mlp
    history: tuple[EpochStats, ...]
    config: FairTrainConfig
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float
    s_mean: float
    s_std: float


def select_uv(mode: str, yhat: np.ndarray, y: np.ndarray, s: np.ndarray) -> SamplePairs:
    """The pair whose dependence the penalty measures: (prediction, s)
    for demographic parity, (residual, s) for equalized residuals."""
    if mode not in FAIRNESS_MODES:
        raise ValueError(f"unknown fairness mode {mode!r}")
    yhat = np.asarray(yhat, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    s = np.asarray(s, dtype=np.float64).reshape(-1)
    if not (yhat.size == y.size == s.size):
        raise ValueError(
            f"length mismatch: yhat {yhat.size}, y {y.size}, s {s.size}"
        )
    u = yhat if mode == "demographic_parity" else yhat - y
    return SamplePairs(u, s)


def _safe_std(x: np.ndarray) -> np.ndarray | float:
    sd = x.std(axis=0) if x.ndim == 2 else x.std()
    return np.where(sd == 0, 1.0, sd) if x.ndim == 2 else (sd if sd > 0 else 1.0)


class _Adversary:
    """Penalty-specific state: zero, one, or two networks plus optimizers."""

    def __init__(self, cfg: FairTrainConfig, seed_f: int, seed_g: int):
        self.cfg = cfg
        self.kind = cfg.penalty
        self.f: Mlp | None = None
        self.g: Mlp | None = None
        if self.kind == "hgr_nn":
            if cfg.f_layers[0].input_width != 1 or cfg.g_layers[0].input_width != 1:
                raise ValueError("maximal-correlation adversaries take scalar input")
            self.f = mlp_new(cfg.f_layers, seed_f)
            self.g = mlp_new(cfg.g_layers, seed_g)
            self.opt_f = OptimizerState(cfg.alpha_f, kind=cfg.optimizer)
            self.opt_g = OptimizerState(cfg.alpha_g, kind=cfg.optimizer)
        elif self.kind in ("chi2_nn", "mine"):
            if cfg.f_layers[0].input_width != 2:
                raise ValueError("pair-input adversary must take 2-d input")
            self.f = mlp_new(cfg.f_layers, seed_f)
            self.opt_f = OptimizerState(cfg.alpha_f, kind=cfg.optimizer)

    def ascend(self, u: np.ndarray, s: np.ndarray, rng: np.random.Generator) -> float:
        """One gradient-ascent step on the adversary; returns its objective.

        For the parameter-free Pearson penalty this only measures the
        batch correlation. Inputs are 1-d batch vectors.
        """
        eps = self.cfg.epsilon
        if self.kind == "pearson":
            u_hat, _, _ = standardize_batch(u, eps)
            s_hat, _, _ = standardize_batch(s, eps)
            return float((u_hat * s_hat).mean() ** 2)
        if self.kind == "hgr_nn":
            tape = Tape()
            f_out = mlp_apply_bound(
                tape, self.f, mlp_bind(tape, self.f, name="f."), tape.constant(u[:, None])
            )
            g_out = mlp_apply_bound(
                tape, self.g, mlp_bind(tape, self.g, name="g."), tape.constant(s[:, None])
            )
            j = tape.mean(tape.mul(tape.standardize(f_out, eps), tape.standardize(g_out, eps)))
            grads = tape.gradients(j)
            self.f = optimizer_step(self.opt_f, self.f, _strip(grads, "f."), "ascend")
            self.g = optimizer_step(self.opt_g, self.g, _strip(grads, "g."), "ascend")
            return float(j.value)
        # chi2_nn and mine share the resampled-marginal two-leg layout
        s_bar = s[rng.integers(0, s.size, size=s.size)]
        tape = Tape()
        bound = mlp_bind(tape, self.f, name="f.")
        f_joint = mlp_apply_bound(tape, self.f, bound, tape.constant(np.column_stack([u, s])))
        f_marg = mlp_apply_bound(tape, self.f, bound, tape.constant(np.column_stack([u, s_bar])))
        if self.kind == "chi2_nn":
            price = tape.mean(tape.add(f_marg, tape.scale(tape.mul(f_marg, f_marg), 0.25)))
            j = tape.add(tape.mean(f_joint), tape.scale(price, -1.0))
            j_val = float(j.value)
            grads = tape.gradients(j)
        else:
            weights = np.exp(np.clip(f_marg.value, -MINE_CLIP, MINE_CLIP))
            partition = float(weights.mean())
            j_val = float(f_joint.value.mean()) - math.log(partition)
            weighted = tape.mean(tape.mul(f_marg, tape.constant(weights)))
            surrogate = tape.add(tape.mean(f_joint), tape.scale(weighted, -1.0 / partition))
            grads = tape.gradients(surrogate)
        self.f = optimizer_step(self.opt_f, self.f, _strip(grads, "f."), "ascend")
        return j_val

    def penalty_node(
        self, tape: Tape, u_node, s: np.ndarray, rng: np.random.Generator
    ):
        """Record the penalty J on the predictor's tape, adversary frozen.

        ``u_node`` is the (b, 1) prediction or residual node; gradients
        flow from J into it, including through the batch statistics.
        """
        eps = self.cfg.epsilon
        b = s.size
        if self.kind == "pearson":
            s_hat, _, _ = standardize_batch(s, eps)
            u_hat = tape.standardize(u_node, eps)
            rho = tape.mean(tape.mul(u_hat, tape.constant(s_hat[:, None])))
            return tape.mul(rho, rho)
        if self.kind == "hgr_nn":
            f_out = mlp_apply_bound(
                tape, self.f, mlp_bind(tape, self.f, trainable=False), u_node
            )
            g_out = forward(self.g, s[:, None])[0].reshape(-1)
            g_hat, _, _ = standardize_batch(g_out, eps)
            f_hat = tape.standardize(f_out, eps)
            return tape.mean(tape.mul(f_hat, tape.constant(g_hat[:, None])))
        s_bar = s[rng.integers(0, b, size=b)]
        bound = mlp_bind(tape, self.f, trainable=False)
        joint = tape.concat_cols(u_node, tape.constant(s[:, None]))
        marg = tape.concat_cols(u_node, tape.constant(s_bar[:, None]))
        f_joint = mlp_apply_bound(tape, self.f, bound, joint)
        f_marg = mlp_apply_bound(tape, self.f, bound, marg)
        if self.kind == "chi2_nn":
            price = tape.mean(tape.add(f_marg, tape.scale(tape.mul(f_marg, f_marg), 0.25)))
            return tape.add(tape.mean(f_joint), tape.scale(price, -1.0))
        weights = np.exp(np.clip(f_marg.value, -MINE_CLIP, MINE_CLIP))
        partition = float(weights.mean())
        weighted = tape.mean(tape.mul(f_marg, tape.constant(weights)))
        return tape.add(tape.mean(f_joint), tape.scale(weighted, -1.0 / partition))


def _strip(grads: dict, prefix: str) -> dict:
    return {k[len(prefix):]: g for k, g in grads.items() if k.startswith(prefix)}


def train_fair(dataset: Dataset, cfg: FairTrainConfig) -> TrainedModel:
    """Run the alternating min-max loop and return the trained predictor.

    Deterministic per seed: batching, predictor initialization/dropout,
    and adversary randomness use separate seed substreams, so setting
    lam = 0 (or penalty "none") never changes the predictor trajectory.
    Raises TrainingError (with the epoch index) if any objective goes
    non-finite.
    """
    if dataset.n < 2 * cfg.batch_size:
        raise TrainingError(
            f"need at least 2*batch_size={2 * cfg.batch_size} rows, got {dataset.n}"
        )
    if not cfg.predictor_layers:
        raise ValueError("config has no predictor layers")
    if cfg.predictor_layers[0].input_width != dataset.x.shape[1]:
        raise ValueError(
            f"predictor expects {cfg.predictor_layers[0].input_width} features, "
            f"dataset has {dataset.x.shape[1]}"
        )

    x_mean = dataset.x.mean(axis=0)
    x_std = np.asarray(_safe_std(dataset.x))
    y_mean = float(dataset.y.mean())
    y_std = float(_safe_std(dataset.y))
    s_mean = float(dataset.s.mean())
    s_std = float(_safe_std(dataset.s))
    x = (dataset.x - x_mean) / x_std
    y = (dataset.y - y_mean) / y_std
    s = (dataset.s - s_mean) / s_std

    streams = np.random.SeedSequence(cfg.seed).spawn(4)
    data_rng = np.random.default_rng(streams[0])
    pred_seed = int(streams[1].generate_state(1)[0])
    dropout_rng = np.random.default_rng(streams[2])
    adv_children = streams[3].spawn(3)
    adv_rng = np.random.default_rng(adv_children[0])
    adv_seeds = [int(c.generate_state(1)[0]) for c in adv_children[1:]]

    predictor = mlp_new(cfg.predictor_layers, pred_seed)
    opt_h = OptimizerState(cfg.alpha_h, kind=cfg.optimizer)
    adversary = _Adversary(cfg, adv_seeds[0], adv_seeds[1]) if cfg.penalty != "none" else None

    n = dataset.n
    batches = n // cfg.batch_size
    residual_mode = cfg.mode == "equalized_residuals"
    history = []
    for epoch in range(cfg.epochs):
        order = data_rng.permutation(n)
        mse_sum = 0.0
        j_sum = 0.0
        for k in range(batches):
            idx = order[k * cfg.batch_size : (k + 1) * cfg.batch_size]
            xb = x[idx]
            yb = y[idx]
            sb = s[idx]

            j_val = 0.0
            if adversary is not None:
                yhat_b = forward(predictor, xb)[0].reshape(-1)
                u_b = yhat_b - yb if residual_mode else yhat_b
                j_val = adversary.ascend(u_b, sb, adv_rng)

            tape = Tape()
            bound = mlp_bind(tape, predictor)
            out = mlp_apply_bound(
                tape, predictor, bound, tape.constant(xb),
                training=True, dropout_rng=dropout_rng,
            )
            diff = tape.add_const(out, -yb[:, None])
            mse_node = tape.mean(tape.mul(diff, diff))
            mse_val = float(mse_node.value)
            loss = mse_node
            if adversary is not None and cfg.lam > 0.0:
                u_node = diff if residual_mode else out
                j_node = adversary.penalty_node(tape, u_node, sb, adv_rng)
                j_val = float(j_node.value)
                loss = tape.add(mse_node, tape.scale(j_node, cfg.lam))
            if not (math.isfinite(mse_val) and math.isfinite(j_val)):
                raise TrainingError(
                    f"non-finite objective at epoch {epoch} "
                    f"(mse={mse_val}, penalty={j_val})"
                )
            grads = tape.gradients(loss)
            predictor = optimizer_step(opt_h, predictor, grads, "descend")
            mse_sum += mse_val
            j_sum += j_val
        history.append(
            EpochStats(
                mse=mse_sum / batches,
                penalty=j_sum / batches,
                weighted_penalty=cfg.lam * j_sum / batches,
            )
        )
    return TrainedModel(
        predictor=predictor,
        history=tuple(history),
        config=cfg,
        x_mean=x_mean,
        x_std=x_std,
        y_mean=y_mean,
        y_std=y_std,
        s_mean=s_mean,
        s_std=s_std,
    )


def predict(model: TrainedModel, x: np.ndarray) -> np.ndarray:
    """Predictions on the original target scale, dropout off."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.x_mean.size:
        raise ValueError(
            f"feature matrix must be (n, {model.x_mean.size}), got {x.shape}"
        )
    x_norm = (x - model.x_mean) / model.x_std
    out = forward(model.predictor, x_norm)[0].reshape(-1)
    return out * model.y_std + model.y_mean
