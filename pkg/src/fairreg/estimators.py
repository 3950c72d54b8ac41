"""Dependence estimators between two real-valued samples.

Three families:

* adversarial neural estimators trained by minibatch gradient ascent:
  maximal correlation (:func:`hgr_nn`), chi-square divergence between the
  joint and the product of marginals (:func:`chi2_nn`), and a
  Donsker-Varadhan mutual-information bound (:func:`mine`);
* kernel/plug-in estimators: a discretized maximal correlation built on
  the second singular value of the normalized joint-probability matrix
  (:func:`witsenhausen_discrete`, :func:`hgr_kde`) and a grid chi-square
  (:func:`chi2_kde`);
* reference measures: :func:`pearson` and the randomized dependence
  coefficient :func:`rdc`.

All estimators are deterministic functions of (data, config, seed) and
never mutate their inputs. :func:`null_calibration` re-runs any of them
on permuted pairs to calibrate an independence null.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.stats

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
    "DivergenceError",
    "Estimate",
    "KdeConfig",
    "NeuralEstimatorConfig",
    "NullSummary",
    "SamplePairs",
    "WitsenhausenMatrix",
    "chi2_kde",
    "chi2_nn",
    "default_chi2_config",
    "default_hgr_config",
    "default_mine_config",
    "hgr_kde",
    "hgr_nn",
    "kde_joint_density",
    "mine",
    "null_calibration",
    "pearson",
    "rdc",
    "silverman_bandwidth",
    "witsenhausen_discrete",
]

MINE_CLIP = 50.0
# fresh full-length marginal resamples averaged into a final estimate
FINAL_RESAMPLES = 16


class DivergenceError(RuntimeError):
    """An adversarial estimator produced a non-finite objective.

    Carries the objective trace up to the failing iteration."""

    def __init__(self, message: str, trace: list[float]):
        super().__init__(message)
        self.trace = trace


class SamplePairs:
    """A paired sample (u_i, v_i), i = 1..n, of two real variables."""

    __slots__ = ("u", "v")

    def __init__(self, u, v):
        u = np.asarray(u, dtype=np.float64).reshape(-1)
        v = np.asarray(v, dtype=np.float64).reshape(-1)
        if u.shape != v.shape:
            raise ValueError(f"length mismatch: {u.size} vs {v.size}")
        if u.size < 2:
            raise ValueError(f"need at least 2 pairs, got {u.size}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("sample contains non-finite values")
        self.u = u
        self.v = v

    @property
    def n(self) -> int:
        return self.u.size

    def swapped(self) -> "SamplePairs":
        return SamplePairs(self.v, self.u)


@dataclass(frozen=True)
class NeuralEstimatorConfig:
    """Shared knobs of the adversarial estimators.

    ``g_layers`` drives the second network of the maximal-correlation
    estimator and is ignored by the single-network estimators, whose f
    network takes the stacked (u, v) pair as 2-d input.
    """

    f_layers: tuple[LayerSpec, ...]
    g_layers: tuple[LayerSpec, ...]
    alpha_f: float = 1e-3
    alpha_g: float = 1e-3
    batch_size: int = 128
    iterations: int = 2000
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.alpha_f <= 0 or self.alpha_g <= 0:
            raise ValueError("learning rates must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


def default_hgr_config(**overrides) -> NeuralEstimatorConfig:
    """Two scalar-input networks of three tanh layers with ten units each."""
    shape = dense_stack((1, 10, 10, 10, 1))
    # 800 iterations at b=512 converges the smooth-transform pairs this
    # estimator is built for; longer budgets mostly mine spurious sample
    # correlation and inflate the independent-data value.
    base = dict(f_layers=shape, g_layers=shape, alpha_f=5e-3, alpha_g=5e-3,
                batch_size=512, iterations=800)
    base.update(overrides)
    return NeuralEstimatorConfig(**base)


def default_chi2_config(**overrides) -> NeuralEstimatorConfig:
    """One pair-input network of three tanh layers with 32 units each."""
    shape = dense_stack((2, 32, 32, 32, 1))
    # the optimal dual witness grows large where the joint density dwarfs
    # the product of marginals; reaching it needs a long budget at this rate
    base = dict(f_layers=shape, g_layers=shape, alpha_f=5e-3, alpha_g=5e-3,
                batch_size=512, iterations=40000)
    base.update(overrides)
    return NeuralEstimatorConfig(**base)


def default_mine_config(**overrides) -> NeuralEstimatorConfig:
    shape = dense_stack((2, 32, 32, 32, 1))
    base = dict(f_layers=shape, g_layers=shape, alpha_f=1e-3, alpha_g=1e-3,
                batch_size=512, iterations=3000)
    base.update(overrides)
    return NeuralEstimatorConfig(**base)


@dataclass(frozen=True)
class KdeConfig:
    """Grid and bandwidth choices for the kernel-density estimators.

    ``bandwidth_rule`` is "silverman" or "fixed"; a fixed rule applies
    ``bandwidth`` to both axes. ``grid_padding`` extends the grid past the
    data range by that many bandwidths so kernel mass is not truncated.
    """

    grid_size: int = 64
    bandwidth_rule: str = "silverman"
    bandwidth: float | None = None
    grid_padding: float = 3.0

    def __post_init__(self) -> None:
        if self.grid_size < 8:
            raise ValueError("grid_size must be >= 8")
        if self.bandwidth_rule not in ("silverman", "fixed"):
            raise ValueError(f"unknown bandwidth rule {self.bandwidth_rule!r}")
        if self.bandwidth_rule == "fixed" and (
            self.bandwidth is None or self.bandwidth <= 0
        ):
            raise ValueError("fixed bandwidth rule needs a positive bandwidth")
        if self.grid_padding < 0:
            raise ValueError("grid_padding must be nonnegative")


@dataclass
class Estimate:
    """A dependence value plus whatever the estimator wants to report."""

    value: float
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise ValueError("estimate value must be finite")


@dataclass(frozen=True)
class WitsenhausenMatrix:
    """Normalized joint-probability matrix and its marginals."""

    q: np.ndarray
    p_u: np.ndarray
    p_v: np.ndarray


@dataclass
class NullSummary:
    """Permutation-null distribution of an estimator."""

    values: np.ndarray
    mean: float
    quantiles: dict[int, float]


def _zscore(x: np.ndarray) -> np.ndarray:
    # centering/scaling only conditions the network inputs; the measures
    # themselves are invariant under affine marginal transforms
    s = x.std()
    if s == 0.0:
        return x - x.mean()
    return (x - x.mean()) / s


def _spawn_seeds(seed: int, count: int) -> list[int]:
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(c.generate_state(1)[0]) for c in children]


def _subgrads(grads: dict[str, np.ndarray], prefix: str) -> dict[str, np.ndarray]:
    return {k[len(prefix):]: g for k, g in grads.items() if k.startswith(prefix)}


def pearson(pairs: SamplePairs) -> float:
    """Sample correlation coefficient, in [-1, 1]."""
    u = pairs.u - pairs.u.mean()
    v = pairs.v - pairs.v.mean()
    su = np.sqrt((u * u).mean())
    sv = np.sqrt((v * v).mean())
    if su == 0.0 or sv == 0.0:
        raise ValueError("pearson undefined for zero-variance input")
    r = float((u * v).mean() / (su * sv))
    return min(1.0, max(-1.0, r))


def hgr_nn(pairs: SamplePairs, cfg: NeuralEstimatorConfig) -> Estimate:
    """Neural maximal-correlation estimate.

    Two networks f(u) and g(v) are trained by joint gradient ascent on the
    batch mean of their standardized product, back-propagating through the
    batch means and variances. The returned value re-evaluates the trained
    pair on the full sample, standardized on the full sample, so it stays
    within [-1, 1] up to the epsilon guard. A negative value signals a
    failed ascent and is reported as-is with a diagnostic flag.
    """
    if cfg.f_layers[0].input_width != 1 or cfg.g_layers[0].input_width != 1:
        raise ValueError("maximal-correlation networks take scalar input")
    n = pairs.n
    if cfg.batch_size > n:
        raise ValueError(f"batch_size {cfg.batch_size} exceeds sample size {n}")
    u = _zscore(pairs.u)[:, None]
    v = _zscore(pairs.v)[:, None]
    f_seed, g_seed, batch_seed = _spawn_seeds(cfg.seed, 3)
    f = mlp_new(cfg.f_layers, f_seed)
    g = mlp_new(cfg.g_layers, g_seed)
    opt_f = OptimizerState(learning_rate=cfg.alpha_f)
    opt_g = OptimizerState(learning_rate=cfg.alpha_g)
    batch_rng = np.random.default_rng(batch_seed)
    trace = []
    for it in range(cfg.iterations):
        idx = batch_rng.integers(0, n, size=cfg.batch_size)
        tape = Tape()
        f_out = mlp_apply_bound(tape, f, mlp_bind(tape, f, name="f."), tape.constant(u[idx]))
        g_out = mlp_apply_bound(tape, g, mlp_bind(tape, g, name="g."), tape.constant(v[idx]))
        f_hat = tape.standardize(f_out, cfg.epsilon)
        g_hat = tape.standardize(g_out, cfg.epsilon)
        j = tape.mean(tape.mul(f_hat, g_hat))
        j_val = float(j.value)
        if not math.isfinite(j_val):
            raise DivergenceError(f"objective diverged at iteration {it}", trace)
        trace.append(j_val)
        grads = tape.gradients(j)
        f = optimizer_step(opt_f, f, _subgrads(grads, "f."), "ascend")
        g = optimizer_step(opt_g, g, _subgrads(grads, "g."), "ascend")
    f_full = forward(f, u)[0].reshape(-1)
    g_full = forward(g, v)[0].reshape(-1)
    f_hat_full, _, _ = standardize_batch(f_full, cfg.epsilon)
    g_hat_full, _, _ = standardize_batch(g_full, cfg.epsilon)
    value = float((f_hat_full * g_hat_full).mean())
    return Estimate(
        value,
        diagnostics={
            "trace": trace,
            "iterations": cfg.iterations,
            "final_batch_objective": trace[-1],
            "ascent_failed": value < 0.0,
        },
    )


def _resampled_pair_inputs(
    u: np.ndarray, v: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    # product-of-marginals sample: keep u, redraw v with replacement
    v_bar = v[rng.integers(0, v.size, size=v.size)]
    return np.column_stack([u, v]), np.column_stack([u, v_bar])


def chi2_nn(pairs: SamplePairs, cfg: NeuralEstimatorConfig) -> Estimate:
    """Neural chi-square divergence between the joint law and the product
    of marginals, via the variational bound sup_f E_joint[f] - E_prod[f + f**2/4].

    Marginal minibatches reuse the batch's own v column resampled with
    replacement. The returned value re-evaluates the trained network on
    the full sample, averaging the marginal term over several fresh
    full-length resamples to damp draw-to-draw noise.
    """
    if cfg.f_layers[0].input_width != 2:
        raise ValueError("pair-input network must take 2-d input")
    n = pairs.n
    if cfg.batch_size > n:
        raise ValueError(f"batch_size {cfg.batch_size} exceeds sample size {n}")
    u = _zscore(pairs.u)
    v = _zscore(pairs.v)
    f_seed, batch_seed, resample_seed = _spawn_seeds(cfg.seed, 3)
    f = mlp_new(cfg.f_layers, f_seed)
    opt_f = OptimizerState(learning_rate=cfg.alpha_f)
    batch_rng = np.random.default_rng(batch_seed)
    resample_rng = np.random.default_rng(resample_seed)
    trace = []
    for it in range(cfg.iterations):
        idx = batch_rng.integers(0, n, size=cfg.batch_size)
        joint_in, marg_in = _resampled_pair_inputs(u[idx], v[idx], resample_rng)
        tape = Tape()
        bound = mlp_bind(tape, f, name="f.")
        f_joint = mlp_apply_bound(tape, f, bound, tape.constant(joint_in))
        f_marg = mlp_apply_bound(tape, f, bound, tape.constant(marg_in))
        gain = tape.mean(f_joint)
        price = tape.mean(tape.add(f_marg, tape.scale(tape.mul(f_marg, f_marg), 0.25)))
        j = tape.add(gain, tape.scale(price, -1.0))
        j_val = float(j.value)
        if not math.isfinite(j_val):
            raise DivergenceError(f"objective diverged at iteration {it}", trace)
        trace.append(j_val)
        grads = tape.gradients(j)
        f = optimizer_step(opt_f, f, _subgrads(grads, "f."), "ascend")
    f_joint = forward(f, np.column_stack([u, v]))[0].reshape(-1)
    marg_terms = []
    for _ in range(FINAL_RESAMPLES):
        _, marg_in = _resampled_pair_inputs(u, v, resample_rng)
        f_marg = forward(f, marg_in)[0].reshape(-1)
        marg_terms.append(float((f_marg + 0.25 * f_marg * f_marg).mean()))
    value = float(f_joint.mean() - np.mean(marg_terms))
    return Estimate(
        value,
        diagnostics={
            "trace": trace,
            "iterations": cfg.iterations,
            "final_batch_objective": trace[-1],
        },
    )


def mine(pairs: SamplePairs, cfg: NeuralEstimatorConfig) -> Estimate:
    """Donsker-Varadhan lower bound of the mutual information, in nats:
    sup_f E_joint[f] - log E_prod[exp f].

    Network outputs are clipped to +-50 before exponentiation, so the
    partition term cannot overflow. The log-partition gradient is taken
    with the softmax weights exp(f)/sum(exp(f)) held fixed, which equals
    the exact gradient of log E[exp f].
    """
    if cfg.f_layers[0].input_width != 2:
        raise ValueError("pair-input network must take 2-d input")
    n = pairs.n
    if cfg.batch_size > n:
        raise ValueError(f"batch_size {cfg.batch_size} exceeds sample size {n}")
    u = _zscore(pairs.u)
    v = _zscore(pairs.v)
    f_seed, batch_seed, resample_seed = _spawn_seeds(cfg.seed, 3)
    f = mlp_new(cfg.f_layers, f_seed)
    opt_f = OptimizerState(learning_rate=cfg.alpha_f)
    batch_rng = np.random.default_rng(batch_seed)
    resample_rng = np.random.default_rng(resample_seed)
    trace = []
    for it in range(cfg.iterations):
        idx = batch_rng.integers(0, n, size=cfg.batch_size)
        joint_in, marg_in = _resampled_pair_inputs(u[idx], v[idx], resample_rng)
        tape = Tape()
        bound = mlp_bind(tape, f, name="f.")
        f_joint = mlp_apply_bound(tape, f, bound, tape.constant(joint_in))
        f_marg = mlp_apply_bound(tape, f, bound, tape.constant(marg_in))
        weights = np.exp(np.clip(f_marg.value, -MINE_CLIP, MINE_CLIP))
        partition = float(weights.mean())
        j_val = float(f_joint.value.mean()) - math.log(partition)
        if not math.isfinite(j_val):
            raise DivergenceError(f"objective diverged at iteration {it}", trace)
        trace.append(j_val)
        # surrogate with the same gradient as E[f] - log E[exp f]
        weighted = tape.mean(tape.mul(f_marg, tape.constant(weights)))
        surrogate = tape.add(
            tape.mean(f_joint), tape.scale(weighted, -1.0 / partition)
        )
        grads = tape.gradients(surrogate)
        f = optimizer_step(opt_f, f, _subgrads(grads, "f."), "ascend")
    f_joint = forward(f, np.column_stack([u, v]))[0].reshape(-1)
    partitions = []
    for _ in range(FINAL_RESAMPLES):
        _, marg_in = _resampled_pair_inputs(u, v, resample_rng)
        f_marg = np.clip(forward(f, marg_in)[0].reshape(-1), -MINE_CLIP, MINE_CLIP)
        partitions.append(float(np.exp(f_marg).mean()))
    value = float(f_joint.mean() - math.log(np.mean(partitions)))
    return Estimate(
        value,
        diagnostics={
            "trace": trace,
            "iterations": cfg.iterations,
            "final_batch_objective": trace[-1],
        },
    )


def _jacobi_singular_values(a: np.ndarray, max_sweeps: int = 100) -> np.ndarray:
    """Singular values of a dense matrix by one-sided Jacobi rotations.

    Cyclically orthogonalizes column pairs until every pair is orthogonal
    to machine precision; singular values are then the column norms.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("need a 2-d matrix")
    work = a.copy() if a.shape[0] >= a.shape[1] else a.T.copy()
    k = work.shape[1]
    tol = 1e-15
    for _ in range(max_sweeps):
        rotated = False
        for p in range(k - 1):
            for q in range(p + 1, k):
                cp = work[:, p]
                cq = work[:, q]
                apq = cp @ cq
                app = cp @ cp
                aqq = cq @ cq
                if abs(apq) <= tol * math.sqrt(app * aqq) or apq == 0.0:
                    continue
                rotated = True
                tau = (aqq - app) / (2.0 * apq)
                t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                new_p = c * cp - s * cq
                new_q = s * cp + c * cq
                work[:, p] = new_p
                work[:, q] = new_q
        if not rotated:
            break
    values = np.sqrt((work * work).sum(axis=0))
    values.sort()
    return values[::-1]


def witsenhausen_matrix(joint: np.ndarray) -> WitsenhausenMatrix:
    """Validate a joint probability matrix and normalize by its marginals.

    Rows and columns with zero marginal mass are dropped before the
    normalization q = p / sqrt(outer(p_u, p_v)).
    """
    p = np.asarray(joint, dtype=np.float64)
    if p.ndim != 2:
        raise ValueError("joint must be a 2-d matrix")
    if np.any(p < -1e-12):
        raise ValueError("joint has negative entries")
    p = np.clip(p, 0.0, None)
    total = p.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"joint must sum to 1, got {total!r}")
    p_u = p.sum(axis=1)
    p_v = p.sum(axis=0)
    p = p[p_u > 0][:, p_v > 0]
    p_u = p_u[p_u > 0]
    p_v = p_v[p_v > 0]
    q = p / np.sqrt(np.outer(p_u, p_v))
    return WitsenhausenMatrix(q=q, p_u=p_u, p_v=p_v)


def witsenhausen_discrete(joint: np.ndarray) -> Estimate:
    """Maximal correlation of a discrete joint distribution: the second
    largest singular value of p(j,j') / sqrt(p_u(j) p_v(j'))."""
    m = witsenhausen_matrix(joint)
    if min(m.q.shape) < 2:
        # one variable is almost surely constant, hence independent
        return Estimate(0.0, diagnostics={"singular_values": [1.0]})
    values = _jacobi_singular_values(m.q)
    return Estimate(float(values[1]), diagnostics={"singular_values": values.tolist()})


def silverman_bandwidth(samples: np.ndarray) -> float:
    """Plug-in bandwidth (4 / (3n))**(1/5) * sample standard deviation."""
    x = np.asarray(samples, dtype=np.float64).reshape(-1)
    if x.size < 2:
        raise ValueError("need at least 2 samples")
    sd = x.std(ddof=1)
    if sd == 0.0:
        raise ValueError("bandwidth undefined for zero-variance samples")
    return float((4.0 / (3.0 * x.size)) ** 0.2 * sd)


def _trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    step = grid[1] - grid[0]
    w = np.full(grid.size, step)
    w[0] = w[-1] = step / 2.0
    return w


def kde_joint_density(
    pairs: SamplePairs, cfg: KdeConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Product-Gaussian-kernel density of (u, v) on a regular grid.

    The grid spans each data range padded by ``grid_padding`` bandwidths,
    and the density is renormalized so its trapezoidal integral is 1.
    Returns (grid_u, grid_v, density).
    """
    u = pairs.u
    v = pairs.v
    if cfg.bandwidth_rule == "silverman":
        hu = silverman_bandwidth(u)
        hv = silverman_bandwidth(v)
    else:
        hu = hv = float(cfg.bandwidth)
    grid_u = np.linspace(
        u.min() - cfg.grid_padding * hu, u.max() + cfg.grid_padding * hu, cfg.grid_size
    )
    grid_v = np.linspace(
        v.min() - cfg.grid_padding * hv, v.max() + cfg.grid_padding * hv, cfg.grid_size
    )
    ku = np.exp(-0.5 * ((grid_u[:, None] - u[None, :]) / hu) ** 2) / (
        hu * math.sqrt(2.0 * math.pi)
    )
    kv = np.exp(-0.5 * ((grid_v[:, None] - v[None, :]) / hv) ** 2) / (
        hv * math.sqrt(2.0 * math.pi)
    )
    density = ku @ kv.T / pairs.n
    integral = _trapezoid_weights(grid_u) @ density @ _trapezoid_weights(grid_v)
    if integral <= 0.0 or not math.isfinite(integral):
        raise ValueError("degenerate density estimate")
    return grid_u, grid_v, density / integral


def _bandwidths(pairs: SamplePairs, cfg: KdeConfig) -> tuple[float, float]:
    if cfg.bandwidth_rule == "silverman":
        return silverman_bandwidth(pairs.u), silverman_bandwidth(pairs.v)
    return float(cfg.bandwidth), float(cfg.bandwidth)


def _cell_masses(pairs: SamplePairs, cfg: KdeConfig) -> tuple[np.ndarray, dict]:
    grid_u, grid_v, density = kde_joint_density(pairs, cfg)
    masses = np.outer(_trapezoid_weights(grid_u), _trapezoid_weights(grid_v)) * density
    masses /= masses.sum()
    hu, hv = _bandwidths(pairs, cfg)
    diag = {"grid_size": cfg.grid_size, "bandwidth_u": hu, "bandwidth_v": hv}
    return masses, diag


def hgr_kde(pairs: SamplePairs, cfg: KdeConfig | None = None) -> Estimate:
    """Maximal correlation of the kernel-density estimate: discretize the
    smoothed joint law into grid-cell masses and take the second singular
    value of the marginal-normalized matrix."""
    cfg = cfg or KdeConfig()
    masses, diag = _cell_masses(pairs, cfg)
    est = witsenhausen_discrete(masses)
    est.diagnostics.update(diag)
    return est


def chi2_kde(pairs: SamplePairs, cfg: KdeConfig | None = None) -> Estimate:
    """Chi-square divergence of the kernel-density estimate from the
    product of its marginals: sum of squared normalized cell masses minus 1."""
    cfg = cfg or KdeConfig()
    masses, diag = _cell_masses(pairs, cfg)
    m_u = masses.sum(axis=1)
    m_v = masses.sum(axis=0)
    keep_u = m_u > 0
    keep_v = m_v > 0
    m = masses[keep_u][:, keep_v]
    value = float((m * m / np.outer(m_u[keep_u], m_v[keep_v])).sum() - 1.0)
    return Estimate(value, diagnostics=diag)


def rdc(pairs: SamplePairs, k: int = 20, s: float = 1.0 / 6.0, seed: int = 0) -> Estimate:
    """Randomized dependence coefficient.

    Each marginal is rank-transformed to its empirical copula, augmented
    with a constant column, pushed through k random sinusoidal projections
    with scale s, and the value is the largest canonical correlation
    between the two feature blocks. Depends only on the ranks, so it is
    exactly invariant under strictly increasing marginal transforms.
    """
    n = pairs.n
    if n <= k:
        raise ValueError(f"need more than k={k} samples, got {n}")
    rng = np.random.default_rng(seed)
    feats = []
    for x in (pairs.u, pairs.v):
        cop = scipy.stats.rankdata(x, method="average") / n
        block = np.column_stack([cop, np.ones(n)])
        proj = block @ rng.normal(size=(2, k)) * (s / 2.0)
        feats.append(np.sin(proj))
    value = _largest_canonical_correlation(feats[0], feats[1])
    return Estimate(value, diagnostics={"k": k, "scale": s})


def _largest_canonical_correlation(
    x: np.ndarray, y: np.ndarray, ridge: float = 1e-8
) -> float:
    x = x - x.mean(axis=0)
    y = y - y.mean(axis=0)
    n = x.shape[0]
    cxx = x.T @ x / n + ridge * np.eye(x.shape[1])
    cyy = y.T @ y / n + ridge * np.eye(y.shape[1])
    cxy = x.T @ y / n
    root_x = _inverse_sqrt_spd(cxx)
    root_y = _inverse_sqrt_spd(cyy)
    core = root_x @ cxy @ root_y
    sigma = float(_jacobi_singular_values(core)[0])
    return min(1.0, max(0.0, sigma))


def _inverse_sqrt_spd(a: np.ndarray) -> np.ndarray:
    eigenvalues, vectors = np.linalg.eigh(a)
    eigenvalues = np.clip(eigenvalues, 1e-12, None)
    return (vectors / np.sqrt(eigenvalues)) @ vectors.T


def null_calibration(
    estimator, pairs: SamplePairs, permutations: int, seed: int = 0
) -> NullSummary:
    """Permutation null of an estimator: re-run it with v shuffled.

    ``estimator`` maps SamplePairs to an Estimate or a float. Quantiles
    reported at 50/90/95/99 percent.
    """
    if permutations < 1:
        raise ValueError("need at least 1 permutation")
    rng = np.random.default_rng(seed)
    values = np.empty(permutations)
    for i in range(permutations):
        shuffled = SamplePairs(pairs.u, rng.permutation(pairs.v))
        result = estimator(shuffled)
        values[i] = result.value if isinstance(result, Estimate) else float(result)
    quantiles = {
        q: float(np.quantile(values, q / 100.0)) for q in (50, 90, 95, 99)
    }
    return NullSummary(values=values, mean=float(values.mean()), quantiles=quantiles)
