"""Dataset generators, CSV ingestion, and train/test splitting.

All random draws go through PCG64 generators derived from the run seed
via SeedSequence spawning, one substream per column, and normal variates
come from the inverse CDF of uniforms, so every generator is
bit-reproducible for a given (parameters, seed) across platforms.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtri

from .estimators import SamplePairs

__all__ = [
    "Dataset",
    "PATTERN_KINDS",
    "gen_bivariate_gaussian",
    "gen_pattern",
    "gen_synthetic_scenario",
    "load_csv",
    "split",
]

PATTERN_KINDS = ("sine", "square", "gaussian_pdf", "sin_pow")


@dataclass(frozen=True, eq=False)
class Dataset:
    """A regression dataset with one designated sensitive column.

    ``x`` is n rows by p feature columns; the sensitive attribute ``s``
    is kept out of ``x``. ``provenance`` records how the rows were made.
    """

    feature_names: tuple[str, ...]
    x: np.ndarray
    s: np.ndarray
    y: np.ndarray
    provenance: str
    seed: int

    def __post_init__(self) -> None:
        if self.x.ndim != 2:
            raise ValueError("x must be 2-d")
        n = self.x.shape[0]
        if self.s.shape != (n,) or self.y.shape != (n,):
            raise ValueError("row counts of x, s, y disagree")
        if len(self.feature_names) != self.x.shape[1]:
            raise ValueError("feature_names length does not match x columns")
        for name, arr in (("x", self.x), ("s", self.s), ("y", self.y)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")

    @property
    def n(self) -> int:
        return self.x.shape[0]


def _substreams(seed: int, count: int) -> list[np.random.Generator]:
    return [np.random.default_rng(c) for c in np.random.SeedSequence(seed).spawn(count)]


def _standard_normal(rng: np.random.Generator, n: int) -> np.ndarray:
    # inverse-CDF sampling: exactly one uniform consumed per variate
    u = rng.random(n)
    u = np.clip(u, np.finfo(np.float64).tiny, None)
    return ndtri(u)


def gen_synthetic_scenario(n: int, seed: int = 0) -> Dataset:
    """Household-pricing toy data with age as the sensitive attribute.

    Age ~ N(40, 5); Rooms = floor(U(1, 5)); Surface depends on age only
    through the centered quadratic -0.25 (Age - 40)^2 + 120 plus unit
    noise, so Surface and Age are uncorrelated yet strongly dependent;
    BuildingAge ~ N(30, 10). The target is
    0.0005 exp(0.07 Surface + 0.08 BuildingAge + 0.4 Rooms) + 150,
    a function of the three features only; Age itself stays out of x.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    age_rng, rooms_rng, noise_rng, bldg_rng = _substreams(seed, 4)
    age = 40.0 + 5.0 * _standard_normal(age_rng, n)
    rooms = np.floor(rooms_rng.uniform(1.0, 5.0, size=n))
    surface = -0.25 * (-age + 40.0) ** 2 + 120.0 + _standard_normal(noise_rng, n)
    building_age = 30.0 + 10.0 * _standard_normal(bldg_rng, n)
    y = 0.0005 * np.exp(0.07 * surface + 0.08 * building_age + 0.4 * rooms) + 150.0
    return Dataset(
        feature_names=("rooms", "surface", "building_age"),
        x=np.column_stack([rooms, surface, building_age]),
        s=age,
        y=y,
        provenance="synthetic_scenario",
        seed=int(seed),
    )


def gen_bivariate_gaussian(n: int, rho: float, seed: int = 0) -> SamplePairs:
    """Standard bivariate normal pairs with correlation rho, by Cholesky."""
    if not -1.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (-1, 1), got {rho}")
    if n < 2:
        raise ValueError("need n >= 2")
    rng_u, rng_w = _substreams(seed, 2)
    z1 = _standard_normal(rng_u, n)
    z2 = _standard_normal(rng_w, n)
    return SamplePairs(z1, rho * z1 + np.sqrt(1.0 - rho * rho) * z2)


def gen_pattern(kind: str, n: int, sigma: float = 0.0, seed: int = 0) -> SamplePairs:
    """Association-pattern pairs: u ~ U(-10, 10), v = F(u) + N(0, sigma^2).

    Kinds: sine -> sin(u); square -> u^2; gaussian_pdf -> exp(-u^2/2)
    (unnormalized bell); sin_pow -> sin(0.2^u). Every kind has zero linear
    correlation but full nonlinear dependence at sigma = 0.
    """
    if kind not in PATTERN_KINDS:
        raise ValueError(f"unknown pattern kind {kind!r}; choose from {PATTERN_KINDS}")
    if n < 2:
        raise ValueError("need n >= 2")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    u_rng, noise_rng = _substreams(seed, 2)
    u = u_rng.uniform(-10.0, 10.0, size=n)
    if kind == "sine":
        v = np.sin(u)
    elif kind == "square":
        v = u * u
    elif kind == "gaussian_pdf":
        v = np.exp(-0.5 * u * u)
    else:
        v = np.sin(0.2 ** u)
    v = v + sigma * _standard_normal(noise_rng, n)
    return SamplePairs(u, v)


def load_csv(
    path: str,
    feature_cols: list[str] | tuple[str, ...],
    sensitive_col: str,
    target_col: str,
) -> Dataset:
    """Read a header-first CSV into a Dataset.

    Columns are addressed by header name; every addressed cell must parse
    as a finite float. Errors cite the offending column, and for cell
    failures the 1-based data row.
    """
    feature_cols = list(feature_cols)
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise ValueError(f"empty file: {path}")
        wanted = feature_cols + [sensitive_col, target_col]
        for col in wanted:
            if col not in reader.fieldnames:
                raise ValueError(f"missing column {col!r} in {path}")
        rows = []
        for row_number, record in enumerate(reader, start=1):
            parsed = []
            for col in wanted:
                cell = record[col]
                try:
                    value = float(cell)
                except (TypeError, ValueError):
                    raise ValueError(
                        f"unparsable cell {cell!r} at row {row_number}, "
                        f"column {col!r}"
                    ) from None
                if not np.isfinite(value):
                    raise ValueError(
                        f"non-finite value at row {row_number}, column {col!r}"
                    )
                parsed.append(value)
            rows.append(parsed)
    if not rows:
        raise ValueError(f"no data rows in {path}")
    table = np.asarray(rows, dtype=np.float64)
    p = len(feature_cols)
    return Dataset(
        feature_names=tuple(feature_cols),
        x=table[:, :p],
        s=table[:, p],
        y=table[:, p + 1],
        provenance=f"csv({path})",
        seed=0,
    )


def split(dataset: Dataset, train_fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seed-shuffled disjoint partition into ceil(f*n) train and the rest test."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = dataset.n
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(np.ceil(train_fraction * n))
    train_idx = order[:n_train]
    test_idx = order[n_train:]

    def take(idx: np.ndarray) -> Dataset:
        return replace(
            dataset, x=dataset.x[idx], s=dataset.s[idx], y=dataset.y[idx]
        )

    return take(train_idx), take(test_idx)
