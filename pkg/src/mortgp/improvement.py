"""Mortality-improvement analytics.

Four curve kinds over a fixed calendar year, indexed by age:

* ``observed``   -- raw year-over-year factors 1 - m(yr)/m(yr-1) from the data;
* ``backward_gp`` -- the same ratio with posterior draws of the latent surface
  substituted for the raw rates, summarized by Monte Carlo;
* ``centered``   -- the symmetric difference quotient of the latent surface at
  yr +/- h, an exact Gaussian linear functional;
* ``derivative_gp`` -- the instantaneous improvement, minus the analytic
  year-derivative of the posterior surface, with analytic credible bands.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import gp as gp_mod
from .data import MortalityTable
from .gp import FittedGP, _clamp_variance, _quantile_z


@dataclass
class ImprovementCurve:
    """Improvement factors by age for one calendar year."""

    ages: np.ndarray
    year: float
    kind: str
    mean: np.ndarray
    sd: Optional[np.ndarray] = None
    level: Optional[float] = None
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.ages = np.asarray(self.ages)
        self.mean = np.asarray(self.mean, dtype=float)
        if not np.all(np.isfinite(self.mean)):
            raise ValueError("improvement means must be finite")
        if self.sd is not None:
            self.sd = np.asarray(self.sd, dtype=float)
            if np.any(self.sd < 0):
                raise ValueError("improvement sd must be non-negative")


def _two_year_posterior(gp: FittedGP, ages: np.ndarray, year_lo: float, year_hi: float):
    """Joint posterior at (age, year_lo) and (age, year_hi) for every age.

    Returns per-age means (A, 2) and covariance blocks (A, 2, 2).
    """
    pts = np.empty((2 * ages.size, 2))
    pts[0::2, 0] = ages
    pts[0::2, 1] = year_lo
    pts[1::2, 0] = ages
    pts[1::2, 1] = year_hi
    post = gp_mod.predict(gp, pts, want_covariance=True)
    means2 = post.mean.reshape(-1, 2)
    blocks = np.empty((ages.size, 2, 2))
    for i in range(ages.size):
        blocks[i] = post.covariance[2 * i : 2 * i + 2, 2 * i : 2 * i + 2]
    return means2, blocks


def _psd_sqrt_2x2(block: np.ndarray) -> np.ndarray:
    # eigenvalue square root; tolerates exactly singular (including zero) blocks
    w, v = np.linalg.eigh(block)
    w = np.where(w > 0.0, w, 0.0)
    return v * np.sqrt(w)


def backward_ratio_samples(mean2: np.ndarray, block: np.ndarray, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Draws of 1 - exp(f_hi) / exp(f_lo) from a joint 2-point Gaussian posterior."""
    factor = _psd_sqrt_2x2(block)
    z = rng.standard_normal((2, n_samples))
    f = mean2[:, None] + factor @ z
    return 1.0 - np.exp(f[1] - f[0])


def mi_back_observed(table: MortalityTable, year: int, ages=None) -> ImprovementCurve:
    """Raw year-over-year improvement 1 - m(age, year)/m(age, year-1)."""
    if ages is None:
        ages = table.ages()
    ages = np.asarray(ages, dtype=int)
    kept, values = [], []
    for age in ages:
        try:
            now = table.cell(int(age), int(year))
            prev = table.cell(int(age), int(year) - 1)
        except KeyError:
            warnings.warn(f"age {age}: missing cell in {year} or {year - 1}; omitted", stacklevel=2)
            continue
        if not (now.trainable and prev.trainable):
            warnings.warn(f"age {age}: zero-death cell in {year} or {year - 1}; omitted", stacklevel=2)
            continue
        kept.append(int(age))
        values.append(1.0 - np.exp(now.log_rate - prev.log_rate))
    if not kept:
        raise ValueError(f"no age has cells in both {year - 1} and {year}")
    return ImprovementCurve(ages=np.array(kept), year=year, kind="observed", mean=np.array(values))


def mi_back_gp(
    gp: FittedGP,
    ages,
    year: int,
    n_samples: int = 10_000,
    seed: int = 0,
    level: float = 0.80,
) -> ImprovementCurve:
    """Posterior year-over-year improvement, summarized by joint Monte Carlo.

    Each age uses the exact joint 2x2 posterior of the surface in the two
    adjacent years; bands are pointwise empirical quantiles of the draws.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    ages = np.asarray(ages, dtype=float)
    means2, blocks = _two_year_posterior(gp, ages, year - 1, year)
    rng = np.random.default_rng(seed)
    q = np.array([(1.0 - level) / 2.0, (1.0 + level) / 2.0])
    mean = np.empty(ages.size)
    sd = np.empty(ages.size)
    lo = np.empty(ages.size)
    hi = np.empty(ages.size)
    for i in range(ages.size):
        draws = backward_ratio_samples(means2[i], blocks[i], n_samples, rng)
        mean[i] = draws.mean()
        sd[i] = draws.std(ddof=1)
        lo[i], hi[i] = np.quantile(draws, q)
    return ImprovementCurve(ages=ages.astype(int), year=year, kind="backward_gp", mean=mean, sd=sd, level=level, lo=lo, hi=hi)


def mi_centered(gp: FittedGP, ages, year: float, h: float, level: float = 0.80) -> ImprovementCurve:
    """Centered-difference improvement -(f(yr+h) - f(yr-h)) / (2h), exact Gaussian."""
    if h <= 0:
        raise ValueError("step h must be positive")
    ages = np.asarray(ages, dtype=float)
    means2, blocks = _two_year_posterior(gp, ages, year - h, year + h)
    mean = -(means2[:, 1] - means2[:, 0]) / (2.0 * h)
    var = (blocks[:, 0, 0] + blocks[:, 1, 1] - 2.0 * blocks[:, 0, 1]) / (4.0 * h * h)
    sd = np.sqrt(_clamp_variance(var))
    z = _quantile_z(level)
    return ImprovementCurve(
        ages=ages.astype(int), year=year, kind="centered", mean=mean, sd=sd, level=level, lo=mean - z * sd, hi=mean + z * sd
    )


def mi_diff_gp(gp: FittedGP, ages, year: float, level: float = 0.80) -> ImprovementCurve:
    """Instantaneous improvement: the negated year-derivative posterior.

    The mean is exactly the analytic derivative of the predictive surface and
    the bands come from the derivative process's analytic variance.
    """
    ages = np.asarray(ages, dtype=float)
    pts = np.column_stack([ages, np.full(ages.size, float(year))])
    deriv = gp_mod.predict_year_derivative(gp, pts)
    mean = -deriv.mean
    sd = deriv.sd
    z = _quantile_z(level)
    return ImprovementCurve(
        ages=ages.astype(int), year=year, kind="derivative_gp", mean=mean, sd=sd, level=level, lo=mean - z * sd, hi=mean + z * sd
    )
