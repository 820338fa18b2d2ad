"""Maximum-likelihood estimation of kernel hyperparameters.

The profiled log marginal likelihood (trend coefficients solved by GLS at
every evaluation) is maximized over log-transformed hyperparameters with
multi-start Nelder-Mead.  Inputs are standardized internally so the optimizer
sees O(1) lengthscales; estimates are mapped back to raw age/year units.

Restarts are independent and may run in threads; set MORTGP_THREADS to cap
the pool.  Results are deterministic for a given config and seed either way.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from . import gp as gp_mod
from . import means
from .data import MortalityTable, make_standardizer
from .gp import LOG_2PI, FittedGP
from .kernels import ConstantNoise, DeltaMethodNoise, KernelFamily, KernelHyperparams, noise_diagonal
from .means import MeanBasis

# log-space proximity at which an estimate counts as pinned to its bound;
# Nelder-Mead with clipped bounds stalls slightly off the box edge
_BOUND_EPS = 1e-3


@dataclass(frozen=True)
class FitConfig:
    """Optimizer configuration; bounds are in raw input/output units."""

    n_restarts: int = 8
    theta_bounds: tuple[float, float] = (0.5, 100.0)
    eta_sq_bounds: tuple[float, float] = (1e-6, 1e2)
    sigma_sq_bounds: tuple[float, float] = (1e-10, 1.0)
    tol: float = 1e-7
    xatol: float = 1e-4
    max_iter: Optional[int] = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be at least 1")
        for name in ("theta_bounds", "eta_sq_bounds", "sigma_sq_bounds"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and 0 < lo < hi):
                raise ValueError(f"{name} must be finite with 0 < lo < hi, got ({lo}, {hi})")


@dataclass
class RestartRecord:
    start: dict
    end: dict
    log_likelihood: float
    success: bool


@dataclass
class FitResult:
    hp: KernelHyperparams
    beta: np.ndarray
    log_likelihood: float
    restart_trace: list[RestartRecord]
    converged: bool
    bound_hit: bool
    family: KernelFamily
    basis: Optional[MeanBasis]
    noise: Union[ConstantNoise, DeltaMethodNoise]
    model: FittedGP = field(repr=False, default=None)


class _ProfiledLikelihood:
    """Profiled log marginal likelihood over standardized inputs.

    Pairwise squared distances and the design matrix are precomputed once;
    each call costs one kernel evaluation plus one Cholesky factorization.
    """

    def __init__(self, x_std, y, basis, fixed_noise_diag):
        self.d2_ag = (x_std[:, 0:1] - x_std[None, :, 0]) ** 2
        self.d2_yr = (x_std[:, 1:2] - x_std[None, :, 1]) ** 2
        self.y = y
        self.n = y.size
        self.h = means.basis_matrix(basis, x_std)
        self.p = self.h.shape[1]
        if self.p and np.linalg.matrix_rank(self.h) < self.p:
            raise ValueError("mean basis design matrix is rank deficient on these inputs")
        self.fixed_noise_diag = fixed_noise_diag  # None => constant noise, last parameter
        self.estimate_sigma = fixed_noise_diag is None
        self.diag_idx = np.diag_indices(self.n)

    def loglik(self, params: np.ndarray) -> float:
        theta_ag, theta_yr, eta_sq = np.exp(params[:3])
        a = eta_sq * np.exp(-self.d2_ag / (2.0 * theta_ag**2) - self.d2_yr / (2.0 * theta_yr**2))
        if self.estimate_sigma:
            a[self.diag_idx] += math.exp(params[3])
        else:
            a[self.diag_idx] += self.fixed_noise_diag
        try:
            chol = cholesky(a, lower=True)
        except np.linalg.LinAlgError:
            return float("-inf")
        y_white = solve_triangular(chol, self.y, lower=True)
        if self.p:
            h_white = solve_triangular(chol, self.h, lower=True)
            try:
                g_cho = cho_factor(h_white.T @ h_white, lower=True)
            except np.linalg.LinAlgError:
                return float("-inf")
            beta = cho_solve(g_cho, h_white.T @ y_white)
            resid = y_white - h_white @ beta
        else:
            resid = y_white
        return float(-0.5 * resid @ resid - np.log(np.diag(chol)).sum() - 0.5 * self.n * LOG_2PI)

    def __call__(self, params: np.ndarray) -> float:
        value = self.loglik(params)
        return 1e12 if not np.isfinite(value) else -value


def _heuristic_start(x_std, y, h, estimate_sigma, log_bounds):
    theta0 = [max(0.5 * np.ptp(x_std[:, 0]), 1e-3), max(0.5 * np.ptp(x_std[:, 1]), 1e-3)]
    if h.shape[1]:
        coef, *_ = np.linalg.lstsq(h, y, rcond=None)
        detrended = y - h @ coef
    else:
        detrended = y
    eta0 = max(float(np.var(detrended)), 1e-8)
    start = [math.log(theta0[0]), math.log(theta0[1]), math.log(eta0)]
    if estimate_sigma:
        start.append(math.log(1e-2 * eta0))
    return np.clip(start, log_bounds[:, 0], log_bounds[:, 1])


def fit_mle(
    table: MortalityTable,
    family: KernelFamily = KernelFamily.SQUARED_EXPONENTIAL,
    basis: Optional[MeanBasis] = MeanBasis.INTERCEPT,
    noise: Union[str, DeltaMethodNoise] = "constant",
    config: FitConfig = FitConfig(),
) -> FitResult:
    """Best-of-restarts maximizer of the profiled log marginal likelihood.

    With ``noise="constant"`` the observation variance is estimated jointly;
    with a :class:`DeltaMethodNoise` the noise diagonal is fixed by the cell
    counts and only the three kernel parameters are optimized.
    """
    p = means.basis_dim(basis)
    x_raw = table.inputs()
    y = table.responses()
    if x_raw.shape[0] < p + 2:
        raise ValueError(f"need at least {p + 2} trainable cells, got {x_raw.shape[0]}")
    std = make_standardizer(table)
    x_std = std.apply(x_raw)
    sd = np.array([std.sd_ag, std.sd_yr])

    if isinstance(noise, str):
        if noise != "constant":
            raise ValueError(f"unknown noise mode {noise!r}; use 'constant' or a DeltaMethodNoise")
        fixed_diag = None
    elif isinstance(noise, DeltaMethodNoise):
        fixed_diag = noise_diagonal(noise, table)
    else:
        raise TypeError(f"noise must be 'constant' or DeltaMethodNoise, got {type(noise).__name__}")

    obj = _ProfiledLikelihood(x_std, y, basis, fixed_diag)
    estimate_sigma = obj.estimate_sigma

    # bounds in log space; theta bounds are per-coordinate images of the raw box
    rows = [
        (config.theta_bounds[0] / sd[0], config.theta_bounds[1] / sd[0]),
        (config.theta_bounds[0] / sd[1], config.theta_bounds[1] / sd[1]),
        config.eta_sq_bounds,
    ]
    if estimate_sigma:
        rows.append(config.sigma_sq_bounds)
    log_bounds = np.log(np.array(rows))

    rng = np.random.default_rng(config.seed)
    starts = [_heuristic_start(x_std, y, obj.h, estimate_sigma, log_bounds)]
    for _ in range(config.n_restarts - 1):
        starts.append(rng.uniform(log_bounds[:, 0], log_bounds[:, 1]))

    options = {"fatol": config.tol, "xatol": config.xatol, "adaptive": True}
    if config.max_iter is not None:
        options["maxiter"] = config.max_iter

    def run(start: np.ndarray):
        return minimize(obj, start, method="Nelder-Mead", bounds=log_bounds, options=options)

    n_workers = min(config.n_restarts, max(1, int(os.environ.get("MORTGP_THREADS", "1"))))
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(s) for s in starts]

    def raw_params(v: np.ndarray) -> dict:
        out = {
            "theta_ag": math.exp(v[0]) * sd[0],
            "theta_yr": math.exp(v[1]) * sd[1],
            "eta_sq": math.exp(v[2]),
        }
        if estimate_sigma:
            out["sigma_sq"] = math.exp(v[3])
        return out

    trace = []
    for start, res in zip(starts, results):
        value = -res.fun if np.isfinite(res.fun) and res.fun < 1e12 else float("-inf")
        trace.append(RestartRecord(start=raw_params(start), end=raw_params(res.x), log_likelihood=value, success=bool(res.success)))

    values = np.array([rec.log_likelihood for rec in trace])
    if not np.isfinite(values).any():
        raise gp_mod.FactorizationError("every restart failed covariance factorization")
    best_idx = int(np.argmax(values))
    best = results[best_idx]

    bound_hit = bool(np.any(np.abs(best.x - log_bounds[:, 0]) < _BOUND_EPS) or np.any(np.abs(best.x - log_bounds[:, 1]) < _BOUND_EPS))
    if bound_hit:
        warnings.warn("optimizer stopped at a hyperparameter bound; estimates may be degenerate", stacklevel=2)

    est = raw_params(best.x)
    if estimate_sigma:
        hp = KernelHyperparams(est["theta_ag"], est["theta_yr"], est["eta_sq"], est["sigma_sq"])
        noise_model = ConstantNoise(est["sigma_sq"])
    else:
        hp = KernelHyperparams(est["theta_ag"], est["theta_yr"], est["eta_sq"], 0.0)
        noise_model = noise

    model = gp_mod.fit_gls(table, family, hp, noise=noise_model, basis=basis)
    return FitResult(
        hp=hp,
        beta=model.beta,
        log_likelihood=model.log_likelihood,
        restart_trace=trace,
        converged=bool(best.success) or bound_hit,
        bound_hit=bound_hit,
        family=family,
        basis=basis,
        noise=noise_model,
        model=model,
    )


@dataclass
class GridPoint:
    hp: KernelHyperparams
    log_likelihood: float
    ok: bool


def evaluate_grid(
    table: MortalityTable,
    family: KernelFamily,
    basis: Optional[MeanBasis],
    grid: Sequence[KernelHyperparams],
    noise: Optional[Union[ConstantNoise, DeltaMethodNoise]] = None,
) -> list[GridPoint]:
    """Log marginal likelihood at each grid point; failed factorizations are marked."""
    grid = list(grid)
    if not grid:
        raise ValueError("grid must be non-empty")
    out = []
    for hp in grid:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            value = gp_mod.log_marginal_likelihood(table, family, hp, noise=noise, basis=basis)
        out.append(GridPoint(hp=hp, log_likelihood=value, ok=math.isfinite(value)))
    return out
