"""Universal-kriging posterior for the mortality surface.

The latent log-mortality surface f is a Gaussian process with a parametric
prior mean h(x) . beta.  Fitting solves the generalized-least-squares normal
equations for beta jointly with conditioning on the observed log rates; all
solves against (C + Sigma) go through one lower-triangular Cholesky factor and
no explicit matrix inverse is ever formed.

Basis coefficients are solved in internally rescaled input coordinates (the
raw design matrix for a quadratic-age trend over calendar years is too ill
conditioned for float64 normal equations) and mapped back to the raw scale
exactly; see ``means.basis_change_matrix``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, solve_triangular
from scipy.stats import norm

from . import kernels, means
from .data import MortalityTable
from .kernels import ConstantNoise, KernelFamily, KernelHyperparams, NoiseModel
from .means import MeanBasis

LOG_2PI = math.log(2.0 * math.pi)

# Diagonal nugget (relative to eta^2) applied when the noise variance is zero,
# so that interpolation-mode covariance matrices stay positive definite.
JITTER_SCALE = 1e-10

# Negative variances inside this tolerance are treated as roundoff and clamped
# to zero; anything below it indicates a logic error and raises.
VARIANCE_TOL = 1e-10


class FactorizationError(RuntimeError):
    """Raised when (C + Sigma) or a posterior covariance cannot be factorized."""


def _clamp_variance(var: np.ndarray, tol: float = VARIANCE_TOL) -> np.ndarray:
    var = np.asarray(var, dtype=float)
    low = var.min(initial=0.0)
    if low < -tol:
        raise FloatingPointError(f"posterior variance {low:.3e} below -{tol:.0e}; not attributable to roundoff")
    return np.where(var < 0.0, 0.0, var)


def _quantile_z(level: float) -> float:
    if not 0.0 < level < 1.0:
        raise ValueError(f"credible level must be in (0, 1), got {level}")
    return float(norm.ppf(0.5 + level / 2.0))


@dataclass
class PosteriorSummary:
    """Predictive mean, variance and (optionally) full covariance at a set of inputs."""

    inputs: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    covariance: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.inputs = np.asarray(self.inputs, dtype=float).reshape(-1, 2)
        self.mean = np.asarray(self.mean, dtype=float).ravel()
        self.variance = _clamp_variance(self.variance)
        if self.covariance is not None:
            c = np.asarray(self.covariance, dtype=float)
            if not np.allclose(c, c.T, atol=1e-10, rtol=0.0):
                raise ValueError("posterior covariance is not symmetric")
            if np.max(np.abs(np.diag(c) - self.variance)) > 1e-10:
                raise ValueError("posterior covariance diagonal disagrees with variance")
            self.covariance = c

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(self.variance)

    def band(self, level: float) -> tuple[np.ndarray, np.ndarray]:
        """Central credible band (lo, hi) at the given probability level."""
        z = _quantile_z(level)
        return self.mean - z * self.sd, self.mean + z * self.sd

    def to_dict(self, level: float = 0.95) -> dict:
        """JSON-ready summary with bands at the given level."""
        lo, hi = self.band(level)
        return {
            "age": self.inputs[:, 0].tolist(),
            "year": self.inputs[:, 1].tolist(),
            "mean_log": self.mean.tolist(),
            "sd_log": self.sd.tolist(),
            "level": level,
            "lo": lo.tolist(),
            "hi": hi.tolist(),
        }


@dataclass
class FittedGP:
    """A fitted universal-kriging model with its cached factorization.

    Immutable by convention after construction; predictions and sampling may
    run concurrently against one instance.
    """

    x: np.ndarray
    y: np.ndarray
    family: KernelFamily
    hp: KernelHyperparams
    noise: NoiseModel
    noise_diag: np.ndarray
    basis: Optional[MeanBasis]
    beta: np.ndarray
    jitter: float
    # cached solves, all in the rescaled-basis representation
    chol: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    beta_scaled: np.ndarray = field(repr=False)
    H_white: np.ndarray = field(repr=False)
    G_cho: Optional[tuple] = field(repr=False)
    basis_center: np.ndarray = field(repr=False)
    basis_scale: np.ndarray = field(repr=False)
    log_likelihood: float = float("nan")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def scaled_basis_matrix(self, xs: np.ndarray) -> np.ndarray:
        z = (np.asarray(xs, dtype=float).reshape(-1, 2) - self.basis_center) / self.basis_scale
        return means.basis_matrix(self.basis, z)


def _basis_scaler(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    center = x.mean(axis=0)
    scale = x.std(axis=0, ddof=1) if x.shape[0] > 1 else np.ones(2)
    scale = np.where(scale > 0, scale, 1.0)  # constant column: leave unscaled
    return center, scale


def _cholesky_or_raise(a: np.ndarray) -> np.ndarray:
    try:
        return cholesky(a, lower=True)
    except np.linalg.LinAlgError:
        smallest = float(np.linalg.eigvalsh(a).min())
        raise FactorizationError(
            f"covariance-plus-noise matrix is not positive definite (smallest pivot {smallest:.6e})"
        ) from None


def fit_gls_xy(
    x,
    y,
    family: KernelFamily,
    hp: KernelHyperparams,
    basis: Optional[MeanBasis] = MeanBasis.INTERCEPT,
    noise: Optional[NoiseModel] = None,
    noise_diag=None,
) -> FittedGP:
    """Fit from raw arrays; ``basis=None`` gives a zero-mean (simple kriging) model.

    ``noise_diag`` defaults to a constant diagonal from the noise model (or
    from ``hp.sigma_sq`` when no model is given).
    """
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    y = np.asarray(y, dtype=float).ravel()
    n = x.shape[0]
    if y.size != n:
        raise ValueError(f"{n} inputs but {y.size} responses")
    if noise is None:
        noise = ConstantNoise(hp.sigma_sq)
    if noise_diag is None:
        if not isinstance(noise, ConstantNoise):
            raise ValueError("noise_diag must be supplied explicitly for non-constant noise models")
        noise_diag = np.full(n, noise.sigma_sq)
    noise_diag = np.asarray(noise_diag, dtype=float).ravel()
    if noise_diag.size != n:
        raise ValueError("noise diagonal length does not match inputs")

    p = means.basis_dim(basis)
    if n < p:
        raise ValueError(f"need at least {p} observations to fit a {p}-dimensional mean basis, got {n}")

    a = kernels.cov_matrix(family, hp, x)
    jitter = JITTER_SCALE * hp.eta_sq if noise_diag.min() <= 0.0 else 0.0
    idx = np.diag_indices(n)
    a[idx] += noise_diag + jitter
    chol = _cholesky_or_raise(a)

    center, scale = _basis_scaler(x)
    h_scaled = means.basis_matrix(basis, (x - center) / scale)
    y_white = solve_triangular(chol, y, lower=True)

    if p > 0:
        if np.linalg.matrix_rank(h_scaled) < p:
            raise ValueError("mean basis design matrix is rank deficient on these inputs")
        h_white = solve_triangular(chol, h_scaled, lower=True)
        gram = h_white.T @ h_white
        try:
            g_cho = cho_factor(gram, lower=True)
        except np.linalg.LinAlgError:
            raise ValueError("GLS normal equations are singular; basis columns are collinear") from None
        beta_scaled = cho_solve(g_cho, h_white.T @ y_white)
        resid = y - h_scaled @ beta_scaled
        m = means.basis_change_matrix(basis, center, scale)
        beta = m.T @ beta_scaled
    else:
        h_white = np.empty((n, 0))
        g_cho = None
        beta_scaled = np.empty(0)
        beta = np.empty(0)
        resid = y

    alpha = cho_solve((chol, True), resid)
    resid_white = y_white - h_white @ beta_scaled
    log_lik = float(-0.5 * resid_white @ resid_white - np.log(np.diag(chol)).sum() - 0.5 * n * LOG_2PI)

    return FittedGP(
        x=x,
        y=y,
        family=family,
        hp=hp,
        noise=noise,
        noise_diag=noise_diag,
        basis=basis,
        beta=beta,
        jitter=jitter,
        chol=chol,
        alpha=alpha,
        beta_scaled=beta_scaled,
        H_white=h_white,
        G_cho=g_cho,
        basis_center=center,
        basis_scale=scale,
        log_likelihood=log_lik,
    )


def fit_gls(
    table: MortalityTable,
    family: KernelFamily,
    hp: KernelHyperparams,
    noise: Optional[NoiseModel] = None,
    basis: Optional[MeanBasis] = MeanBasis.INTERCEPT,
) -> FittedGP:
    """Fit a universal-kriging model to a mortality table's trainable cells."""
    if noise is None:
        noise = ConstantNoise(hp.sigma_sq)
    noise_diag = kernels.noise_diagonal(noise, table)
    return fit_gls_xy(table.inputs(), table.responses(), family, hp, basis=basis, noise=noise, noise_diag=noise_diag)


def predict(gp: FittedGP, x_star, want_covariance: bool = False) -> PosteriorSummary:
    """Posterior of the latent surface at new inputs.

    Returns the predictive mean, pointwise variance, and, when requested, the
    full posterior covariance matrix including the trend-coefficient
    uncertainty term.
    """
    xs = np.asarray(x_star, dtype=float).reshape(-1, 2)
    c = kernels.cross_cov(gp.family, gp.hp, gp.x, xs)
    v = solve_triangular(gp.chol, c, lower=True)

    mean = c.T @ gp.alpha
    var = np.full(xs.shape[0], gp.hp.eta_sq) - np.einsum("ij,ij->j", v, v)
    if gp.basis is not None:
        hs = gp.scaled_basis_matrix(xs)
        mean = mean + hs @ gp.beta_scaled
        u = hs.T - gp.H_white.T @ v
        gu = cho_solve(gp.G_cho, u)
        var = var + np.einsum("ij,ij->j", u, gu)

    covariance = None
    if want_covariance:
        k_star = kernels.cov_matrix(gp.family, gp.hp, xs)
        covariance = k_star - v.T @ v
        if gp.basis is not None:
            covariance = covariance + u.T @ gu
        covariance = 0.5 * (covariance + covariance.T)
        var = _clamp_variance(np.diag(covariance).copy())
    return PosteriorSummary(inputs=xs, mean=mean, variance=_clamp_variance(var), covariance=covariance)


def predict_observation(gp: FittedGP, x_star) -> PosteriorSummary:
    """Posterior of a future *observed* log rate: latent variance plus noise."""
    sigma_sq = kernels.observation_variance(gp.noise)
    post = predict(gp, x_star, want_covariance=False)
    return PosteriorSummary(inputs=post.inputs, mean=post.mean, variance=post.variance + sigma_sq)


def sample_paths(gp: FittedGP, x_star, n_paths: int, seed: int) -> np.ndarray:
    """Draw joint posterior trajectories of the latent surface.

    Returns an (n_paths, M) array; deterministic for a given seed.
    """
    if n_paths <= 0:
        raise ValueError("n_paths must be positive")
    post = predict(gp, x_star, want_covariance=True)
    m = post.mean.size
    cov = post.covariance + 1e-10 * np.eye(m)
    try:
        factor = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        smallest = float(np.linalg.eigvalsh(cov).min())
        raise FactorizationError(
            f"posterior covariance not positive definite after jitter (smallest pivot {smallest:.6e})"
        ) from None
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((m, n_paths))
    return (post.mean[:, None] + factor @ z).T


@dataclass
class ResidualDiagnostics:
    """Training residuals plus normal Q-Q pairs for external plotting."""

    residuals: np.ndarray
    qq_theoretical: np.ndarray
    qq_empirical: np.ndarray


def residuals(gp: FittedGP) -> ResidualDiagnostics:
    """In-sample residuals y - m_*(x) and their normal quantile pairs."""
    post = predict(gp, gp.x)
    res = gp.y - post.mean
    n = res.size
    empirical = np.sort(res)
    theoretical = norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    return ResidualDiagnostics(residuals=res, qq_theoretical=theoretical, qq_empirical=empirical)


def predict_year_derivative(gp: FittedGP, x_star) -> PosteriorSummary:
    """Posterior of the year-derivative of the latent surface.

    The mean equals the analytic year-derivative of the predictive mean
    (including the trend contribution), and the variance carries the same
    trend-uncertainty correction as the surface posterior.
    """
    if gp.family is not KernelFamily.SQUARED_EXPONENTIAL:
        raise NotImplementedError(
            f"{gp.family.value} kernel does not support year-derivative operations"
        )
    xs = np.asarray(x_star, dtype=float).reshape(-1, 2)
    d = kernels.dcross_cov_dyr(gp.hp, gp.x, xs)
    vd = solve_triangular(gp.chol, d, lower=True)

    mean = d.T @ gp.alpha
    prior_var = gp.hp.eta_sq / gp.hp.theta_yr**2
    var = np.full(xs.shape[0], prior_var) - np.einsum("ij,ij->j", vd, vd)
    if gp.basis is not None:
        # year-derivative of the rescaled basis is constant across inputs
        dh = means.dbasis_dyr(gp.basis) / gp.basis_scale[1]
        mean = mean + dh @ gp.beta_scaled
        u = dh[:, None] - gp.H_white.T @ vd
        var = var + np.einsum("ij,ij->j", u, cho_solve(gp.G_cho, u))
    return PosteriorSummary(inputs=xs, mean=mean, variance=_clamp_variance(var))


def log_marginal_likelihood(
    table: MortalityTable,
    family: KernelFamily,
    hp: KernelHyperparams,
    noise: Optional[NoiseModel] = None,
    basis: Optional[MeanBasis] = MeanBasis.INTERCEPT,
) -> float:
    """Profiled log marginal likelihood of the data under the given hyperparameters.

    The trend coefficients are profiled out by GLS before evaluating the
    Gaussian likelihood.  Returns -inf (with a warning) when the covariance
    matrix cannot be factorized.
    """
    if noise is None:
        noise = ConstantNoise(hp.sigma_sq)
    noise_diag = kernels.noise_diagonal(noise, table)
    return log_marginal_likelihood_xy(
        table.inputs(), table.responses(), family, hp, basis=basis, noise=noise, noise_diag=noise_diag
    )


def log_marginal_likelihood_xy(
    x,
    y,
    family: KernelFamily,
    hp: KernelHyperparams,
    basis: Optional[MeanBasis] = MeanBasis.INTERCEPT,
    noise: Optional[NoiseModel] = None,
    noise_diag=None,
) -> float:
    try:
        gp = fit_gls_xy(x, y, family, hp, basis=basis, noise=noise, noise_diag=noise_diag)
    except FactorizationError as exc:
        warnings.warn(f"likelihood evaluation failed: {exc}", stacklevel=2)
        return float("-inf")
    return gp.log_likelihood
