"""Parametric prior-mean families for universal kriging.

Three variants: intercept-only, linear in age and year, and linear plus a
quadratic age term.  Coefficients are reported on the raw (age, year) scale;
``basis_change_matrix`` provides the exact map between coefficients fitted on
affinely rescaled inputs and raw-scale coefficients, which the solvers use to
keep the normal equations well conditioned.
"""

from __future__ import annotations

import enum

import numpy as np


class MeanBasis(enum.Enum):
    INTERCEPT = "intercept"
    LINEAR = "linear"
    QUADRATIC_AGE = "quadratic"


def basis_dim(basis: MeanBasis | None) -> int:
    if basis is None:
        return 0
    return {MeanBasis.INTERCEPT: 1, MeanBasis.LINEAR: 3, MeanBasis.QUADRATIC_AGE: 4}[basis]


def eval_basis(basis: MeanBasis, x) -> np.ndarray:
    """Row vector h(x) for a single (age, year) input."""
    ag, yr = (float(v) for v in np.asarray(x, dtype=float).reshape(2))
    if basis is MeanBasis.INTERCEPT:
        return np.array([1.0])
    if basis is MeanBasis.LINEAR:
        return np.array([1.0, ag, yr])
    if basis is MeanBasis.QUADRATIC_AGE:
        return np.array([1.0, ag, yr, ag * ag])
    raise ValueError(f"unknown mean basis {basis!r}")


def basis_matrix(basis: MeanBasis | None, X) -> np.ndarray:
    """(N, p) design matrix; p = 0 when no basis is given (zero prior mean)."""
    X = np.asarray(X, dtype=float).reshape(-1, 2)
    n = X.shape[0]
    if basis is None:
        return np.empty((n, 0))
    ag, yr = X[:, 0], X[:, 1]
    ones = np.ones(n)
    if basis is MeanBasis.INTERCEPT:
        return ones[:, None]
    if basis is MeanBasis.LINEAR:
        return np.column_stack([ones, ag, yr])
    if basis is MeanBasis.QUADRATIC_AGE:
        return np.column_stack([ones, ag, yr, ag * ag])
    raise ValueError(f"unknown mean basis {basis!r}")


def eval_mean(basis: MeanBasis, coeffs, x) -> float:
    """Prior mean h(x) . beta at one input."""
    beta = np.asarray(coeffs, dtype=float).ravel()
    h = eval_basis(basis, x)
    if beta.size != h.size:
        raise ValueError(f"coefficient length {beta.size} does not match basis dimension {h.size}")
    return float(h @ beta)


def dbasis_dyr(basis: MeanBasis | None) -> np.ndarray:
    """Year-derivative of the basis vector (constant for these variants)."""
    if basis is None:
        return np.empty(0)
    if basis is MeanBasis.INTERCEPT:
        return np.array([0.0])
    if basis is MeanBasis.LINEAR:
        return np.array([0.0, 0.0, 1.0])
    if basis is MeanBasis.QUADRATIC_AGE:
        return np.array([0.0, 0.0, 1.0, 0.0])
    raise ValueError(f"unknown mean basis {basis!r}")


def basis_change_matrix(basis: MeanBasis | None, center, scale) -> np.ndarray:
    """Matrix M with h_scaled(x) = M h_raw(x), for inputs mapped by (x - center) / scale.

    If beta_s solves the fit in scaled coordinates, the raw-scale coefficients
    are exactly ``M.T @ beta_s``.
    """
    if basis is None:
        return np.empty((0, 0))
    ca, cy = (float(v) for v in np.asarray(center, dtype=float).reshape(2))
    sa, sy = (float(v) for v in np.asarray(scale, dtype=float).reshape(2))
    if basis is MeanBasis.INTERCEPT:
        return np.array([[1.0]])
    if basis is MeanBasis.LINEAR:
        return np.array(
            [
                [1.0, 0.0, 0.0],
                [-ca / sa, 1.0 / sa, 0.0],
                [-cy / sy, 0.0, 1.0 / sy],
            ]
        )
    if basis is MeanBasis.QUADRATIC_AGE:
        return np.array(
            [
                [1.0, 0.0, 0.0, 0.0],
                [-ca / sa, 1.0 / sa, 0.0, 0.0],
                [-cy / sy, 0.0, 1.0 / sy, 0.0],
                [ca * ca / sa**2, -2.0 * ca / sa**2, 0.0, 1.0 / sa**2],
            ]
        )
    raise ValueError(f"unknown mean basis {basis!r}")
