"""Weighted least squares with the residual-variance and covariance conventions
used throughout the package.

    beta      = (X'WX)^-1 X'Wy
    sigma2    = r'Wr / (N - p),   r = y - X beta
    cov(beta) = sigma2 (X'WX)^-1
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from sybilreg.errors import DimensionMismatch, RankDeficientDesign
from sybilreg.model import Dataset, FitResult
from sybilreg.weights import WeightMatrix

__all__ = ["SIGMA2_CONVENTION", "ols_batch", "ols_fit", "reciprocal_condition", "weighted_fit"]

RCOND_MIN = 1e-12
SIGMA2_CONVENTION = "weighted residuals r'Wr / (N - p)"


def reciprocal_condition(a: np.ndarray) -> np.ndarray:
    """Reciprocal 2-norm condition of symmetric PSD matrices after unit-diagonal scaling.

    Works on a single p x p matrix or a stack of them. Scaling removes
    spurious ill-conditioning from regressors measured in different units.
    """
    diag = np.diagonal(a, axis1=-2, axis2=-1)
    bad = np.any(diag <= 0, axis=-1)
    s = np.sqrt(np.where(diag > 0, diag, 1.0))
    c = a / (s[..., :, None] * s[..., None, :])
    lam = np.linalg.eigvalsh(c)
    rc = lam[..., 0] / lam[..., -1]
    return np.where(bad, 0.0, rc)


def _as_weights(w, n: int) -> WeightMatrix:
    if w is None:
        return WeightMatrix.identity(n)
    if not isinstance(w, WeightMatrix):
        w = WeightMatrix.from_dense(w)
    if w.n != n:
        raise DimensionMismatch(f"weight matrix is {w.n}x{w.n} but dataset has {n} rows")
    return w


def weighted_fit(ds: Dataset, W) -> FitResult:
    W = _as_weights(W, ds.n)
    X, y = ds.X, ds.y
    n, p = X.shape
    xtwx = W.gram(X)
    xtwy = W.gram(X, y)
    rc = float(reciprocal_condition(xtwx))
    if not rc >= RCOND_MIN:
        raise RankDeficientDesign(f"X'WX is numerically singular (reciprocal condition {rc:.3g})")
    try:
        factor = scipy.linalg.cho_factor(xtwx, lower=True)
        beta = scipy.linalg.cho_solve(factor, xtwy)
        inv = scipy.linalg.cho_solve(factor, np.eye(p))
    except np.linalg.LinAlgError:
        # W symmetric but indefinite; fall back to a general solve
        beta = np.linalg.solve(xtwx, xtwy)
        inv = np.linalg.inv(xtwx)
    inv = 0.5 * (inv + inv.T)
    resid = y - X @ beta
    dof = n - p
    sigma2 = max(W.quad(resid), 0.0) / dof if dof > 0 else float("nan")
    meta = {
        "n_obs": n,
        "dof": dof,
        "weights": "block" if W.is_block else "dense",
        "sigma2_convention": SIGMA2_CONVENTION,
    }
    return FitResult(beta, sigma2, sigma2 * inv, meta=meta)


def ols_fit(ds: Dataset) -> FitResult:
    return weighted_fit(ds, WeightMatrix.identity(ds.n))


def ols_batch(X: np.ndarray, y: np.ndarray, masks: np.ndarray):
    """OLS on many row subsets at once.

    ``masks`` is (B, N) boolean. Returns ``(betas, sigma2, ok)`` where ``ok``
    flags subsets with more than p rows and a well-conditioned design; rows of
    ``betas``/``sigma2`` for subsets that are not ok hold NaN.
    """
    n, p = X.shape
    m = masks.astype(np.float64)
    grams = np.einsum("bn,ni,nj->bij", m, X, X, optimize=True)
    rhs = m @ (X * y[:, None])
    counts = m.sum(axis=1)
    ok = (counts > p) & (reciprocal_condition(grams) >= RCOND_MIN)
    betas = np.full((masks.shape[0], p), np.nan)
    sigma2 = np.full(masks.shape[0], np.nan)
    if ok.any():
        betas[ok] = np.linalg.solve(grams[ok], rhs[ok][..., None])[..., 0]
        resid = (y[None, :] - betas[ok] @ X.T) * m[ok]
        sigma2[ok] = (resid**2).sum(axis=1) / (counts[ok] - p)
    return betas, sigma2, ok
