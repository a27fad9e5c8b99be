"""Six ways to estimate beta when some rows may belong to Sybil networks.

All estimators share the signature ``(ds, spec, ...) -> FitResult``:

exclusion            OLS without any row of a network with pi > 0
inclusion            OLS on everything
threshold            OLS without rows of networks whose pi exceeds a cutoff
network-sampled      average of OLS fits, each keeping whole networks w.p. 1 - pi
observation-sampled  same, but keeping member rows independently w.p. 1 - pi
weighted             weighted least squares with the optimal block weights
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sybilreg.errors import DimensionMismatch, InsufficientData, ValidationError
from sybilreg.model import Dataset, DisjointNetworkSpec, FitResult, validate_spec
from sybilreg.regression import ols_batch, ols_fit, weighted_fit
from sybilreg.weights import optimal_weights_closed_form, roll_up_guaranteed

__all__ = [
    "ESTIMATOR_NAMES",
    "EstimatorKind",
    "default_estimators",
    "fit_exclusion",
    "fit_inclusion",
    "fit_network_sampled",
    "fit_observation_sampled",
    "fit_threshold",
    "fit_weighted",
]

ESTIMATOR_NAMES = (
    "exclusion",
    "inclusion",
    "threshold",
    "network-sampled",
    "observation-sampled",
    "weighted",
)
DEFAULT_CUTOFF = 0.5
DEFAULT_RESAMPLES = 100
MAX_ATTEMPT_FACTOR = 10


def _checked(ds: Dataset, spec: DisjointNetworkSpec | None) -> DisjointNetworkSpec:
    if spec is None:
        return DisjointNetworkSpec((), ds.n)
    validate_spec(spec)
    if spec.n_total != ds.n:
        raise DimensionMismatch(f"spec covers {spec.n_total} rows, dataset has {ds.n}")
    return spec


def _ols_rows(ds: Dataset, keep: np.ndarray, estimator: str) -> FitResult:
    n_keep = int(keep.sum())
    if n_keep < ds.p:
        raise InsufficientData(f"{estimator}: {n_keep} rows remain for {ds.p} parameters")
    fit = ols_fit(ds if n_keep == ds.n else ds.subset(keep))
    return FitResult(fit.beta, fit.sigma2_hat, fit.cov_beta, meta={**fit.meta, "estimator": estimator})


def fit_exclusion(ds: Dataset, spec: DisjointNetworkSpec | None = None) -> FitResult:
    """OLS on the rows outside every suspected network.

    A network listed with pi = 0 cannot be Sybil, so it is not suspected and
    its rows are kept.
    """
    spec = _checked(ds, spec)
    keep = np.ones(ds.n, dtype=bool)
    for net in spec.networks:
        if net.pi > 0:
            keep[list(net.members)] = False
    return _ols_rows(ds, keep, "exclusion")


def fit_inclusion(ds: Dataset, spec: DisjointNetworkSpec | None = None) -> FitResult:
    spec = _checked(ds, spec)
    return _ols_rows(ds, np.ones(ds.n, dtype=bool), "inclusion")


def fit_threshold(ds: Dataset, spec: DisjointNetworkSpec | None = None, cutoff: float = DEFAULT_CUTOFF) -> FitResult:
    spec = _checked(ds, spec)
    keep = np.ones(ds.n, dtype=bool)
    for net in spec.networks:
        if net.pi > cutoff:
            keep[list(net.members)] = False
    fit = _ols_rows(ds, keep, "threshold")
    fit.meta["cutoff"] = float(cutoff)
    return fit


def _resampled(ds, spec, resamples, seed, per_row: bool, estimator: str) -> FitResult:
    if resamples < 1:
        raise ValidationError(f"resamples must be >= 1, got {resamples}")
    pis = spec.pis
    labels = spec.labels()
    net_rows = labels >= 0
    meta = {
        "estimator": estimator,
        "resamples": int(resamples),
        "aggregation": "mean of per-resample OLS coefficients",
        "cov_beta": "heuristic: empirical covariance of resampled coefficients / B",
    }

    if not np.any((pis > 0.0) & (pis < 1.0)):
        # every draw keeps the same rows; skip the sampling loop
        keep = ~net_rows
        keep[net_rows] = pis[labels[net_rows]] == 0.0
        fit = _ols_rows(ds, keep, estimator)
        cov = np.zeros((ds.p, ds.p)) if resamples > 1 else np.full((ds.p, ds.p), np.nan)
        return FitResult(fit.beta, fit.sigma2_hat, cov, meta={**fit.meta, **meta})

    rng = np.random.default_rng(seed)
    keep_prob = 1.0 - pis
    lab = labels[net_rows]
    betas, sig2 = [], []
    have = attempts = 0
    limit = MAX_ATTEMPT_FACTOR * resamples
    while have < resamples and attempts < limit:
        need = min(resamples - have, limit - attempts)
        masks = np.ones((need, ds.n), dtype=bool)
        if per_row:
            masks[:, net_rows] = rng.random((need, lab.size)) < keep_prob[lab]
        else:
            keep_net = rng.random((need, pis.size)) < keep_prob
            masks[:, net_rows] = keep_net[:, lab]
        attempts += need
        b, s2, ok = ols_batch(ds.X, ds.y, masks)
        betas.append(b[ok])
        sig2.append(s2[ok])
        have += int(ok.sum())
    if have < resamples:
        raise InsufficientData(f"{estimator}: only {have} of {resamples} resamples usable after {attempts} draws")

    betas = np.concatenate(betas)[:resamples]
    sig2 = np.concatenate(sig2)[:resamples]
    if resamples > 1:
        cov = np.atleast_2d(np.cov(betas, rowvar=False, ddof=1)) / resamples
    else:
        cov = np.full((ds.p, ds.p), np.nan)
    meta.update(n_obs=ds.n, draws=attempts)
    return FitResult(betas.mean(axis=0), float(sig2.mean()), cov, meta=meta)


def fit_network_sampled(
    ds: Dataset, spec: DisjointNetworkSpec | None = None, resamples: int = DEFAULT_RESAMPLES, seed=None
) -> FitResult:
    spec = _checked(ds, spec)
    return _resampled(ds, spec, resamples, seed, per_row=False, estimator="network-sampled")


def fit_observation_sampled(
    ds: Dataset, spec: DisjointNetworkSpec | None = None, resamples: int = DEFAULT_RESAMPLES, seed=None
) -> FitResult:
    spec = _checked(ds, spec)
    return _resampled(ds, spec, resamples, seed, per_row=True, estimator="observation-sampled")


def fit_weighted(ds: Dataset, spec: DisjointNetworkSpec | None = None) -> FitResult:
    """Weighted least squares with the closed-form optimal weights.

    Networks with pi = 1 are rolled up into their mean row beforehand.
    """
    spec = _checked(ds, spec)
    rolled = sum(1 for net in spec.networks if net.pi >= 1.0)
    ds, spec = roll_up_guaranteed(ds, spec)
    fit = weighted_fit(ds, optimal_weights_closed_form(spec))
    fit.meta.update(estimator="weighted", rolled_up_networks=rolled)
    return fit


@dataclass(frozen=True)
class EstimatorKind:
    """One of ``ESTIMATOR_NAMES`` plus its tuning (cutoff, resample count)."""

    name: str
    cutoff: float = DEFAULT_CUTOFF
    resamples: int = DEFAULT_RESAMPLES

    def __post_init__(self):
        if self.name not in ESTIMATOR_NAMES:
            raise ValidationError(f"unknown estimator {self.name!r}; choose from {', '.join(ESTIMATOR_NAMES)}")
        if not 0.0 <= self.cutoff <= 1.0:
            raise ValidationError(f"cutoff {self.cutoff!r} not in [0, 1]")
        if self.resamples < 1:
            raise ValidationError(f"resamples must be >= 1, got {self.resamples}")

    @property
    def is_sampled(self) -> bool:
        return self.name.endswith("-sampled")

    def fit(self, ds: Dataset, spec: DisjointNetworkSpec | None = None, seed=None) -> FitResult:
        if self.name == "exclusion":
            return fit_exclusion(ds, spec)
        if self.name == "inclusion":
            return fit_inclusion(ds, spec)
        if self.name == "threshold":
            return fit_threshold(ds, spec, self.cutoff)
        if self.name == "network-sampled":
            return fit_network_sampled(ds, spec, self.resamples, seed)
        if self.name == "observation-sampled":
            return fit_observation_sampled(ds, spec, self.resamples, seed)
        return fit_weighted(ds, spec)


def default_estimators(cutoff: float = DEFAULT_CUTOFF, resamples: int = DEFAULT_RESAMPLES) -> tuple[EstimatorKind, ...]:
    return tuple(EstimatorKind(name, cutoff, resamples) for name in ESTIMATOR_NAMES)
