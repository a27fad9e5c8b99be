"""Monte-Carlo comparison of the six estimators.

Data-generating process per replication::

    y = X beta_true + eps,   X = [1, x1, ..., x_{p-1}],  x ~ N(0, 1) i.i.d.

Each candidate network is Sybil with probability pi; a Sybil network shares a
single N(0, noise_sd^2) error across all its members, otherwise members draw
independent errors like every other row. Estimators see only the
probabilities, never the realized statuses.

Randomness is split into independent substreams keyed on the run seed:
``(0,)`` for the network layout, ``(1, rep)`` for replication data and
``(2, rep, j)`` for estimator j's resampling. Replications can therefore run
in any order, or in parallel, with identical results.
"""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from sybilreg.errors import SybilRegError, ValidationError
from sybilreg.estimators import EstimatorKind, default_estimators
from sybilreg.model import CandidateNetwork, Dataset, DisjointNetworkSpec, Topology

__all__ = ["SimConfig", "SimReport", "generate_replication", "resolve_networks", "run_simulation"]

log = logging.getLogger(__name__)

_LAYOUT, _DATA, _ESTIMATOR = 0, 1, 2
MAX_LAYOUT_DRAWS = 10_000


@dataclass(frozen=True)
class SimConfig:
    n_obs: int = 400
    networks: tuple[tuple[int, float], ...] | None = None
    n_reps: int = 1000
    beta_true: tuple[float, ...] = (2.0, 3.0, -0.5)
    noise_sd: float = 1.0
    seed: int = 42
    # layout drawing, used only when ``networks`` is None
    n_networks: int = 7
    random_count: bool = False
    size_range: tuple[int, int] = (10, 90)
    pi_range: tuple[float, float] = (0.1, 0.9)
    # estimator tuning
    cutoff: float = 0.5
    resamples: int = 100

    def __post_init__(self):
        if self.networks is not None:
            object.__setattr__(self, "networks", tuple((int(s), float(p)) for s, p in self.networks))
        object.__setattr__(self, "beta_true", tuple(float(b) for b in self.beta_true))
        object.__setattr__(self, "size_range", tuple(int(s) for s in self.size_range))
        object.__setattr__(self, "pi_range", tuple(float(p) for p in self.pi_range))
        if self.n_reps < 1:
            raise ValidationError(f"n_reps must be >= 1, got {self.n_reps}")
        if len(self.beta_true) < 1:
            raise ValidationError("beta_true needs at least an intercept")
        if self.n_obs < len(self.beta_true):
            raise ValidationError(f"n_obs={self.n_obs} is smaller than the number of coefficients")
        if not self.noise_sd >= 0:
            raise ValidationError(f"noise_sd must be nonnegative, got {self.noise_sd}")
        lo, hi = self.size_range
        if not 2 <= lo <= hi:
            raise ValidationError(f"size_range {self.size_range} must satisfy 2 <= lo <= hi")
        plo, phi = self.pi_range
        if not 0.0 <= plo <= phi <= 1.0:
            raise ValidationError(f"pi_range {self.pi_range} must lie in [0, 1]")
        if self.n_networks < 0:
            raise ValidationError("n_networks must be nonnegative")
        if self.networks is not None:
            for size, pi in self.networks:
                if size < 2 or not 0.0 <= pi <= 1.0:
                    raise ValidationError(f"bad network (size={size}, pi={pi})")
            if sum(s for s, _ in self.networks) > self.n_obs:
                raise ValidationError("networks cover more rows than n_obs")

    @property
    def n_params(self) -> int:
        return len(self.beta_true)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["networks"] = None if self.networks is None else [list(n) for n in self.networks]
        d["beta_true"] = list(self.beta_true)
        d["size_range"] = list(self.size_range)
        d["pi_range"] = list(self.pi_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if d.get("networks") is not None:
            d["networks"] = tuple(tuple(n) for n in d["networks"])
        for key in ("beta_true", "size_range", "pi_range"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def resolve_networks(cfg: SimConfig) -> tuple[tuple[int, float], ...]:
    """The (size, pi) layout used for every replication of a run.

    Drawn layouts are redrawn until at least ``n_params + 1`` rows stay outside
    all networks, so the exclusion estimator remains identified.
    """
    if cfg.networks is not None:
        return cfg.networks
    rng = _stream(cfg.seed, _LAYOUT)
    lo, hi = cfg.size_range
    budget = cfg.n_obs - cfg.n_params - 1
    for _ in range(MAX_LAYOUT_DRAWS):
        count = int(rng.integers(1, cfg.n_networks + 1)) if cfg.random_count and cfg.n_networks else cfg.n_networks
        sizes = rng.integers(lo, hi + 1, size=count)
        pis = rng.uniform(*cfg.pi_range, size=count)
        if sizes.sum() <= budget:
            return tuple((int(s), float(p)) for s, p in zip(sizes, pis))
    raise ValidationError(f"could not fit {cfg.n_networks} networks of size {cfg.size_range} into {cfg.n_obs} rows")


def _layout_spec(n_obs: int, networks) -> DisjointNetworkSpec:
    nets, start = [], 0
    for size, pi in networks:
        nets.append(CandidateNetwork(tuple(range(start, start + size)), pi))
        start += size
    return DisjointNetworkSpec(tuple(nets), n_obs)


def generate_replication(cfg: SimConfig, rep_index: int, networks=None):
    """Return ``(dataset, spec, realized_topology)`` for one replication."""
    networks = resolve_networks(cfg) if networks is None else networks
    spec = _layout_spec(cfg.n_obs, networks)
    rng = _stream(cfg.seed, _DATA, rep_index)
    n, p = cfg.n_obs, cfg.n_params
    X = np.column_stack([np.ones(n), rng.standard_normal((n, p - 1))])
    is_sybil = rng.random(len(spec.networks)) < spec.pis
    eps = cfg.noise_sd * rng.standard_normal(n)
    shared = cfg.noise_sd * rng.standard_normal(len(spec.networks))
    groups = []
    for k, net in enumerate(spec.networks):
        if is_sybil[k]:
            eps[list(net.members)] = shared[k]
            groups.append(net.members)
    y = X @ np.asarray(cfg.beta_true) + eps
    columns = ("const",) + tuple(f"x{j}" for j in range(1, p))
    return Dataset(y, X, columns=columns), spec, Topology(n, tuple(groups))


def _run_block(cfg: SimConfig, networks, estimators, reps):
    p = cfg.n_params
    betas = np.empty((len(reps), len(estimators), p))
    rvars = np.empty_like(betas)
    for r, rep in enumerate(reps):
        ds, spec, _ = generate_replication(cfg, rep, networks)
        for j, est in enumerate(estimators):
            seed = np.random.SeedSequence(cfg.seed, spawn_key=(_ESTIMATOR, rep, j))
            try:
                fit = est.fit(ds, spec, seed=seed)
            except SybilRegError as exc:
                raise type(exc)(f"replication {rep}, estimator {est.name}: {exc}") from exc
            betas[r, j] = fit.beta
            rvars[r, j] = np.diag(fit.cov_beta)
    return betas, rvars


@dataclass(eq=False)
class SimReport:
    estimators: tuple[str, ...]
    mse: dict
    mc_se: dict
    mean_beta: dict
    beta_mc_se: dict
    empirical_var: dict
    mean_reported_var: dict
    n_reps: int
    seed: int
    config: dict
    networks: tuple
    # per-replication arrays, kept in memory only
    sq_errors: np.ndarray = field(repr=False, default=None)
    betas: np.ndarray = field(repr=False, default=None)
    reported_var: np.ndarray = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {
            "n_reps": self.n_reps,
            "seed": self.seed,
            "config": self.config,
            "networks": [{"size": s, "pi": pi} for s, pi in self.networks],
            "mse_definition": "mean over replications of the squared error summed over all coefficients",
            "estimators": [
                {
                    "estimator": name,
                    "mse": self.mse[name],
                    "mc_se": self.mc_se[name],
                    "mean_beta": self.mean_beta[name],
                    "beta_mc_se": self.beta_mc_se[name],
                    "empirical_var": self.empirical_var[name],
                    "mean_reported_var": self.mean_reported_var[name],
                }
                for name in self.estimators
            ],
        }

    def table(self) -> list[tuple[str, float, float | None]]:
        return [(name, self.mse[name], self.mc_se[name]) for name in self.estimators]


def run_simulation(cfg: SimConfig, estimators=None, n_jobs: int = 1) -> SimReport:
    estimators = tuple(estimators) if estimators is not None else default_estimators(cfg.cutoff, cfg.resamples)
    for est in estimators:
        if not isinstance(est, EstimatorKind):
            raise ValidationError(f"expected EstimatorKind, got {type(est).__name__}")
    networks = resolve_networks(cfg)
    reps = list(range(cfg.n_reps))
    log.info("simulating %d replications, %d networks, %d estimators", cfg.n_reps, len(networks), len(estimators))

    if n_jobs > 1 and cfg.n_reps > 1:
        chunks = [reps[i::n_jobs] for i in range(n_jobs)]
        chunks = [c for c in chunks if c]
        betas = np.empty((cfg.n_reps, len(estimators), cfg.n_params))
        rvars = np.empty_like(betas)
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            futures = [pool.submit(_run_block, cfg, networks, estimators, c) for c in chunks]
            for chunk, fut in zip(chunks, futures):
                b, v = fut.result()
                betas[chunk] = b
                rvars[chunk] = v
    else:
        betas, rvars = _run_block(cfg, networks, estimators, reps)

    truth = np.asarray(cfg.beta_true)
    sq = ((betas - truth) ** 2).sum(axis=2)  # (R, E)
    R = cfg.n_reps
    names = tuple(est.name for est in estimators)
    mse, mc_se, mean_beta, beta_se, emp_var, rep_var = {}, {}, {}, {}, {}, {}
    for j, name in enumerate(names):
        mse[name] = float(sq[:, j].mean())
        mean_beta[name] = betas[:, j].mean(axis=0).tolist()
        rep_var[name] = rvars[:, j].mean(axis=0).tolist()
        if R > 1:
            mc_se[name] = float(sq[:, j].std(ddof=1) / np.sqrt(R))
            v = betas[:, j].var(axis=0, ddof=1)
            emp_var[name] = v.tolist()
            beta_se[name] = np.sqrt(v / R).tolist()
        else:
            mc_se[name] = None
            emp_var[name] = None
            beta_se[name] = None
    return SimReport(
        estimators=names,
        mse=mse,
        mc_se=mc_se,
        mean_beta=mean_beta,
        beta_mc_se=beta_se,
        empirical_var=emp_var,
        mean_reported_var=rep_var,
        n_reps=R,
        seed=cfg.seed,
        config=cfg.to_dict(),
        networks=networks,
        sq_errors=sq,
        betas=betas,
        reported_var=rvars,
    )
