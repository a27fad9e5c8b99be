"""Domain types shared across the package.

Row identity is positional everywhere: a network lists row indices into the
dataset, and ``row_ids`` only matter when joining external files.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from sybilreg.errors import (
    DimensionMismatch,
    IndexOutOfRange,
    InvalidDataset,
    InvalidProbability,
    OverlappingNetworks,
    ProbabilitiesDoNotSumToOne,
    SingletonNetwork,
    ValidationError,
)

__all__ = [
    "CandidateNetwork",
    "Dataset",
    "DisjointNetworkSpec",
    "FitResult",
    "Topology",
    "TopologyDistribution",
    "spec_to_distribution",
    "validate_distribution",
    "validate_spec",
]

PROB_SUM_TOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _check_probability(pi: float, what: str = "pi") -> float:
    pi = float(pi)
    if not (0.0 <= pi <= 1.0):
        raise InvalidProbability(f"{what}={pi!r} is not in [0, 1]")
    return pi


@dataclass(frozen=True, eq=False)
class Dataset:
    """Response vector ``y`` and design matrix ``X`` (N x p)."""

    y: np.ndarray
    X: np.ndarray
    row_ids: tuple[str, ...] | None = None
    columns: tuple[str, ...] | None = None

    def __post_init__(self):
        y = np.array(self.y, dtype=np.float64).reshape(-1)
        X = np.array(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise InvalidDataset(f"X must be 2-D, got shape {X.shape}")
        n, p = X.shape
        if y.shape[0] != n:
            raise DimensionMismatch(f"y has {y.shape[0]} rows but X has {n}")
        if p < 1 or n < p:
            raise InvalidDataset(f"need N >= p >= 1, got N={n}, p={p}")
        if not (np.isfinite(y).all() and np.isfinite(X).all()):
            raise InvalidDataset("dataset contains non-finite values")
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "X", _frozen(X))
        if self.row_ids is not None:
            ids = tuple(str(r) for r in self.row_ids)
            if len(ids) != n:
                raise DimensionMismatch(f"{len(ids)} row ids for {n} rows")
            if len(set(ids)) != n:
                raise InvalidDataset("row ids are not unique")
            object.__setattr__(self, "row_ids", ids)
        if self.columns is not None:
            cols = tuple(str(c) for c in self.columns)
            if len(cols) != p:
                raise DimensionMismatch(f"{len(cols)} column names for {p} columns")
            object.__setattr__(self, "columns", cols)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> "Dataset":
        """Rows selected by boolean mask or index array, in their original order."""
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        ids = None if self.row_ids is None else tuple(self.row_ids[i] for i in rows)
        return Dataset(self.y[rows], self.X[rows], ids, self.columns)

    def id_map(self) -> dict[str, int]:
        if self.row_ids is None:
            raise ValidationError("dataset has no row ids")
        return {rid: i for i, rid in enumerate(self.row_ids)}


@dataclass(frozen=True)
class CandidateNetwork:
    """Rows that are one actor with probability ``pi``, otherwise independent."""

    members: tuple[int, ...]
    pi: float

    def __post_init__(self):
        members = tuple(sorted(int(m) for m in self.members))
        if len(set(members)) != len(members):
            raise ValidationError(f"duplicate member indices in {members[:10]}")
        if len(members) < 2:
            raise SingletonNetwork(f"a network needs at least 2 members, got {len(members)}")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "pi", _check_probability(self.pi))

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class DisjointNetworkSpec:
    networks: tuple[CandidateNetwork, ...]
    n_total: int

    def __post_init__(self):
        object.__setattr__(self, "networks", tuple(self.networks))
        object.__setattr__(self, "n_total", int(self.n_total))

    @classmethod
    def from_groups(cls, n_total: int, groups: Iterable[tuple[Sequence[int], float]]):
        return cls(tuple(CandidateNetwork(tuple(m), pi) for m, pi in groups), n_total)

    @property
    def pis(self) -> np.ndarray:
        return np.array([net.pi for net in self.networks], dtype=np.float64)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([net.size for net in self.networks], dtype=np.int64)

    def labels(self) -> np.ndarray:
        """Network index per row, -1 for rows outside every network."""
        lab = np.full(self.n_total, -1, dtype=np.int64)
        for k, net in enumerate(self.networks):
            lab[list(net.members)] = k
        return lab

    def network_rows(self) -> np.ndarray:
        """Boolean mask of rows belonging to some network."""
        return self.labels() >= 0


def validate_spec(spec: DisjointNetworkSpec) -> DisjointNetworkSpec:
    """Check every invariant of ``spec`` and return it unchanged."""
    if spec.n_total < 1:
        raise ValidationError(f"n_total must be positive, got {spec.n_total}")
    if not spec.networks:
        return spec
    for net in spec.networks:
        if not isinstance(net, CandidateNetwork):
            raise ValidationError(f"expected CandidateNetwork, got {type(net).__name__}")
        _check_probability(net.pi)
        if net.size < 2:
            raise SingletonNetwork("a network needs at least 2 members")
        if net.members[0] < 0 or net.members[-1] >= spec.n_total:
            bad = net.members[0] if net.members[0] < 0 else net.members[-1]
            raise IndexOutOfRange(f"member index {bad} outside [0, {spec.n_total})")
    allm = np.concatenate([np.asarray(net.members, dtype=np.int64) for net in spec.networks])
    counts = np.bincount(allm, minlength=spec.n_total)
    if counts.max() > 1:
        raise OverlappingNetworks(f"row {int(np.argmax(counts))} belongs to more than one network")
    return spec


@dataclass(frozen=True)
class Topology:
    """A partition of ``n`` rows; only blocks with two or more rows are stored."""

    n: int
    groups: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        groups = tuple(sorted(tuple(sorted(int(i) for i in g)) for g in self.groups if len(g) > 1))
        seen: set[int] = set()
        for g in groups:
            for i in g:
                if not 0 <= i < self.n:
                    raise IndexOutOfRange(f"index {i} outside [0, {self.n})")
                if i in seen:
                    raise OverlappingNetworks(f"index {i} appears in two blocks")
                seen.add(i)
        object.__setattr__(self, "groups", groups)

    @property
    def blocks(self) -> list[tuple[int, ...]]:
        """Full partition including singleton blocks, ordered by smallest member."""
        grouped = {i for g in self.groups for i in g}
        out = list(self.groups) + [(i,) for i in range(self.n) if i not in grouped]
        return sorted(out, key=lambda b: b[0])

    def matrix(self) -> np.ndarray:
        g = np.eye(self.n)
        for block in self.groups:
            idx = np.asarray(block)
            g[np.ix_(idx, idx)] = 1.0
        return g


@dataclass(frozen=True)
class TopologyDistribution:
    outcomes: tuple[tuple[float, Topology], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "outcomes", tuple((float(p), t) for p, t in self.outcomes)
        )

    @property
    def n(self) -> int:
        return self.outcomes[0][1].n


def validate_distribution(dist: TopologyDistribution) -> TopologyDistribution:
    if not dist.outcomes:
        raise ProbabilitiesDoNotSumToOne("distribution has no outcomes")
    n = dist.outcomes[0][1].n
    total = 0.0
    for prob, topo in dist.outcomes:
        if not (0.0 < prob <= 1.0):
            raise InvalidProbability(f"outcome probability {prob!r} not in (0, 1]")
        if topo.n != n:
            raise DimensionMismatch(f"topologies over {topo.n} and {n} rows")
        total += prob
    if abs(total - 1.0) > PROB_SUM_TOL:
        raise ProbabilitiesDoNotSumToOne(f"outcome probabilities sum to {total!r}")
    return dist


def spec_to_distribution(spec: DisjointNetworkSpec, max_networks: int = 20) -> TopologyDistribution:
    """Enumerate the 2^K all-or-nothing outcomes of a disjoint spec.

    Outcomes with probability zero (from pi of exactly 0 or 1) are dropped.
    """
    validate_spec(spec)
    k = len(spec.networks)
    if k > max_networks:
        raise ValidationError(f"{k} networks would enumerate 2^{k} topologies")
    outcomes = []
    for status in itertools.product((False, True), repeat=k):
        prob = 1.0
        groups = []
        for is_sybil, net in zip(status, spec.networks):
            prob *= net.pi if is_sybil else 1.0 - net.pi
            if is_sybil:
                groups.append(net.members)
        if prob > 0.0:
            outcomes.append((prob, Topology(spec.n_total, tuple(groups))))
    return TopologyDistribution(tuple(outcomes))


@dataclass(frozen=True, eq=False)
class FitResult:
    beta: np.ndarray
    sigma2_hat: float
    cov_beta: np.ndarray
    se: np.ndarray = field(default=None)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        beta = np.array(self.beta, dtype=np.float64).reshape(-1)
        cov = np.array(self.cov_beta, dtype=np.float64).reshape(beta.size, beta.size)
        se = np.sqrt(np.diag(cov)) if self.se is None else np.array(self.se, dtype=np.float64)
        object.__setattr__(self, "beta", _frozen(beta))
        object.__setattr__(self, "cov_beta", _frozen(cov))
        object.__setattr__(self, "se", _frozen(se))
        object.__setattr__(self, "sigma2_hat", float(self.sigma2_hat))

    def to_dict(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "se": self.se.tolist(),
            "sigma2_hat": self.sigma2_hat,
            "cov_beta": self.cov_beta.tolist(),
            "meta": dict(self.meta),
        }
