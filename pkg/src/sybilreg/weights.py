"""Expected network topology and the optimal weight matrix.

The weight matrix that minimizes the variance of the weighted estimator is the
inverse of the expected topology E[G]. Two routes build it:

* ``optimal_weights_general`` inverts a dense E[G] (any topology distribution);
* ``optimal_weights_closed_form`` writes the inverse down directly when the
  candidate networks are disjoint, storing one (diagonal, off-diagonal) pair
  per network.

For a block of n rows linked with probability pi, E[G] restricted to the block
is (1 - pi) I + pi J, whose inverse is (d - o) I + o J with

    d = (1 + (n - 2) pi) / ((1 - pi)(1 + (n - 1) pi))
    o = -pi / ((1 - pi)(1 + (n - 1) pi))
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from sybilreg.errors import (
    DimensionMismatch,
    GuaranteedNetwork,
    ResourceRefusal,
    SingularTopology,
    ValidationError,
)
from sybilreg.model import (
    CandidateNetwork,
    Dataset,
    DisjointNetworkSpec,
    TopologyDistribution,
    validate_distribution,
    validate_spec,
)

__all__ = [
    "ExpectedTopology",
    "WeightMatrix",
    "block_entries",
    "expected_topology_disjoint",
    "expected_topology_general",
    "optimal_weights_closed_form",
    "optimal_weights_general",
    "roll_up_guaranteed",
    "simple_ratio",
]

# smallest eigenvalue of E[G] below SINGULAR_TOL * N counts as singular
SINGULAR_TOL = 1e-10
DENSE_LIMIT = 5000


def _group_sums(labels: np.ndarray, k: int, a: np.ndarray) -> np.ndarray:
    """Column sums of ``a`` within each labelled group (labels >= 0)."""
    m = labels >= 0
    lab = labels[m]
    am = a[m]
    out = np.empty((k, a.shape[1]))
    for j in range(a.shape[1]):
        out[:, j] = np.bincount(lab, weights=am[:, j], minlength=k)
    return out


@dataclass(frozen=True, eq=False)
class ExpectedTopology:
    """E[G]: entry (i, j) is the probability that rows i and j share an actor.

    Held either densely or as per-row network labels plus one probability per
    network (the disjoint case).
    """

    n: int
    dense: np.ndarray | None = None
    labels: np.ndarray | None = None
    pis: np.ndarray | None = None

    @property
    def is_block(self) -> bool:
        return self.dense is None

    @property
    def matrix(self) -> np.ndarray:
        if self.dense is not None:
            return self.dense
        g = np.eye(self.n)
        for k, pi in enumerate(self.pis):
            idx = np.flatnonzero(self.labels == k)
            g[np.ix_(idx, idx)] = pi
            g[idx, idx] = 1.0
        return g


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Symmetric weight matrix, dense or block-sparse.

    Block form: row i in network s has diagonal ``d[s]`` and off-diagonal
    ``o[s]`` towards the other members of s; rows outside every network have
    weight 1; entries across networks are zero.
    """

    n: int
    dense: np.ndarray | None = None
    labels: np.ndarray | None = None
    d: np.ndarray | None = None
    o: np.ndarray | None = None

    @classmethod
    def identity(cls, n: int) -> "WeightMatrix":
        return cls(n, labels=np.full(n, -1, dtype=np.int64), d=np.empty(0), o=np.empty(0))

    @classmethod
    def from_dense(cls, w) -> "WeightMatrix":
        w = np.asarray(w, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise DimensionMismatch(f"weight matrix must be square, got {w.shape}")
        if not np.allclose(w, w.T, rtol=1e-10, atol=1e-12):
            raise ValidationError("weight matrix is not symmetric")
        return cls(w.shape[0], dense=w)

    @property
    def is_block(self) -> bool:
        return self.dense is None

    def _row_diag(self) -> np.ndarray:
        """Per-row coefficient of the identity part: d - o in networks, 1 elsewhere."""
        diag = np.ones(self.n)
        m = self.labels >= 0
        diag[m] = (self.d - self.o)[self.labels[m]]
        return diag

    def to_dense(self, max_n: int | None = DENSE_LIMIT) -> np.ndarray:
        if self.dense is not None:
            return self.dense
        if max_n is not None and self.n > max_n:
            raise ResourceRefusal(f"refusing to materialize a {self.n}x{self.n} weight matrix (limit {max_n})")
        w = np.eye(self.n)
        for k in range(len(self.d)):
            idx = np.flatnonzero(self.labels == k)
            w[np.ix_(idx, idx)] = self.o[k]
            w[idx, idx] = self.d[k]
        return w

    def gram(self, a, b=None) -> np.ndarray:
        """A^T W B without forming W in the block case."""
        a = np.asarray(a, dtype=np.float64)
        b = a if b is None else np.asarray(b, dtype=np.float64)
        vec_a, vec_b = a.ndim == 1, b.ndim == 1
        a2 = a.reshape(a.shape[0], -1)
        b2 = b.reshape(b.shape[0], -1)
        if a2.shape[0] != self.n or b2.shape[0] != self.n:
            raise DimensionMismatch(f"weights are {self.n}x{self.n}, operands have {a2.shape[0]} and {b2.shape[0]} rows")
        if self.dense is not None:
            out = a2.T @ (self.dense @ b2)
        else:
            out = a2.T @ (self._row_diag()[:, None] * b2)
            k = len(self.d)
            if k:
                sa = _group_sums(self.labels, k, a2)
                sb = sa if b is a else _group_sums(self.labels, k, b2)
                out += sa.T @ (self.o[:, None] * sb)
        if vec_a and vec_b:
            return out[0, 0]
        if vec_b:
            return out[:, 0]
        if vec_a:
            return out[0]
        return out

    def quad(self, r) -> float:
        return float(self.gram(np.asarray(r, dtype=np.float64).reshape(-1)))

    def row_sums(self) -> np.ndarray:
        if self.dense is not None:
            return self.dense.sum(axis=1)
        sums = np.ones(self.n)
        m = self.labels >= 0
        lab = self.labels[m]
        sizes = np.bincount(lab, minlength=len(self.d)).astype(np.longdouble)
        per_net = self.d.astype(np.longdouble) + (sizes - 1) * self.o.astype(np.longdouble)
        sums[m] = per_net.astype(np.float64)[lab]
        return sums

    def scaled(self, c: float) -> "WeightMatrix":
        if self.dense is not None:
            return WeightMatrix(self.n, dense=c * self.dense)
        # independent rows carry an implicit weight of 1, so scaling needs dense form
        return WeightMatrix(self.n, dense=c * self.to_dense(max_n=None))


def block_entries(n: int, pi: float) -> tuple[float, float]:
    """(diagonal, off-diagonal) of the inverse of a size-n block linked with probability pi."""
    if pi >= 1.0:
        raise GuaranteedNetwork(f"network of size {n} has pi=1; roll it up before weighting")
    d, o = _entries(np.array([n]), np.array([pi]))
    return float(d[0]), float(o[0])


def _entries(sizes: np.ndarray, pis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # extended precision keeps d + (n - 1) o accurate when pi is close to 1
    n = sizes.astype(np.longdouble)
    p = pis.astype(np.longdouble)
    denom = (1 - p) * (1 + (n - 1) * p)
    d = (1 + (n - 2) * p) / denom
    o = -p / denom
    return d.astype(np.float64), o.astype(np.float64)


def expected_topology_disjoint(spec: DisjointNetworkSpec) -> ExpectedTopology:
    validate_spec(spec)
    return ExpectedTopology(spec.n_total, labels=spec.labels(), pis=spec.pis)


def expected_topology_general(dist: TopologyDistribution) -> ExpectedTopology:
    """Probability-weighted sum of the 0/1 topology matrices (dense; meant for N up to a few thousand)."""
    validate_distribution(dist)
    n = dist.n
    g = np.zeros((n, n))
    for prob, topo in dist.outcomes:
        g += prob * topo.matrix()
    np.fill_diagonal(g, 1.0)
    return ExpectedTopology(n, dense=g)


def optimal_weights_closed_form(spec: DisjointNetworkSpec) -> WeightMatrix:
    validate_spec(spec)
    pis = spec.pis
    sizes = spec.sizes
    if np.any(pis >= 1.0):
        k = int(np.flatnonzero(pis >= 1.0)[0])
        raise GuaranteedNetwork(f"network {k} has pi=1; apply roll_up_guaranteed first")
    d, o = _entries(sizes, pis)
    return WeightMatrix(spec.n_total, labels=spec.labels(), d=d, o=o)


def optimal_weights_general(et) -> WeightMatrix:
    """Dense inverse of the expected topology."""
    g = et.matrix if isinstance(et, ExpectedTopology) else np.asarray(et, dtype=np.float64)
    n = g.shape[0]
    lam_min = float(np.linalg.eigvalsh(g)[0])
    if lam_min < SINGULAR_TOL * n:
        raise SingularTopology(
            f"expected topology is singular (smallest eigenvalue {lam_min:.3g}); "
            "a guaranteed network is present, use roll_up_guaranteed"
        )
    factor = scipy.linalg.cho_factor(g, lower=True)
    w = scipy.linalg.cho_solve(factor, np.eye(n))
    return WeightMatrix(n, dense=0.5 * (w + w.T))


def roll_up_guaranteed(ds: Dataset, spec: DisjointNetworkSpec) -> tuple[Dataset, DisjointNetworkSpec]:
    """Collapse every pi = 1 network into one row holding the member means.

    The synthetic row takes the position of the network's first member; all
    other rows keep their relative order and surviving networks are reindexed.
    """
    validate_spec(spec)
    if spec.n_total != ds.n:
        raise DimensionMismatch(f"spec covers {spec.n_total} rows, dataset has {ds.n}")
    guaranteed = [net for net in spec.networks if net.pi >= 1.0]
    if not guaranteed:
        return ds, spec

    drop = np.zeros(ds.n, dtype=bool)
    replace: dict[int, CandidateNetwork] = {}
    for net in guaranteed:
        drop[list(net.members[1:])] = True
        replace[net.members[0]] = net
    keep = np.flatnonzero(~drop)
    new_index = np.full(ds.n, -1, dtype=np.int64)
    new_index[keep] = np.arange(keep.size)

    y = ds.y[keep].copy()
    X = ds.X[keep].copy()
    ids = None if ds.row_ids is None else [ds.row_ids[i] for i in keep]
    for first, net in replace.items():
        pos = new_index[first]
        rows = list(net.members)
        y[pos] = ds.y[rows].mean()
        X[pos] = ds.X[rows].mean(axis=0)
        if ids is not None:
            ids[pos] = "|".join(ds.row_ids[i] for i in rows)

    nets = tuple(
        CandidateNetwork(tuple(int(new_index[m]) for m in net.members), net.pi)
        for net in spec.networks
        if net.pi < 1.0
    )
    return Dataset(y, X, None if ids is None else tuple(ids), ds.columns), DisjointNetworkSpec(nets, keep.size)


def simple_ratio(pi: float, n: int) -> float:
    """Approximate weight of an independent row relative to a suspected-network row."""
    if not 0.0 <= pi <= 1.0:
        raise ValidationError(f"pi={pi!r} not in [0, 1]")
    if n < 1:
        raise ValidationError(f"network size must be >= 1, got {n}")
    return 1.0 + pi * (n - 1)
