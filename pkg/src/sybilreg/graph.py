"""Candidate networks from referral trees and fund transfers.

Two independent heuristics, each producing its own DisjointNetworkSpec:

* large referral trees (member count at or above a threshold);
* clusters of wallets inside one tree that transferred funds to each other
  at least a threshold number of times.

Every flagged group gets the same constant Sybil probability.
"""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping

from sybilreg.errors import MultipleReferrers, ReferralCycle, ValidationError
from sybilreg.model import CandidateNetwork, DisjointNetworkSpec, validate_spec

__all__ = [
    "ReferralEdge",
    "ReferralTree",
    "TransferRecord",
    "build_referral_forest",
    "flag_large_trees",
    "flag_transfer_clusters",
]

log = logging.getLogger(__name__)

DEFAULT_MIN_TREE_SIZE = 20
DEFAULT_MIN_TRANSFERS = 10
DEFAULT_PI = 0.5


@dataclass(frozen=True)
class ReferralEdge:
    referrer: str
    referee: str

    def __post_init__(self):
        if self.referrer == self.referee:
            raise ReferralCycle(f"wallet {self.referrer!r} refers itself")


@dataclass(frozen=True)
class TransferRecord:
    sender: str
    receiver: str
    count: int = 1

    def __post_init__(self):
        if int(self.count) != self.count or self.count < 1:
            raise ValidationError(f"transfer count must be a positive integer, got {self.count!r}")
        object.__setattr__(self, "count", int(self.count))


@dataclass(frozen=True)
class ReferralTree:
    root: str
    members: tuple[str, ...]

    @property
    def size(self) -> int:
        return len(self.members)


def build_referral_forest(edges: Iterable[ReferralEdge]) -> dict[str, ReferralTree]:
    """Group wallets into referral trees keyed by root, in sorted root order."""
    parent: dict[str, str] = {}
    nodes: set[str] = set()
    for e in edges:
        prev = parent.get(e.referee)
        if prev is not None and prev != e.referrer:
            a, b = sorted((prev, e.referrer))
            raise MultipleReferrers(f"wallet {e.referee!r} has referrers {a!r} and {b!r}")
        parent[e.referee] = e.referrer
        nodes.add(e.referrer)
        nodes.add(e.referee)

    root_of: dict[str, str] = {}
    for start in sorted(nodes):
        path = []
        on_path = set()
        node = start
        while node not in root_of and node in parent:
            if node in on_path:
                raise ReferralCycle(f"referral cycle through wallet {node!r}")
            on_path.add(node)
            path.append(node)
            node = parent[node]
        root = root_of.get(node, node)
        root_of[node] = root
        for n in path:
            root_of[n] = root

    members = defaultdict(list)
    for wallet, root in root_of.items():
        members[root].append(wallet)
    return {root: ReferralTree(root, tuple(sorted(members[root]))) for root in sorted(members)}


def _to_spec(groups, pi, id_map: Mapping[str, int], n_total, heuristic: str):
    n_total = len(id_map) if n_total is None else n_total
    networks = []
    dropped = discarded = 0
    for group in groups:
        rows = [id_map[w] for w in group if w in id_map]
        dropped += len(group) - len(rows)
        if len(rows) < 2:
            discarded += 1
            continue
        networks.append(CandidateNetwork(tuple(rows), pi))
    networks.sort(key=lambda net: net.members[0])
    spec = validate_spec(DisjointNetworkSpec(tuple(networks), n_total))
    diag = {
        "heuristic": heuristic,
        "groups_flagged": len(groups),
        "networks": len(networks),
        "networks_discarded": discarded,
        "wallets_dropped": dropped,
    }
    if dropped:
        log.info("%s: %d flagged wallets are not in the dataset", heuristic, dropped)
    return spec, diag


def flag_large_trees(
    forest: Mapping[str, ReferralTree],
    min_size: int = DEFAULT_MIN_TREE_SIZE,
    pi_default: float = DEFAULT_PI,
    id_map: Mapping[str, int] | None = None,
    n_total: int | None = None,
    return_diagnostics: bool = False,
):
    """One candidate network per tree with at least ``min_size`` wallets.

    Tree size counts every wallet in the tree, including wallets absent from
    ``id_map``; those are then dropped from the network, and networks left
    with fewer than two rows are discarded.
    """
    if min_size < 2:
        raise ValidationError(f"min_size must be >= 2, got {min_size}")
    if id_map is None:
        raise ValidationError("id_map is required to place wallets on dataset rows")
    groups = [tree.members for _, tree in sorted(forest.items()) if tree.size >= min_size]
    spec, diag = _to_spec(groups, pi_default, id_map, n_total, "tree_size")
    diag["trees"] = len(forest)
    return (spec, diag) if return_diagnostics else spec


def flag_transfer_clusters(
    forest: Mapping[str, ReferralTree],
    transfers: Iterable[TransferRecord],
    min_transfers: int = DEFAULT_MIN_TRANSFERS,
    pi_default: float = DEFAULT_PI,
    id_map: Mapping[str, int] | None = None,
    n_total: int | None = None,
    return_diagnostics: bool = False,
):
    """Connected components of heavy transfer pairs, computed inside each tree.

    Counts are summed per unordered wallet pair over all records, so transfers
    in both directions add up. Pairs spanning two trees are ignored.
    """
    if min_transfers < 1:
        raise ValidationError(f"min_transfers must be >= 1, got {min_transfers}")
    if id_map is None:
        raise ValidationError("id_map is required to place wallets on dataset rows")
    tree_of = {w: root for root, tree in forest.items() for w in tree.members}

    pair_counts: Counter = Counter()
    cross_tree = 0
    for t in transfers:
        if t.sender == t.receiver:
            continue
        r1, r2 = tree_of.get(t.sender), tree_of.get(t.receiver)
        if r1 is None or r1 != r2:
            cross_tree += 1
            continue
        pair_counts[tuple(sorted((t.sender, t.receiver)))] += t.count

    uf_parent: dict[str, str] = {}

    def find(x):
        while uf_parent[x] != x:
            uf_parent[x] = uf_parent[uf_parent[x]]
            x = uf_parent[x]
        return x

    for (a, b), c in sorted(pair_counts.items()):
        if c < min_transfers:
            continue
        uf_parent.setdefault(a, a)
        uf_parent.setdefault(b, b)
        ra, rb = find(a), find(b)
        if ra != rb:
            uf_parent[max(ra, rb)] = min(ra, rb)

    comps = defaultdict(list)
    for w in uf_parent:
        comps[find(w)].append(w)
    groups = [tuple(sorted(m)) for _, m in sorted(comps.items())]
    spec, diag = _to_spec(groups, pi_default, id_map, n_total, "transfers")
    diag["trees"] = len(forest)
    diag["transfers_outside_one_tree"] = cross_tree
    return (spec, diag) if return_diagnostics else spec
