"""Structural property computation and property-weighted source/target
splitting with train/val/test role assignment."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, DataFormatError, NumericError
from .graphdata import Dataset, Graph

GRAPH_PROPERTIES = ("edge_homophily", "graph_density")
NODE_PROPERTIES = ("pagerank", "clustering_coeff")
PROPERTIES = GRAPH_PROPERTIES + NODE_PROPERTIES

ROLES = ("train", "val", "test")

# Uninformative midpoint for edgeless graphs so they carry no directional
# bias in the weighted split.
EDGELESS_HOMOPHILY = 0.5

_WEIGHT_FLOOR = 1e-3


def edge_homophily(g: Graph) -> float:
    """Fraction of edges whose endpoints share a node label."""
    if g.node_y is None:
        raise ContractError("edge homophily needs node labels")
    if not g.edges:
        return EDGELESS_HOMOPHILY
    same = sum(1 for u, v in g.edges if g.node_y[u] == g.node_y[v])
    return same / len(g.edges)


def pagerank(g: Graph, damping: float = 0.85, tol: float = 1e-10,
             max_iter: int = 1000) -> np.ndarray:
    """Power iteration on the column-stochastic transition of the
    undirected graph (each edge counted as two arcs) with uniform teleport;
    degree-zero nodes redistribute their mass uniformly."""
    if g.n < 1:
        raise ContractError("pagerank needs at least one node")
    n = g.n
    deg = g.degrees().astype(np.float64)
    src = np.array([e[i] for e in g.edges for i in (0, 1)], dtype=np.int64)
    dst = np.array([e[i] for e in g.edges for i in (1, 0)], dtype=np.int64)
    dangling = deg == 0
    inv_deg = np.where(dangling, 0.0, 1.0 / np.maximum(deg, 1.0))

    r = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        contrib = r * inv_deg
        nxt = np.zeros(n)
        if len(src):
            np.add.at(nxt, dst, contrib[src])
        nxt = damping * (nxt + r[dangling].sum() / n) + (1.0 - damping) / n
        if np.abs(nxt - r).sum() < tol:
            return nxt
        r = nxt
    raise NumericError(f"pagerank did not converge in {max_iter} iterations")


def clustering_coeff(g: Graph, node: int) -> float:
    """2 * (triangles through node) / (deg * (deg - 1)); 0 below degree 2."""
    if not (0 <= node < g.n):
        raise ContractError(f"node {node} outside [0,{g.n})")
    nbrs = g.neighbors()[node]
    deg = len(nbrs)
    if deg < 2:
        return 0.0
    edge_set = set(g.edges)
    # neighbor lists are sorted and edges canonical, so (u, v) with u < v
    links = sum(1 for i, u in enumerate(nbrs) for v in nbrs[i + 1:]
                if (u, v) in edge_set)
    return 2.0 * links / (deg * (deg - 1))


def graph_density(g: Graph) -> float:
    if g.n < 1:
        raise ContractError("density needs at least one node")
    if g.n == 1:
        return 0.0
    return 2.0 * len(g.edges) / (g.n * (g.n - 1))


def weighted_half_split(scores, seed: int) -> tuple:
    """Sample floor(N/2) items without replacement with probability
    proportional to min-max-normalized score + a small floor, renormalizing
    after each draw; the remainder is the target side. Identical scores
    fall back to a uniform split."""
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.size
    if n < 2:
        raise ContractError("need at least 2 samples to split")
    if not np.all(np.isfinite(scores)):
        raise ContractError("scores must be finite")
    span = scores.max() - scores.min()
    if span == 0.0:
        weights = np.ones(n)
    else:
        weights = (scores - scores.min()) / span + _WEIGHT_FLOOR

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    remaining = weights.copy()
    picked = []
    for _ in range(n // 2):
        p = remaining / remaining.sum()
        idx = int(rng.choice(n, p=p))
        picked.append(idx)
        remaining[idx] = 0.0
    source = sorted(picked)
    target = sorted(set(range(n)) - set(picked))
    return source, target


def role_split(ids, ratios, seed: int) -> dict:
    """Random permutation then contiguous cut into train/val/test."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"role ratios {ratios} do not sum to 1")
    ids = list(ids)
    if len(ids) < len(ROLES):
        raise ContractError(f"{len(ids)} ids cannot fill {len(ROLES)} roles")
    n = len(ids)
    n_train = int(ratios[0] * n)
    n_val = int(ratios[1] * n)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    order = [ids[i] for i in rng.permutation(n)]
    roles = {}
    for pos, sample in enumerate(order):
        if pos < n_train:
            roles[sample] = "train"
        elif pos < n_train + n_val:
            roles[sample] = "val"
        else:
            roles[sample] = "test"
    return roles


@dataclass
class SplitManifest:
    """Deterministic record of source/target membership and per-sample
    train/val/test roles, keyed by the split seed."""

    seed: int
    shift_property: str
    source_ids: list
    target_ids: list
    roles: dict

    def __post_init__(self):
        if self.shift_property not in PROPERTIES:
            raise ConfigError(f"unknown property {self.shift_property!r}")
        overlap = set(self.source_ids) & set(self.target_ids)
        if overlap:
            raise ContractError(f"sides overlap on {sorted(overlap)[:5]}")
        everything = set(self.source_ids) | set(self.target_ids)
        if set(self.roles) != everything:
            raise ContractError("role map does not cover both sides exactly")

    def ids(self, side: str, role: str | None = None) -> list:
        members = {"source": self.source_ids, "target": self.target_ids}[side]
        if role is None:
            return list(members)
        if role not in ROLES:
            raise ConfigError(f"unknown role {role!r}")
        return [i for i in members if self.roles[i] == role]

    def save(self, path) -> None:
        doc = {
            "seed": self.seed,
            "property": self.shift_property,
            "source": list(self.source_ids),
            "target": list(self.target_ids),
            "roles": {str(i): r for i, r in self.roles.items()},
        }
        with open(path, "w") as fh:
            json.dump(doc, fh)

    @classmethod
    def load(cls, path) -> "SplitManifest":
        try:
            with open(path) as fh:
                doc = json.load(fh)
            return cls(seed=doc["seed"], shift_property=doc["property"],
                       source_ids=list(doc["source"]),
                       target_ids=list(doc["target"]),
                       roles={int(i): r for i, r in doc["roles"].items()})
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise DataFormatError(f"cannot read manifest {path}: {exc}") from exc


def graph_property_scores(ds: Dataset, prop: str) -> np.ndarray:
    """Per-graph score for a graph-level shift property."""
    if prop == "edge_homophily":
        return np.array([edge_homophily(g) for g in ds.graphs])
    if prop == "graph_density":
        return np.array([graph_density(g) for g in ds.graphs])
    raise ConfigError(f"{prop!r} is not a graph-level property")


def node_property_scores(g: Graph, prop: str) -> np.ndarray:
    """Per-node score for a node-level shift property."""
    if prop == "pagerank":
        return pagerank(g)
    if prop == "clustering_coeff":
        return np.array([clustering_coeff(g, u) for u in range(g.n)])
    raise ConfigError(f"{prop!r} is not a node-level property")


def build_manifest(scores, prop: str, seed: int, ratios) -> SplitManifest:
    """Weighted half split plus per-side role assignment, all derived from
    one seed."""
    seq = np.random.SeedSequence(seed)
    half_seed, src_seed, tgt_seed = [int(s.generate_state(1)[0])
                                     for s in seq.spawn(3)]
    source, target = weighted_half_split(scores, half_seed)
    roles = role_split(source, ratios, src_seed)
    roles.update(role_split(target, ratios, tgt_seed))
    return SplitManifest(seed=seed, shift_property=prop,
                         source_ids=source, target_ids=target, roles=roles)
