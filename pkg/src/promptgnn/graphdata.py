"""Graph/dataset containers, TU-format ingestion, ego-subgraph task
unification, and a synthetic shifted-dataset generator."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, DataFormatError, NumericError


@dataclass(eq=False)
class Graph:
    """One undirected graph: the unit of prediction.

    ``x`` is normally an (n, d) float64 array; inside the differentiable
    training path it may transiently be an autodiff Tensor with the same
    shape. Edges are canonical (u < v), deduplicated, self-loop free.
    Treat instances as immutable; derive variants with dataclasses.replace.
    """

    n: int
    edges: list
    x: object
    y: int | None = None
    node_y: np.ndarray | None = None
    _adj: list | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        canon = sorted({(min(u, v), max(u, v)) for u, v in self.edges})
        for u, v in canon:
            if u == v:
                raise ContractError(f"self-loop on node {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ContractError(f"edge ({u},{v}) outside [0,{self.n})")
        self.edges = canon
        if self.x.shape[0] != self.n:
            raise ContractError(
                f"feature rows {self.x.shape[0]} != node count {self.n}")
        if self.node_y is not None:
            self.node_y = np.asarray(self.node_y, dtype=np.int64)
            if self.node_y.shape != (self.n,):
                raise ContractError("node_y length != node count")

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def feature_dim(self) -> int:
        return self.x.shape[1]

    def neighbors(self) -> list:
        """Sorted adjacency lists, cached."""
        if self._adj is None:
            adj = [[] for _ in range(self.n)]
            for u, v in self.edges:
                adj[u].append(v)
                adj[v].append(u)
            self._adj = [sorted(a) for a in adj]
        return self._adj

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for u, v in self.edges:
            a[u, v] = 1.0
            a[v, u] = 1.0
        return a

    def equals(self, other: "Graph") -> bool:
        return (self.n == other.n and self.edges == other.edges
                and np.array_equal(np.asarray(self.x), np.asarray(other.x))
                and self.y == other.y
                and ((self.node_y is None) == (other.node_y is None))
                and (self.node_y is None
                     or np.array_equal(self.node_y, other.node_y)))


@dataclass(eq=False)
class Dataset:
    graphs: list
    num_classes: int
    feature_dim: int
    name: str = ""

    def __post_init__(self):
        for g in self.graphs:
            if g.feature_dim != self.feature_dim:
                raise ContractError("graphs disagree on feature dimension")
            if g.y is not None and not (0 <= g.y < self.num_classes):
                raise ContractError(f"label {g.y} outside [0,{self.num_classes})")

    def __len__(self) -> int:
        return len(self.graphs)

    def labels(self) -> np.ndarray:
        if any(g.y is None for g in self.graphs):
            raise ContractError("dataset has unlabeled graphs")
        return np.array([g.y for g in self.graphs], dtype=np.int64)

    def subset(self, ids, name: str | None = None) -> "Dataset":
        return Dataset([self.graphs[i] for i in ids], self.num_classes,
                       self.feature_dim, name if name is not None else self.name)

    def equals(self, other: "Dataset") -> bool:
        return (self.num_classes == other.num_classes
                and self.feature_dim == other.feature_dim
                and self.name == other.name
                and len(self.graphs) == len(other.graphs)
                and all(a.equals(b) for a, b in zip(self.graphs, other.graphs)))


@dataclass
class ClassStats:
    """Class-frequency summary: imbalance ratio f_max/f_min and Shannon
    entropy of class proportions normalized by log of the class count."""

    counts: np.ndarray
    imbalance_ratio: float
    normalized_entropy: float


def class_stats(ds: Dataset) -> ClassStats:
    labels = ds.labels()
    counts = np.bincount(labels, minlength=ds.num_classes)
    if np.any(counts == 0):
        raise NumericError("a class has zero count; imbalance ratio undefined")
    p = counts / counts.sum()
    entropy = float(-(p * np.log(p)).sum())
    return ClassStats(counts=counts,
                      imbalance_ratio=float(counts.max() / counts.min()),
                      normalized_entropy=entropy / math.log(ds.num_classes))


# ---------------------------------------------------------------------------
# TU format ingestion


def _read_rows(path: Path) -> list:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(line.replace(",", " ").split())
    return rows


def load_tu_dataset(directory) -> Dataset:
    """Load a TU-layout dataset directory (DS_A.txt etc., 1-indexed nodes).

    Node features are the attributes concatenated with a one-hot of the
    node labels when both files exist, else whichever exists, else a
    constant-1 scalar. Graph labels are remapped to contiguous [0, C).
    """
    directory = Path(directory)
    prefixes = sorted(p.name[:-6] for p in directory.glob("*_A.txt"))
    if not prefixes:
        raise DataFormatError(f"no *_A.txt edge file in {directory}")
    prefix = prefixes[0]

    def path(suffix):
        return directory / f"{prefix}_{suffix}.txt"

    for suffix in ("A", "graph_indicator", "graph_labels"):
        if not path(suffix).exists():
            raise DataFormatError(f"missing {path(suffix).name}")

    indicator = [int(r[0]) for r in _read_rows(path("graph_indicator"))]
    raw_graph_labels = [int(r[0]) for r in _read_rows(path("graph_labels"))]
    num_nodes = len(indicator)
    num_graphs = len(raw_graph_labels)
    if not indicator or max(indicator) != num_graphs or min(indicator) != 1:
        raise DataFormatError("graph_indicator inconsistent with graph_labels")

    # global 1-based node id -> (graph index, local 0-based id)
    local_id = np.zeros(num_nodes, dtype=np.int64)
    graph_of = np.array(indicator, dtype=np.int64) - 1
    sizes = np.bincount(graph_of, minlength=num_graphs)
    next_local = np.zeros(num_graphs, dtype=np.int64)
    for i, gi in enumerate(graph_of):
        local_id[i] = next_local[gi]
        next_local[gi] += 1

    edges: list = [[] for _ in range(num_graphs)]
    for row in _read_rows(path("A")):
        u, v = int(row[0]), int(row[1])
        if not (1 <= u <= num_nodes and 1 <= v <= num_nodes):
            raise DataFormatError(f"edge ({u},{v}) references absent node")
        if graph_of[u - 1] != graph_of[v - 1]:
            raise DataFormatError(f"edge ({u},{v}) crosses graphs")
        if u == v:
            continue
        edges[graph_of[u - 1]].append((int(local_id[u - 1]), int(local_id[v - 1])))

    node_labels = None
    if path("node_labels").exists():
        raw = [int(r[0]) for r in _read_rows(path("node_labels"))]
        if len(raw) != num_nodes:
            raise DataFormatError("node_labels length != node count")
        values = sorted(set(raw))
        remap = {v: i for i, v in enumerate(values)}
        node_labels = np.array([remap[v] for v in raw], dtype=np.int64)
        num_node_classes = len(values)

    attributes = None
    if path("node_attributes").exists():
        rows = _read_rows(path("node_attributes"))
        if len(rows) != num_nodes:
            raise DataFormatError("node_attributes length != node count")
        attributes = np.array([[float(v) for v in r] for r in rows])

    if attributes is not None and node_labels is not None:
        onehot = np.zeros((num_nodes, num_node_classes))
        onehot[np.arange(num_nodes), node_labels] = 1.0
        features = np.hstack([attributes, onehot])
    elif attributes is not None:
        features = attributes
    elif node_labels is not None:
        features = np.zeros((num_nodes, num_node_classes))
        features[np.arange(num_nodes), node_labels] = 1.0
    else:
        features = np.ones((num_nodes, 1))

    label_values = sorted(set(raw_graph_labels))
    label_remap = {v: i for i, v in enumerate(label_values)}

    graphs = []
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    for gi in range(num_graphs):
        lo, hi = offsets[gi], offsets[gi + 1]
        graphs.append(Graph(
            n=int(sizes[gi]),
            edges=edges[gi],
            x=features[lo:hi].copy(),
            y=label_remap[raw_graph_labels[gi]],
            node_y=None if node_labels is None else node_labels[lo:hi].copy(),
        ))
    return Dataset(graphs, num_classes=len(label_values),
                   feature_dim=features.shape[1], name=prefix)


# ---------------------------------------------------------------------------
# Native JSON format


def save_dataset(ds: Dataset, path) -> None:
    doc = {
        "name": ds.name,
        "num_classes": ds.num_classes,
        "feature_dim": ds.feature_dim,
        "graphs": [{
            "n": g.n,
            "edges": [[u, v] for u, v in g.edges],
            "x": np.asarray(g.x).tolist(),
            "y": g.y,
            "node_y": None if g.node_y is None else g.node_y.tolist(),
        } for g in ds.graphs],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_dataset(path) -> Dataset:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"cannot read dataset {path}: {exc}") from exc
    try:
        graphs = [Graph(n=g["n"],
                        edges=[tuple(e) for e in g["edges"]],
                        x=np.array(g["x"], dtype=np.float64).reshape(g["n"], -1),
                        y=g["y"],
                        node_y=None if g.get("node_y") is None
                        else np.array(g["node_y"], dtype=np.int64))
                  for g in doc["graphs"]]
        return Dataset(graphs, doc["num_classes"], doc["feature_dim"],
                       doc.get("name", ""))
    except (KeyError, TypeError, ContractError) as exc:
        raise DataFormatError(f"malformed dataset {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Task unification


def ego_subgraph(g: Graph, center: int, k: int) -> Graph:
    """Induced subgraph on nodes within k hops of center (BFS order,
    center first); the subgraph inherits the center node's label."""
    if not (0 <= center < g.n):
        raise ContractError(f"center {center} outside [0,{g.n})")
    if k < 1:
        raise ContractError("hop count must be >= 1")
    adj = g.neighbors()
    order = [center]
    depth = {center: 0}
    head = 0
    while head < len(order):
        u = order[head]
        head += 1
        if depth[u] == k:
            continue
        for v in adj[u]:
            if v not in depth:
                depth[v] = depth[u] + 1
                order.append(v)
    index = {u: i for i, u in enumerate(order)}
    sub_edges = [(index[u], index[v]) for u, v in g.edges
                 if u in index and v in index]
    return Graph(
        n=len(order),
        edges=sub_edges,
        x=np.asarray(g.x)[order].copy(),
        y=None if g.node_y is None else int(g.node_y[center]),
        node_y=None if g.node_y is None else g.node_y[order].copy(),
    )


def unify_node_task(g: Graph, k: int = 2) -> Dataset:
    """Reduce node classification to graph classification: one k-hop ego
    subgraph per node, labeled by its center."""
    if g.node_y is None:
        raise ContractError("node-task unification needs node labels")
    values = sorted(set(int(v) for v in g.node_y))
    remap = {v: i for i, v in enumerate(values)}
    graphs = []
    for center in range(g.n):
        sub = ego_subgraph(g, center, k)
        graphs.append(replace(sub, y=remap[sub.y]))
    return Dataset(graphs, num_classes=len(values),
                   feature_dim=g.feature_dim, name=f"ego{k}")


# ---------------------------------------------------------------------------
# Synthetic generator

# Per-graph share of nodes carrying the graph's own class label; a range
# (rather than a constant) gives classes genuine within-class spread.
_MAJORITY_RANGE = (0.55, 0.85)
_TARGET_MEAN_DEGREE = 4.0
_FEATURE_NOISE_STD = 0.3
_CLASS_MEAN_STD = 0.3


def synth_shift_dataset(n_graphs: int, nodes_per_graph: int, num_classes: int,
                        feature_dim: int, homophily_range: tuple,
                        seed: int) -> Dataset:
    """Generate labeled graphs whose edge homophily varies per graph.

    Each graph draws a class y and a target homophily h ~ U(lo, hi); node
    labels are y for a majority block and other classes for the rest;
    candidate edges are accepted with probability h (same-label pair) or
    1-h (cross-label) until the mean degree reaches ~4. Node features are
    one-hot(node label) + a class-dependent mean vector + Gaussian noise.
    """
    lo, hi = homophily_range
    if hi <= lo:
        raise ConfigError(f"homophily range ({lo},{hi}) needs hi > lo")
    if num_classes < 2:
        raise ConfigError("need at least 2 classes")
    if feature_dim < num_classes:
        raise ConfigError("feature_dim must be >= num_classes (one-hot block)")
    rng = np.random.default_rng(seed)
    class_means = rng.normal(0.0, _CLASS_MEAN_STD, (num_classes, feature_dim))

    graphs = []
    n = nodes_per_graph
    for _ in range(n_graphs):
        y = int(rng.integers(num_classes))
        h = float(rng.uniform(lo, hi))
        n_major = max(1, round(float(rng.uniform(*_MAJORITY_RANGE)) * n))
        labels = np.full(n, y, dtype=np.int64)
        others = [c for c in range(num_classes) if c != y]
        labels[n_major:] = rng.choice(others, size=n - n_major)

        target_edges = round(_TARGET_MEAN_DEGREE * n / 2)
        edges: set = set()
        attempts = 0
        while len(edges) < target_edges and attempts < 60 * target_edges:
            attempts += 1
            u, v = int(rng.integers(n)), int(rng.integers(n))
            if u == v:
                continue
            accept = h if labels[u] == labels[v] else 1.0 - h
            if rng.random() < accept:
                edges.add((min(u, v), max(u, v)))

        x = np.zeros((n, feature_dim))
        x[np.arange(n), labels] = 1.0
        x += class_means[y]
        x += rng.normal(0.0, _FEATURE_NOISE_STD, (n, feature_dim))
        graphs.append(Graph(n=n, edges=sorted(edges), x=x, y=y, node_y=labels))

    return Dataset(graphs, num_classes=num_classes, feature_dim=feature_dim,
                   name=f"synth-n{n_graphs}-h{lo:g}-{hi:g}-s{seed}")
