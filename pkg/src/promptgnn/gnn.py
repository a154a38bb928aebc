"""Frozen-capable base models: GCN and GAT encoders, mean-pool readout,
linear projection head, and supervised pretraining."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DataFormatError, DimensionError
from .graphdata import Dataset, Graph
from .optim import Adam

# Disallowed attention entries; large enough that exp underflows to zero
# after row-max stabilization.
_ATTN_MASK = -1e9

_LOG_EPS = 1e-12


def glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, (rows, cols))


def as_feature_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def normalized_adjacency(g: Graph) -> np.ndarray:
    """Symmetric normalization of A + I by the degree of A + I."""
    a = g.adjacency()
    np.fill_diagonal(a, a.diagonal() + 1.0)
    inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
    return a * inv_sqrt[:, None] * inv_sqrt[None, :]


def gcn_layer(x: Tensor, g: Graph, weight: Tensor, activate: bool = True) -> Tensor:
    """relu(Ahat X W) with Ahat the symmetric-normalized self-looped
    adjacency; the final layer passes activate=False."""
    out = Tensor(normalized_adjacency(g)) @ (x @ weight)
    return ad.relu(out) if activate else out


def gat_layer(x: Tensor, g: Graph, weight: Tensor, attn: Tensor,
              leaky_slope: float = 0.2, activate: bool = True) -> Tensor:
    """Single-head attention over neighbors plus self; scores are
    leaky_relu(a^T [W x_u || W x_v]) softmaxed per node."""
    d_out = weight.shape[1]
    if attn.shape != (2 * d_out, 1):
        raise DimensionError(f"attention vector {attn.shape} != ({2 * d_out}, 1)")
    h = x @ weight
    f_src = h @ ad.slice_rows(attn, 0, d_out)
    f_dst = h @ ad.slice_rows(attn, d_out, 2 * d_out)
    ones_row = Tensor(np.ones((1, g.n)))
    ones_col = Tensor(np.ones((g.n, 1)))
    scores = ad.leaky_relu(ad.add(f_src @ ones_row, ones_col @ f_dst.t()),
                           leaky_slope)
    allowed = g.adjacency()
    np.fill_diagonal(allowed, 1.0)
    mask = Tensor(np.where(allowed > 0, 0.0, _ATTN_MASK))
    attention = ad.rowwise_softmax(ad.add(scores, mask))
    out = attention @ h
    return ad.relu(out) if activate else out


def readout_mean(node_embeds: Tensor) -> Tensor:
    """Column mean over nodes: one embedding row per graph."""
    return ad.col_mean(node_embeds)


class GcnEncoder:
    kind = "gcn"

    def __init__(self, dims, rng: np.random.Generator):
        self.dims = list(dims)
        self.weights = [Tensor(glorot(rng, dims[i], dims[i + 1]), requires_grad=True)
                        for i in range(len(dims) - 1)]

    def forward(self, x: Tensor, g: Graph) -> Tensor:
        h = x
        last = len(self.weights) - 1
        for i, w in enumerate(self.weights):
            h = gcn_layer(h, g, w, activate=i < last)
        return h

    def named_params(self):
        return [(f"encoder.w{i}", w) for i, w in enumerate(self.weights)]


class GatEncoder:
    kind = "gat"

    def __init__(self, dims, rng: np.random.Generator, leaky_slope: float = 0.2):
        self.dims = list(dims)
        self.leaky_slope = leaky_slope
        self.weights = []
        self.attn = []
        for i in range(len(dims) - 1):
            self.weights.append(
                Tensor(glorot(rng, dims[i], dims[i + 1]), requires_grad=True))
            self.attn.append(
                Tensor(glorot(rng, 2 * dims[i + 1], 1), requires_grad=True))

    def forward(self, x: Tensor, g: Graph) -> Tensor:
        h = x
        last = len(self.weights) - 1
        for i, (w, a) in enumerate(zip(self.weights, self.attn)):
            h = gat_layer(h, g, w, a, self.leaky_slope, activate=i < last)
        return h

    def named_params(self):
        out = []
        for i, (w, a) in enumerate(zip(self.weights, self.attn)):
            out.append((f"encoder.w{i}", w))
            out.append((f"encoder.a{i}", a))
        return out


_ENCODERS = {"gcn": GcnEncoder, "gat": GatEncoder}


class BaseModel:
    """Encoder -> mean readout -> linear head. Forward returns pre-softmax
    logits; freezing flips requires_grad on every parameter."""

    def __init__(self, encoder, head_weight: Tensor, head_bias: Tensor):
        self.encoder = encoder
        self.head_weight = head_weight  # (C, d_h)
        self.head_bias = head_bias      # (1, C)

    @classmethod
    def create(cls, kind: str, feature_dim: int, num_classes: int,
               hidden_dim: int = 64, num_layers: int = 2,
               seed: int = 0) -> "BaseModel":
        if kind not in _ENCODERS:
            raise ContractError(f"unknown encoder kind {kind!r}")
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        dims = [feature_dim] + [hidden_dim] * num_layers
        encoder = _ENCODERS[kind](dims, rng)
        head_weight = Tensor(glorot(rng, num_classes, hidden_dim), requires_grad=True)
        head_bias = Tensor(np.zeros((1, num_classes)), requires_grad=True)
        return cls(encoder, head_weight, head_bias)

    @property
    def hidden_dim(self) -> int:
        return self.encoder.dims[-1]

    @property
    def feature_dim(self) -> int:
        return self.encoder.dims[0]

    @property
    def num_classes(self) -> int:
        return self.head_weight.shape[0]

    def embed(self, g: Graph) -> Tensor:
        x = as_feature_tensor(g.x)
        if x.shape[1] != self.feature_dim:
            raise DimensionError(
                f"graph features {x.shape[1]}-d, model expects {self.feature_dim}")
        return readout_mean(self.encoder.forward(x, g))

    def head(self, z: Tensor) -> Tensor:
        return ad.add(z @ self.head_weight.t(), self.head_bias)

    def forward(self, g: Graph) -> Tensor:
        return self.head(self.embed(g))

    def named_params(self):
        return self.encoder.named_params() + [
            ("head.weight", self.head_weight), ("head.bias", self.head_bias)]

    def params(self):
        return [p for _, p in self.named_params()]

    def freeze(self) -> None:
        for p in self.params():
            p.requires_grad = False
            p.grad = None

    def unfreeze(self) -> None:
        for p in self.params():
            p.requires_grad = True

    @property
    def frozen(self) -> bool:
        return not any(p.requires_grad for p in self.params())

    def snapshot(self) -> dict:
        return {name: p.data.copy() for name, p in self.named_params()}

    def restore(self, snap: dict) -> None:
        for name, p in self.named_params():
            p.data[...] = snap[name]

    def arch(self) -> dict:
        desc = {"kind": self.encoder.kind, "dims": list(self.encoder.dims),
                "num_classes": self.num_classes}
        if self.encoder.kind == "gat":
            desc["leaky_slope"] = self.encoder.leaky_slope
        return desc

    def save(self, path) -> None:
        save_named_tensors(path, self.named_params(), arch=self.arch())

    @classmethod
    def load(cls, path) -> "BaseModel":
        arch, params = load_named_tensors(path)
        if arch is None or "kind" not in arch:
            raise DataFormatError(f"checkpoint {path} lacks an architecture block")
        dims = arch["dims"]
        kwargs = {}
        if arch["kind"] == "gat":
            kwargs["leaky_slope"] = arch.get("leaky_slope", 0.2)
        encoder = _ENCODERS[arch["kind"]](dims, np.random.default_rng(0), **kwargs)
        model = cls(encoder,
                    Tensor(np.zeros((arch["num_classes"], dims[-1])), requires_grad=True),
                    Tensor(np.zeros((1, arch["num_classes"])), requires_grad=True))
        for name, p in model.named_params():
            if name not in params:
                raise DataFormatError(f"checkpoint missing tensor {name!r}")
            if params[name].shape != p.data.shape:
                raise DataFormatError(f"checkpoint tensor {name!r} has wrong shape")
            p.data[...] = params[name]
        return model


def save_named_tensors(path, named, arch: dict | None = None) -> None:
    """Checkpoint format shared by models, prompts, and discriminators:
    JSON of named float arrays plus an optional architecture descriptor.
    Round-trips float64 exactly (shortest-repr decimal serialization)."""
    doc = {"params": {name: {"shape": list(t.data.shape),
                             "data": t.data.ravel().tolist()}
                      for name, t in named}}
    if arch is not None:
        doc["arch"] = arch
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_named_tensors(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
        params = {name: np.array(p["data"], dtype=np.float64).reshape(p["shape"])
                  for name, p in doc["params"].items()}
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataFormatError(f"cannot read checkpoint {path}: {exc}") from exc
    return doc.get("arch"), params


@dataclass
class PretrainConfig:
    lr: float = 0.01
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0


def batch_cross_entropy(model: BaseModel, graphs, labels) -> Tensor:
    logits = ad.concat_rows([model.forward(g) for g in graphs])
    probs = ad.rowwise_softmax(logits)
    onehot = np.zeros(probs.shape)
    onehot[np.arange(len(labels)), labels] = 1.0
    picked = ad.mul(Tensor(onehot), ad.log(probs, eps=_LOG_EPS))
    return ad.scale(ad.reduce_sum(picked), -1.0 / len(labels))


def pretrain(model: BaseModel, train_ds: Dataset, val_ds: Dataset,
             cfg: PretrainConfig):
    """Supervised training of all model parameters on the source split;
    keeps the epoch with the best validation macro-F1, then freezes the
    model. Returns (model, best_val_f1)."""
    from .trainer import evaluate, infer_base

    if not train_ds.graphs or not val_ds.graphs:
        raise ContractError("pretraining needs nonempty train and val splits")
    model.unfreeze()
    labels = train_ds.labels()
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    opt = Adam(model.params(), lr=cfg.lr)
    val_labels = val_ds.labels()

    best_f1 = -1.0
    best_snap = model.snapshot()
    for _ in range(cfg.epochs):
        order = rng.permutation(len(train_ds))
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            loss = batch_cross_entropy(model, [train_ds.graphs[i] for i in batch],
                                       labels[batch])
            ad.backward(loss)
            opt.step()
            opt.zero_grad()
        val_f1, _ = evaluate(infer_base(model, val_ds), val_labels)
        if val_f1 > best_f1:
            best_f1 = val_f1
            best_snap = model.snapshot()
    model.restore(best_snap)
    model.freeze()
    return model, best_f1
