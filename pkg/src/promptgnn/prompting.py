"""Weak/strong stochastic augmentation and the learnable additive
prompting function.

The prompt-function contract: any map Graph -> Graph that leaves structure
and labels untouched may serve, provided it is differentiable in its own
parameters; the shipped function adds per-node softmax mixtures of learned
token vectors to the features.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractError, DimensionError
from .gnn import as_feature_tensor, load_named_tensors, save_named_tensors
from .graphdata import Graph

AUGMENT_KINDS = ("feature_mask", "edge_drop")

TOKEN_INIT_STD = 0.01  # near-identity start keeps early pseudo-labels faithful


@dataclass
class AugmentConfig:
    kind: str = "feature_mask"
    p_weak: float = 0.1
    p_strong: float = 0.3

    def __post_init__(self):
        if self.kind not in AUGMENT_KINDS:
            raise ConfigError(f"unknown augmentation kind {self.kind!r}")
        for name, p in (("p_weak", self.p_weak), ("p_strong", self.p_strong)):
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name}={p} outside [0,1]")
        if not self.p_weak < self.p_strong:
            warnings.warn("weak masking probability is not below the strong one;"
                          " continuing (ablation mode)", stacklevel=2)


class PromptParams:
    """Learnable token vectors, one row per token, in the input feature
    space of the graphs being prompted."""

    def __init__(self, tokens: Tensor):
        if tokens.shape[0] < 1:
            raise ConfigError("need at least one prompt token")
        self.tokens = tokens

    @classmethod
    def init(cls, n_tokens: int, dim: int, rng: np.random.Generator,
             std: float = TOKEN_INIT_STD) -> "PromptParams":
        return cls(Tensor(rng.normal(0.0, std, (n_tokens, dim)),
                          requires_grad=True))

    @classmethod
    def zeros(cls, dim: int, n_tokens: int = 1) -> "PromptParams":
        """Identity prompt: zero tokens leave every graph unchanged."""
        return cls(Tensor(np.zeros((n_tokens, dim)), requires_grad=True))

    @property
    def n_tokens(self) -> int:
        return self.tokens.shape[0]

    @property
    def dim(self) -> int:
        return self.tokens.shape[1]

    def save(self, path) -> None:
        save_named_tensors(path, [("tokens", self.tokens)])

    @classmethod
    def load(cls, path) -> "PromptParams":
        _, params = load_named_tensors(path)
        if "tokens" not in params:
            raise ConfigError(f"prompt checkpoint {path} lacks 'tokens'")
        return cls(Tensor(params["tokens"], requires_grad=True))


def augment(g: Graph, p: float, kind: str, rng: np.random.Generator) -> Graph:
    """Random perturbation of one graph; labels untouched.

    feature_mask draws one Bernoulli(p) per feature dimension and zeros the
    selected columns across all nodes; edge_drop removes each edge
    independently with probability p.
    """
    if not 0.0 <= p <= 1.0:
        raise ContractError(f"augmentation probability {p} outside [0,1]")
    if kind == "feature_mask":
        x = np.asarray(g.x)
        masked = rng.random(x.shape[1]) < p
        if not masked.any():
            return g
        out = x.copy()
        out[:, masked] = 0.0
        return replace(g, x=out)
    if kind == "edge_drop":
        kept = [e for e in g.edges if rng.random() >= p]
        if len(kept) == len(g.edges):
            return g
        return replace(g, edges=kept)
    raise ConfigError(f"unknown augmentation kind {kind!r}")


def prompt(g: Graph, params: PromptParams) -> Graph:
    """Shift every node feature by a softmax-weighted mixture of the
    tokens: x_i <- x_i + sum_j softmax_j(x_i . t_j) t_j. Structure and
    labels are untouched; the output features are differentiable in the
    tokens."""
    x = as_feature_tensor(g.x)
    if x.shape[1] != params.dim:
        raise DimensionError(
            f"graph features {x.shape[1]}-d, prompt tokens {params.dim}-d")
    alpha = ad.rowwise_softmax(x @ params.tokens.t())
    return replace(g, x=ad.add(x, alpha @ params.tokens))


def make_pair(g: Graph, cfg: AugmentConfig, params: PromptParams,
              rng: np.random.Generator) -> tuple:
    """One training pair: a weak augmentation left as-is, and a strong
    augmentation passed through the prompt."""
    weak = augment(g, cfg.p_weak, cfg.kind, rng)
    prompted = prompt(augment(g, cfg.p_strong, cfg.kind, rng), params)
    return weak, prompted
