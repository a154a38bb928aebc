"""Loss functions for prompt training: confidence-thresholded pseudo-label
consistency (fixed or class-dynamic threshold), batch-diversity
regularization, the adversarial discriminator pair, the weighted total,
and the few-shot variant."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractError
from .gnn import glorot

LOG_EPS = 1e-12

THRESHOLD_MODES = ("fixed", "class_dynamic")


class DiscriminatorParams:
    """Two-layer perceptron d_h -> d_h -> 1 with ReLU hidden layer; the
    raw scalar output is squashed inside the losses."""

    def __init__(self, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor):
        self.w1, self.b1, self.w2, self.b2 = w1, b1, w2, b2

    @classmethod
    def init(cls, dim: int, rng: np.random.Generator) -> "DiscriminatorParams":
        return cls(Tensor(glorot(rng, dim, dim), requires_grad=True),
                   Tensor(np.zeros((1, dim)), requires_grad=True),
                   Tensor(glorot(rng, dim, 1), requires_grad=True),
                   Tensor(np.zeros((1, 1)), requires_grad=True))

    def named_params(self):
        return [("disc.w1", self.w1), ("disc.b1", self.b1),
                ("disc.w2", self.w2), ("disc.b2", self.b2)]

    def params(self):
        return [p for _, p in self.named_params()]

    def detached(self) -> "DiscriminatorParams":
        return DiscriminatorParams(*(p.detach() for p in self.params()))

    def score(self, z: Tensor) -> Tensor:
        """Raw realness logit per row of z."""
        hidden = ad.relu(ad.add(z @ self.w1, self.b1))
        return ad.add(hidden @ self.w2, self.b2)


class ThresholdState:
    """Confidence-threshold policy. Fixed mode admits max score > tau;
    class-dynamic mode warps tau per class by the running count of
    confident predictions (convex warp beta/(2-beta)), counts resetting at
    epoch boundaries."""

    def __init__(self, mode: str, tau: float, num_classes: int):
        if mode not in THRESHOLD_MODES:
            raise ConfigError(f"unknown threshold mode {mode!r}")
        # tau = 1.0 is permitted: it admits nothing and turns training inert
        if not 0.0 < tau <= 1.0:
            raise ConfigError(f"tau={tau} outside (0, 1]")
        self.mode = mode
        self.tau = tau
        self.confident_counts = np.zeros(num_classes, dtype=np.int64)

    def reset(self) -> None:
        self.confident_counts[:] = 0


@dataclass
class BatchPredictions:
    """Scores for one batch: weak-branch rows (plain arrays, never part of
    the gradient graph) and prompted rows (a live tensor). The confidence
    mask is filled in once thresholds are known."""

    p_weak: np.ndarray
    p_prompt: Tensor
    pseudo: np.ndarray
    mask: np.ndarray | None = None

    @classmethod
    def build(cls, p_weak: np.ndarray, p_prompt: Tensor) -> "BatchPredictions":
        p_weak = np.asarray(p_weak, dtype=np.float64)
        if p_weak.shape != p_prompt.shape:
            raise ContractError("weak and prompted score shapes differ")
        if p_weak.shape[0] < 1:
            raise ContractError("empty batch")
        for rows in (p_weak, p_prompt.data):
            if np.abs(rows.sum(axis=1) - 1.0).max() > 1e-9:
                raise ContractError("score rows must sum to 1")
        return cls(p_weak=p_weak, p_prompt=p_prompt,
                   pseudo=np.argmax(p_weak, axis=1))

    def apply_threshold(self, per_class_tau: np.ndarray) -> None:
        self.mask = self.p_weak.max(axis=1) > per_class_tau[self.pseudo]

    def confident_fraction(self) -> float:
        return float(self.mask.mean())


def update_threshold(state: ThresholdState, bp: BatchPredictions) -> np.ndarray:
    """Absorb one batch into the running confident counts and return the
    per-class thresholds to mask it with."""
    num_classes = state.confident_counts.shape[0]
    if state.mode == "fixed":
        return np.full(num_classes, state.tau)
    confident = bp.p_weak.max(axis=1) > state.tau
    np.add.at(state.confident_counts, bp.pseudo[confident], 1)
    beta = state.confident_counts / max(state.confident_counts.max(), 1)
    return state.tau * beta / (2.0 - beta)


def _require_mask(bp: BatchPredictions) -> None:
    if bp.mask is None:
        raise ContractError("apply_threshold before computing the loss")


def consistency_loss(bp: BatchPredictions) -> Tensor:
    """Mean over the full batch of cross-entropy between the hard pseudo
    label (argmax of the weak branch, never backpropagated) and the
    prompted scores, restricted to confident rows."""
    _require_mask(bp)
    batch, _ = bp.p_weak.shape
    picks = np.zeros(bp.p_weak.shape)
    picks[np.arange(batch)[bp.mask], bp.pseudo[bp.mask]] = 1.0
    ce_terms = ad.mul(Tensor(picks), ad.log(bp.p_prompt, eps=LOG_EPS))
    return ad.scale(ad.reduce_sum(ce_terms), -1.0 / batch)


def diversity_loss(p_prompt: Tensor) -> Tensor:
    """Negative entropy of the batch-mean prompted score; minimized when
    the mean prediction is uniform, so it penalizes class collapse."""
    q = ad.col_mean(p_prompt)
    return ad.reduce_sum(ad.mul(q, ad.log(q, eps=LOG_EPS)))


def discriminator_loss(disc: DiscriminatorParams, z_weak: Tensor,
                       z_prompt: Tensor) -> Tensor:
    """Binary cross-entropy training the discriminator to score weak-branch
    embeddings as real and prompted ones as fake; both embedding batches
    are detached so gradients reach only the discriminator."""
    if z_weak.shape != z_prompt.shape:
        raise ContractError("embedding batch shapes differ")
    batch = z_weak.shape[0]
    s_real = ad.sigmoid(disc.score(z_weak.detach()))
    s_fake = ad.sigmoid(disc.score(z_prompt.detach()))
    ones = Tensor(np.ones(s_fake.shape))
    total = ad.add(ad.reduce_sum(ad.log(s_real, eps=LOG_EPS)),
                   ad.reduce_sum(ad.log(ad.sub(ones, s_fake), eps=LOG_EPS)))
    return ad.scale(total, -1.0 / (2 * batch))


def adversarial_loss(disc: DiscriminatorParams, z_prompt: Tensor) -> Tensor:
    """Pushes prompted embeddings toward what the (freshly updated, here
    frozen) discriminator scores as real; gradients flow through z_prompt
    into the prompt only."""
    batch = z_prompt.shape[0]
    s = ad.sigmoid(disc.detached().score(z_prompt))
    return ad.scale(ad.reduce_sum(ad.log(s, eps=LOG_EPS)), -1.0 / batch)


def total_loss(l_consistency: Tensor, l_diversity: Tensor, l_adversarial: Tensor,
               lambda1: float, lambda2: float) -> Tensor:
    return ad.add(l_consistency,
                  ad.add(ad.scale(l_diversity, lambda1),
                         ad.scale(l_adversarial, lambda2)))


def fewshot_consistency_loss(bp: BatchPredictions, labeled_idx, labels,
                             lambda3: float) -> Tensor:
    """Few-shot replacement for the consistency term: supervised CE on the
    labeled subset plus lambda3-weighted thresholded pseudo-label CE over
    the whole batch, jointly normalized by the batch size."""
    _require_mask(bp)
    batch, num_classes = bp.p_weak.shape
    labeled_idx = list(labeled_idx)
    labels = list(labels)
    if len(labeled_idx) != len(labels):
        raise ContractError("labeled indices and labels differ in length")
    if len(set(labeled_idx)) != len(labeled_idx):
        raise ContractError("labeled subset contains duplicate indices")
    if any(not 0 <= i < batch for i in labeled_idx):
        raise ContractError("labeled index outside the batch")

    weights = np.zeros((batch, num_classes))
    weights[np.arange(batch)[bp.mask], bp.pseudo[bp.mask]] = lambda3
    for i, y in zip(labeled_idx, labels):
        weights[i, y] += 1.0
    ce_terms = ad.mul(Tensor(weights), ad.log(bp.p_prompt, eps=LOG_EPS))
    return ad.scale(ad.reduce_sum(ce_terms), -1.0 / batch)
