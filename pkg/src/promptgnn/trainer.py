"""Prompt-training loop (frozen model, alternating discriminator/prompt
steps), deterministic inference, and F1/improvement metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ContractError
from .graphdata import Dataset
from .objectives import (
    BatchPredictions,
    DiscriminatorParams,
    THRESHOLD_MODES,
    ThresholdState,
    adversarial_loss,
    consistency_loss,
    diversity_loss,
    discriminator_loss,
    fewshot_consistency_loss,
    total_loss,
    update_threshold,
)
from .optim import Adam
from .prompting import AugmentConfig, PromptParams, make_pair, prompt

LOG_HEADER = ("epoch,consistency,diversity,adversarial,discriminator,"
              "confident_fraction,val_f1")


@dataclass
class PromptConfig:
    """All scalar hyperparameters of a prompt-training run."""

    tau: float = 0.7
    threshold_mode: str = "fixed"
    lambda1: float = 1.0
    lambda2: float = 0.5
    lambda3: float = 1.0
    p_weak: float = 0.1
    p_strong: float = 0.3
    aug_kind: str = "feature_mask"
    n_tokens: int = 10
    lr: float = 0.01
    lr_disc: float = 0.01
    batch_size: int = 32
    epochs: int = 50
    seed: int = 0
    label_fraction: float = 0.0

    def __post_init__(self):
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ConfigError(f"unknown threshold mode {self.threshold_mode!r}")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"tau={self.tau} outside (0, 1]")
        for name in ("lambda1", "lambda2", "lambda3"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("p_weak", "p_strong", "label_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} outside [0,1]")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.n_tokens < 1:
            raise ConfigError("n_tokens must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


@dataclass
class EpochStats:
    epoch: int
    consistency: float
    diversity: float
    adversarial: float
    discriminator: float
    confident_fraction: float
    val_f1: float

    def csv_row(self) -> str:
        return (f"{self.epoch},{self.consistency:.6f},{self.diversity:.6f},"
                f"{self.adversarial:.6f},{self.discriminator:.6f},"
                f"{self.confident_fraction:.6f},{self.val_f1:.6f}")


def _batch_scores(model, graphs) -> np.ndarray:
    rows = [ad.rowwise_softmax(model.forward(g)).data for g in graphs]
    return np.vstack(rows)


def infer_base(model, ds: Dataset) -> np.ndarray:
    """Softmax scores of the unprompted frozen model, one row per graph."""
    return _batch_scores(model, ds.graphs)


def infer(model, params: PromptParams, ds: Dataset) -> np.ndarray:
    """Prompt each graph (no augmentation), run the frozen model, and
    return softmax scores; deterministic."""
    return _batch_scores(model, [prompt(g, params) for g in ds.graphs])


def evaluate(scores, labels) -> tuple:
    """Argmax predictions scored by macro-averaged F1; classes absent from
    both predictions and truth count as F1 = 0."""
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    if scores.size == 0 or labels.size == 0:
        raise ContractError("nothing to evaluate")
    if scores.shape[0] != labels.shape[0]:
        raise ContractError("scores and labels differ in length")
    preds = scores.argmax(axis=1)
    num_classes = scores.shape[1]
    per_class = np.zeros(num_classes)
    for c in range(num_classes):
        tp = int(np.sum((preds == c) & (labels == c)))
        fp = int(np.sum((preds == c) & (labels != c)))
        fn = int(np.sum((preds != c) & (labels == c)))
        denom = 2 * tp + fp + fn
        per_class[c] = 2 * tp / denom if denom else 0.0
    return float(per_class.mean()), per_class


def imp(f1: float, f1_base: float) -> float:
    """Percent relative F1 improvement over the unprompted model, reported
    to one decimal."""
    if f1_base <= 0:
        raise ContractError("baseline F1 must be positive")
    return round(100.0 * (f1 - f1_base) / f1_base, 1)


def train_prompt(model, train_ds: Dataset, val_ds: Dataset, cfg: PromptConfig,
                 log_path=None) -> PromptParams:
    """Train prompt tokens against the frozen model on the (treated as
    unlabeled) target train split; returns the tokens of the epoch with the
    best target-val macro-F1, the initial state included as a candidate.

    Per batch: build weak/prompted pairs, take one discriminator step, then
    one prompt step on the weighted total objective. Validation labels are
    used for selection only; train labels only enter when
    cfg.label_fraction > 0 (the few-shot variant).
    """
    if not train_ds.graphs:
        raise ContractError("target training split is empty")
    if not val_ds.graphs:
        raise ContractError("target validation split is empty")
    if not model.frozen:
        raise ContractError("base model must be frozen before prompt training")

    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    params = PromptParams.init(cfg.n_tokens, train_ds.feature_dim, rng)
    disc = DiscriminatorParams.init(model.hidden_dim, rng)
    opt_prompt = Adam([params.tokens], lr=cfg.lr)
    opt_disc = Adam(disc.params(), lr=cfg.lr_disc)
    state = ThresholdState(cfg.threshold_mode, cfg.tau, model.num_classes)
    aug = AugmentConfig(cfg.aug_kind, cfg.p_weak, cfg.p_strong)

    labeled: dict = {}
    if cfg.label_fraction > 0:
        n_labeled = int(cfg.label_fraction * len(train_ds))
        chosen = rng.choice(len(train_ds), size=n_labeled, replace=False)
        labeled = {int(i): train_ds.graphs[i].y for i in chosen}
        if any(y is None for y in labeled.values()):
            raise ContractError("label_fraction > 0 needs labeled target graphs")

    val_labels = val_ds.labels()
    snapshot_before = model.snapshot()

    best_f1, _ = evaluate(infer(model, params, val_ds), val_labels)
    best_tokens = params.tokens.data.copy()
    history = []

    for epoch in range(1, cfg.epochs + 1):
        state.reset()
        order = rng.permutation(len(train_ds))
        sums = np.zeros(4)
        confident = 0
        for start in range(0, len(order), cfg.batch_size):
            batch_ids = order[start:start + cfg.batch_size]
            pairs = [make_pair(train_ds.graphs[i], aug, params, rng)
                     for i in batch_ids]
            z_weak = ad.concat_rows([model.embed(w) for w, _ in pairs])
            z_prompt = ad.concat_rows([model.embed(p) for _, p in pairs])

            l_disc = discriminator_loss(disc, z_weak, z_prompt)
            ad.backward(l_disc)
            opt_disc.step()
            opt_disc.zero_grad()

            p_weak = ad.rowwise_softmax(model.head(z_weak)).data
            p_prompt = ad.rowwise_softmax(model.head(z_prompt))
            bp = BatchPredictions.build(p_weak, p_prompt)
            bp.apply_threshold(update_threshold(state, bp))

            if labeled:
                in_batch = [(pos, labeled[int(i)])
                            for pos, i in enumerate(batch_ids) if int(i) in labeled]
                l_cons = fewshot_consistency_loss(
                    bp, [p for p, _ in in_batch], [y for _, y in in_batch],
                    cfg.lambda3)
            else:
                l_cons = consistency_loss(bp)
            l_div = diversity_loss(p_prompt)
            l_adv = adversarial_loss(disc, z_prompt)
            loss = total_loss(l_cons, l_div, l_adv, cfg.lambda1, cfg.lambda2)
            ad.backward(loss)
            opt_prompt.step()
            opt_prompt.zero_grad()

            sums += (l_cons.item() * len(batch_ids), l_div.item() * len(batch_ids),
                     l_adv.item() * len(batch_ids), l_disc.item() * len(batch_ids))
            confident += int(bp.mask.sum())

        val_f1, _ = evaluate(infer(model, params, val_ds), val_labels)
        if val_f1 > best_f1:
            best_f1 = val_f1
            best_tokens = params.tokens.data.copy()
        n = len(train_ds)
        history.append(EpochStats(epoch, *(sums / n), confident / n, val_f1))

    for name, before in snapshot_before.items():
        after = dict(model.named_params())[name].data
        if not np.array_equal(before, after):
            raise ContractError(f"frozen parameter {name!r} changed during training")

    if log_path is not None:
        with open(log_path, "w") as fh:
            fh.write(LOG_HEADER + "\n")
            for row in history:
                fh.write(row.csv_row() + "\n")

    params.tokens.data[...] = best_tokens
    params.history = history
    return params
