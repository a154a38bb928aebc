import dataclasses

import numpy as np
import pytest

from promptgnn import autodiff as ad
from promptgnn.errors import ConfigError, ContractError
from promptgnn.gnn import BaseModel, PretrainConfig, pretrain
from promptgnn.graphdata import Dataset, synth_shift_dataset
from promptgnn.objectives import (
    BatchPredictions,
    DiscriminatorParams,
    adversarial_loss,
    consistency_loss,
    diversity_loss,
    total_loss,
)
from promptgnn.prompting import PromptParams, prompt
from promptgnn.trainer import (
    PromptConfig,
    evaluate,
    imp,
    infer,
    infer_base,
    train_prompt,
)


@pytest.fixture(scope="module")
def frozen_setup():
    ds = synth_shift_dataset(90, 10, 2, 6, (0.6, 0.95), seed=10)
    train = ds.subset(range(60), "train")
    val = ds.subset(range(60, 75), "val")
    test = ds.subset(range(75, 90), "test")
    model = BaseModel.create("gcn", 6, 2, hidden_dim=12, seed=0)
    model, _ = pretrain(model, train, val,
                        PretrainConfig(lr=0.01, epochs=25, batch_size=16, seed=1))
    return model, train, val, test


class TestEvaluate:
    def test_perfect_predictions(self):
        scores = np.array([[0.9, 0.1], [0.2, 0.8]])
        f1, per_class = evaluate(scores, [0, 1])
        assert f1 == 1.0
        assert per_class.tolist() == [1.0, 1.0]

    def test_collapsed_binary_predictions(self):
        scores = np.tile([[0.9, 0.1]], (10, 1))
        labels = [0] * 5 + [1] * 5
        f1, per_class = evaluate(scores, labels)
        assert per_class[0] == pytest.approx(2 / 3)
        assert per_class[1] == 0.0
        assert f1 == pytest.approx(1 / 3)

    def test_single_correct_sample(self):
        f1, per_class = evaluate(np.array([[0.8, 0.2]]), [0])
        assert per_class[0] == 1.0
        assert per_class[1] == 0.0  # absent class counted at zero

    def test_empty_rejected(self):
        with pytest.raises(ContractError):
            evaluate(np.zeros((0, 2)), [])


class TestImp:
    def test_published_rows(self):
        assert imp(49.1, 47.7) == pytest.approx(2.9, abs=0.05)
        assert imp(56.0, 51.8) == pytest.approx(8.1, abs=0.05)

    def test_no_change_is_zero(self):
        assert imp(0.42, 0.42) == 0.0

    def test_zero_baseline_rejected(self):
        with pytest.raises(ContractError):
            imp(0.5, 0.0)


class TestInfer:
    def test_zero_prompt_matches_base_model_exactly(self, frozen_setup):
        model, _, _, test = frozen_setup
        zero = PromptParams.zeros(test.feature_dim)
        assert np.array_equal(infer(model, zero, test), infer_base(model, test))

    def test_repeated_calls_bit_identical(self, frozen_setup):
        model, _, _, test = frozen_setup
        params = PromptParams.init(3, test.feature_dim, np.random.default_rng(2))
        assert np.array_equal(infer(model, params, test),
                              infer(model, params, test))

    def test_rows_are_distributions(self, frozen_setup):
        model, _, _, test = frozen_setup
        scores = infer_base(model, test)
        assert scores.shape == (len(test), 2)
        assert np.abs(scores.sum(axis=1) - 1.0).max() < 1e-9


def initial_tokens(cfg, feature_dim):
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    return PromptParams.init(cfg.n_tokens, feature_dim, rng).tokens.data


class TestTrainPrompt:
    def test_zero_lr_keeps_initial_tokens_and_base_f1(self, frozen_setup):
        model, _, val, test = frozen_setup
        cfg = PromptConfig(n_tokens=2, lr=0.0, lr_disc=0.01, epochs=3,
                           batch_size=8, seed=7)
        params = train_prompt(model, test, val, cfg)
        assert np.array_equal(params.tokens.data, initial_tokens(cfg, 6))
        val_f1, _ = evaluate(infer(model, params, val), val.labels())
        base_f1, _ = evaluate(infer_base(model, val), val.labels())
        assert val_f1 == base_f1

    def test_full_threshold_without_regularizers_is_inert(self, frozen_setup):
        model, _, val, test = frozen_setup
        cfg = PromptConfig(n_tokens=2, tau=1.0, lambda1=0.0, lambda2=0.0,
                           lr=0.05, epochs=3, batch_size=8, seed=8)
        params = train_prompt(model, test, val, cfg)
        assert np.array_equal(params.tokens.data, initial_tokens(cfg, 6))
        assert all(row.confident_fraction == 0.0 for row in params.history)

    def test_deterministic_over_reruns(self, frozen_setup):
        model, _, val, test = frozen_setup
        cfg = PromptConfig(n_tokens=3, epochs=4, batch_size=8, seed=9)
        first = train_prompt(model, test, val, cfg)
        second = train_prompt(model, test, val, cfg)
        assert np.array_equal(first.tokens.data, second.tokens.data)
        assert np.array_equal(infer(model, first, test), infer(model, second, test))

    def test_frozen_model_bit_identical(self, frozen_setup):
        model, _, val, test = frozen_setup
        before = model.snapshot()
        cfg = PromptConfig(n_tokens=3, epochs=3, batch_size=8, seed=10)
        train_prompt(model, test, val, cfg)
        after = model.snapshot()
        assert all(np.array_equal(before[k], after[k]) for k in before)

    def test_requires_frozen_model(self, frozen_setup):
        model, _, val, test = frozen_setup
        model.unfreeze()
        try:
            with pytest.raises(ContractError):
                train_prompt(model, test, val, PromptConfig(epochs=1, seed=0))
        finally:
            model.freeze()

    def test_empty_train_rejected(self, frozen_setup):
        model, _, val, _ = frozen_setup
        empty = Dataset([], 2, 6, "empty")
        with pytest.raises(ContractError):
            train_prompt(model, empty, val, PromptConfig(epochs=1, seed=0))

    def test_constant_shift_recovery_direction(self, frozen_setup):
        # the one-token prompt can represent the inverse shift exactly; aim
        # the shift along the class-mean axis so it actually hurts
        model, train, val, test = frozen_setup
        mu = {c: np.mean([np.asarray(g.x).mean(0) for g in train.graphs if g.y == c], 0)
              for c in (0, 1)}
        shift = mu[0] - mu[1]
        shift *= 0.6 / np.linalg.norm(shift)
        move = lambda ds: Dataset(
            [dataclasses.replace(g, x=np.asarray(g.x) + shift) for g in ds.graphs],
            ds.num_classes, ds.feature_dim, "moved")
        base_f1, _ = evaluate(infer_base(model, move(test)), test.labels())
        cfg = PromptConfig(n_tokens=1, tau=0.7, lambda1=1.0, lambda2=0.5,
                           p_strong=0.2, lr=0.03, epochs=40, batch_size=16, seed=11,
                           threshold_mode="class_dynamic")
        params = train_prompt(model, move(train), move(val), cfg)
        token = params.tokens.data[0]
        cos = float(token @ (-shift) / (np.linalg.norm(token) * np.linalg.norm(shift)))
        assert cos > 0.5
        prompted_f1, _ = evaluate(infer(model, params, move(test)), test.labels())
        assert prompted_f1 >= base_f1

    def test_writes_epoch_log(self, frozen_setup, tmp_path):
        model, _, val, test = frozen_setup
        cfg = PromptConfig(n_tokens=2, epochs=3, batch_size=8, seed=12)
        log = tmp_path / "log.csv"
        train_prompt(model, test, val, cfg, log_path=log)
        lines = log.read_text().strip().splitlines()
        assert lines[0].split(",")[0] == "epoch"
        assert len(lines) == 4
        assert lines[1].split(",")[0] == "1"

    def test_fewshot_uses_labels(self, frozen_setup):
        model, train, val, _ = frozen_setup
        cfg = PromptConfig(n_tokens=2, epochs=2, batch_size=8, seed=13,
                           label_fraction=0.5, lambda3=0.5)
        params = train_prompt(model, train, val, cfg)
        assert params.tokens.data.shape == (2, 6)

    def test_class_dynamic_mode_runs(self, frozen_setup):
        model, train, val, _ = frozen_setup
        cfg = PromptConfig(n_tokens=2, epochs=2, batch_size=8, seed=14,
                           threshold_mode="class_dynamic", tau=0.5)
        params = train_prompt(model, train, val, cfg)
        assert len(params.history) == 2


class TestGradientIsolation:
    def test_prompt_step_touches_only_tokens(self, frozen_setup):
        model, train, _, _ = frozen_setup
        rng = np.random.default_rng(15)
        params = PromptParams.init(2, 6, rng)
        disc = DiscriminatorParams.init(model.hidden_dim, rng)
        graphs = train.graphs[:4]
        z_weak = ad.concat_rows([model.embed(g) for g in graphs])
        z_prompt = ad.concat_rows([model.embed(prompt(g, params)) for g in graphs])
        p_weak = ad.rowwise_softmax(model.head(z_weak)).data
        p_prompt = ad.rowwise_softmax(model.head(z_prompt))
        bp = BatchPredictions.build(p_weak, p_prompt)
        bp.apply_threshold(np.full(2, 0.5))
        loss = total_loss(consistency_loss(bp), diversity_loss(p_prompt),
                          adversarial_loss(disc, z_prompt), 1.0, 0.5)
        ad.backward(loss)
        assert params.tokens.grad is not None
        assert all(p.grad is None for p in model.params())
        assert all(p.grad is None for p in disc.params())

    def test_discriminator_step_touches_only_discriminator(self, frozen_setup):
        from promptgnn.objectives import discriminator_loss

        model, train, _, _ = frozen_setup
        rng = np.random.default_rng(16)
        params = PromptParams.init(2, 6, rng)
        disc = DiscriminatorParams.init(model.hidden_dim, rng)
        graphs = train.graphs[:4]
        z_weak = ad.concat_rows([model.embed(g) for g in graphs])
        z_prompt = ad.concat_rows([model.embed(prompt(g, params)) for g in graphs])
        ad.backward(discriminator_loss(disc, z_weak, z_prompt))
        assert all(p.grad is not None for p in disc.params())
        assert params.tokens.grad is None
        assert all(p.grad is None for p in model.params())


class TestPromptConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            PromptConfig(tau=0.0)
        with pytest.raises(ConfigError):
            PromptConfig(lambda1=-0.1)
        with pytest.raises(ConfigError):
            PromptConfig(p_weak=1.2)
        with pytest.raises(ConfigError):
            PromptConfig(epochs=0)
        with pytest.raises(ConfigError):
            PromptConfig(threshold_mode="adaptive")
