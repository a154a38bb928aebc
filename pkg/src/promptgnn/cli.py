"""Command-line front end: dataset synthesis, property-weighted splitting,
pretraining, prompt training, evaluation, embedding export, and seeded
multi-trial experiment runs."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    ContractError,
    DataFormatError,
    DimensionError,
    NumericError,
)
from .gnn import BaseModel, PretrainConfig, pretrain
from .graphdata import Dataset, load_dataset, save_dataset, synth_shift_dataset, unify_node_task
from .prompting import PromptParams, prompt
from .shiftsplit import (
    GRAPH_PROPERTIES,
    NODE_PROPERTIES,
    PROPERTIES,
    SplitManifest,
    build_manifest,
    graph_property_scores,
    node_property_scores,
)
from .trainer import PromptConfig, evaluate, imp, infer, infer_base, train_prompt

OUTDIR_ENV = "PROMPTGNN_OUT"

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

DEFAULT_RATIOS = {"graph": (0.6, 0.1, 0.3), "node": (0.3, 0.1, 0.6)}


@dataclass
class ExperimentConfig:
    """One experiment: dataset (path or synthesis spec), shift, base model,
    prompt hyperparameters, and the seed/trial protocol. Serializes to a
    flat key = value text file; every field can be overridden by the
    matching CLI flag."""

    dataset: str = "synth"
    task: str = "graph"
    shift_property: str = "edge_homophily"
    base_gnn: str = "gcn"
    hidden_dim: int = 32
    num_layers: int = 2
    pretrain_lr: float = 0.01
    pretrain_epochs: int = 60
    pretrain_batch_size: int = 16
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
    label_fraction: float = 0.0
    ratio_train: float = -1.0
    ratio_val: float = -1.0
    ratio_test: float = -1.0
    n_seeds: int = 10
    n_trials: int = 5
    base_seed: int = 0
    outdir: str = "results"
    synth_graphs: int = 300
    synth_nodes: int = 10
    synth_classes: int = 2
    synth_dim: int = 8
    synth_homophily_lo: float = 0.6
    synth_homophily_hi: float = 0.95
    synth_seed: int = 100

    def __post_init__(self):
        if self.task not in ("graph", "node"):
            raise ConfigError(f"unknown task {self.task!r}")
        if self.base_gnn not in ("gcn", "gat"):
            raise ConfigError(f"unknown base model {self.base_gnn!r}")
        if self.shift_property not in PROPERTIES:
            raise ConfigError(f"unknown property {self.shift_property!r}")
        if self.n_seeds < 1 or self.n_trials < 1:
            raise ConfigError("n_seeds and n_trials must be >= 1")
        # ratio sentinel -1 means "default for the task"
        defaults = DEFAULT_RATIOS[self.task]
        if self.ratio_train < 0:
            self.ratio_train, self.ratio_val, self.ratio_test = defaults

    @property
    def ratios(self) -> tuple:
        return (self.ratio_train, self.ratio_val, self.ratio_test)

    def prompt_config(self, seed: int) -> PromptConfig:
        return PromptConfig(
            tau=self.tau, threshold_mode=self.threshold_mode,
            lambda1=self.lambda1, lambda2=self.lambda2, lambda3=self.lambda3,
            p_weak=self.p_weak, p_strong=self.p_strong, aug_kind=self.aug_kind,
            n_tokens=self.n_tokens, lr=self.lr, lr_disc=self.lr_disc,
            batch_size=self.batch_size, epochs=self.epochs, seed=seed,
            label_fraction=self.label_fraction)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            lines.append(f"{f.name} = {getattr(self, f.name)}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise DataFormatError(f"cannot read config {path}: {exc}") from exc
        values = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = line.partition("=")
            values[key.strip()] = raw.strip()
        return cls.from_mapping(values)

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            kind = types[key]
            try:
                kwargs[key] = str(raw) if kind == "str" else (
                    int(raw) if kind == "int" else float(raw))
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
        return cls(**kwargs)


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; this artifact reserves 2 for data
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _ratios_arg(raw: str) -> tuple:
    parts = [float(v) for v in raw.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("ratios need three comma-separated values")
    return tuple(parts)


def _load_samples(dataset_path: str, task: str) -> tuple:
    """Load a dataset and return (samples, per-sample property scores
    callable). Node tasks unify the single labeled graph into ego
    subgraphs; scores come from the original graph's nodes."""
    ds = load_dataset(dataset_path)
    if task == "node":
        if len(ds.graphs) != 1:
            raise DataFormatError("node task expects a dataset with one graph")
        base_graph = ds.graphs[0]
        if base_graph.node_y is None:
            raise DataFormatError("node task needs node labels")
        samples = unify_node_task(base_graph, k=2)
        return samples, lambda prop: node_property_scores(base_graph, prop)
    return ds, lambda prop: graph_property_scores(ds, prop)


def _check_property(task: str, prop: str) -> None:
    if task == "graph" and prop in NODE_PROPERTIES:
        raise ConfigError(f"{prop} is a node-task property")
    if task == "node" and prop in GRAPH_PROPERTIES:
        raise ConfigError(f"{prop} is a graph-task property")


def _side_subsets(ds: Dataset, manifest: SplitManifest, side: str) -> dict:
    return {role: ds.subset(manifest.ids(side, role), f"{side}-{role}")
            for role in ("train", "val", "test")}


def cmd_synth(args) -> int:
    ds = synth_shift_dataset(args.n_graphs, args.nodes, args.classes, args.dim,
                             (args.homophily_lo, args.homophily_hi), args.seed)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} graphs ({ds.num_classes} classes, "
          f"{ds.feature_dim}-d features) to {args.out}")
    return 0


def cmd_split(args) -> int:
    _check_property(args.task, args.prop)
    samples, score_fn = _load_samples(args.dataset, args.task)
    ratios = args.ratios if args.ratios else DEFAULT_RATIOS[args.task]
    scores = score_fn(args.prop)
    manifest = build_manifest(scores, args.prop, args.seed, ratios)
    manifest.save(args.out)
    src = scores[manifest.source_ids].mean()
    tgt = scores[manifest.target_ids].mean()
    print(f"split {len(scores)} samples: |source|={len(manifest.source_ids)} "
          f"|target|={len(manifest.target_ids)}")
    print(f"mean {args.prop}: source {src:.4f} target {tgt:.4f}")
    return 0


def cmd_pretrain(args) -> int:
    manifest = SplitManifest.load(args.manifest)
    _check_property(args.task, manifest.shift_property)
    samples, _ = _load_samples(args.dataset, args.task)
    source = _side_subsets(samples, manifest, "source")
    model = BaseModel.create(args.base_gnn, samples.feature_dim,
                             samples.num_classes, hidden_dim=args.hidden_dim,
                             num_layers=args.num_layers, seed=args.seed)
    cfg = PretrainConfig(lr=args.lr, epochs=args.epochs,
                         batch_size=args.batch_size, seed=args.seed)
    model, val_f1 = pretrain(model, source["train"], source["val"], cfg)
    test_f1, _ = evaluate(infer_base(model, source["test"]),
                          source["test"].labels())
    model.save(args.out)
    print(f"source val F1 {100 * val_f1:.2f}  source test F1 {100 * test_f1:.2f}")
    print(f"wrote checkpoint to {args.out}")
    return 0


def cmd_prompt_train(args) -> int:
    manifest = SplitManifest.load(args.manifest)
    samples, _ = _load_samples(args.dataset, args.task)
    target = _side_subsets(samples, manifest, "target")
    model = BaseModel.load(args.model)
    model.freeze()
    cfg = PromptConfig(
        tau=args.tau, threshold_mode=args.threshold_mode, lambda1=args.lambda1,
        lambda2=args.lambda2, lambda3=args.lambda3, p_weak=args.p_weak,
        p_strong=args.p_strong, aug_kind=args.aug_kind, n_tokens=args.n_tokens,
        lr=args.lr, lr_disc=args.lr_disc, batch_size=args.batch_size,
        epochs=args.epochs, seed=args.seed, label_fraction=args.label_fraction)
    params = train_prompt(model, target["train"], target["val"], cfg,
                          log_path=args.log)
    params.save(args.out)
    val_f1, _ = evaluate(infer(model, params, target["val"]),
                         target["val"].labels())
    print(f"target val F1 {100 * val_f1:.2f}")
    print(f"wrote prompt to {args.out}")
    return 0


def cmd_eval(args) -> int:
    manifest = SplitManifest.load(args.manifest)
    samples, _ = _load_samples(args.dataset, args.task)
    subset = samples.subset(manifest.ids(args.side, args.role))
    model = BaseModel.load(args.model)
    model.freeze()
    if args.prompt:
        scores = infer(model, PromptParams.load(args.prompt), subset)
    else:
        scores = infer_base(model, subset)
    f1, per_class = evaluate(scores, subset.labels())
    per = " ".join(f"{100 * v:.2f}" for v in per_class)
    print(f"{args.side} {args.role} macro F1 {100 * f1:.2f} (per class: {per})")
    return 0


def cmd_export_embeddings(args) -> int:
    for path, label in ((args.model, "model"), (args.prompt, "prompt")):
        if not Path(path).exists():
            raise ConfigError(f"missing {label} checkpoint {path}")
    manifest = SplitManifest.load(args.manifest)
    samples, _ = _load_samples(args.dataset, args.task)
    model = BaseModel.load(args.model)
    model.freeze()
    params = PromptParams.load(args.prompt)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "split", "label", "variant"]
                        + [f"z{i}" for i in range(model.hidden_dim)])
        for side in ("source", "target"):
            for i in manifest.ids(side):
                g = samples.graphs[i]
                plain = model.embed(g).data[0]
                prompted = model.embed(prompt(g, params)).data[0]
                writer.writerow([i, side, g.y, "non-prompted"]
                                + [f"{v:.10g}" for v in plain])
                writer.writerow([i, side, g.y, "prompted"]
                                + [f"{v:.10g}" for v in prompted])
    print(f"wrote embeddings to {args.out}")
    return 0


def _trial_seeds(seed: int, trial: int) -> tuple:
    state = np.random.SeedSequence(entropy=seed, spawn_key=(trial,))
    return tuple(int(v) for v in state.generate_state(3))


def _summary(rows: list, method: str) -> tuple:
    f1s = [r[3] for r in rows if r[2] == method]
    imps = [r[4] for r in rows if r[2] == method]
    mean, std = float(np.mean(f1s)), float(np.std(f1s))
    return f"{mean:.1f}±{std:.1f}", f"{float(np.mean(imps)):.1f}"


def cmd_run(args) -> int:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    overrides = {key: value for key, value in vars(args).items()
                 if key in {f.name for f in dataclasses.fields(ExperimentConfig)}
                 and value is not None}
    if overrides:
        merged = {f.name: getattr(cfg, f.name)
                  for f in dataclasses.fields(ExperimentConfig)}
        merged.update(overrides)
        cfg = ExperimentConfig.from_mapping(
            {k: str(v) for k, v in merged.items()})
    _check_property(cfg.task, cfg.shift_property)

    outdir = Path(os.environ.get(OUTDIR_ENV, cfg.outdir))
    outdir.mkdir(parents=True, exist_ok=True)

    if cfg.dataset == "synth":
        if cfg.task != "graph":
            raise ConfigError("synthetic datasets are graph-task only")
        samples = synth_shift_dataset(
            cfg.synth_graphs, cfg.synth_nodes, cfg.synth_classes, cfg.synth_dim,
            (cfg.synth_homophily_lo, cfg.synth_homophily_hi), cfg.synth_seed)
        scores = graph_property_scores(samples, cfg.shift_property)
    else:
        samples, score_fn = _load_samples(cfg.dataset, cfg.task)
        scores = score_fn(cfg.shift_property)

    rows = []
    for seed_index in range(cfg.n_seeds):
        seed = cfg.base_seed + seed_index
        manifest = build_manifest(scores, cfg.shift_property, seed, cfg.ratios)
        source = _side_subsets(samples, manifest, "source")
        target = _side_subsets(samples, manifest, "target")
        for trial in range(cfg.n_trials):
            model_seed, pre_seed, prompt_seed = _trial_seeds(seed, trial)
            try:
                model = BaseModel.create(
                    cfg.base_gnn, samples.feature_dim, samples.num_classes,
                    hidden_dim=cfg.hidden_dim, num_layers=cfg.num_layers,
                    seed=model_seed)
                model, _ = pretrain(model, source["train"], source["val"],
                                    PretrainConfig(lr=cfg.pretrain_lr,
                                                   epochs=cfg.pretrain_epochs,
                                                   batch_size=cfg.pretrain_batch_size,
                                                   seed=pre_seed))
                test_labels = target["test"].labels()
                base_f1, _ = evaluate(infer_base(model, target["test"]), test_labels)
                params = train_prompt(model, target["train"], target["val"],
                                      cfg.prompt_config(prompt_seed))
                prompt_f1, _ = evaluate(infer(model, params, target["test"]),
                                        test_labels)
            except (ContractError, NumericError, DimensionError) as exc:
                print(f"seed {seed} trial {trial} failed: {exc}", file=sys.stderr)
                continue
            base_pct = round(100 * base_f1, 2)
            prompt_pct = round(100 * prompt_f1, 2)
            rows.append((seed, trial, "base", base_pct, 0.0))
            rows.append((seed, trial, "ugprompt", prompt_pct,
                         imp(prompt_pct, base_pct)))

    results = outdir / "results.csv"
    with open(results, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "trial", "method", "f1", "imp"])
        for row in rows:
            writer.writerow(row)
        for method in ("base", "ugprompt"):
            if any(r[2] == method for r in rows):
                f1_cell, imp_cell = _summary(rows, method)
                writer.writerow(["summary", "", method, f1_cell, imp_cell])
    (outdir / "config.txt").write_text(cfg.to_text())
    print(f"wrote {len(rows)} result rows to {results}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="promptgnn",
                     description="prompt training for frozen GNNs under shift")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic shifted dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n-graphs", type=int, default=300)
    p.add_argument("--nodes", type=int, default=10)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--homophily-lo", type=float, default=0.6)
    p.add_argument("--homophily-hi", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="property-weighted source/target split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--task", choices=("graph", "node"), default="graph")
    p.add_argument("--property", dest="prop", required=True, choices=PROPERTIES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratios", type=_ratios_arg, default=None,
                   help="train,val,test (default per task)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("pretrain", help="supervised training on the source side")
    p.add_argument("--dataset", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--task", choices=("graph", "node"), default="graph")
    p.add_argument("--base-gnn", choices=("gcn", "gat"), default="gcn")
    p.add_argument("--hidden-dim", type=int, default=32)
    p.add_argument("--num-layers", type=int, default=2)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("prompt-train", help="train prompt tokens on the target side")
    p.add_argument("--dataset", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--task", choices=("graph", "node"), default="graph")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", default=None)
    p.add_argument("--tau", type=float, default=0.7)
    p.add_argument("--threshold-mode", choices=("fixed", "class_dynamic"),
                   default="fixed")
    p.add_argument("--lambda1", type=float, default=1.0)
    p.add_argument("--lambda2", type=float, default=0.5)
    p.add_argument("--lambda3", type=float, default=1.0)
    p.add_argument("--p-weak", type=float, default=0.1)
    p.add_argument("--p-strong", type=float, default=0.3)
    p.add_argument("--aug-kind", choices=("feature_mask", "edge_drop"),
                   default="feature_mask")
    p.add_argument("--n-tokens", type=int, default=10)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--lr-disc", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--label-fraction", type=float, default=0.0)
    p.set_defaults(func=cmd_prompt_train)

    p = sub.add_parser("eval", help="macro F1 of a checkpoint on one split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--task", choices=("graph", "node"), default="graph")
    p.add_argument("--model", required=True)
    p.add_argument("--prompt", default=None)
    p.add_argument("--side", choices=("source", "target"), default="target")
    p.add_argument("--role", choices=("train", "val", "test"), default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-embeddings",
                       help="dump encoder embeddings for every sample")
    p.add_argument("--dataset", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--task", choices=("graph", "node"), default="graph")
    p.add_argument("--model", required=True)
    p.add_argument("--prompt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_embeddings)

    p = sub.add_parser("run", help="full seeded experiment to a results CSV")
    p.add_argument("--config", default=None)
    for f in dataclasses.fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        kind = {"str": str, "int": int, "float": float}[f.type]
        p.add_argument(flag, type=kind, default=None, dest=f.name)
    p.set_defaults(func=cmd_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
