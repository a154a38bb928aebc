"""Desk-scale lab for training prefix prompts on frozen GNNs under
covariate shift: tiny autodiff engine, graph datasets with property-driven
source/target splitting, GCN/GAT base models, and an unsupervised
consistency-based prompt trainer."""

__version__ = "0.1.0"

from .autodiff import Tensor, backward
from .gnn import BaseModel, PretrainConfig, pretrain
from .graphdata import (
    Dataset,
    Graph,
    class_stats,
    ego_subgraph,
    load_dataset,
    load_tu_dataset,
    save_dataset,
    synth_shift_dataset,
    unify_node_task,
)
from .prompting import AugmentConfig, PromptParams, augment, make_pair, prompt
from .shiftsplit import SplitManifest, build_manifest
from .trainer import PromptConfig, evaluate, imp, infer, infer_base, train_prompt

__all__ = [
    "AugmentConfig", "BaseModel", "Dataset", "Graph", "PromptConfig",
    "PromptParams", "PretrainConfig", "SplitManifest", "Tensor", "augment",
    "backward", "build_manifest", "class_stats", "ego_subgraph", "evaluate",
    "imp", "infer", "infer_base", "load_dataset", "load_tu_dataset",
    "make_pair", "pretrain", "prompt", "save_dataset", "synth_shift_dataset",
    "train_prompt", "unify_node_task",
]
