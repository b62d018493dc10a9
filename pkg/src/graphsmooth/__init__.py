"""Desk-scale toolkit for masked-edge graph self-supervised learning with
explicit control of embedding smoothness, plus downstream evaluation."""

__version__ = "0.1.0"

from .graphs import (Graph, EdgeMaskSplit, NegativeEdgeSet, generate_sbm,
                     gcn_normalize, load_graph, neighbor_mean, node_split,
                     sample_edge_mask, sample_negative_edges, save_graph,
                     smoothness_delta, split_edges_holdout)
from .losses import (LossBreakdown, LossWeights, gaussian_mi, mi_from_mse,
                     mi_from_mse_approx)
from .model import DecoderParams, EncoderParams, decode_dot, decode_edge, init_params
from .train import AdamState, TrainConfig, TrainResult, adam_step, train, train_epoch
from .evaluate import (LabeledSplit, MetricsReport, ProbeConfig, linear_probe,
                       link_pred_eval, rank_metrics, smoothness_report)

__all__ = [
    "Graph", "EdgeMaskSplit", "NegativeEdgeSet", "generate_sbm", "gcn_normalize",
    "load_graph", "neighbor_mean", "node_split", "sample_edge_mask",
    "sample_negative_edges", "save_graph", "smoothness_delta",
    "split_edges_holdout", "LossBreakdown", "LossWeights", "gaussian_mi",
    "mi_from_mse", "mi_from_mse_approx", "DecoderParams", "EncoderParams",
    "decode_dot", "decode_edge", "init_params", "AdamState", "TrainConfig",
    "TrainResult", "adam_step", "train", "train_epoch", "LabeledSplit",
    "MetricsReport", "ProbeConfig", "linear_probe", "link_pred_eval",
    "rank_metrics", "smoothness_report", "__version__",
]
