"""Self-supervised training loop: per-epoch masking, dual encoding, losses,
Adam updates, and full-graph inference at the end.

Each epoch draws a fresh edge mask, encodes the visible subgraph (z_x) and
the complement subgraph of masked-out edges (z_s) with the same encoder
weights, rebuilds the tape, and takes one Adam step on the combined loss.
Inference always uses the full, unmasked adjacency.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, fields, replace
from typing import NamedTuple, Optional

import numpy as np
from threadpoolctl import threadpool_limits

from . import autodiff as ad
from .graphs import (Graph, gcn_normalize, neighbor_mean_operator,
                     sample_edge_mask, sample_negative_edges, smoothness_delta)
from .losses import (LossBreakdown, LossWeights, divergence_loss, minimal_loss,
                     neighbor_loss, structure_loss_edges,
                     structure_loss_features, total_loss)
from .model import (DecoderParams, EncoderParams, encode, init_feature_decoder,
                    init_params)
from .seeding import derive_seed

PRETEXTS = ("edge_recon", "feature_recon")


@dataclass
class TrainConfig:
    mask_ratio: float = 0.7
    lambda1: float = 0.0
    lambda2: float = 0.0
    lambda3: float = 0.0
    margin: float = 0.0
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    epochs: int = 500
    hidden: int = 256
    embed_dim: int = 128
    decoder_hidden: int = 64
    seed: int = 0
    pretext: str = "edge_recon"
    patience: int = 0   # 0 disables loss-plateau early stopping

    def __post_init__(self):
        if not 0.0 <= self.mask_ratio <= 1.0:
            raise ValueError("mask_ratio must lie in [0, 1]")
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError("loss weights must be nonnegative")
        if not -1.0 <= self.margin <= 1.0:
            raise ValueError("margin must lie in [-1, 1]")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if min(self.hidden, self.embed_dim, self.decoder_hidden) < 1:
            raise ValueError("layer widths must be at least 1")
        if self.pretext not in PRETEXTS:
            raise ValueError(f"pretext must be one of {PRETEXTS}")
        if self.patience < 0:
            raise ValueError("patience must be nonnegative")

    def weights(self) -> LossWeights:
        return LossWeights(self.lambda1, self.lambda2, self.lambda3,
                           self.margin, self.mask_ratio)


CORA_DEFAULTS = dict(lambda1=0.0002, lambda2=0.001, lambda3=0.0009,
                     margin=-0.2, mask_ratio=0.7)


def cora_default_config(**overrides) -> TrainConfig:
    merged = {**CORA_DEFAULTS, **overrides}
    return TrainConfig(**merged)


_FIELD_NAMES = {f.name for f in fields(TrainConfig)}


def parse_config_text(text: str, base: Optional[TrainConfig] = None) -> TrainConfig:
    """Parse flat key=value lines; unknown keys are rejected."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _FIELD_NAMES:
            raise ValueError(f"config line {lineno}: unknown key '{key}'")
        if key == "pretext":
            values[key] = val
        elif key in ("epochs", "hidden", "embed_dim", "decoder_hidden",
                     "seed", "patience"):
            values[key] = int(val)
        else:
            values[key] = float(val)
    if base is not None:
        return replace(base, **values)
    return TrainConfig(**values)


# ---------------------------------------------------------------------------
# Adam with decoupled weight decay
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr: float, wd: float) -> None:
    """One bias-corrected update, in place; weight decay applied decoupled."""
    state.step += 1
    t = state.step
    for key, p in params.items():
        g = grads[key]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {p.shape} for {key}")
        m = state.m[key]
        v = state.v[key]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / (1.0 - state.beta1 ** t)
        v_hat = v / (1.0 - state.beta2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
        if wd:
            p -= lr * wd * p


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

class EpochResult(NamedTuple):
    breakdown: LossBreakdown
    z_x: np.ndarray


@dataclass
class TrainHistory:
    breakdowns: list[LossBreakdown] = field(default_factory=list)
    deltas: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.breakdowns)

    def records(self) -> list[dict]:
        out = []
        for i, (b, d, s) in enumerate(zip(self.breakdowns, self.deltas, self.seconds)):
            rec = {"epoch": i}
            rec.update(b.as_dict())
            rec["delta"] = d
            rec["seconds"] = s
            out.append(rec)
        return out


class TrainResult(NamedTuple):
    embeddings: np.ndarray
    params: dict[str, np.ndarray]
    history: TrainHistory


def init_param_dict(d_node: int, cfg: TrainConfig) -> dict[str, np.ndarray]:
    enc, dec = init_params(d_node, cfg.hidden, cfg.embed_dim, cfg.decoder_hidden,
                           derive_seed(cfg.seed, "init"))
    params = {"w1": enc.w1, "w2": enc.w2, "v1": dec.v1, "v2": dec.v2}
    if cfg.pretext == "feature_recon":
        params["wf"] = init_feature_decoder(
            cfg.embed_dim, d_node, derive_seed(cfg.seed, "init-feature")).w
    return params


def assemble_losses(graph: Graph, leaves: dict[str, ad.Tensor], cfg: TrainConfig,
                    epoch_seed: int, neighbor_op=None, full_adj=None):
    """Build one epoch's loss graph from parameter leaves.

    Returns (total tensor, LossBreakdown, z_x tensor). Deterministic in
    (graph, cfg, epoch_seed), so it doubles as the target of the
    finite-difference check.
    """
    n = graph.num_nodes
    if neighbor_op is None:
        neighbor_op = neighbor_mean_operator(graph)

    if cfg.pretext == "edge_recon":
        split = sample_edge_mask(graph, cfg.mask_ratio, derive_seed(epoch_seed, "mask"))
        if len(split.masked) == 0:
            raise ValueError(
                "edge pretext has no masked edges to reconstruct "
                f"(mask_ratio={cfg.mask_ratio}); raise the mask ratio")
        x = ad.constant(graph.features)
        z_x = encode(gcn_normalize(split.visible, n), x, leaves["w1"], leaves["w2"])
        z_s = encode(gcn_normalize(split.masked, n), x, leaves["w1"], leaves["w2"])
        neg = sample_negative_edges(graph, len(split.masked),
                                    derive_seed(epoch_seed, "negatives")).pairs
        l_st = structure_loss_edges(z_x, split.masked, neg, leaves["v1"], leaves["v2"])
    else:
        if full_adj is None:
            full_adj = gcn_normalize(graph.undirected_pairs(), n)
        rng = np.random.default_rng(derive_seed(epoch_seed, "feature-mask"))
        masked_nodes = np.flatnonzero(rng.random(n) < cfg.mask_ratio)
        if len(masked_nodes) == 0:
            raise ValueError(
                "feature pretext masked no nodes "
                f"(mask_ratio={cfg.mask_ratio}); raise the mask ratio")
        x_vis = graph.features.copy()
        x_vis[masked_nodes] = 0.0
        x_msk = np.zeros_like(graph.features)
        x_msk[masked_nodes] = graph.features[masked_nodes]
        z_x = encode(full_adj, ad.constant(x_vis), leaves["w1"], leaves["w2"])
        z_s = encode(full_adj, ad.constant(x_msk), leaves["w1"], leaves["w2"])
        l_st = structure_loss_features(z_x, masked_nodes, graph.features, leaves["wf"])

    active = graph.degrees > 0
    z_neigh = ad.spmm(neighbor_op, z_x)
    l_nei = neighbor_loss(z_x, z_neigh, active)
    l_min = minimal_loss(z_x, z_s)
    l_div = divergence_loss(z_x, z_neigh, cfg.margin, active)
    total, breakdown = total_loss(l_st, l_nei, l_min, l_div, cfg.weights())
    return total, breakdown, z_x


def train_epoch(graph: Graph, params: dict[str, np.ndarray], state: AdamState,
                cfg: TrainConfig, epoch_seed: int,
                neighbor_op=None, full_adj=None) -> EpochResult:
    """One masked-pretext optimization step; returns the loss breakdown and
    the epoch's visible-graph embeddings."""
    tape = ad.Tape()
    leaves = {k: tape.leaf(v) for k, v in params.items()}
    total, breakdown, z_x = assemble_losses(graph, leaves, cfg, epoch_seed,
                                            neighbor_op=neighbor_op,
                                            full_adj=full_adj)
    grad_map = tape.backward(total)
    grads = {k: grad_map[t] for k, t in leaves.items()}
    adam_step(params, grads, state, cfg.learning_rate, cfg.weight_decay)
    return EpochResult(breakdown, z_x.values)


def train(graph: Graph, cfg: TrainConfig) -> TrainResult:
    """Run the configured number of epochs and encode the full graph.

    Linear algebra is pinned to one BLAS thread for the whole run: the
    matrices are small enough that threading only adds overhead, and a
    fixed thread count keeps results bit-reproducible.
    """
    if graph.ordered_edge_count == 0:
        raise ValueError("training requires a graph with at least one edge")
    params = init_param_dict(graph.features.shape[1], cfg)
    state = AdamState.for_params(params)
    neighbor_op = neighbor_mean_operator(graph)
    full_adj = gcn_normalize(graph.undirected_pairs(), graph.num_nodes)

    history = TrainHistory()
    best_total = np.inf
    stale = 0
    with threadpool_limits(limits=1):
        for epoch in range(cfg.epochs):
            started = time.perf_counter()
            result = train_epoch(graph, params, state, cfg,
                                 derive_seed(cfg.seed, "epoch", epoch),
                                 neighbor_op=neighbor_op, full_adj=full_adj)
            history.breakdowns.append(result.breakdown)
            history.deltas.append(smoothness_delta(graph, result.z_x))
            history.seconds.append(time.perf_counter() - started)
            if cfg.patience:
                if result.breakdown.total < best_total - 1e-12:
                    best_total = result.breakdown.total
                    stale = 0
                else:
                    stale += 1
                    if stale >= cfg.patience:
                        break

        enc = EncoderParams(params["w1"], params["w2"])
        from .model import encode_values

        embeddings = encode_values(full_adj, graph.features, enc)
    return TrainResult(embeddings, params, history)


def decoder_from_params(params: dict[str, np.ndarray]) -> DecoderParams:
    return DecoderParams(params["v1"], params["v2"])
