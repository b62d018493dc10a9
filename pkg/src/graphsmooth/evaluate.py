"""Downstream evaluation on frozen embeddings.

Node classification uses a multinomial logistic probe trained by
full-batch gradient descent (300 iterations, learning rate 0.1, L2 1e-4,
embeddings centered and globally scaled on the train split), selected on
validation accuracy. Link prediction scores edges with either the trained MLP
decoder or a plain dot product, then ranks with AUC and average
precision. AUC counts pairwise wins with half credit for ties; AP
averages precision at each positive's rank under a stable
(-score, index) order, which pins down its tie behavior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .graphs import Graph, smoothness_delta
from .model import DecoderParams, decode_dot_scores, decode_edge_scores

NEG_INF = float("-inf")


@dataclass
class LabeledSplit:
    labels: np.ndarray
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.train_idx = np.asarray(self.train_idx, dtype=np.int64)
        self.val_idx = np.asarray(self.val_idx, dtype=np.int64)
        self.test_idx = np.asarray(self.test_idx, dtype=np.int64)
        n = len(self.labels)
        joined = np.concatenate([self.train_idx, self.val_idx, self.test_idx])
        if len(np.unique(joined)) != len(joined):
            raise ValueError("split index sets must be disjoint")
        if len(joined) and (joined.min() < 0 or joined.max() >= n):
            raise ValueError("split index out of range")


@dataclass
class ProbeConfig:
    iterations: int = 300
    learning_rate: float = 0.1
    l2: float = 1e-4
    # center on the train mean and divide by the global train std; a
    # rotation-invariant scaling, so probing commutes with orthogonal maps
    normalize: bool = True


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def linear_probe(z: np.ndarray, split: LabeledSplit,
                 cfg: ProbeConfig = ProbeConfig()) -> float:
    """Test accuracy (%) of a logistic probe selected on validation accuracy."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] != len(split.labels):
        raise ValueError("embedding rows must match label count")
    for name, idx in [("train", split.train_idx), ("val", split.val_idx),
                      ("test", split.test_idx)]:
        if len(idx) == 0:
            raise ValueError(f"{name} split is empty")
    classes, y_all = np.unique(split.labels, return_inverse=True)
    if len(np.unique(y_all[split.train_idx])) < 2:
        raise ValueError("train split must contain at least two classes")

    if cfg.normalize:
        mu = z[split.train_idx].mean(axis=0)
        scale = float(np.sqrt(np.mean((z[split.train_idx] - mu) ** 2)))
        z = (z - mu) / max(scale, 1e-8)

    n_classes = len(classes)
    x_tr = z[split.train_idx]
    y_tr = y_all[split.train_idx]
    onehot = np.zeros((len(y_tr), n_classes))
    onehot[np.arange(len(y_tr)), y_tr] = 1.0
    w = np.zeros((z.shape[1], n_classes))
    b = np.zeros((1, n_classes))

    def accuracy(idx, w, b):
        pred = np.argmax(z[idx] @ w + b, axis=1)
        return float(np.mean(pred == y_all[idx]))

    best_val = -1.0
    best = (w.copy(), b.copy())
    for _ in range(cfg.iterations):
        probs = _softmax(x_tr @ w + b)
        err = (probs - onehot) / len(y_tr)
        w -= cfg.learning_rate * (x_tr.T @ err + cfg.l2 * w)
        b -= cfg.learning_rate * err.sum(axis=0, keepdims=True)
        val_acc = accuracy(split.val_idx, w, b)
        if val_acc > best_val:
            best_val = val_acc
            best = (w.copy(), b.copy())
    return 100.0 * accuracy(split.test_idx, *best)


# ---------------------------------------------------------------------------
# ranking metrics
# ---------------------------------------------------------------------------

def rank_metrics(scores, labels) -> tuple[float, float]:
    """(AUC %, AP %) of binary labels under real-valued scores."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1).astype(np.int64)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have equal length")
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ranking metrics need both classes present")

    # AUC: average ranks over ascending scores give every tied pair 0.5 credit
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    wins = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    auc = 100.0 * wins / (n_pos * n_neg)

    # AP: precision at each positive's rank, descending score, ties by index
    desc = np.lexsort((np.arange(len(scores)), -scores))
    hits = labels[desc] == 1
    cum_pos = np.cumsum(hits)
    precisions = cum_pos[hits] / (np.flatnonzero(hits) + 1.0)
    ap = 100.0 * float(precisions.mean())
    return float(auc), ap


def link_pred_eval(z: np.ndarray, pos: np.ndarray, neg: np.ndarray,
                   mode: str, dec: Optional[DecoderParams] = None) -> tuple[float, float]:
    """AUC/AP of held-out edges vs negatives under the chosen scorer."""
    pos = np.asarray(pos, dtype=np.int64).reshape(-1, 2)
    neg = np.asarray(neg, dtype=np.int64).reshape(-1, 2)
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("link evaluation needs nonempty positive and negative sets")
    pairs = np.vstack([pos, neg])
    if mode == "decoder":
        if dec is None:
            raise ValueError("decoder mode requires decoder parameters")
        scores = decode_edge_scores(z, pairs, dec)
    elif mode == "dot":
        scores = decode_dot_scores(z, pairs)
    else:
        raise ValueError(f"unknown link scoring mode '{mode}'")
    labels = np.concatenate([np.ones(len(pos), dtype=np.int64),
                             np.zeros(len(neg), dtype=np.int64)])
    return rank_metrics(scores, labels)


def smoothness_report(graph: Graph, z: np.ndarray) -> tuple[float, float]:
    """(delta, log10 delta); log10 is -inf when the embeddings are constant."""
    delta = smoothness_delta(graph, z)
    return delta, (NEG_INF if delta == 0.0 else math.log10(delta))


# ---------------------------------------------------------------------------
# report container
# ---------------------------------------------------------------------------

@dataclass
class MetricsReport:
    seed: int
    config: dict = field(default_factory=dict)
    accuracy: Optional[float] = None
    auc: Optional[float] = None
    ap: Optional[float] = None
    auc_dot: Optional[float] = None
    ap_dot: Optional[float] = None
    delta: Optional[float] = None
    log10_delta: Optional[float] = None

    def __post_init__(self):
        for name in ("accuracy", "auc", "ap", "auc_dot", "ap_dot"):
            val = getattr(self, name)
            if val is not None and not 0.0 <= val <= 100.0:
                raise ValueError(f"{name} must lie in [0, 100]")
        if self.delta is not None and self.delta < 0:
            raise ValueError("delta must be nonnegative")

    def to_dict(self) -> dict:
        out = {"seed": self.seed, "config": self.config}
        for name in ("accuracy", "auc", "ap", "auc_dot", "ap_dot"):
            val = getattr(self, name)
            if val is not None:
                out[name] = round(val, 2)
        if self.delta is not None:
            out["delta"] = self.delta
        if self.log10_delta is not None:
            # -inf is not representable in strict JSON
            out["log10_delta"] = ("-inf" if self.log10_delta == NEG_INF
                                  else self.log10_delta)
        return out
