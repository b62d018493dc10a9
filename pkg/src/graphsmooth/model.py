"""Two-layer graph-convolution encoder and MLP edge decoder.

The encoder is Z = A_hat @ relu(A_hat @ X @ W1) @ W2 with no biases. The
edge decoder combines two endpoint embeddings by elementwise product,
which makes every edge score symmetric in (u, v) by construction, then
applies relu(. @ V1) @ v2 and a sigmoid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .sparse import SparseMatrix


@dataclass
class EncoderParams:
    w1: np.ndarray   # D_node x H
    w2: np.ndarray   # H x D_emb


@dataclass
class DecoderParams:
    v1: np.ndarray   # D_emb x H_dec
    v2: np.ndarray   # H_dec x 1


@dataclass
class FeatureDecoderParams:
    """Linear reconstruction head for the feature-masking pretext."""

    w: np.ndarray    # D_emb x D_node


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(d_node: int, hidden: int, d_emb: int, dec_hidden: int,
                seed: int) -> tuple[EncoderParams, DecoderParams]:
    """Glorot-uniform initialization, deterministic per seed."""
    for name, dim in [("d_node", d_node), ("hidden", hidden),
                      ("d_emb", d_emb), ("dec_hidden", dec_hidden)]:
        if dim < 1:
            raise ValueError(f"{name} must be at least 1")
    rng = np.random.default_rng(seed)
    enc = EncoderParams(_glorot(rng, d_node, hidden), _glorot(rng, hidden, d_emb))
    dec = DecoderParams(_glorot(rng, d_emb, dec_hidden), _glorot(rng, dec_hidden, 1))
    return enc, dec


def init_feature_decoder(d_emb: int, d_node: int, seed: int) -> FeatureDecoderParams:
    if d_emb < 1 or d_node < 1:
        raise ValueError("dimensions must be at least 1")
    return FeatureDecoderParams(_glorot(np.random.default_rng(seed), d_emb, d_node))


# ---------------------------------------------------------------------------
# tape forward passes (weights as leaf tensors, inputs as constants)
# ---------------------------------------------------------------------------

def encode(adj: SparseMatrix, x: ad.Tensor, w1: ad.Tensor, w2: ad.Tensor) -> ad.Tensor:
    hidden = ad.relu(ad.spmm(adj, ad.matmul(x, w1)))
    return ad.matmul(ad.spmm(adj, hidden), w2)


def decode_edges(z: ad.Tensor, pairs: np.ndarray, v1: ad.Tensor,
                 v2: ad.Tensor) -> ad.Tensor:
    """Edge probabilities for an (E, 2) pair array, as an E x 1 tensor."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    zu = ad.gather_rows(z, pairs[:, 0])
    zv = ad.gather_rows(z, pairs[:, 1])
    hidden = ad.relu(ad.matmul(ad.mul(zu, zv), v1))
    return ad.sigmoid(ad.matmul(hidden, v2))


# ---------------------------------------------------------------------------
# plain-array paths for inference and evaluation
# ---------------------------------------------------------------------------

def _sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def encode_values(adj: SparseMatrix, x: np.ndarray, enc: EncoderParams) -> np.ndarray:
    hidden = np.maximum(adj.matmul(x @ enc.w1), 0.0)
    z = adj.matmul(hidden) @ enc.w2
    if not np.all(np.isfinite(z)):
        raise ArithmeticError("encoder produced non-finite embeddings")
    return z


def _check_pair(z: np.ndarray, u: int, v: int):
    n = z.shape[0]
    if not (0 <= u < n and 0 <= v < n):
        raise ValueError(f"node pair ({u}, {v}) out of range for {n} nodes")


def decode_edge(z: np.ndarray, u: int, v: int, dec: DecoderParams) -> float:
    """MLP probability that edge (u, v) exists; symmetric in (u, v)."""
    _check_pair(z, u, v)
    hidden = np.maximum((z[u] * z[v]) @ dec.v1, 0.0)
    return float(_sigmoid(hidden @ dec.v2)[0])


def decode_dot(z: np.ndarray, u: int, v: int) -> float:
    """Dot-product probability that edge (u, v) exists."""
    _check_pair(z, u, v)
    return float(_sigmoid(np.array([z[u] @ z[v]]))[0])


def decode_edge_scores(z: np.ndarray, pairs: np.ndarray, dec: DecoderParams) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) and pairs.max() >= z.shape[0]:
        raise ValueError("node pair out of range")
    hidden = np.maximum((z[pairs[:, 0]] * z[pairs[:, 1]]) @ dec.v1, 0.0)
    return _sigmoid(hidden @ dec.v2).reshape(-1)


def decode_dot_scores(z: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) and pairs.max() >= z.shape[0]:
        raise ValueError("node pair out of range")
    return _sigmoid(np.einsum("id,id->i", z[pairs[:, 0]], z[pairs[:, 1]]))
