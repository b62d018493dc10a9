"""Finite-difference verification of every differentiable op and of the
full training loss on a small fixed fixture.

Non-scalar ops are scalarized by a frozen random projection (sum of an
elementwise product with a constant), which exercises the op's backward
rule without depending on it. ReLU inputs are shifted away from the kink
so central differences stay valid.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import autodiff as ad
from .graphs import gcn_normalize, generate_sbm, neighbor_mean_operator
from .losses import (divergence_loss, minimal_loss, neighbor_loss,
                     structure_loss_edges, structure_loss_features)
from .model import decode_edges, encode
from .train import TrainConfig, assemble_losses, init_param_dict


def _proj(t: ad.Tensor, seed: int) -> ad.Tensor:
    c = np.random.default_rng(seed).uniform(0.5, 1.5, size=t.shape)
    return ad.reduce_sum(ad.mul(t, ad.constant(c)))


def _rand(rng, *shape):
    return rng.uniform(-1.0, 1.0, size=shape)


def gradcheck_fixture():
    """12-node two-block graph plus a small-width config, frozen seeds."""
    graph = generate_sbm(blocks=2, nodes_per_block=6, p_in=0.8, p_out=0.3,
                         feature_dim=4, feature_noise=0.2, seed=7)
    cfg = TrainConfig(mask_ratio=0.5, lambda1=0.05, lambda2=0.02, lambda3=0.03,
                      margin=0.1, hidden=8, embed_dim=5, decoder_hidden=4, seed=3)
    return graph, cfg


def op_checks(h: float) -> list[tuple[str, Callable]]:
    """Named closures, each returning the max relative FD error of one op."""
    rng = np.random.default_rng(2024)
    graph, _ = gradcheck_fixture()
    adj = gcn_normalize(graph.undirected_pairs(), graph.num_nodes)
    checks: list[tuple[str, Callable]] = []

    def check(name: str, f, params):
        checks.append((name, lambda: ad.finite_diff_check(f, params, h)))

    check("matmul",
          lambda lv: _proj(ad.matmul(lv["a"], lv["b"]), 11),
          {"a": _rand(rng, 5, 4), "b": _rand(rng, 4, 3)})
    check("spmm",
          lambda lv: _proj(ad.spmm(adj, lv["d"]), 12),
          {"d": _rand(rng, graph.num_nodes, 3)})
    check("gather_rows",
          lambda lv: _proj(ad.gather_rows(lv["t"], np.array([0, 3, 3, 7, 11])), 13),
          {"t": _rand(rng, 12, 4)})
    check("add",
          lambda lv: _proj(ad.add(lv["a"], lv["b"]), 14),
          {"a": _rand(rng, 4, 4), "b": _rand(rng, 4, 4)})
    check("sub",
          lambda lv: _proj(ad.sub(lv["a"], lv["b"]), 15),
          {"a": _rand(rng, 4, 4), "b": _rand(rng, 4, 4)})
    check("mul",
          lambda lv: _proj(ad.mul(lv["a"], lv["b"]), 16),
          {"a": _rand(rng, 4, 4), "b": _rand(rng, 4, 4)})
    check("mul_scalar",
          lambda lv: _proj(ad.mul_scalar(lv["a"], -1.7), 17),
          {"a": _rand(rng, 3, 5)})
    check("add_scalar",
          lambda lv: _proj(ad.add_scalar(lv["a"], 0.4), 18),
          {"a": _rand(rng, 3, 5)})
    relu_in = _rand(rng, 5, 5)
    relu_in[np.abs(relu_in) < 0.05] += 0.1  # keep away from the kink
    check("relu", lambda lv: _proj(ad.relu(lv["a"]), 19), {"a": relu_in})
    check("sigmoid",
          lambda lv: _proj(ad.sigmoid(lv["a"]), 20),
          {"a": 3.0 * _rand(rng, 4, 4)})
    check("log",
          lambda lv: _proj(ad.log(lv["a"]), 21),
          {"a": rng.uniform(0.2, 3.0, size=(4, 4))})
    check("square", lambda lv: _proj(ad.square(lv["a"]), 22), {"a": _rand(rng, 4, 4)})
    clamp_in = rng.uniform(-2.0, 2.0, size=(5, 5))
    clamp_in[np.abs(np.abs(clamp_in) - 1.0) < 0.05] *= 0.8  # off the clamp edges
    check("clamp",
          lambda lv: _proj(ad.clamp(lv["a"], -1.0, 1.0), 23),
          {"a": clamp_in})
    check("sum", lambda lv: ad.reduce_sum(lv["a"]), {"a": _rand(rng, 4, 6)})
    check("mean", lambda lv: ad.reduce_mean(lv["a"]), {"a": _rand(rng, 4, 6)})
    check("row_sum", lambda lv: _proj(ad.row_sum(lv["a"]), 24), {"a": _rand(rng, 6, 3)})
    cos_a = _rand(rng, 10, 4) + 0.5
    cos_b = _rand(rng, 10, 4) - 0.5
    check("cosine_rows",
          lambda lv: _proj(ad.cosine_rows(lv["a"], lv["b"]), 25),
          {"a": cos_a, "b": cos_b})
    return checks


def loss_checks(h: float) -> list[tuple[str, Callable]]:
    """FD checks of each loss and of the assembled training objectives."""
    rng = np.random.default_rng(77)
    graph, cfg = gradcheck_fixture()
    n = graph.num_nodes
    adj = gcn_normalize(graph.undirected_pairs(), n)
    nbr = neighbor_mean_operator(graph)
    active = graph.degrees > 0
    pos = graph.undirected_pairs()[:4]
    neg = np.array([[0, 11], [2, 9], [5, 6]])
    checks: list[tuple[str, Callable]] = []

    def check(name, f, params):
        checks.append((name, lambda: ad.finite_diff_check(f, params, h)))

    z0 = _rand(rng, n, 5)
    check("neighbor_loss",
          lambda lv: neighbor_loss(lv["z"], ad.spmm(nbr, lv["z"]), active),
          {"z": z0})
    check("minimal_loss",
          lambda lv: minimal_loss(lv["zx"], lv["zs"]),
          {"zx": _rand(rng, n, 5), "zs": _rand(rng, n, 5)})
    check("divergence_loss",
          lambda lv: divergence_loss(lv["z"], ad.spmm(nbr, lv["z"]), 0.1, active),
          {"z": z0 + 0.3})
    check("structure_loss_edges",
          lambda lv: structure_loss_edges(lv["z"], pos, neg, lv["v1"], lv["v2"]),
          {"z": _rand(rng, n, 5), "v1": _rand(rng, 5, 4), "v2": _rand(rng, 4, 1)})
    check("structure_loss_features",
          lambda lv: structure_loss_features(lv["z"], np.array([1, 4, 9]),
                                             graph.features, lv["wf"]),
          {"z": _rand(rng, n, 5), "wf": _rand(rng, 5, 4)})
    # composite draw chosen so both relu layers have live and dead units,
    # with pre-activations well clear of the kinks
    comp = np.random.default_rng(7)
    check("encoder_decoder",
          lambda lv: _proj(decode_edges(
              encode(adj, ad.constant(graph.features), lv["w1"], lv["w2"]),
              pos, lv["v1"], lv["v2"]), 31),
          {"w1": comp.uniform(-1, 1, (4, 6)), "w2": 2 * comp.uniform(-1, 1, (6, 5)),
           "v1": comp.uniform(-1, 1, (5, 4)) + 0.4, "v2": comp.uniform(-1, 1, (4, 1))})

    params_edge = init_param_dict(graph.features.shape[1], cfg)
    check("full_loss_edge_recon",
          lambda lv: assemble_losses(graph, lv, cfg, epoch_seed=101)[0],
          params_edge)
    cfg_fr = TrainConfig(mask_ratio=0.5, lambda1=0.05, lambda2=0.02, lambda3=0.03,
                         margin=0.1, hidden=8, embed_dim=5, decoder_hidden=4,
                         seed=3, pretext="feature_recon")
    params_fr = init_param_dict(graph.features.shape[1], cfg_fr)
    check("full_loss_feature_recon",
          lambda lv: assemble_losses(graph, lv, cfg_fr, epoch_seed=102)[0],
          params_fr)
    return checks


def run_gradcheck(h: float = 1e-5, tol: float = 1e-4) -> list[dict]:
    """Run every check; each entry reports the component, error, and verdict."""
    if h <= 0:
        raise ValueError("step size h must be positive")
    report = []
    for name, runner in op_checks(h) + loss_checks(h):
        err = runner()
        report.append({"component": name, "max_rel_error": err,
                       "passed": bool(err < tol)})
    return report
