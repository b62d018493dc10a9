"""Command-line front door.

Subcommands: synth | train | eval | smoothness | gradcheck | micheck.
All reports are JSON on stdout. Exit codes: 0 success, 1 validation error,
2 runtime/data error. Every run with --seed S is bit-deterministic, and
train writes a manifest sufficient to reproduce it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from . import __version__
from .checks import gradcheck_fixture, run_gradcheck
from .evaluate import (LabeledSplit, MetricsReport, ProbeConfig, linear_probe,
                       link_pred_eval, smoothness_report)
from .graphs import (Graph, GraphFormatError, generate_sbm, load_graph,
                     load_pairs, node_split, save_graph, save_pairs,
                     split_edges_holdout)
from .losses import run_mi_check
from .model import DecoderParams
from .seeding import derive_seed
from .serialize import (load_checkpoint, load_embeddings, load_manifest,
                        write_checkpoint, write_embeddings, write_history,
                        write_manifest)
from .train import TrainConfig, CORA_DEFAULTS, parse_config_text, train


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


PRESETS = {"cora-defaults": CORA_DEFAULTS}

CONFIG_FLAGS = ["mask_ratio", "lambda1", "lambda2", "lambda3", "margin",
                "learning_rate", "weight_decay", "epochs", "hidden",
                "embed_dim", "decoder_hidden", "seed", "pretext", "patience"]
_INT_FLAGS = {"epochs", "hidden", "embed_dim", "decoder_hidden", "seed", "patience"}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="graphsmooth",
                     description="Masked-edge graph SSL with smoothness balancing")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a stochastic block model dataset")
    p.add_argument("--blocks", type=int, default=2)
    p.add_argument("--per-block", type=int, default=100)
    p.add_argument("--p-in", type=float, default=0.05)
    p.add_argument("--p-out", type=float, default=0.005)
    p.add_argument("--feature-dim", type=int, default=16)
    p.add_argument("--feature-noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out-prefix", required=True)

    p = sub.add_parser("train", help="run self-supervised training")
    p.add_argument("--edges")
    p.add_argument("--features")
    p.add_argument("--labels")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--from-manifest", help="reproduce a previous run")
    p.add_argument("--val-frac", type=float, default=0.0,
                   help="fraction of edges held out for link validation")
    p.add_argument("--test-frac", type=float, default=0.0,
                   help="fraction of edges held out for link testing")
    p.add_argument("--out-dir", required=True)
    for name in CONFIG_FLAGS:
        p.add_argument("--" + name.replace("_", "-"),
                       dest="cfg_" + name,
                       type=(int if name in _INT_FLAGS else
                             str if name == "pretext" else float),
                       default=None)

    p = sub.add_parser("eval", help="evaluate frozen embeddings")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--labels", help="label file enables the node-classification probe")
    p.add_argument("--edges", help="edge file enables the smoothness report")
    p.add_argument("--test-pos", help="held-out positive edges enable link metrics")
    p.add_argument("--test-neg")
    p.add_argument("--checkpoint", help="decoder weights for link scoring")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="also write the JSON report here")

    p = sub.add_parser("smoothness", help="smoothness of an embedding on a graph")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--edges", required=True)

    p = sub.add_parser("gradcheck", help="finite-difference check of every op")
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)

    p = sub.add_parser("micheck", help="Monte-Carlo check of the MI/MSE identity")
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rhos", default="0.5,0.8,0.9,0.95")
    p.add_argument("--dims", default="1,8,64")
    return parser


def _print_json(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    graph = generate_sbm(args.blocks, args.per_block, args.p_in, args.p_out,
                         args.feature_dim, args.feature_noise, args.seed)
    prefix = args.out_prefix
    paths = {"edges": prefix + ".edges", "features": prefix + ".features",
             "labels": prefix + ".labels"}
    save_graph(graph, paths["edges"], paths["features"], paths["labels"])
    write_manifest(prefix + ".manifest.json", ["synth"] + sys.argv[2:],
                   {"blocks": args.blocks, "per_block": args.per_block,
                    "p_in": args.p_in, "p_out": args.p_out,
                    "feature_dim": args.feature_dim,
                    "feature_noise": args.feature_noise},
                   args.seed, list(paths.values()), __version__)
    _print_json({"files": paths, "nodes": graph.num_nodes,
                 "undirected_edges": graph.undirected_edge_count})
    return 0


def _resolve_train_config(args) -> TrainConfig:
    base = TrainConfig()
    if args.preset:
        base = TrainConfig(**PRESETS[args.preset])
    if args.config:
        with open(args.config) as fh:
            base = parse_config_text(fh.read(), base=base)
    overrides = {}
    for name in CONFIG_FLAGS:
        val = getattr(args, "cfg_" + name)
        if val is not None:
            overrides[name] = val
    if overrides:
        from dataclasses import replace
        base = replace(base, **overrides)
    return base


def cmd_train(args) -> int:
    if args.from_manifest:
        manifest = load_manifest(args.from_manifest)
        cfg = TrainConfig(**manifest["config"])
        edges = manifest["paths"]["edges"]
        features = manifest["paths"]["features"]
        labels = manifest["paths"].get("labels")
        val_frac = manifest.get("val_frac", 0.0)
        test_frac = manifest.get("test_frac", 0.0)
    else:
        if not args.edges or not args.features:
            raise UsageError("train requires --edges and --features "
                             "(or --from-manifest)")
        cfg = _resolve_train_config(args)
        edges, features, labels = args.edges, args.features, args.labels
        val_frac, test_frac = args.val_frac, args.test_frac

    graph = load_graph(edges, features, labels)
    os.makedirs(args.out_dir, exist_ok=True)
    out = lambda name: os.path.join(args.out_dir, name)

    holdout_files = {}
    if val_frac or test_frac:
        split = split_edges_holdout(graph, val_frac, test_frac,
                                    derive_seed(cfg.seed, "holdout"))
        train_graph = split.train_graph
        for name, pairs in [("val_pos", split.val_pos), ("val_neg", split.val_neg),
                            ("test_pos", split.test_pos), ("test_neg", split.test_neg)]:
            path = out(name + ".edges")
            save_pairs(pairs, path)
            holdout_files[name] = path
    else:
        train_graph = graph

    result = train(train_graph, cfg)
    write_embeddings(out("embeddings.txt"), result.embeddings)
    write_checkpoint(out("checkpoint.txt"), result.params, cfg.seed,
                     len(result.history))
    write_history(out("history.jsonl"), result.history.records())
    manifest = write_manifest(out("manifest.json"), ["train"] + sys.argv[2:],
                              asdict(cfg), cfg.seed,
                              [edges, features] + ([labels] if labels else []),
                              __version__)
    # record the inputs by role so --from-manifest can replay the run
    manifest["paths"] = {"edges": edges, "features": features}
    if labels:
        manifest["paths"]["labels"] = labels
    manifest["val_frac"] = val_frac
    manifest["test_frac"] = test_frac
    with open(out("manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    final = result.history.breakdowns[-1]
    _print_json({"out_dir": args.out_dir,
                 "epochs_run": len(result.history),
                 "final_total_loss": final.total,
                 "final_delta": result.history.deltas[-1],
                 "holdout_files": holdout_files})
    return 0


def _graph_for_smoothness(edge_path, num_nodes) -> Graph:
    pairs = load_pairs(edge_path)
    return Graph.from_edges(pairs, np.zeros((num_nodes, 1)))


def cmd_eval(args) -> int:
    z = load_embeddings(args.embeddings)
    if not (args.labels or args.test_pos or args.edges):
        raise UsageError("eval needs --labels, --test-pos/--test-neg, or --edges")
    report = MetricsReport(seed=args.seed, config={"embeddings": args.embeddings})

    if args.labels:
        labels = np.full(len(z), -1, dtype=np.int64)
        for lineno, line in enumerate(open(args.labels), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            i, lab = line.split()
            labels[int(i)] = int(lab)
        if np.any(labels < 0):
            raise GraphFormatError(f"{args.labels}: does not label every node")
        tr, va, te = node_split(len(z), derive_seed(args.seed, "node-split"))
        report.accuracy = linear_probe(z, LabeledSplit(labels, tr, va, te),
                                       ProbeConfig())

    if args.test_pos or args.test_neg:
        if not (args.test_pos and args.test_neg):
            raise UsageError("link evaluation needs both --test-pos and --test-neg")
        pos = load_pairs(args.test_pos)
        neg = load_pairs(args.test_neg)
        report.auc_dot, report.ap_dot = link_pred_eval(z, pos, neg, "dot")
        if args.checkpoint:
            params, _ = load_checkpoint(args.checkpoint)
            dec = DecoderParams(params["v1"], params["v2"])
            report.auc, report.ap = link_pred_eval(z, pos, neg, "decoder", dec)

    if args.edges:
        graph = _graph_for_smoothness(args.edges, len(z))
        report.delta, report.log10_delta = smoothness_report(graph, z)

    payload = report.to_dict()
    _print_json(payload)
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def cmd_smoothness(args) -> int:
    z = load_embeddings(args.embeddings)
    graph = _graph_for_smoothness(args.edges, len(z))
    delta, log10_delta = smoothness_report(graph, z)
    _print_json({"delta": delta,
                 "log10_delta": "-inf" if delta == 0.0 else log10_delta})
    return 0


def cmd_gradcheck(args) -> int:
    report = run_gradcheck(h=args.h, tol=args.tol)
    graph, _ = gradcheck_fixture()
    for entry in report:
        flag = "PASS" if entry["passed"] else "FAIL"
        print(f"{entry['component']:<28s} {entry['max_rel_error']:.3e}  {flag}")
    worst = max(e["max_rel_error"] for e in report)
    failed = [e["component"] for e in report if not e["passed"]]
    _print_json({"fixture_nodes": graph.num_nodes, "h": args.h, "tol": args.tol,
                 "worst_rel_error": worst, "failed": failed})
    return 0 if not failed else 2


def cmd_micheck(args) -> int:
    rhos = [float(r) for r in args.rhos.split(",") if r != ""]
    dims = [int(d) for d in args.dims.split(",") if d != ""]
    for rho in rhos:
        if not 0.0 <= rho < 1.0:
            raise UsageError("rho values must lie in [0, 1)")
    results = run_mi_check(rhos, dims, args.samples, args.seed)
    for r in results:
        print(f"rho={r['rho']:<5g} d={r['d']:<3d} "
              f"mi_exact_form={r['mi_exact_form']:.5f} "
              f"analytic={r['mi_analytic']:.5f} rel_err={r['rel_error']:.4%} "
              f"approx_dev={r['approx_vs_exact']:.4%}")
    _print_json({"samples": args.samples, "seed": args.seed,
                 "max_rel_error": max(r["rel_error"] for r in results),
                 "results": results})
    return 0


HANDLERS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval,
            "smoothness": cmd_smoothness, "gradcheck": cmd_gradcheck,
            "micheck": cmd_micheck}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except GraphFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ArithmeticError, json.JSONDecodeError, KeyError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
