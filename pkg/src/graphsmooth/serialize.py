"""File formats: embeddings, parameter checkpoints, run manifests, history.

Everything is plain text. Floats are written with %.17g, which round-trips
IEEE doubles exactly, so save/load is lossless and byte-deterministic.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .graphs import GraphFormatError

CHECKPOINT_MAGIC = "graphsmooth-checkpoint v1"


def _format_row(row: np.ndarray) -> str:
    return " ".join(f"{x:.17g}" for x in row)


def write_embeddings(path, z: np.ndarray):
    """Header "N D", then N whitespace-separated rows."""
    z = np.asarray(z, dtype=np.float64)
    with open(path, "w") as fh:
        fh.write(f"{z.shape[0]} {z.shape[1]}\n")
        for row in z:
            fh.write(_format_row(row) + "\n")


def load_embeddings(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise GraphFormatError(f"{path}:1: expected header 'N D'")
        try:
            n, d = int(header[0]), int(header[1])
        except ValueError:
            raise GraphFormatError(f"{path}:1: expected integer header 'N D'")
        out = np.empty((n, d))
        for i in range(n):
            line = fh.readline()
            if not line:
                raise GraphFormatError(f"{path}:{i + 2}: expected {n} rows, found {i}")
            try:
                row = np.array(line.split(), dtype=np.float64)
            except ValueError:
                raise GraphFormatError(f"{path}:{i + 2}: malformed embedding row")
            if len(row) != d:
                raise GraphFormatError(
                    f"{path}:{i + 2}: expected {d} values, got {len(row)}")
            out[i] = row
    return out


def write_checkpoint(path, params: dict[str, np.ndarray], seed: int, epoch: int):
    with open(path, "w") as fh:
        fh.write(CHECKPOINT_MAGIC + "\n")
        fh.write(f"seed {seed}\n")
        fh.write(f"epoch {epoch}\n")
        for name in sorted(params):
            p = np.asarray(params[name], dtype=np.float64)
            fh.write(f"tensor {name} {p.shape[0]} {p.shape[1]}\n")
            for row in p:
                fh.write(_format_row(row) + "\n")


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise GraphFormatError(f"{path}:1: not a graphsmooth checkpoint")
    try:
        seed = int(lines[1].split()[1])
        epoch = int(lines[2].split()[1])
    except (IndexError, ValueError):
        raise GraphFormatError(f"{path}: malformed checkpoint header")
    params = {}
    i = 3
    while i < len(lines):
        parts = lines[i].split()
        if len(parts) != 4 or parts[0] != "tensor":
            raise GraphFormatError(f"{path}:{i + 1}: expected 'tensor name rows cols'")
        name, rows, cols = parts[1], int(parts[2]), int(parts[3])
        block = lines[i + 1:i + 1 + rows]
        if len(block) != rows:
            raise GraphFormatError(f"{path}:{i + 1}: truncated tensor '{name}'")
        try:
            mat = np.array([row.split() for row in block], dtype=np.float64)
        except ValueError:
            raise GraphFormatError(f"{path}: malformed values in tensor '{name}'")
        if mat.shape != (rows, cols):
            raise GraphFormatError(f"{path}: tensor '{name}' shape mismatch")
        params[name] = mat
        i += 1 + rows
    return params, {"seed": seed, "epoch": epoch}


def write_history(path, records: list[dict]):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def write_manifest(path, command: list[str], config: dict, seed: int,
                   inputs: list[str], version: str):
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": {str(p): file_digest(p) for p in inputs},
        "version": version,
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def load_manifest(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
