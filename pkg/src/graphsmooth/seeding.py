"""Deterministic seed fan-out.

One root seed expands into independent per-component sub-seeds, so adding
or reordering a consumer never perturbs the draws of the others. The rule:
hash the component name with crc32, feed (root, crc32(name), *indices)
into numpy's SeedSequence, and take the first 64-bit word.
"""

from __future__ import annotations

import zlib

import numpy as np


def derive_seed(root: int, component: str, *indices: int) -> int:
    key = [int(root) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(component.encode("utf-8"))]
    key.extend(int(i) for i in indices)
    return int(np.random.SeedSequence(key).generate_state(1, np.uint64)[0])
