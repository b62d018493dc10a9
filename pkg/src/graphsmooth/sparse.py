"""CSR sparse matrix container used for adjacency operators.

Structure (offsets/indices) never carries gradient; only the dense
operands of a product do. Products are delegated to scipy's CSR
kernels, which are single-threaded and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


@dataclass
class SparseMatrix:
    """Square CSR matrix with float64 weights."""

    num_rows: int
    num_cols: int
    row_offsets: np.ndarray   # int64, length num_rows + 1
    col_indices: np.ndarray   # int64, length nnz
    weights: np.ndarray       # float64, length nnz
    _csr: sp.csr_matrix = field(init=False, repr=False, compare=False)
    _csr_t: sp.csr_matrix = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.row_offsets = np.asarray(self.row_offsets, dtype=np.int64)
        self.col_indices = np.asarray(self.col_indices, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if len(self.row_offsets) != self.num_rows + 1:
            raise ValueError("row offsets length must be num_rows + 1")
        if np.any(np.diff(self.row_offsets) < 0):
            raise ValueError("row offsets must be nondecreasing")
        if self.row_offsets[-1] != len(self.col_indices):
            raise ValueError("last offset must equal nnz")
        if len(self.col_indices) and self.col_indices.max() >= self.num_cols:
            raise ValueError("column index out of range")
        self._csr = sp.csr_matrix(
            (self.weights, self.col_indices, self.row_offsets),
            shape=(self.num_rows, self.num_cols),
        )
        self._csr_t = self._csr.T.tocsr()

    @property
    def nnz(self) -> int:
        return len(self.col_indices)

    def matmul(self, dense: np.ndarray) -> np.ndarray:
        """self @ dense for a (num_cols x k) dense operand."""
        if dense.shape[0] != self.num_cols:
            raise ValueError(
                f"sparse ({self.num_rows}x{self.num_cols}) @ dense {dense.shape}: "
                "inner dimensions disagree"
            )
        return np.asarray(self._csr @ dense, dtype=np.float64)

    def t_matmul(self, dense: np.ndarray) -> np.ndarray:
        """self.T @ dense, used by backward rules."""
        if dense.shape[0] != self.num_rows:
            raise ValueError("transpose product: row count mismatch")
        return np.asarray(self._csr_t @ dense, dtype=np.float64)

    def to_dense(self) -> np.ndarray:
        """Densify by explicit scatter; independent of the scipy kernels."""
        out = np.zeros((self.num_rows, self.num_cols))
        for i in range(self.num_rows):
            lo, hi = self.row_offsets[i], self.row_offsets[i + 1]
            np.add.at(out[i], self.col_indices[lo:hi], self.weights[lo:hi])
        return out

    def row_entries(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.row_offsets[i], self.row_offsets[i + 1]
        return self.col_indices[lo:hi], self.weights[lo:hi]
