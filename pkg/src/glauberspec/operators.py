"""Sparse operator container on the ``2^|Λ|``-dimensional configuration space."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True, eq=False)
class SparseOperator:
    matrix: sp.csr_matrix
    symmetric: bool = False
    label: str = ""

    def __post_init__(self):
        m = self.matrix
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"operator must be square, got {m.shape}")
        m.sort_indices()

    @classmethod
    def from_coo(cls, rows, cols, vals, dim: int, symmetric: bool = False, label: str = ""):
        m = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()
        m.sum_duplicates()
        return cls(m, symmetric, label)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def max_row_nnz(self) -> int:
        return int(np.diff(self.matrix.indptr).max(initial=0))

    def __matmul__(self, v):
        return self.matrix @ v

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def norm_inf(self) -> float:
        return float(abs(self.matrix).sum(axis=1).max()) if self.nnz else 0.0

    def asymmetry(self) -> float:
        """``max |A - A^T| / max(max |A|, tiny)``."""
        diff = self.matrix - self.matrix.T
        scale = max(abs(self.matrix).max() if self.nnz else 0.0, np.finfo(float).tiny)
        return float(abs(diff).max() / scale) if diff.nnz else 0.0

    def triplets(self):
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order], coo.col[order], coo.data[order]

    def write_text(self, path: str | Path) -> None:
        """Coordinate triplets: header ``dim nnz``, then ``row col value`` lines."""
        rows, cols, vals = self.triplets()
        with open(path, "w") as fh:
            fh.write(f"{self.dim} {len(vals)}\n")
            for r, c, v in zip(rows, cols, vals):
                fh.write(f"{r} {c} {v:.17g}\n")

    @classmethod
    def read_text(cls, path: str | Path, symmetric: bool = False) -> "SparseOperator":
        with open(path) as fh:
            dim, nnz = (int(t) for t in fh.readline().split())
            data = np.loadtxt(fh, ndmin=2) if nnz else np.zeros((0, 3))
        if len(data) != nnz:
            raise ValueError(f"header announces {nnz} entries, found {len(data)}")
        return cls.from_coo(data[:, 0].astype(np.int64), data[:, 1].astype(np.int64),
                            data[:, 2], dim, symmetric)
