"""Finite-difference diffusion operator and the logistic reaction term.

Row ``v`` of the operator is ``D_v / h**2`` times the 7-point (5-point in 2-D)
Laplacian stencil, i.e. ``A = diag(D) L`` with the first-order ``grad D``
terms dropped.  Neighbours that fall outside the grid or have ``D == 0``
(air, skull) are treated as outside the tissue domain: they are removed from
the stencil and the diagonal shrinks accordingly (zero normal flux).  Every
row therefore sums to zero and constants are in the kernel.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from gliosim.core import DiffusionField, Grid

# Rows per worker below which threading costs more than it saves.
_MIN_ROWS_PER_WORKER = 20_000


@dataclass
class SparseOperator:
    """Square CSR matrix with its exact 1-norm cached at construction."""

    matrix: sp.csr_array
    one_norm: float = field(init=False)
    _chunks: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        m = sp.csr_array(self.matrix, dtype=float)
        m.sum_duplicates()
        m.sort_indices()
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"operator must be square, got {m.shape}")
        self.matrix = m
        self.one_norm = _column_norm(m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def row_offsets(self) -> np.ndarray:
        return self.matrix.indptr

    @property
    def column_indices(self) -> np.ndarray:
        return self.matrix.indices

    @property
    def coefficients(self) -> np.ndarray:
        return self.matrix.data

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def matvec(self, u: np.ndarray, workers: int = 1) -> np.ndarray:
        if workers <= 1 or self.dim < 2 * _MIN_ROWS_PER_WORKER:
            return self.matrix @ u
        blocks = self._row_blocks(min(workers, self.dim // _MIN_ROWS_PER_WORKER))
        # each row is reduced identically whatever the blocking, so results
        # are bitwise equal to the serial product
        with ThreadPoolExecutor(len(blocks)) as pool:
            parts = list(pool.map(lambda b: b @ u, blocks))
        return np.concatenate(parts)

    def _row_blocks(self, nblocks: int):
        if nblocks not in self._chunks:
            edges = np.linspace(0, self.dim, nblocks + 1).astype(int)
            self._chunks[nblocks] = [self.matrix[a:b] for a, b in zip(edges[:-1], edges[1:])]
        return self._chunks[nblocks]


def _column_norm(m: sp.csr_array) -> float:
    if m.nnz == 0:
        return 0.0
    sums = np.bincount(m.indices, weights=np.abs(m.data), minlength=m.shape[1])
    return float(sums.max())


def from_dense(a: np.ndarray) -> SparseOperator:
    return SparseOperator(sp.csr_array(np.asarray(a, dtype=float)))


def _neighbour_pairs(grid: Grid):
    """Yield ``(p, q)`` flat-index arrays of lattice neighbours, one array pair per active axis."""
    idx = np.arange(grid.size).reshape(grid.shape)
    # array axes are (z, y, x)
    for axis in (2, 1, 0):
        if idx.shape[axis] < 2:
            continue
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        yield idx[tuple(lo)].ravel(), idx[tuple(hi)].ravel()


def assemble(d: DiffusionField, grid: Grid | None = None) -> SparseOperator:
    """Assemble the diffusion operator for ``d`` with 1/h^2 folded into the coefficients."""
    grid = d.grid if grid is None else grid
    if grid.size != d.d.size:
        raise ValueError("diffusion field does not match grid")
    coef = d.d / grid.h**2
    active = d.d > 0
    rows, cols = [], []
    for p, q in _neighbour_pairs(grid):
        keep = active[p] & active[q]
        p, q = p[keep], q[keep]
        rows += [p, q]
        cols += [q, p]
    rows = np.concatenate(rows) if rows else np.empty(0, int)
    cols = np.concatenate(cols) if cols else np.empty(0, int)
    off = coef[rows]
    count = np.bincount(rows, minlength=grid.size)
    diag_rows = np.flatnonzero(count)
    diag = -count[diag_rows] * coef[diag_rows]
    m = sp.coo_array(
        (np.concatenate([off, diag]), (np.concatenate([rows, diag_rows]), np.concatenate([cols, diag_rows]))),
        shape=(grid.size, grid.size),
    )
    return SparseOperator(m.tocsr())


def apply(A: SparseOperator, u, workers: int = 1) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (A.dim,):
        raise ValueError(f"vector of length {u.size} does not match operator dimension {A.dim}")
    return A.matvec(u, workers)


def reaction(u, rho: float) -> np.ndarray:
    """Logistic proliferation ``rho * u * (1 - u)``."""
    u = np.asarray(u, dtype=float)
    return rho * u * (1.0 - u)


def one_norm(A: SparseOperator) -> float:
    return A.one_norm


def dump_coo(A: SparseOperator, path) -> None:
    """Write ``row col value`` lines (0-based, row-major order) for cross-checking."""
    coo = A.matrix.tocoo()
    with open(path, "w") as fh:
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v:.17g}\n")
