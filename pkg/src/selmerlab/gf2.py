"""Dense linear algebra over F2 on bit-packed rows.

Each row is stored as little-endian 64-bit words: column j lives in word
j // 64 at bit j % 64.  Bits past the last column are kept at zero.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

WORD = 64


def nwords(cols: int) -> int:
    return (cols + WORD - 1) // WORD


def pack_bits(dense: np.ndarray) -> np.ndarray:
    """Pack a 0/1 array along its last axis into uint64 words."""
    dense = np.asarray(dense, dtype=np.uint8) & 1
    cols = dense.shape[-1]
    width = nwords(cols) * WORD
    if width != cols:
        pad = [(0, 0)] * (dense.ndim - 1) + [(0, width - cols)]
        dense = np.pad(dense, pad)
    packed = np.packbits(dense, axis=-1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64, copy=False)


def unpack_bits(words: np.ndarray, cols: int) -> np.ndarray:
    """Inverse of :func:`pack_bits`; returns a uint8 array of 0/1."""
    words = np.ascontiguousarray(words, dtype=np.uint64)
    if words.shape[-1] == 0:
        return np.zeros(words.shape[:-1] + (cols,), dtype=np.uint8)
    raw = words.astype("<u8", copy=False).view(np.uint8)
    bits = np.unpackbits(raw, axis=-1, bitorder="little")
    return bits[..., :cols]


def _check_vector(v: Sequence[int] | np.ndarray, n: int) -> np.ndarray:
    arr = np.asarray(v, dtype=np.uint8).reshape(-1)
    if arr.shape[0] != n:
        raise ValueError(f"vector length {arr.shape[0]} does not match {n}")
    return arr & 1


class BitMatrix:
    """A rows x cols matrix over F2."""

    __slots__ = ("rows", "cols", "data")

    def __init__(self, rows: int, cols: int, data: np.ndarray | None = None) -> None:
        if rows < 0 or cols < 0:
            raise ValueError("negative shape")
        self.rows = rows
        self.cols = cols
        if data is None:
            data = np.zeros((rows, nwords(cols)), dtype=np.uint64)
        elif data.shape != (rows, nwords(cols)):
            raise ValueError(f"data shape {data.shape} does not fit {rows}x{cols}")
        self.data = data

    # construction -----------------------------------------------------
    @classmethod
    def zeros(cls, rows: int, cols: int) -> "BitMatrix":
        return cls(rows, cols)

    @classmethod
    def identity(cls, n: int) -> "BitMatrix":
        return cls.from_dense(np.eye(n, dtype=np.uint8))

    @classmethod
    def from_dense(cls, dense: np.ndarray | Sequence[Sequence[int]]) -> "BitMatrix":
        arr = np.asarray(dense, dtype=np.uint8)
        if arr.ndim != 2:
            arr = arr.reshape(arr.shape[0] if arr.ndim else 0, -1)
        return cls(arr.shape[0], arr.shape[1], pack_bits(arr))

    @classmethod
    def from_rows(cls, rows: Iterable[str | Sequence[int]], cols: int | None = None) -> "BitMatrix":
        """Build from strings like ``"0110"`` or from 0/1 sequences."""
        parsed = [[int(ch) for ch in r] if isinstance(r, str) else [int(x) for x in r] for r in rows]
        if cols is None:
            cols = len(parsed[0]) if parsed else 0
        if any(len(r) != cols for r in parsed):
            raise ValueError("ragged rows")
        return cls.from_dense(np.array(parsed, dtype=np.uint8).reshape(len(parsed), cols))

    @classmethod
    def random(cls, rows: int, cols: int, rng: np.random.Generator) -> "BitMatrix":
        return cls.from_dense(rng.integers(0, 2, size=(rows, cols), dtype=np.uint8))

    # element access ---------------------------------------------------
    def get(self, i: int, j: int) -> int:
        return int((int(self.data[i, j // WORD]) >> (j % WORD)) & 1)

    def set(self, i: int, j: int, value: int) -> None:
        bit = np.uint64(1) << np.uint64(j % WORD)
        if value & 1:
            self.data[i, j // WORD] |= bit
        else:
            self.data[i, j // WORD] &= ~bit

    def to_dense(self) -> np.ndarray:
        return unpack_bits(self.data, self.cols)

    def row(self, i: int) -> np.ndarray:
        return unpack_bits(self.data[i], self.cols)

    def column(self, j: int) -> np.ndarray:
        return ((self.data[:, j // WORD] >> np.uint64(j % WORD)) & np.uint64(1)).astype(np.uint8)

    def copy(self) -> "BitMatrix":
        return BitMatrix(self.rows, self.cols, self.data.copy())

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    # algebra ----------------------------------------------------------
    def transpose(self) -> "BitMatrix":
        return BitMatrix.from_dense(self.to_dense().T)

    @property
    def T(self) -> "BitMatrix":
        return self.transpose()

    def __add__(self, other: "BitMatrix") -> "BitMatrix":
        if self.shape != other.shape:
            raise ValueError("shape mismatch in addition")
        return BitMatrix(self.rows, self.cols, self.data ^ other.data)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BitMatrix):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    def __hash__(self) -> int:
        return hash((self.rows, self.cols, self.data.tobytes()))

    def __repr__(self) -> str:
        return f"BitMatrix({self.rows}x{self.cols})"

    def matvec(self, v: Sequence[int] | np.ndarray) -> np.ndarray:
        vec = _check_vector(v, self.cols)
        return (self.to_dense().astype(np.int64) @ vec.astype(np.int64) % 2).astype(np.uint8)

    def __matmul__(self, other: "BitMatrix") -> "BitMatrix":
        if self.cols != other.rows:
            raise ValueError("shape mismatch in product")
        prod = self.to_dense().astype(np.int64) @ other.to_dense().astype(np.int64)
        return BitMatrix.from_dense((prod & 1).astype(np.uint8))

    def is_zero(self) -> bool:
        return not self.data.any()

    def is_alternating(self) -> bool:
        dense = self.to_dense()
        return self.rows == self.cols and bool(np.array_equal(dense, dense.T)) and not dense.diagonal().any()

    # elimination ------------------------------------------------------
    def eliminate_inplace(self) -> list[int]:
        """Reduce to reduced row echelon form in place; returns pivot columns."""
        m = self.data
        pivots: list[int] = []
        r = 0
        for c in range(self.cols):
            if r == self.rows:
                break
            w, b = divmod(c, WORD)
            col = (m[r:, w] >> np.uint64(b)) & np.uint64(1)
            nz = np.flatnonzero(col)
            if nz.size == 0:
                continue
            p = r + int(nz[0])
            if p != r:
                m[[r, p]] = m[[p, r]]
            hit = np.flatnonzero((m[:, w] >> np.uint64(b)) & np.uint64(1))
            hit = hit[hit != r]
            if hit.size:
                m[hit] ^= m[r]
            pivots.append(c)
            r += 1
        return pivots

    def rank_inplace(self) -> int:
        return len(self.eliminate_inplace())

    def rref(self) -> tuple["BitMatrix", list[int]]:
        work = self.copy()
        pivots = work.eliminate_inplace()
        return work, pivots

    def rank(self) -> int:
        return self.copy().rank_inplace()

    def corank(self) -> int:
        return self.cols - self.rank()

    def kernel_basis(self) -> list[np.ndarray]:
        """Basis of the right kernel as 0/1 vectors of length ``cols``."""
        reduced, pivots = self.rref()
        dense = reduced.to_dense()
        pivot_set = set(pivots)
        basis = []
        for f in range(self.cols):
            if f in pivot_set:
                continue
            v = np.zeros(self.cols, dtype=np.uint8)
            v[f] = 1
            for r, pc in enumerate(pivots):
                v[pc] = dense[r, f]
            basis.append(v)
        return basis

    def solve(self, b: Sequence[int] | np.ndarray) -> np.ndarray | None:
        """One solution x of ``M x = b``, or None if the system is inconsistent."""
        rhs = _check_vector(b, self.rows)
        aug = hstack([self, BitMatrix.from_dense(rhs.reshape(-1, 1))])
        reduced, pivots = aug.rref()
        if pivots and pivots[-1] == self.cols:
            return None
        dense = reduced.to_dense()
        x = np.zeros(self.cols, dtype=np.uint8)
        for r, pc in enumerate(pivots):
            x[pc] = dense[r, self.cols]
        return x

    def in_span(self, v: Sequence[int] | np.ndarray) -> bool:
        """True iff v lies in the column span."""
        return self.solve(v) is not None

    # slicing ----------------------------------------------------------
    def submatrix(self, rows: Sequence[int] | None = None, cols: Sequence[int] | None = None) -> "BitMatrix":
        """Extract rows and columns by strictly increasing index lists."""
        rsel = _check_index(rows, self.rows)
        csel = _check_index(cols, self.cols)
        return BitMatrix.from_dense(self.to_dense()[np.ix_(rsel, csel)])

    def dump(self) -> str:
        return "\n".join("".join(str(int(x)) for x in row) for row in self.to_dense())


def _check_index(idx: Sequence[int] | None, n: int) -> np.ndarray:
    if idx is None:
        return np.arange(n)
    arr = np.asarray(list(idx), dtype=np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= n):
        raise IndexError("index out of range")
    if arr.size > 1 and not np.all(np.diff(arr) > 0):
        raise ValueError("index set must be sorted ascending without duplicates")
    return arr


def hstack(mats: Sequence[BitMatrix]) -> BitMatrix:
    if not mats:
        raise ValueError("nothing to stack")
    rows = mats[0].rows
    if any(m.rows != rows for m in mats):
        raise ValueError("inconsistent row counts")
    return BitMatrix.from_dense(np.concatenate([m.to_dense() for m in mats], axis=1))


def vstack(mats: Sequence[BitMatrix]) -> BitMatrix:
    if not mats:
        raise ValueError("nothing to stack")
    cols = mats[0].cols
    if any(m.cols != cols for m in mats):
        raise ValueError("inconsistent column counts")
    return BitMatrix.from_dense(np.concatenate([m.to_dense() for m in mats], axis=0))


def assemble(grid: Sequence[Sequence[BitMatrix]]) -> BitMatrix:
    """Concatenate a rectangular grid of blocks."""
    if not grid or not grid[0]:
        raise ValueError("empty grid")
    ncols = len(grid[0])
    if any(len(r) != ncols for r in grid):
        raise ValueError("ragged block grid")
    widths = [grid[0][j].cols for j in range(ncols)]
    for row in grid:
        if any(row[j].cols != widths[j] for j in range(ncols)):
            raise ValueError("inconsistent block widths in a grid column")
        if any(b.rows != row[0].rows for b in row):
            raise ValueError("inconsistent block heights in a grid row")
    return vstack([hstack(list(row)) for row in grid])


# batched elimination ---------------------------------------------------

def batch_rank(words: np.ndarray, cols: int) -> np.ndarray:
    """Ranks of a stack of packed matrices of shape (samples, rows, nwords).

    Elimination proceeds one column at a time for all samples together.
    """
    m = np.array(words, dtype=np.uint64, copy=True)
    samples, rows, _ = m.shape
    ranks = np.zeros(samples, dtype=np.int64)
    if rows == 0 or cols == 0 or samples == 0:
        return ranks
    used = np.zeros((samples, rows), dtype=bool)
    idx = np.arange(samples)
    for c in range(cols):
        w, b = divmod(c, WORD)
        bits = ((m[:, :, w] >> np.uint64(b)) & np.uint64(1)).astype(bool)
        cand = bits & ~used
        has = cand.any(axis=1)
        if not has.any():
            continue
        piv = cand.argmax(axis=1)
        hit = bits & has[:, None]
        hit[idx, piv] = False
        prow = m[idx, piv]
        m ^= prow[:, None, :] * hit[:, :, None].astype(np.uint64)
        used[idx[has], piv[has]] = True
        ranks += has
    return ranks


def batch_corank(words: np.ndarray, cols: int) -> np.ndarray:
    return cols - batch_rank(words, cols)


def batch_rank_dense(dense: np.ndarray) -> np.ndarray:
    """Ranks of a stack of 0/1 matrices of shape (samples, rows, cols)."""
    return batch_rank(pack_bits(dense), dense.shape[-1])


__all__ = [
    "BitMatrix",
    "assemble",
    "batch_corank",
    "batch_rank",
    "batch_rank_dense",
    "hstack",
    "nwords",
    "pack_bits",
    "unpack_bits",
    "vstack",
]
