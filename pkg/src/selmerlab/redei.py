"""Symbolic Redei matrices and the probability space of Legendre symbols.

A RedeiExpr is a grid of blocks whose row and column sizes are either the
growing size ``k`` or a fixed integer.  Every block is stored by its
coefficients over the primitives, which makes the decomposition by ranks
canonical:

* k x k blocks:  c_A * A + diag(Z d) + Z M Z^T
* k x m blocks:  Z N         (columns are z_d vectors)
* m x k blocks:  N Z^T       (rows are z_d^T vectors)
* m x n blocks:  a constant matrix

where Z = (z_p)_{p in Sigma} is the k x #Sigma matrix of Legendre symbols.
The transpose of A is rewritten as A + D_{-1} + z_{-1} z_{-1}^T.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

import numpy as np

from .arith import OmegaPoint, PlaceSet, SquareClass, is_square
from .gf2 import BitMatrix, batch_rank, pack_bits

Dim = Union[str, int]
K = "k"
SquareLike = Union[int, Fraction, SquareClass, Sequence[int]]

RESTRICTED = "restricted"
UNRESTRICTED = "unrestricted"


def class_bits(d: SquareLike, sigma: PlaceSet) -> np.ndarray:
    """Exponent bits of d over the generators of Sigma."""
    if isinstance(d, SquareClass):
        if d.sigma != sigma:
            raise ValueError("square class over a different place set")
        return np.array(d.bits, dtype=np.uint8)
    if isinstance(d, (int, Fraction, np.integer)):
        return np.array(SquareClass.of(int(d) if isinstance(d, np.integer) else d, sigma).bits, dtype=np.uint8)
    bits = np.asarray(d, dtype=np.uint8) & 1
    if bits.shape != (len(sigma),):
        raise ValueError("bit vector length differs from the place set size")
    return bits


def class_label(bits: Sequence[int], sigma: PlaceSet) -> str:
    gens = [str(g) for g, b in zip(sigma.generators, bits) if b]
    return "*".join(gens) if gens else "1"


# ----------------------------------------------------------------------------
# blocks

class Block:
    """Coefficients of one block over the primitives of its shape class."""

    __slots__ = ("kind", "ns", "A", "D", "ZZ", "N", "C")

    def __init__(self, kind: tuple[Dim, Dim], ns: int) -> None:
        self.kind = kind
        self.ns = ns
        r, c = kind
        self.A = 0
        self.D = np.zeros(ns, dtype=np.uint8) if (r == K and c == K) else None
        self.ZZ = np.zeros((ns, ns), dtype=np.uint8) if (r == K and c == K) else None
        if r == K and c != K:
            self.N = np.zeros((ns, c), dtype=np.uint8)
        elif r != K and c == K:
            self.N = np.zeros((r, ns), dtype=np.uint8)
        else:
            self.N = None
        self.C = np.zeros((r, c), dtype=np.uint8) if (r != K and c != K) else None

    @property
    def square(self) -> bool:
        return self.kind == (K, K)

    def copy(self) -> "Block":
        out = Block(self.kind, self.ns)
        out.A = self.A
        for name in ("D", "ZZ", "N", "C"):
            val = getattr(self, name)
            setattr(out, name, None if val is None else val.copy())
        return out

    def __add__(self, other: "Block") -> "Block":
        if self.kind != other.kind or self.ns != other.ns:
            raise ValueError(f"cannot add blocks of shapes {self.kind} and {other.kind}")
        out = self.copy()
        out.A ^= other.A
        for name in ("D", "ZZ", "N", "C"):
            val = getattr(out, name)
            if val is not None:
                val ^= getattr(other, name)
        return out

    def is_zero(self) -> bool:
        return not (self.A or any(v is not None and v.any() for v in (self.D, self.ZZ, self.N, self.C)))

    def part(self, which: str) -> "Block":
        out = Block(self.kind, self.ns)
        if which == "high":
            out.A = self.A
        elif which == "medium":
            if self.D is not None:
                out.D = self.D.copy()
        elif which == "low":
            for name in ("ZZ", "N", "C"):
                val = getattr(self, name)
                if val is not None:
                    setattr(out, name, val.copy())
        else:
            raise ValueError(f"unknown part {which!r}")
        return out

    def transpose(self, minus_one: int = 0) -> "Block":
        r, c = self.kind
        out = Block((c, r), self.ns)
        if self.square:
            out.A = self.A
            out.D = self.D.copy()
            out.ZZ = self.ZZ.T.copy()
            if self.A:
                out.D[minus_one] ^= 1
                out.ZZ[minus_one, minus_one] ^= 1
        elif self.N is not None:
            out.N = self.N.T.copy()
        else:
            out.C = self.C.T.copy()
        return out

    # evaluation ----------------------------------------------------------
    def eval_batch(self, a: np.ndarray, Z: np.ndarray) -> np.ndarray:
        """Dense value for a batch; a is (S,k,k), Z is (S,k,#Sigma)."""
        S, k, _ = Z.shape
        r, c = self.kind
        rows = k if r == K else r
        cols = k if c == K else c
        if self.square:
            out = (a & 1).copy() if self.A else np.zeros((S, k, k), dtype=np.uint8)
            if self.D.any():
                diag = (Z.astype(np.int32) @ self.D.astype(np.int32)) & 1
                ii = np.arange(k)
                out[:, ii, ii] ^= diag.astype(np.uint8)
            if self.ZZ.any():
                zi = Z.astype(np.int32)
                out ^= ((zi @ self.ZZ.astype(np.int32) @ zi.transpose(0, 2, 1)) & 1).astype(np.uint8)
            return out
        if self.N is not None:
            zi = Z.astype(np.int32)
            if r == K:
                return ((zi @ self.N.astype(np.int32)) & 1).astype(np.uint8)
            return ((self.N.astype(np.int32) @ zi.transpose(0, 2, 1)) & 1).astype(np.uint8)
        return np.broadcast_to(self.C, (S, rows, cols)).copy()

    def text(self, sigma: PlaceSet) -> str:
        toks: list[str] = []
        lab = lambda bits: class_label(bits, sigma)  # noqa: E731
        if self.square:
            if self.A:
                toks.append("A")
            if self.D.any():
                toks.append(f"D[{lab(self.D)}]")
            for i, j in zip(*np.nonzero(self.ZZ)):
                toks.append(f"zz[{sigma.generators[i]}][{sigma.generators[j]}]")
        elif self.N is not None:
            r, c = self.kind
            if r == K and c == self.ns and np.array_equal(self.N, np.eye(self.ns, dtype=np.uint8)):
                toks.append("Z_Sigma")
            elif r == K:
                for j in range(c):
                    if self.N[:, j].any():
                        toks.append(f"z[{lab(self.N[:, j])}]@{j}")
            else:
                for i in range(r):
                    if self.N[i].any():
                        toks.append(f"zT[{lab(self.N[i])}]@{i}")
        elif self.C.any():
            toks.append("C[" + ";".join("".join(str(int(x)) for x in row) for row in self.C) + "]")
        return " + ".join(toks) if toks else "0"


class Terms:
    """Factory for primitive blocks over a fixed place set."""

    def __init__(self, sigma: PlaceSet) -> None:
        self.sigma = sigma
        self.ns = len(sigma)
        self.m1 = sigma.index(-1)

    def bits(self, d: SquareLike) -> np.ndarray:
        return class_bits(d, self.sigma)

    def zero(self, rows: Dim, cols: Dim) -> Block:
        return Block((rows, cols), self.ns)

    @property
    def A(self) -> Block:
        b = Block((K, K), self.ns)
        b.A = 1
        return b

    @property
    def AT(self) -> Block:
        return self.A.transpose(self.m1)

    def D(self, d: SquareLike) -> Block:
        b = Block((K, K), self.ns)
        b.D = self.bits(d).copy()
        return b

    def zz(self, c: SquareLike, d: SquareLike) -> Block:
        b = Block((K, K), self.ns)
        b.ZZ = (np.outer(self.bits(c), self.bits(d)) & 1).astype(np.uint8)
        return b

    def Ad(self, d: SquareLike) -> Block:
        """A_d = D_d + z_d z_d^T."""
        return self.D(d) + self.zz(d, d)

    def zcols(self, ds: Sequence[SquareLike]) -> Block:
        b = Block((K, len(ds)), self.ns)
        for j, d in enumerate(ds):
            b.N[:, j] = self.bits(d)
        return b

    def zrows(self, ds: Sequence[SquareLike]) -> Block:
        b = Block((len(ds), K), self.ns)
        for i, d in enumerate(ds):
            b.N[i] = self.bits(d)
        return b

    def z(self, d: SquareLike) -> Block:
        return self.zcols([d])

    def zT(self, d: SquareLike) -> Block:
        return self.zrows([d])

    @property
    def Z_Sigma(self) -> Block:
        b = Block((K, self.ns), self.ns)
        b.N = np.eye(self.ns, dtype=np.uint8)
        return b

    def const(self, mat: Sequence[Sequence[int]] | np.ndarray) -> Block:
        arr = np.asarray(mat, dtype=np.uint8) & 1
        if arr.ndim != 2:
            raise ValueError("constant block must be 2-dimensional")
        b = Block((arr.shape[0], arr.shape[1]), self.ns)
        b.C = arr.copy()
        return b


# ----------------------------------------------------------------------------
# Legendre-symbol configurations in batches

@dataclass
class OmegaBatch:
    """A stack of configurations: a is (S,k,k), z is (S,#Sigma,k)."""

    sigma: PlaceSet
    a: np.ndarray
    z: np.ndarray

    @property
    def k(self) -> int:
        return int(self.a.shape[1])

    @property
    def size(self) -> int:
        return int(self.a.shape[0])

    @classmethod
    def of(cls, points: Sequence[OmegaPoint]) -> "OmegaBatch":
        if not points:
            raise ValueError("empty batch")
        sigma = points[0].sigma
        return cls(sigma, np.stack([p.a for p in points]), np.stack([p.z for p in points]))

    def point(self, i: int) -> OmegaPoint:
        return OmegaPoint(self.sigma, self.a[i].copy(), self.z[i].copy())

    def view(self, view: str) -> tuple[np.ndarray, np.ndarray]:
        """(a, Z) restricted to the view, Z shaped (S,k,#Sigma)."""
        if view == RESTRICTED:
            return self.a, self.z.transpose(0, 2, 1)
        if view == UNRESTRICTED:
            k1 = self.k - 1
            return self.a[:, :k1, :k1], self.z[:, :, :k1].transpose(0, 2, 1)
        raise ValueError(f"unknown view {view!r}")


def _complete(sigma: PlaceSet, upper: np.ndarray, zfree: np.ndarray, zlast: np.ndarray) -> OmegaBatch:
    """Assemble full points from free coordinates.

    upper: (S,k-1,k-1) upper triangle incl. diagonal is used; zfree: (S,#Sigma,k-1);
    zlast: (S,#Sigma) value of z at the last index.
    """
    S, k1, _ = upper.shape
    k = k1 + 1
    ns = len(sigma)
    m1 = sigma.index(-1)
    z = np.zeros((S, ns, k), dtype=np.uint8)
    z[:, :, :k1] = zfree
    z[:, :, k1] = zlast
    zm = z[:, m1, :]
    a = np.zeros((S, k, k), dtype=np.uint8)
    if k1:
        tri = np.triu(np.ones((k1, k1), dtype=bool))
        up = upper & tri
        low = (up.transpose(0, 2, 1) ^ (zm[:, :k1, None] & zm[:, None, :k1])) & ~tri
        a[:, :k1, :k1] = up | low
        a[:, :k1, k1] = a[:, :k1, :k1].sum(axis=2) & 1
        a[:, k1, :k1] = a[:, :k1, k1] ^ (zm[:, :k1] & zm[:, k1:k1 + 1])
        a[:, k1, k1] = a[:, k1, :k1].sum(axis=1) & 1
    return OmegaBatch(sigma, a, z)


def _zlast(zfree: np.ndarray, s: Sequence[int] | None, rng: np.random.Generator, S: int, ns: int) -> np.ndarray:
    if s is None:
        return rng.integers(0, 2, size=(S, ns), dtype=np.uint8)
    sv = np.asarray(s, dtype=np.uint8) & 1
    if sv.shape != (ns,):
        raise ValueError("class vector length differs from the place set size")
    return (sv[None, :] + zfree.sum(axis=2)).astype(np.uint8) & 1


def sample_omega_batch(
    k: int, sigma: PlaceSet, s: Sequence[int] | None, rng: np.random.Generator, size: int
) -> OmegaBatch:
    """Uniform samples from the configurations of size k with class vector s."""
    if k < 1:
        raise ValueError("k must be at least 1")
    ns = len(sigma)
    upper = rng.integers(0, 2, size=(size, k - 1, k - 1), dtype=np.uint8)
    zfree = rng.integers(0, 2, size=(size, ns, k - 1), dtype=np.uint8)
    return _complete(sigma, upper, zfree, _zlast(zfree, s, rng, size, ns))


def sample_omega(k: int, sigma: PlaceSet, s: Sequence[int] | None, rng: np.random.Generator) -> OmegaPoint:
    return sample_omega_batch(k, sigma, s, rng, 1).point(0)


def extend_omega_batch(batch: OmegaBatch, rng: np.random.Generator, s: Sequence[int] | None = None) -> OmegaBatch:
    """Add one prime: keep all free coordinates and draw the new ones.

    The class vector is read off the batch when ``s`` is None, so a batch
    drawn with a fixed class stays in that class.
    """
    S, k = batch.size, batch.k
    ns = len(batch.sigma)
    upper = np.zeros((S, k, k), dtype=np.uint8)
    upper[:, : k - 1, : k - 1] = np.triu(batch.a[:, : k - 1, : k - 1])
    upper[:, :, k - 1] = rng.integers(0, 2, size=(S, k), dtype=np.uint8)
    zfree = np.zeros((S, ns, k), dtype=np.uint8)
    zfree[:, :, : k - 1] = batch.z[:, :, : k - 1]
    zfree[:, :, k - 1] = rng.integers(0, 2, size=(S, ns), dtype=np.uint8)
    if s is None:
        sv = batch.z.sum(axis=2) & 1
        zlast = (sv + zfree.sum(axis=2)) & 1
    else:
        zlast = _zlast(zfree, s, rng, S, ns)
    return _complete(batch.sigma, upper, zfree, zlast.astype(np.uint8))


def extend_omega(omega: OmegaPoint, rng: np.random.Generator) -> OmegaPoint:
    return extend_omega_batch(OmegaBatch.of([omega]), rng).point(0)


def project_omega(omega: OmegaPoint) -> OmegaPoint:
    """Drop the last free layer: the inverse of :func:`extend_omega` on free coordinates."""
    k = omega.k
    if k < 2:
        raise ValueError("cannot project below k = 1")
    upper = np.triu(omega.a[: k - 2, : k - 2])[None]
    zfree = omega.z[:, : k - 2][None]
    zlast = ((np.array(omega.s_vector(), dtype=np.uint8) + zfree[0].sum(axis=1)) & 1)[None]
    return _complete(omega.sigma, upper, zfree, zlast.astype(np.uint8)).point(0)


def free_coordinates(omega: OmegaPoint) -> tuple[int, ...]:
    """The free-coordinate vector (upper triangle of A', then z')."""
    k1 = omega.k - 1
    iu = np.triu_indices(k1)
    return tuple(int(x) for x in np.concatenate([omega.a[:k1, :k1][iu], omega.z[:, :k1].reshape(-1)]))


# ----------------------------------------------------------------------------
# expressions

class RedeiExpr:
    """A block matrix of Redei primitives, uniform in k."""

    def __init__(
        self,
        sigma: PlaceSet,
        row_dims: Sequence[Dim],
        col_dims: Sequence[Dim],
        blocks: dict[tuple[int, int], Block] | None = None,
    ) -> None:
        self.sigma = sigma
        self.row_dims = tuple(row_dims)
        self.col_dims = tuple(col_dims)
        self.blocks: dict[tuple[int, int], Block] = {}
        for (i, j), blk in (blocks or {}).items():
            self.set(i, j, blk)

    @classmethod
    def from_grid(cls, sigma: PlaceSet, row_dims: Sequence[Dim], col_dims: Sequence[Dim],
                  grid: Sequence[Sequence[Block | None]]) -> "RedeiExpr":
        expr = cls(sigma, row_dims, col_dims)
        if len(grid) != len(row_dims) or any(len(r) != len(col_dims) for r in grid):
            raise ValueError("grid shape does not match the block dimensions")
        for i, row in enumerate(grid):
            for j, blk in enumerate(row):
                if blk is not None:
                    expr.set(i, j, blk)
        return expr

    def set(self, i: int, j: int, blk: Block) -> None:
        if blk.kind != (self.row_dims[i], self.col_dims[j]):
            raise ValueError(f"block ({i},{j}) has shape {blk.kind}, expected {(self.row_dims[i], self.col_dims[j])}")
        if not blk.is_zero():
            self.blocks[(i, j)] = blk
        else:
            self.blocks.pop((i, j), None)

    def get(self, i: int, j: int) -> Block:
        blk = self.blocks.get((i, j))
        return blk.copy() if blk is not None else Block((self.row_dims[i], self.col_dims[j]), len(self.sigma))

    def copy(self) -> "RedeiExpr":
        return RedeiExpr(self.sigma, self.row_dims, self.col_dims, {key: b.copy() for key, b in self.blocks.items()})

    def __add__(self, other: "RedeiExpr") -> "RedeiExpr":
        if (self.sigma, self.row_dims, self.col_dims) != (other.sigma, other.row_dims, other.col_dims):
            raise ValueError("expression shapes differ")
        out = self.copy()
        for (i, j), b in other.blocks.items():
            out.set(i, j, out.get(i, j) + b)
        return out

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RedeiExpr):
            return NotImplemented
        return (self + other).is_zero() if (self.sigma, self.row_dims, self.col_dims) == (
            other.sigma, other.row_dims, other.col_dims) else False

    def is_zero(self) -> bool:
        return not self.blocks

    # shape -----------------------------------------------------------------
    @staticmethod
    def _size(dims: Sequence[Dim], kk: int) -> int:
        return sum(kk if d == K else d for d in dims)

    def shape(self, k: int, view: str = RESTRICTED) -> tuple[int, int]:
        kk = k if view == RESTRICTED else k - 1
        return self._size(self.row_dims, kk), self._size(self.col_dims, kk)

    # structure -------------------------------------------------------------
    def part(self, which: str) -> "RedeiExpr":
        """High (A), medium (D) or low (everything else) part."""
        return RedeiExpr(self.sigma, self.row_dims, self.col_dims,
                         {key: b.part(which) for key, b in self.blocks.items()})

    def has_high(self) -> bool:
        return any(b.A for b in self.blocks.values())

    def has_medium(self) -> bool:
        return any(b.D is not None and b.D.any() for b in self.blocks.values())

    def is_low_rank(self) -> bool:
        return not (self.has_high() or self.has_medium())

    def transpose(self) -> "RedeiExpr":
        m1 = self.sigma.index(-1)
        return RedeiExpr(self.sigma, self.col_dims, self.row_dims,
                         {(j, i): b.transpose(m1) for (i, j), b in self.blocks.items()})

    def select(self, rows: Sequence[int], cols: Sequence[int]) -> "RedeiExpr":
        """Sub-expression made of the chosen block rows and block columns."""
        out = RedeiExpr(self.sigma, [self.row_dims[i] for i in rows], [self.col_dims[j] for j in cols])
        for a, i in enumerate(rows):
            for b, j in enumerate(cols):
                if (i, j) in self.blocks:
                    out.set(a, b, self.blocks[(i, j)].copy())
        return out

    def recombine(self, row_map: Sequence[Sequence[int]], col_map: Sequence[Sequence[int]]) -> "RedeiExpr":
        """Block-level change of basis: new row i = sum_j row_map[i][j] * old row j."""
        rm = np.asarray(row_map, dtype=np.uint8)
        cm = np.asarray(col_map, dtype=np.uint8)
        new_rows = [self._mapped_dim(self.row_dims, r) for r in rm]
        new_cols = [self._mapped_dim(self.col_dims, c) for c in cm]
        out = RedeiExpr(self.sigma, new_rows, new_cols)
        for a in range(len(new_rows)):
            for b in range(len(new_cols)):
                acc = Block((new_rows[a], new_cols[b]), len(self.sigma))
                for i in np.flatnonzero(rm[a]):
                    for j in np.flatnonzero(cm[b]):
                        if (i, j) in self.blocks:
                            acc = acc + self.blocks[(i, j)]
                out.set(a, b, acc)
        return out

    @staticmethod
    def _mapped_dim(dims: Sequence[Dim], coeffs: np.ndarray) -> Dim:
        used = {dims[j] for j in np.flatnonzero(coeffs)}
        if len(used) != 1:
            raise ValueError("a recombined block must mix blocks of one size")
        return used.pop()

    # evaluation ------------------------------------------------------------
    def eval_batch(self, batch: OmegaBatch, view: str = RESTRICTED) -> np.ndarray:
        """Dense values, shape (S, rows, cols)."""
        if batch.sigma != self.sigma:
            raise ValueError("configuration and expression use different place sets")
        a, Z = batch.view(view)
        kk = a.shape[1]
        if kk < 0:
            raise ValueError("k too small for the view")
        R, C = self.shape(batch.k, view)
        out = np.zeros((batch.size, R, C), dtype=np.uint8)
        roff = np.cumsum([0] + [kk if d == K else d for d in self.row_dims])
        coff = np.cumsum([0] + [kk if d == K else d for d in self.col_dims])
        for (i, j), blk in self.blocks.items():
            out[:, roff[i]:roff[i + 1], coff[j]:coff[j + 1]] = blk.eval_batch(a, Z)
        return out

    def eval(self, omega: OmegaPoint, view: str = RESTRICTED) -> BitMatrix:
        return BitMatrix.from_dense(self.eval_batch(OmegaBatch.of([omega]), view)[0])

    def rank_batch(self, batch: OmegaBatch, view: str = RESTRICTED, chunk: int = 20000) -> np.ndarray:
        out = np.empty(batch.size, dtype=np.int64)
        for lo in range(0, batch.size, chunk):
            sub = OmegaBatch(batch.sigma, batch.a[lo:lo + chunk], batch.z[lo:lo + chunk])
            dense = self.eval_batch(sub, view)
            out[lo:lo + chunk] = batch_rank(pack_bits(dense), dense.shape[2])
        return out

    def corank_batch(self, batch: OmegaBatch, view: str = RESTRICTED) -> np.ndarray:
        return self.shape(batch.k, view)[1] - self.rank_batch(batch, view)

    # text ------------------------------------------------------------------
    def to_text(self) -> str:
        fmt = lambda dims: ",".join(str(d) for d in dims)  # noqa: E731
        lines = [f"sigma={self.sigma} rows=[{fmt(self.row_dims)}] cols=[{fmt(self.col_dims)}]"]
        for (i, j) in sorted(self.blocks):
            lines.append(f"B[{i},{j}]: {self.blocks[(i, j)].text(self.sigma)}")
        return "\n".join(lines)

    def __repr__(self) -> str:
        return self.to_text()


# ----------------------------------------------------------------------------
# operations on expressions

def low_rank_witness(sigma: PlaceSet, s: Sequence[int] | None = None) -> OmegaPoint:
    """k = #Sigma + 1, the first #Sigma columns of Z form the identity, free a = 0."""
    ns = len(sigma)
    upper = np.zeros((1, ns, ns), dtype=np.uint8)
    zfree = np.eye(ns, dtype=np.uint8)[None]
    sv = np.zeros(ns, dtype=np.uint8) if s is None else np.asarray(s, dtype=np.uint8) & 1
    zlast = ((sv + zfree[0].sum(axis=1)) & 1)[None].astype(np.uint8)
    return _complete(sigma, upper, zfree, zlast).point(0)


def low_rank_max_rank(expr: RedeiExpr, s: Sequence[int] | None = None, view: str = RESTRICTED) -> int:
    """Maximal rank of a low-rank expression, read off one synthetic witness."""
    if not expr.is_low_rank():
        raise ValueError("expression contains A or D primitives")
    sigma = expr.sigma
    omega = low_rank_witness(sigma, s)
    return expr.eval(omega, view).rank()


@dataclass(frozen=True)
class FamilyType:
    type: str
    d: tuple[int, int, int]
    squares: tuple[bool, bool, bool]


def classify_family(e1: int, e2: int) -> FamilyType:
    """Type A/B/C of y^2 = x(x-e1)(x-e2) from the perfect squares among d1, d2, d3."""
    if e1 == 0 or e2 == 0 or e1 == e2:
        raise ValueError("singular curve parameters")
    d = (e1 * (e1 - e2), e1 * e2, -e2 * (e1 - e2))
    sq = tuple(x > 0 and is_square(x) for x in d)
    return FamilyType("ABC"[sum(sq)], d, sq)  # type: ignore[arg-type]


# ----------------------------------------------------------------------------
# conditional span probability (two evaluations)

def _span(basis: Sequence[Sequence[int]], dim: int) -> BitMatrix:
    if not basis:
        return BitMatrix.zeros(dim, 0)
    return BitMatrix.from_dense(np.array(basis, dtype=np.uint8).reshape(len(basis), dim).T)


def conditional_span_probability(
    instances: Sequence[tuple[Fraction | int, Sequence[Sequence[int]], Sequence[Sequence[int]]]],
    ambient_dim: int,
) -> Fraction:
    """P(w in V | w uniform in W), averaged over weighted instances (V, W).

    Evaluated directly from #(V cap W)/#W and through the dual sum over
    linear forms h vanishing on V and W; a mismatch raises AssertionError.
    """
    total = sum(Fraction(w) for w, _, _ in instances)
    if total <= 0:
        raise ValueError("weights must have positive sum")
    direct = Fraction(0)
    mats = []
    for w, vb, wb in instances:
        V, W = _span(vb, ambient_dim), _span(wb, ambient_dim)
        rv, rw = V.rank(), W.rank()
        rvw = _span(list(vb) + list(wb), ambient_dim).rank()
        inter = rv + rw - rvw
        direct += Fraction(w) / total * Fraction(2 ** inter, 2 ** rw)
        mats.append((Fraction(w) / total, np.array(list(vb) + list(wb), dtype=np.int64).reshape(-1, ambient_dim), rv))
    dual = Fraction(0)
    for h in itertools.product((0, 1), repeat=ambient_dim):
        hv = np.array(h, dtype=np.int64)
        for p, gens, rv in mats:
            if gens.size == 0 or not ((gens @ hv) % 2).any():
                dual += p / 2 ** (ambient_dim - rv)
    if direct != dual:
        raise AssertionError(f"span probability mismatch: {direct} vs {dual}")
    return direct


__all__ = [
    "Block",
    "FamilyType",
    "K",
    "OmegaBatch",
    "RESTRICTED",
    "RedeiExpr",
    "Terms",
    "UNRESTRICTED",
    "class_bits",
    "class_label",
    "classify_family",
    "conditional_span_probability",
    "extend_omega",
    "extend_omega_batch",
    "free_coordinates",
    "low_rank_max_rank",
    "low_rank_witness",
    "project_omega",
    "sample_omega",
    "sample_omega_batch",
]
