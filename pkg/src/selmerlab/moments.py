"""Generating functions, moments and the unlinked-subset average.

The limit laws of the alternating models have generating functions
F(X) = F0(X) + (-1)^r F0(-X) with F0 an entire series; the xi-th moment
E[2^(xi m)] = F(2^xi) collapses to a finite sum.

``hb_average`` computes the omega-average of 2^corank of a restricted Redei
expression with two k-sized block rows and columns.  It sums the sign
character over maximal unlinked subsets Lambda of F2^4, where v and w are
read off coordinate-wise; only the aggregated Legendre symbols z_lambda
survive, which makes the limit a finite exact sum.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .arith import PlaceSet
from .redei import K, OmegaBatch, RedeiExpr, Terms, _complete

Param = Optional[int]


@dataclass(frozen=True)
class GenFnSpec:
    """Type from the number of hole parameters; None stands for t = -infinity."""

    r: int
    t: tuple[Param, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "t", tuple(self.t))
        if self.r not in (0, 1) or len(self.t) > 2:
            raise ValueError("need r in {0,1} and at most two parameters")
        finite = [x for x in self.t if x is not None]
        if any((x - self.r) % 2 for x in finite):
            raise ValueError("finite t_i must be congruent to r mod 2")
        if len(self.t) == 2 and len(finite) == 2 and sum(finite) > 0:
            raise ValueError("two holes need t_1 + t_2 <= 0")

    @property
    def type(self) -> str:
        return "ABC"[len(self.t)]


def _tau(t: Param, i: int) -> float:
    return 0.0 if (t is None and i > 0) else (1.0 if t is None else 2.0 ** (i * t))


def _f0_base(X: float, tol: float) -> float:
    num = den = 1.0
    j = 0
    while 2.0 ** -j > tol * 1e-3:
        num *= 1 + 2.0 ** -j * X
        den *= 1 + 2.0 ** -j
        j += 1
    return num / den


def _pochhammer(X: float, n: int) -> float:
    out = 1.0
    for j in range(1, n + 1):
        out *= 2.0 ** (1 - j) * X - 1
    return out


def _qfac4(n: int) -> float:
    out = 1.0
    for j in range(1, n + 1):
        out *= 4.0 ** j - 1
    return out


def _f0(spec: GenFnSpec, X: float, tol: float) -> float:
    base = _f0_base(X, tol)
    if spec.type == "A":
        return base
    if spec.type == "B":
        (t1,) = spec.t
        total, i = 0.0, 0
        while True:
            term = _tau(t1, i) * _pochhammer(X, i) / _qfac4(i)
            total += term
            if i > 4 and abs(term) < tol * max(abs(total), 1e-300):
                break
            i += 1
            if i > 400:
                break
        return base * total
    t1, t2 = spec.t
    total = 0.0
    for n in range(0, 400):
        ring = 0.0
        for i1 in range(n + 1):
            i2 = n - i1
            w = _tau(t1, i1) * _tau(t2, i2)
            if w == 0:
                continue
            ring += w * 2.0 ** (2 * i1 * i2) * _pochhammer(X, n) / (_qfac4(i1) * _qfac4(i2))
        total += ring
        if n > 4 and abs(ring) < tol * max(abs(total), 1e-300):
            break
    return base * total


def gen_fn_eval(spec: GenFnSpec, X: float, tol: float = 1e-15) -> float:
    """F(X) = sum_m P(m) X^m for the limit law of the model."""
    sign = -1.0 if spec.r else 1.0
    return _f0(spec, X, tol) + sign * _f0(spec, -X, tol)


def _ftau(t: Param, i: int) -> Fraction:
    if t is None:
        return Fraction(1 if i == 0 else 0)
    return Fraction(2) ** (i * t)


def _prod(vals) -> int:
    return math.prod(vals)


def moment(spec: GenFnSpec, xi: int) -> Fraction:
    """E[2^(xi m)] under the limit law, exactly."""
    if xi < 0:
        raise ValueError("xi must be nonnegative")
    if spec.type == "A":
        return Fraction(_prod(1 + 2 ** j for j in range(1, xi + 1)))
    if spec.type == "B":
        (t1,) = spec.t
        total = Fraction(0)
        for i in range(xi + 1):
            num = _prod(2 ** (2 * (i + j)) - 1 for j in range(1, xi - i + 1))
            den = _prod(2 ** j - 1 for j in range(1, xi - i + 1))
            total += _ftau(t1, i) * Fraction(num, den)
        return total
    t1, t2 = spec.t
    top = _prod(4 ** j - 1 for j in range(1, xi + 1))
    total = Fraction(0)
    for i1 in range(xi + 1):
        for i2 in range(xi + 1 - i1):
            den = (_prod(4 ** j - 1 for j in range(1, i1 + 1))
                   * _prod(4 ** j - 1 for j in range(1, i2 + 1))
                   * _prod(2 ** j - 1 for j in range(1, xi - i1 - i2 + 1)))
            total += _ftau(t1, i1) * _ftau(t2, i2) * Fraction(2 ** (2 * i1 * i2) * top, den)
    return total


# unlinked subsets ------------------------------------------------------------

def _vec(bits: Sequence[int]) -> tuple[int, ...]:
    return tuple(int(b) & 1 for b in bits)


def symplectic_form(c: int) -> np.ndarray:
    I = np.eye(c, dtype=np.uint8)
    Z = np.zeros((c, c), dtype=np.uint8)
    return np.block([[Z, I], [I, Z]])


def linked(lam1: Sequence[int], lam2: Sequence[int], c: int) -> bool:
    u = [(x + y) & 1 for x, y in zip(lam1, lam2)]
    return sum(u[i] * u[c + i] for i in range(c)) % 2 == 1


def _span(vectors: Sequence[tuple[int, ...]]) -> frozenset:
    out = {tuple(0 for _ in vectors[0])}
    for v in vectors:
        out |= {_vec(np.add(u, v)) for u in out}
    return frozenset(out)


def _transvections(c: int) -> list[np.ndarray]:
    """Generators x -> x + <x, u> u of the symplectic group of F2^{2c}."""
    J = symplectic_form(c)
    gens = []
    for u in itertools.product((0, 1), repeat=2 * c):
        if any(u):
            uu = np.array(u, dtype=np.uint8)
            gens.append((np.eye(2 * c, dtype=np.uint8) + np.outer(uu, J @ uu)) % 2)
    return gens


def lagrangians(c: int) -> list[frozenset]:
    """Orbit of the standard Lagrangian span(e_1..e_c) under the symplectic group."""
    std = _span([_vec(np.eye(2 * c, dtype=np.uint8)[i]) for i in range(c)])
    gens = _transvections(c)
    seen = {std}
    todo = [std]
    while todo:
        L = todo.pop()
        for g in gens:
            img = frozenset(_vec(g @ np.array(x, dtype=np.uint8) % 2) for x in L)
            if img not in seen:
                seen.add(img)
                todo.append(img)
    return sorted(seen, key=lambda s: sorted(s))


def maximal_unlinked(c: int) -> list[tuple[tuple[int, ...], ...]]:
    """Unlinked subsets of size 2^c among the translates of Lagrangians (a = c)."""
    out = set()
    for L in lagrangians(c):
        for x in itertools.product((0, 1), repeat=2 * c):
            cand = tuple(sorted(_vec(np.add(x, y)) for y in L))
            if all(not linked(p, q, c) for p, q in itertools.combinations(cand, 2)):
                out.add(cand)
    return sorted(out)


def unlinked_bruteforce(c: int) -> list[tuple[tuple[int, ...], ...]]:
    """Same family by exhaustive search over subsets; used as a cross-check."""
    space = list(itertools.product((0, 1), repeat=2 * c))
    return sorted(
        tuple(sorted(S)) for S in itertools.combinations(space, 2 ** c)
        if all(not linked(p, q, c) for p, q in itertools.combinations(S, 2))
    )


# the average -----------------------------------------------------------------

@dataclass
class UnlinkedFrame:
    """Shape data for the average: a = c k-blocks, b fixed rows, d fixed columns."""

    sigma: PlaceSet
    s: tuple[int, ...]
    a: int
    b: int
    c: int
    d: int
    lambdas: list

    @classmethod
    def of(cls, expr: RedeiExpr, s: Sequence[int]) -> "UnlinkedFrame":
        a = sum(1 for x in expr.row_dims if x == K)
        c = sum(1 for x in expr.col_dims if x == K)
        if (a, c) != (2, 2):
            raise ValueError("only a = c = 2 is supported")
        b = sum(x for x in expr.row_dims if x != K)
        d = sum(x for x in expr.col_dims if x != K)
        return cls(expr.sigma, tuple(int(x) & 1 for x in s), a, b, c, d, maximal_unlinked(c))

    def upper_bound(self) -> float:
        return 3 * 2.0 ** (self.c * (self.c + 3) // 2 + self.d)


def high_part(expr: RedeiExpr) -> np.ndarray:
    """A-coefficients between the k-sized block rows and columns."""
    rows = [i for i, x in enumerate(expr.row_dims) if x == K]
    cols = [j for j, x in enumerate(expr.col_dims) if x == K]
    return np.array([[expr.get(i, j).A for j in cols] for i in rows], dtype=np.uint8)


def is_normalized(expr: RedeiExpr) -> bool:
    H = high_part(expr)
    return H.shape[0] == H.shape[1] and np.array_equal(H, np.eye(H.shape[0], dtype=np.uint8))


def normalize(expr: RedeiExpr) -> RedeiExpr:
    """Row operations among the k-sized block rows making the high part the identity."""
    H = high_part(expr)
    n = H.shape[0]
    if H.shape != (n, n):
        raise ValueError("high part is not square")
    # invert H over F2
    aug = np.concatenate([H, np.eye(n, dtype=np.uint8)], axis=1)
    for col in range(n):
        piv = next((r for r in range(col, n) if aug[r, col]), None)
        if piv is None:
            raise ValueError("high part is singular: not a high-rank expression")
        aug[[col, piv]] = aug[[piv, col]]
        for r in range(n):
            if r != col and aug[r, col]:
                aug[r] ^= aug[col]
    Hinv = aug[:, n:]
    rows = [i for i, x in enumerate(expr.row_dims) if x == K]
    R = np.eye(len(expr.row_dims), dtype=np.uint8)
    for p, i in enumerate(rows):
        R[i, :] = 0
        for q, j in enumerate(rows):
            R[i, j] = Hinv[p, q]
    C = np.eye(len(expr.col_dims), dtype=np.uint8)
    return expr.recombine(R, C)


def augment(expr: RedeiExpr, row_blocks: Sequence[int]) -> RedeiExpr:
    """Border by Z_Sigma columns on the given k-sized block rows and an identity block.

    The corank is unchanged: the new columns are matched by new identity rows.
    """
    t = Terms(expr.sigma)
    ns = t.ns
    extra = len(row_blocks)
    rows = list(expr.row_dims) + [ns] * extra
    cols = list(expr.col_dims) + [ns] * extra
    out = RedeiExpr(expr.sigma, rows, cols)
    for (i, j), blk in expr.blocks.items():
        out.set(i, j, blk.copy())
    R0, C0 = len(expr.row_dims), len(expr.col_dims)
    for e, i in enumerate(row_blocks):
        if expr.row_dims[i] != K:
            raise ValueError("augmentation applies to k-sized block rows")
        out.set(i, C0 + e, t.Z_Sigma)
        out.set(R0 + e, C0 + e, t.const(np.eye(ns, dtype=np.uint8)))
    return out


def _omega_lambda(ns: int, s: Sequence[int], size: int) -> np.ndarray:
    """All z in F2^{size x ns} with column sums s: shape (count, size, ns)."""
    free = np.array(list(itertools.product((0, 1), repeat=(size - 1) * ns)), dtype=np.uint8)
    free = free.reshape(-1, size - 1, ns)
    last = (np.asarray(s, dtype=np.uint8)[None, :] + free.sum(axis=1)) & 1
    return np.concatenate([free, last[:, None, :].astype(np.uint8)], axis=1)


def _fixed_index(dims: Sequence) -> tuple[list[int], list[int], list[int]]:
    """(k-block indices, fixed-block indices, offsets of fixed blocks in the tilde vector)."""
    kb = [i for i, x in enumerate(dims) if x == K]
    fb = [i for i, x in enumerate(dims) if x != K]
    offs = list(itertools.accumulate([dims[i] for i in fb], initial=0))
    return kb, fb, offs


def _all_bits(n: int) -> np.ndarray:
    return np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int64).reshape(2 ** n, n)


def _sign_sum(psi0: np.ndarray, alpha: np.ndarray, beta: np.ndarray, S: np.ndarray) -> int:
    """sum over z, vt, wt of (-1)^(psi0 + alpha.vt + wt.beta + wt^T S vt)."""
    b, d = S.shape
    V = _all_bits(d)
    W = _all_bits(b)
    quad = (W @ S.astype(np.int64) @ V.T) & 1
    total = 0
    for lo in range(0, psi0.shape[0], 4096):
        p0 = psi0[lo:lo + 4096, None, None]
        av = (alpha[lo:lo + 4096] @ V.T)[:, None, :]
        bw = (beta[lo:lo + 4096] @ W.T)[:, :, None]
        par = (p0 + av + bw + quad[None]) & 1
        total += int((1 - 2 * par).sum())
    return total


def _psi_symbolic(expr: RedeiExpr, frame: UnlinkedFrame, lam: np.ndarray, Z: np.ndarray):
    """Reduce w^T B v to (psi0, alpha, beta, S) from the primitive coefficients.

    lam is (4, c + a); Z is (count, 4, ns) aggregated symbols z_lambda.
    """
    c = frame.c
    m1 = expr.sigma.index(-1)
    rk, rf, roffs = _fixed_index(expr.row_dims)
    ck, cf, coffs = _fixed_index(expr.col_dims)
    cnt = Z.shape[0]
    Zi = Z.astype(np.int64)
    # g[J] = sum_lambda lambda_J z_lambda (column side), u[I] = sum_lambda lambda_{c+I} z_lambda
    g = np.einsum("l,nlp->np", lam[:, 0], Zi), np.einsum("l,nlp->np", lam[:, 1], Zi)
    u = np.einsum("l,nlp->np", lam[:, c], Zi), np.einsum("l,nlp->np", lam[:, c + 1], Zi)
    psi0 = np.zeros(cnt, dtype=np.int64)
    alpha = np.zeros((cnt, frame.d), dtype=np.int64)
    beta = np.zeros((cnt, frame.b), dtype=np.int64)
    S = np.zeros((frame.b, frame.d), dtype=np.int64)
    # the A terms after normalization: sum over ordered pairs of the -1 symbols
    for x in range(4):
        for y in range(x + 1, 4):
            coef = sum(((lam[x, l] + lam[y, l]) * lam[y, c + l]) for l in range(c)) & 1
            if coef:
                psi0 += Zi[:, x, m1] * Zi[:, y, m1]
    for (i, j), blk in expr.blocks.items():
        if i in rk and j in ck:
            I, J = rk.index(i), ck.index(j)
            if blk.D is not None and blk.D.any():
                w_l = lam[:, c + I] * lam[:, J]
                psi0 += np.einsum("l,nlp,p->n", w_l, Zi, blk.D.astype(np.int64))
            if blk.ZZ is not None and blk.ZZ.any():
                psi0 += np.einsum("np,pq,nq->n", u[I], blk.ZZ.astype(np.int64), g[J])
        elif i in rk:
            I, jf = rk.index(i), cf.index(j)
            alpha[:, coffs[jf]:coffs[jf + 1]] += u[I] @ blk.N.astype(np.int64)
        elif j in ck:
            J, i_f = ck.index(j), rf.index(i)
            beta[:, roffs[i_f]:roffs[i_f + 1]] += g[J] @ blk.N.astype(np.int64).T
        else:
            i_f, jf = rf.index(i), cf.index(j)
            S[roffs[i_f]:roffs[i_f + 1], coffs[jf]:coffs[jf + 1]] ^= blk.C.astype(np.int64)
    return psi0 & 1, alpha & 1, beta & 1, S & 1


def _psi_direct(expr: RedeiExpr, frame: UnlinkedFrame, lam: np.ndarray, Z: np.ndarray, rng=None):
    """Same reduction read off the evaluated matrix at a four-prime configuration.

    Prime x carries the label lam[x], so v and w restricted to the k-blocks
    are constant on it; the pairwise a-entries are irrelevant for unlinked
    labels and are drawn at random when ``rng`` is given.
    """
    c = frame.c
    cnt = Z.shape[0]
    zt = Z.transpose(0, 2, 1).astype(np.uint8)
    upper = np.zeros((cnt, 3, 3), dtype=np.uint8) if rng is None else rng.integers(0, 2, (cnt, 3, 3), dtype=np.uint8)
    batch = _complete(expr.sigma, upper, zt[:, :, :3], zt[:, :, 3])
    B = expr.eval_batch(batch).astype(np.int64)
    rk, rf, roffs = _fixed_index(expr.row_dims)
    ck, cf, coffs = _fixed_index(expr.col_dims)
    R, C = B.shape[1:]
    roff = list(itertools.accumulate([4 if x == K else x for x in expr.row_dims], initial=0))
    coff = list(itertools.accumulate([4 if x == K else x for x in expr.col_dims], initial=0))
    vk = np.zeros(C, dtype=np.int64)
    wk = np.zeros(R, dtype=np.int64)
    for J, j in enumerate(ck):
        vk[coff[j]:coff[j] + 4] = lam[:, J]
    for I, i in enumerate(rk):
        wk[roff[i]:roff[i] + 4] = lam[:, c + I]
    vt_pos = np.concatenate([np.arange(coff[j], coff[j + 1]) for j in cf]) if cf else np.zeros(0, int)
    wt_pos = np.concatenate([np.arange(roff[i], roff[i + 1]) for i in rf]) if rf else np.zeros(0, int)
    psi0 = np.einsum("r,nrc,c->n", wk, B, vk) & 1
    alpha = np.einsum("r,nrc->nc", wk, B[:, :, vt_pos]) & 1
    beta = np.einsum("nrc,c->nr", B[:, wt_pos, :], vk) & 1
    S = B[0][np.ix_(wt_pos, vt_pos)] & 1
    return psi0, alpha, beta, S


def hb_average(expr: RedeiExpr, s: Sequence[int], route: str = "symbolic", normalized: bool = False,
               rng: np.random.Generator | None = None) -> Fraction:
    """Limit of E[2^corank B(omega)] over configurations with class vector s.

    ``route`` selects the reduction of the sign character: "symbolic" from
    the block coefficients, "direct" by evaluating the expression at one
    prime per label.
    """
    if normalized and not is_normalized(expr):
        raise ValueError("expression is not normalized")
    if not normalized:
        expr = normalize(expr)
    frame = UnlinkedFrame.of(expr, s)
    ns = len(expr.sigma)
    Z = _omega_lambda(ns, frame.s, 4)
    total = 0
    for Lam in frame.lambdas:
        lam = np.array(Lam, dtype=np.int64)
        if route == "symbolic":
            parts = _psi_symbolic(expr, frame, lam, Z)
        elif route == "direct":
            parts = _psi_direct(expr, frame, lam, Z, rng)
        else:
            raise ValueError(f"unknown route {route!r}")
        total += _sign_sum(*parts)
    return Fraction(total, 2 ** (frame.b + 3 * ns))


def class_hb_average(cls, route: str = "symbolic") -> Fraction:
    """Average order of the essential Selmer group of a twist class.

    The restricted Gram expression has corank exactly two more than the
    essential matrix, so its average is divided by 4.
    """
    return hb_average(cls.high_rank.expr, cls.s, route) / 4


def mc_average(expr: RedeiExpr, s: Sequence[int], k: int, samples: int, seed: int = 0,
               view: str = "restricted") -> tuple[float, float]:
    """Monte Carlo mean of 2^corank at level k with its standard error."""
    from .model import shard_rng, shards
    from .redei import sample_omega_batch

    vals = []
    for shard, count in shards(samples):
        batch = sample_omega_batch(k, expr.sigma, s, shard_rng(seed, shard), count)
        vals.append(2.0 ** expr.corank_batch(batch, view))
    x = np.concatenate(vals)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


__all__ = [
    "GenFnSpec",
    "UnlinkedFrame",
    "augment",
    "class_hb_average",
    "gen_fn_eval",
    "hb_average",
    "high_part",
    "is_normalized",
    "lagrangians",
    "linked",
    "maximal_unlinked",
    "mc_average",
    "moment",
    "normalize",
    "symplectic_form",
    "unlinked_bruteforce",
]
