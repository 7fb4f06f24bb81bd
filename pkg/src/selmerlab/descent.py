"""Explicit 2-descent on quadratic twists y^2 = x(x - e1 m)(x - e2 m).

Conventions.  H^1(Q_v, E[2]) is identified with two copies of the local
square classes through the Kummer coordinates (x, x - e1 m), so the
torsion basis P1 = (e1 m, 0), P2 = (0, 0) maps to the columns of
``kummer_matrix`` (with m attached to the diagonal).  A global class
x = (x1, x2) in Q(S,2)^2 is a bit vector over the generators of S,
first component first.  Local vectors at a place v have 2*dim_v
coordinates, again first component first.

Three routes to the same dimensions are provided:

* :func:`selmer_oracle` enumerates Q(S,2)^2 and tests local conditions;
* :func:`build_kernel_matrix` evaluates a kernel matrix from Legendre symbols;
* :func:`build_gram_matrix` builds the alternating Gram matrix of the
  pairing theta(x, y) = e(x_U, y) from a Lagrangian complement K.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from .arith import (
    INF,
    OmegaPoint,
    PlaceSet,
    Rational,
    SquareClass,
    class_vector,
    hilbert_additive,
    is_local_square,
    is_prime,
    is_square,
    local_basis,
    local_coords,
    local_dim,
    local_representative,
    omega_of,
    sieve_squarefree,
    trial_factor,
    valuation,
)
from .gf2 import BitMatrix
from .redei import (
    K,
    RESTRICTED,
    UNRESTRICTED,
    FamilyType,
    OmegaBatch,
    RedeiExpr,
    Terms,
    classify_family,
    low_rank_max_rank,
)

ORACLE_CAP = 10
SWEEP_LADDER = (16, 128, 1024)
WITNESS_PRIME_CAP = 1_000_000

# Weil pairing on E[2] in the basis (P1, P2)
WEIL = ((0, 1), (1, 0))


# ----------------------------------------------------------------------------
# small F2 helpers on uint8 vectors

def _as_rows(vectors: Sequence[Sequence[int]], dim: int) -> np.ndarray:
    if len(vectors) == 0:
        return np.zeros((0, dim), dtype=np.uint8)
    return (np.asarray(vectors, dtype=np.uint8) & 1).reshape(len(vectors), dim)


def _rank(vectors: Sequence[Sequence[int]], dim: int) -> int:
    rows = _as_rows(vectors, dim)
    return BitMatrix.from_dense(rows).rank() if len(rows) else 0


def _basis(vectors: Sequence[Sequence[int]], dim: int) -> list[np.ndarray]:
    """A basis of the span, as the nonzero rows of the reduced echelon form."""
    rows = _as_rows(vectors, dim)
    if not len(rows):
        return []
    red, piv = BitMatrix.from_dense(rows).rref()
    return [red.row(i).copy() for i in range(len(piv))]


def _annihilator(vectors: Sequence[Sequence[int]], dim: int) -> np.ndarray:
    """Rows spanning {h : h.w = 0 for all w}; the kernel of these rows is the span."""
    rows = _as_rows(vectors, dim)
    if not len(rows):
        return np.eye(dim, dtype=np.uint8)
    ker = BitMatrix.from_dense(rows).kernel_basis()
    return _as_rows(ker, dim)


def _intersection(a: Sequence[Sequence[int]], b: Sequence[Sequence[int]], dim: int) -> list[np.ndarray]:
    ra, rb = _as_rows(a, dim), _as_rows(b, dim)
    if not len(ra) or not len(rb):
        return []
    stacked = BitMatrix.from_dense(np.concatenate([ra, rb]).T)
    out = []
    for c in stacked.kernel_basis():
        out.append((c[: len(ra)].astype(np.int64) @ ra.astype(np.int64) % 2).astype(np.uint8))
    return _basis(out, dim)


def _solve_columns(cols: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Coefficients c with cols @ c = target, cols given as (dim, n) dense."""
    sol = BitMatrix.from_dense(cols).solve(target)
    if sol is None:
        raise AssertionError("vector outside the expected span")
    return sol


# ----------------------------------------------------------------------------
# families, classes, global square classes

@dataclass(frozen=True)
class CurveFamily:
    """The quadratic twist family of y^2 = x(x - e1)(x - e2)."""

    e1: int
    e2: int

    def __post_init__(self) -> None:
        if self.e1 == 0 or self.e2 == 0 or self.e1 == self.e2:
            raise ValueError("singular curve parameters")

    @property
    def kummer_matrix(self) -> tuple[tuple[int, int], tuple[int, int]]:
        e1, e2 = self.e1, self.e2
        return ((e1, e1 * e2), (e1 * (e1 - e2), -e1))

    @property
    def sigma0(self) -> PlaceSet:
        return PlaceSet.for_integers(2 * self.e1 * self.e2 * (self.e1 - self.e2))

    @property
    def kind(self) -> FamilyType:
        return classify_family(self.e1, self.e2)

    @property
    def d(self) -> tuple[int, int, int]:
        """(e1(e1-e2), e1 e2, -e2(e1-e2)): the classes cut out by the three isogenies."""
        return self.kind.d

    def torsion_images(self, m: Rational) -> tuple[tuple[Fraction, Fraction], ...]:
        """Global Kummer images of P1, P2 and P1 + P2 as rational pairs."""
        (a, b), (c, dd) = self.kummer_matrix
        m = Fraction(m)
        p1 = (a * m, Fraction(c))
        p2 = (Fraction(b), dd * m)
        return p1, p2, (p1[0] * p2[0], p1[1] * p2[1])

    def __str__(self) -> str:
        return f"({self.e1},{self.e2})"


def global_bits(x: Rational, gens: Sequence[int]) -> np.ndarray:
    """Exponent bits of the rational x over the generators (-1 first); x must be S-supported."""
    fx = Fraction(x)
    if fx == 0:
        raise ValueError("zero has no square class")
    num, den = abs(fx.numerator), fx.denominator
    out = np.zeros(len(gens), dtype=np.uint8)
    for i, g in enumerate(gens):
        if g == INF:
            out[i] = 1 if fx < 0 else 0
            continue
        vn = valuation(num, g) if num % g == 0 else 0
        vd = valuation(den, g) if den % g == 0 else 0
        num //= g ** vn
        den //= g ** vd
        out[i] = (vn + vd) & 1
    if not is_square(num * den):
        raise ValueError(f"{x} is not supported on {tuple(gens)}")
    return out


def bits_value(bits: Sequence[int], gens: Sequence[int]) -> int:
    out = 1
    for g, b in zip(gens, bits):
        if b:
            out *= g
    return out


def split_twist(m: int, sigma: PlaceSet) -> tuple[SquareClass, int, tuple[int, ...]]:
    """m = q * n with q in Q(Sigma,2) and n the positive prime-to-Sigma part."""
    if m == 0:
        raise ValueError("twist parameter must be nonzero")
    fac = trial_factor(m)
    if any(e > 1 for e in fac.values()):
        raise ValueError(f"{m} is not square-free")
    primes = tuple(sorted(p for p in fac if p not in sigma))
    n = 1
    for p in primes:
        n *= p
    return SquareClass.of(Fraction(m, n), sigma), n, primes


# ----------------------------------------------------------------------------
# local spaces

def local_pair(x1: Rational, x2: Rational, place: int) -> np.ndarray:
    return np.array(local_coords(x1, place) + local_coords(x2, place), dtype=np.uint8)


@lru_cache(maxsize=None)
def local_hilbert_matrix(place: int) -> np.ndarray:
    basis = local_basis(place)
    return np.array([[hilbert_additive(a, b, place) for b in basis] for a in basis], dtype=np.uint8)


@lru_cache(maxsize=None)
def local_pairing(place: int) -> np.ndarray:
    """Gram matrix of e_v((b1,b2),(c1,c2)) = [b1,c2] + [b2,c1]."""
    h = local_hilbert_matrix(place)
    z = np.zeros_like(h)
    return np.block([[z, h], [h, z]]).astype(np.uint8)


def local_phi(family: CurveFamily, vec: Sequence[int], place: int) -> int:
    """phi_v(b1, b2) = [e1 e2 b1, e1(e1-e2) b2]_v."""
    dim = local_dim(place)
    b1 = local_representative(vec[:dim], place)
    b2 = local_representative(vec[dim:], place)
    d1, d2, _ = family.d
    return hilbert_additive(d2 * b1, d1 * b2, place)


@dataclass
class LocalImage:
    """Im(kappa_v) inside the 2*dim_v local coordinates."""

    place: int
    basis: tuple[tuple[int, ...], ...]
    expected_dim: int

    @property
    def dim(self) -> int:
        return len(self.basis)

    def contains(self, vec: Sequence[int]) -> bool:
        d = 2 * local_dim(self.place)
        return _rank(list(self.basis) + [list(vec)], d) == self.dim

    def quotient_map(self) -> np.ndarray:
        """Rows whose common kernel is exactly the image."""
        return _annihilator(self.basis, 2 * local_dim(self.place))


def _sweep(place: int, bound: int, roots: Sequence[Fraction]) -> Iterable[Fraction]:
    if place == INF:
        r = sorted(roots)
        yield r[0] - 1
        yield (r[0] + r[1]) / 2
        yield (r[1] + r[2]) / 2
        yield r[2] + 1
        return
    vals = range(-4, 5) if place == 2 else range(-2, 3)
    pw = {v: Fraction(place) ** v for v in vals}
    for a in range(1, bound + 1):
        for v in vals:
            for sign in (1, -1):
                yield sign * a * pw[v]


_IMAGE_CACHE: dict[tuple, LocalImage] = {}


def kummer_image(family: CurveFamily, m: Rational, place: int) -> LocalImage:
    """Im(kappa_v) for E^(m), by sampling points until the known dimension is reached.

    The image depends only on the local class of m, which keys the cache.
    The sweep is exact over Q, so there is no precision to lose; an
    unsaturated sweep is retried with a larger numerator bound.
    """
    m = Fraction(m)
    key = (family.e1, family.e2, place, local_coords(m, place))
    hit = _IMAGE_CACHE.get(key)
    if hit is not None:
        return hit
    dim = local_dim(place)
    target = dim
    e1m, e2m = family.e1 * m, family.e2 * m
    vecs = [local_pair(a, b, place) for a, b in family.torsion_images(m)]
    basis = _basis(vecs, 2 * dim)
    for bound in SWEEP_LADDER:
        if len(basis) >= target:
            break
        for x in _sweep(place, bound, (Fraction(0), e1m, e2m)):
            f = x * (x - e1m) * (x - e2m)
            if f == 0 or not is_local_square(f, place):
                continue
            v = local_pair(x, x - e1m, place)
            if _rank(basis + [v], 2 * dim) > len(basis):
                basis = _basis(basis + [v], 2 * dim)
                if len(basis) == target:
                    break
    if len(basis) != target:
        raise RuntimeError(f"Kummer image at {place} saturated at dim {len(basis)} < {target}")
    img = LocalImage(place, tuple(tuple(int(b) for b in row) for row in basis), target)
    _IMAGE_CACHE[key] = img
    return img


@dataclass
class LocalSpace:
    """V = direct sum over places of (local square classes)^2."""

    places: tuple[int, ...]

    @cached_property
    def offsets(self) -> list[int]:
        out = [0]
        for v in self.places:
            out.append(out[-1] + 2 * local_dim(v))
        return out

    @property
    def dim(self) -> int:
        return self.offsets[-1]

    def slot(self, place: int) -> slice:
        i = self.places.index(place)
        return slice(self.offsets[i], self.offsets[i + 1])

    def embed(self, place: int, vec: Sequence[int]) -> np.ndarray:
        out = np.zeros(self.dim, dtype=np.uint8)
        out[self.slot(place)] = vec
        return out

    def loc(self, x1: Rational, x2: Rational) -> np.ndarray:
        return np.concatenate([local_pair(x1, x2, v) for v in self.places]).astype(np.uint8)

    @cached_property
    def pairing(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=np.uint8)
        for v in self.places:
            s = self.slot(v)
            out[s, s] = local_pairing(v)
        return out

    def global_image(self, gens: Sequence[int]) -> np.ndarray:
        """Rows: loc of (g, 1) for g in gens, then of (1, g)."""
        rows = [self.loc(g, 1) for g in gens] + [self.loc(1, g) for g in gens]
        return _as_rows(rows, self.dim)


# ----------------------------------------------------------------------------
# quadratic refinement and the Lagrangian complement

@dataclass
class QuadraticSpace:
    """(V, e, phi) with phi(v) = v . diag + sum_{i<j} v_i v_j e(b_i, b_j)."""

    pairing: np.ndarray
    diag: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.pairing.shape[0])

    @cached_property
    def _upper(self) -> np.ndarray:
        return np.triu(self.pairing.astype(np.int64), 1)

    def e(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.int64) @ self.pairing.astype(np.int64) @ np.asarray(y, dtype=np.int64).T) % 2

    def phi(self, vecs: np.ndarray) -> np.ndarray:
        v = np.atleast_2d(np.asarray(vecs, dtype=np.int64))
        return ((v @ self.diag.astype(np.int64)) + np.einsum("si,ij,sj->s", v, self._upper, v)) % 2

    def check(self) -> None:
        p = self.pairing
        if (p != p.T).any() or p.diagonal().any():
            raise AssertionError("pairing is not alternating")
        if BitMatrix.from_dense(p).rank() != self.dim:
            raise AssertionError("pairing is degenerate")


def quadratic_space_from(pairing: np.ndarray, phi: Callable[[np.ndarray], int], verify: bool = True) -> QuadraticSpace:
    """Tabulate phi on the standard basis; optionally verify the refinement identity on basis pairs."""
    n = pairing.shape[0]
    eye = np.eye(n, dtype=np.uint8)
    diag = np.array([phi(eye[i]) for i in range(n)], dtype=np.uint8)
    q = QuadraticSpace(pairing.astype(np.uint8), diag)
    if verify:
        for i in range(n):
            for j in range(i + 1, n):
                if phi(eye[i] ^ eye[j]) != (diag[i] + diag[j] + pairing[i, j]) % 2:
                    raise AssertionError("phi is not a quadratic refinement of e")
    return q


def _all_vectors(n: int) -> np.ndarray:
    idx = np.arange(2 ** n, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n)) & 1).astype(np.uint8)


def find_lagrangian_complement(
    space: QuadraticSpace, U: Sequence[Sequence[int]], W: Sequence[Sequence[int]]
) -> list[np.ndarray]:
    """A phi-zero Lagrangian K with V = U + K direct and W = (U cap W) + (K cap W).

    K is seeded with a complement of U cap W inside W and extended by a
    depth-first search over phi-zero vectors orthogonal to K and outside
    U + K.  The search order is fixed, so the result is deterministic.
    """
    n = space.dim
    if n % 2:
        raise ValueError("a symplectic space has even dimension")
    g = n // 2
    Ub, Wb = _basis(U, n), _basis(W, n)
    for name, sub in (("U", Ub), ("W", Wb)):
        if len(sub) != g or space.e(_as_rows(sub, n), _as_rows(sub, n)).any() or space.phi(_as_rows(sub, n)).any():
            raise ValueError(f"{name} is not a phi-zero Lagrangian")
    UW = _intersection(Ub, Wb, n)
    seed: list[np.ndarray] = []
    for w in Wb:
        if _rank(UW + seed + [w], n) > len(UW) + len(seed):
            seed.append(w)
    cand = _all_vectors(n)
    cand = cand[space.phi(cand) == 0]
    cand = cand[cand.any(axis=1)]

    def extend(Kb: list[np.ndarray]) -> list[np.ndarray] | None:
        if len(Kb) == g:
            return Kb
        kr = _as_rows(Kb, n)
        ok = cand
        if len(kr):
            ok = ok[~space.e(ok, kr).any(axis=1)]
        uk = Ub + Kb
        for v in ok:
            if _rank(uk + [v], n) > len(uk):
                found = extend(Kb + [v])
                if found is not None:
                    return found
        return None

    Kb = extend(seed)
    if Kb is None:
        raise ValueError("no Lagrangian complement found: the preconditions must be violated")
    check_lagrangian_complement(space, Ub, Wb, Kb)
    return Kb


def check_lagrangian_complement(
    space: QuadraticSpace, U: Sequence[Sequence[int]], W: Sequence[Sequence[int]], Kb: Sequence[Sequence[int]]
) -> None:
    """Raise AssertionError unless every postcondition holds."""
    n = space.dim
    g = n // 2
    kr = _as_rows(Kb, n)
    if _rank(Kb, n) != g:
        raise AssertionError("K has the wrong dimension")
    if space.e(kr, kr).any():
        raise AssertionError("K is not isotropic")
    if space.phi(kr).any():
        raise AssertionError("phi does not vanish on K")
    if _rank(list(U) + list(Kb), n) != n:
        raise AssertionError("U + K is not all of V")
    uw = _intersection(U, W, n)
    kw = _intersection(Kb, W, n)
    if len(uw) + len(kw) != _rank(W, n) or _rank(uw + kw, n) != _rank(W, n):
        raise AssertionError("W is not the sum of its intersections with U and K")


# ----------------------------------------------------------------------------
# twist classes

def _unit(ns: int, i: int) -> np.ndarray:
    v = np.zeros(ns, dtype=np.uint8)
    v[i] = 1
    return v


def local_fact_matrix(place: int, sigma: PlaceSet) -> np.ndarray:
    """F with local_coords(l, place) = F z_l for primes l outside Sigma."""
    ns = len(sigma)
    dim = local_dim(place)
    out = np.zeros((dim, ns), dtype=np.uint8)
    if place == INF:
        return out
    m1 = sigma.index(-1)
    if place == 2:
        out[0] = _unit(ns, m1)
        out[2] = _unit(ns, sigma.index(2))
        return out
    out[0] = _unit(ns, sigma.index(place))
    if place % 4 == 3:
        out[0] ^= _unit(ns, m1)
    return out


# basis changes on (P1, P2) that bring the low-rank blocks to the front
_BASIS_CHANGE = {
    (): ((1, 0), (0, 1)),
    (0,): ((1, 0), (0, 1)),
    (1,): ((0, 1), (1, 0)),
    (2,): ((1, 1), (0, 1)),
    (0, 1): ((1, 0), (0, 1)),
    (0, 2): ((1, 0), (1, 1)),
    (1, 2): ((1, 1), (0, 1)),
}


class TwistClass:
    """The Sigma-equivalence class {q n : n square-free, coprime to Sigma, s(n) = s}."""

    def __init__(self, family: CurveFamily, sigma: PlaceSet, q: SquareClass | int, s: Sequence[int]) -> None:
        if not set(family.sigma0.generators) <= set(sigma.generators):
            raise ValueError(f"{sigma} does not contain the bad places {family.sigma0}")
        self.family = family
        self.sigma = sigma
        self.q = q if isinstance(q, SquareClass) else SquareClass.of(q, sigma)
        if self.q.sigma != sigma:
            raise ValueError("q lives over a different place set")
        self.s = tuple(int(x) & 1 for x in s)
        if len(self.s) != len(sigma):
            raise ValueError("class vector length differs from the place set size")

    # identity ---------------------------------------------------------------
    @classmethod
    def of_twist(cls, family: CurveFamily, m: int, sigma: PlaceSet | None = None) -> "TwistClass":
        sigma = sigma or family.sigma0
        q, _, primes = split_twist(m, sigma)
        return cls(family, sigma, q, class_vector(primes, sigma))

    @classmethod
    def enumerate(cls, family: CurveFamily, sigma: PlaceSet | None = None) -> list["TwistClass"]:
        sigma = sigma or family.sigma0
        ns = len(sigma)
        out = []
        for qb in itertools.product((0, 1), repeat=ns):
            for s in itertools.product((0, 1), repeat=ns):
                out.append(cls(family, sigma, SquareClass.from_bits(qb, sigma), s))
        return out

    def refinements(self, *primes: int) -> list["TwistClass"]:
        """The classes over Sigma plus the given primes whose members all lie in this class."""
        finer = self.sigma.union(*primes)
        out = []
        for c in TwistClass.enumerate(self.family, finer):
            if TwistClass.of_twist(self.family, c.m0, self.sigma) == self:
                out.append(c)
        return out

    def key(self) -> tuple:
        return (self.family.e1, self.family.e2, self.sigma.generators, self.q.bits, self.s)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TwistClass) and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        return f"TwistClass(family={self.family}, sigma={self.sigma}, q={self.q}, s={self.s})"

    def members(self, N: int) -> Iterable[tuple[int, tuple[int, ...]]]:
        """(n, primes) for admissible 1 < n < N."""
        return sieve_squarefree(N, self.sigma, self.s)

    def twist(self, n: int) -> int:
        return self.q.value() * n

    @property
    def type(self) -> str:
        return self.family.kind.type

    @property
    def low_rank(self) -> tuple[int, ...]:
        """Indices (0: e1(e1-e2), 1: e1e2, 2: -e2(e1-e2)) that are perfect squares."""
        return tuple(i for i, sq in enumerate(self.family.kind.squares) if sq)

    @property
    def s_count(self) -> int:
        return len(self.low_rank)

    # local data ---------------------------------------------------------------
    @cached_property
    def representative(self) -> int:
        """Smallest n with class vector s; every member shares its local classes on Sigma."""
        N = 64
        while True:
            for n, _ in sieve_squarefree(N, self.sigma, self.s, include_one=True):
                return n
            N *= 4

    @cached_property
    def m0(self) -> int:
        return self.twist(self.representative)

    @cached_property
    def images(self) -> dict[int, LocalImage]:
        return {v: kummer_image(self.family, self.m0, v) for v in self.sigma.generators}

    @cached_property
    def space(self) -> LocalSpace:
        return LocalSpace(self.sigma.generators)

    @cached_property
    def quadratic(self) -> QuadraticSpace:
        sp = self.space
        fam = self.family

        def phi(vec: np.ndarray) -> int:
            return sum(local_phi(fam, vec[sp.slot(v)], v) for v in sp.places) % 2

        q = quadratic_space_from(sp.pairing, phi)
        q.check()
        return q

    @cached_property
    def U(self) -> list[np.ndarray]:
        rows = self.space.global_image(self.sigma.generators)
        if _rank(rows, self.space.dim) != 2 * len(self.sigma):
            raise AssertionError("localization on Q(Sigma,2)^2 is not injective")
        return [r for r in rows]

    @cached_property
    def W(self) -> list[np.ndarray]:
        out = []
        for v, img in self.images.items():
            out += [self.space.embed(v, b) for b in img.basis]
        return out

    @cached_property
    def K(self) -> list[np.ndarray]:
        return find_lagrangian_complement(self.quadratic, self.U, self.W)

    @cached_property
    def UW(self) -> list[np.ndarray]:
        """A basis of U_Sigma cap W_Sigma, the block W-bar."""
        return _intersection(self.U, self.W, self.space.dim)

    @property
    def t_X(self) -> int:
        return len(self.UW)

    @property
    def r(self) -> int:
        return self.t_X % 2

    @cached_property
    def _uk(self) -> np.ndarray:
        return _as_rows(self.U + self.K, self.space.dim).T

    def uk_coords(self, vec: np.ndarray) -> np.ndarray:
        """Coefficients over (U basis, K basis)."""
        return _solve_columns(self._uk, vec)

    @cached_property
    def UW_global(self) -> list[np.ndarray]:
        """x^glob in Q(Sigma,2)^2 for each basis vector of W-bar."""
        ns2 = 2 * len(self.sigma)
        out = []
        for x in self.UW:
            c = self.uk_coords(x)
            if c[ns2:].any():
                raise AssertionError("W-bar vector has a K component")
            out.append(c[:ns2].copy())
        return out

    @cached_property
    def quotient_maps(self) -> dict[int, np.ndarray]:
        return {v: img.quotient_map() for v, img in self.images.items()}

    # expressions ----------------------------------------------------------------
    @cached_property
    def kernel_expr(self) -> RedeiExpr:
        """Kernel matrix over columns (ord_l x1, ord_l x2, Sigma-bits x1, Sigma-bits x2)."""
        sig = self.sigma
        T = Terms(sig)
        fam = self.family
        e1q = SquareClass.of(fam.e1, sig) * self.q
        me1q = SquareClass.of(-fam.e1, sig) * self.q
        d1, d2, _ = fam.d
        ns = len(sig)
        rows_r1, rows_r2, rows_s1, rows_s2 = [], [], [], []
        for v in sig.generators:
            Q = self.quotient_maps[v].astype(np.int64)
            dim = local_dim(v)
            F = local_fact_matrix(v, sig).astype(np.int64)
            Lsig = np.array([local_coords(g, v) for g in sig.generators], dtype=np.int64).T  # (dim, ns)
            rows_r1 += list((Q[:, :dim] @ F) % 2)
            rows_r2 += list((Q[:, dim:] @ F) % 2)
            rows_s1 += list((Q[:, :dim] @ Lsig) % 2)
            rows_s2 += list((Q[:, dim:] @ Lsig) % 2)
        a = len(rows_r1)
        grid = [
            [T.A + T.D(e1q), T.D(d2), T.Z_Sigma, None],
            [T.D(d1), T.A + T.D(me1q), None, T.Z_Sigma],
            [T.zrows(rows_r1), T.zrows(rows_r2), T.const(np.array(rows_s1).reshape(a, ns)),
             T.const(np.array(rows_s2).reshape(a, ns))],
        ]
        return RedeiExpr.from_grid(sig, [K, K, a], [K, K, ns, ns], grid)

    def kernel_variant(self, pi: int, modified: bool) -> RedeiExpr:
        """Column restriction for the pi-strict (x_pi = 0) or modified (ord x_pi = 0) group.

        pi = 1: x2 trivial; pi = 2: x1 trivial; pi = 3: x1 = x2.
        """
        e = self.kernel_expr
        I = np.eye(4, dtype=np.uint8)
        if pi == 1:
            cols = [I[0], I[2], I[3]] if modified else [I[0], I[2]]
        elif pi == 2:
            cols = [I[1], I[2], I[3]] if modified else [I[1], I[3]]
        elif pi == 3:
            cols = [I[0] + I[1], I[2], I[3]] if modified else [I[0] + I[1], I[2] + I[3]]
        else:
            raise ValueError("pi must be 1, 2 or 3")
        return e.recombine(np.eye(3, dtype=np.uint8), cols)

    @cached_property
    def gram_maps(self) -> tuple[np.ndarray, np.ndarray]:
        """M_s (2#Sigma x #Sigma): z_l -> global part of the U-projection of loc(lambda_l(P_s))."""
        sig, sp = self.sigma, self.space
        ns = len(sig)
        out = []
        for s in (0, 1):
            M = np.zeros((2 * ns, ns), dtype=np.uint8)
            for col in range(ns):
                vec = np.zeros(sp.dim, dtype=np.uint8)
                for v in sig.generators:
                    dim = local_dim(v)
                    loc = local_fact_matrix(v, sig)[:, col]
                    sl = sp.slot(v)
                    seg = vec[sl]
                    seg[s * dim:(s + 1) * dim] = loc
                    vec[sl] = seg
                M[:, col] = self.uk_coords(vec)[: 2 * ns]
            out.append(M)
        return out[0], out[1]

    @cached_property
    def gram_expr_raw(self) -> RedeiExpr:
        """Gram expression in the basis (kappa_l(P1), kappa_l(P2), W-bar)."""
        sig = self.sigma
        T = Terms(sig)
        ns = len(sig)
        km = self.family.kummer_matrix
        mq = SquareClass.of(-1, sig) * self.q
        M = self.gram_maps
        t = self.t_X
        expr = RedeiExpr(sig, [K, K, t], [K, K, t])
        for s in (0, 1):
            for tt in (0, 1):
                d = Fraction(1)
                for j in (0, 1):
                    if WEIL[s][j]:
                        d *= km[j][tt]
                blk = T.D(d)
                if WEIL[s][tt]:
                    blk = blk + T.AT + T.D(mq)
                comp = 1 - tt  # the i with WEIL[i][tt] = 1
                Mc = M[s][comp * ns:(comp + 1) * ns, :]
                low = T.zero(K, K)
                low.ZZ = Mc.T.copy()
                expr.set(s, tt, blk + low)
        if t:
            for tt in (0, 1):
                comp = 1 - tt
                rows = [x[comp * ns:(comp + 1) * ns] for x in self.UW_global]
                expr.set(2, tt, T.zrows(rows))
                expr.set(tt, 2, T.zrows(rows).transpose())
        return expr

    @cached_property
    def basis_change(self) -> np.ndarray:
        return np.array(_BASIS_CHANGE[self.low_rank], dtype=np.uint8)

    def _full_change(self) -> np.ndarray:
        T3 = np.eye(3, dtype=np.uint8)
        T3[:2, :2] = self.basis_change
        return T3

    @cached_property
    def gram_expr(self) -> RedeiExpr:
        """Gram expression with the low-rank diagonal blocks first."""
        T3 = self._full_change()
        return self.gram_expr_raw.recombine(T3, T3)

    @property
    def pillar_directions(self) -> tuple[int, ...]:
        """The pi (1, 2 or 3) whose modified group each low-rank pillar computes."""
        lookup = {(1, 0): 1, (0, 1): 2, (1, 1): 3}
        return tuple(lookup[tuple(int(x) for x in self.basis_change[j])] for j in range(self.s_count))

    @cached_property
    def high_rank(self) -> "HighRankAltLevel2":
        return HighRankAltLevel2(self.gram_expr, self.s_count, self.t_X, self.s)

    # parameter ------------------------------------------------------------------
    def witness(self, offset: int = 0) -> tuple[int, tuple[int, ...]]:
        """n = l_1 ... l_{#Sigma+1} with z_{l_i} = e_i and the largest prime fixing s.

        ``offset`` skips that many earlier matches for every prime, giving
        distinct witnesses.
        """
        sig = self.sigma
        ns = len(sig)

        def pick(target: tuple[int, ...], above: int) -> int:
            count = 0
            for p in _primes_outside(sig, above):
                if _z(p, sig) == target:
                    if count == offset:
                        return p
                    count += 1
            raise RuntimeError("witness search exceeded the prime cap")

        chosen = [pick(tuple(int(x) for x in _unit(ns, i)), 2) for i in range(ns)]
        chosen.append(pick(tuple((self.s[i] + 1) & 1 for i in range(ns)), max(chosen)))
        primes = tuple(sorted(chosen))
        n = 1
        for l in primes:
            n *= l
        return n, primes

    def parameter_at(self, n: int, primes: Sequence[int] | None = None) -> tuple[int, ...]:
        """t_j = t_X - rank(B_j'') from the numeric Gram matrix at one n."""
        G = build_gram_matrix(self, n, primes).to_dense()
        k = len(primes) if primes is not None else len(split_twist(self.twist(n), self.sigma)[2])
        t = self.t_X
        out = []
        for j in range(self.s_count):
            idx = list(range(j * k, (j + 1) * k)) + list(range(2 * k, 2 * k + t))
            out.append(t - BitMatrix.from_dense(G[np.ix_(idx, idx)]).rank())
        return tuple(out)

    @cached_property
    def parameter(self) -> tuple[int, ...]:
        """The parameter t, computed at a witness and by the synthetic low-rank witness."""
        if self.s_count == 0:
            return ()
        n, primes = self.witness()
        numeric = self.parameter_at(n, primes)
        symbolic = tuple(
            self.t_X - low_rank_max_rank(self.gram_expr.select([j, 2], [j, 2]), self.s)
            for j in range(self.s_count)
        )
        if numeric != symbolic:
            raise AssertionError(f"parameter mismatch: witness {numeric} vs synthetic {symbolic}")
        return numeric

    def describe(self) -> dict:
        return {
            "family": [self.family.e1, self.family.e2],
            "sigma": list(self.sigma.generators),
            "q": self.q.value(),
            "s": list(self.s),
            "type": self.type,
            "t_X": self.t_X,
            "r": self.r,
            "parameter": list(self.parameter),
        }


def _primes_outside(sigma: PlaceSet, above: int) -> Iterable[int]:
    p = above + 1
    while p <= WITNESS_PRIME_CAP:
        if p > 2 and p not in sigma and is_prime(p):
            yield p
        p += 1


@lru_cache(maxsize=None)
def _z_cached(p: int, gens: tuple[int, ...]) -> tuple[int, ...]:
    from .arith import legendre_additive

    return tuple(legendre_additive(g, p) for g in gens)


def _z(p: int, sigma: PlaceSet) -> tuple[int, ...]:
    return _z_cached(p, sigma.generators)


# ----------------------------------------------------------------------------
# the essential alternating expression and its pillars

@dataclass
class HighRankAltLevel2:
    """Gram expression with s low-rank diagonal blocks placed first."""

    expr: RedeiExpr
    s_count: int
    t_X: int
    s: tuple[int, ...]

    def pillar(self, j: int) -> RedeiExpr:
        """B_j' = block columns j and 3 (0-based j)."""
        return self.expr.select([0, 1, 2], [j, 2])

    def inner(self, j: int) -> RedeiExpr:
        """B_j'' = the j-th diagonal block bordered by the W-bar block."""
        return self.expr.select([j, 2], [j, 2])

    def refined_corank(self, batch: OmegaBatch, view: str = UNRESTRICTED) -> np.ndarray:
        """(S, 1 + s) array of coranks of B and of the low-rank pillars."""
        cols = [self.expr.corank_batch(batch, view)]
        for j in range(self.s_count):
            cols.append(self.pillar(j).corank_batch(batch, view))
        return np.stack(cols, axis=1)


# ----------------------------------------------------------------------------
# numeric matrices at a member n

def _factor_member(cls: TwistClass, n: int, primes: Sequence[int] | None) -> tuple[int, ...]:
    if primes is None:
        fac = trial_factor(n)
        primes = tuple(sorted(fac))
        if any(e > 1 for e in fac.values()):
            raise ValueError(f"{n} is not square-free")
    primes = tuple(sorted(primes))
    if not cls.sigma.coprime(n) or n < 1:
        raise ValueError(f"{n} is not a positive integer coprime to {cls.sigma}")
    if class_vector(primes, cls.sigma) != cls.s:
        raise ValueError(f"{n} is not in the class (s = {cls.s})")
    return primes


@dataclass
class KernelMatrices:
    B: BitMatrix
    strict: tuple[BitMatrix, BitMatrix, BitMatrix]
    modified: tuple[BitMatrix, BitMatrix, BitMatrix]
    omega: OmegaPoint


def build_kernel_matrix(cls: TwistClass, n: int, primes: Sequence[int] | None = None) -> KernelMatrices:
    """The kernel matrix B(n) and its six pi-variants."""
    primes = _factor_member(cls, n, primes)
    omega = omega_of(n, primes, cls.sigma)
    B = cls.kernel_expr.eval(omega)
    strict = tuple(cls.kernel_variant(pi, False).eval(omega) for pi in (1, 2, 3))
    modified = tuple(cls.kernel_variant(pi, True).eval(omega) for pi in (1, 2, 3))
    return KernelMatrices(B, strict, modified, omega)  # type: ignore[arg-type]


def build_gram_matrix(cls: TwistClass, n: int, primes: Sequence[int] | None = None,
                      change_basis: bool = True) -> BitMatrix:
    """Gram matrix of theta on (kappa_l(P1))_l, (kappa_l(P2))_l, W-bar, from local arithmetic at n."""
    primes = _factor_member(cls, n, primes)
    fam, sig = cls.family, cls.sigma
    m = cls.twist(n)
    gens = sig.generators + primes
    sp = LocalSpace(gens)
    D = sp.dim
    U = sp.global_image(gens)
    # K: K_Sigma from the class, unit classes at each l
    Kb = []
    sl_sig = slice(0, cls.space.dim)
    for kv in cls.K:
        v = np.zeros(D, dtype=np.uint8)
        v[sl_sig] = kv
        Kb.append(v)
    for l in primes:
        Kb.append(sp.embed(l, (1, 0, 0, 0)))
        Kb.append(sp.embed(l, (0, 0, 1, 0)))
    UK = np.concatenate([U, _as_rows(Kb, D)]).T
    if BitMatrix.from_dense(UK).rank() != D:
        raise AssertionError("U and K are not complementary")
    nu = U.shape[0]
    P1, P2, _ = fam.torsion_images(m)
    basis = [sp.embed(l, local_pair(*P1, l)) for l in primes]
    basis += [sp.embed(l, local_pair(*P2, l)) for l in primes]
    for x in cls.UW:
        v = np.zeros(D, dtype=np.uint8)
        v[sl_sig] = x
        basis.append(v)
    # W-membership of the basis (the local images at Sigma come from the actual m)
    for v in sig.generators:
        img = kummer_image(fam, m, v)
        for b in basis[2 * len(primes):]:
            if not img.contains(b[sp.slot(v)]):
                raise AssertionError("W-bar vector leaves the local image")
    X = _as_rows(basis, D)
    proj = np.zeros_like(X)
    for i, x in enumerate(X):
        c = _solve_columns(UK, x)
        proj[i] = (c[:nu].astype(np.int64) @ U.astype(np.int64)) % 2
    G = (proj.astype(np.int64) @ sp.pairing.astype(np.int64) @ X.astype(np.int64).T) % 2
    G = G.astype(np.uint8)
    if (G != G.T).any() or G.diagonal().any():
        raise AssertionError("Gram matrix is not alternating")
    if change_basis:
        k = len(primes)
        T = cls.basis_change
        big = np.eye(len(basis), dtype=np.int64)
        Ik = np.eye(k, dtype=np.int64)
        big[: 2 * k, : 2 * k] = np.kron(T.astype(np.int64), Ik)
        G = ((big @ G.astype(np.int64) @ big.T) % 2).astype(np.uint8)
    return BitMatrix.from_dense(G)


def essential_gram(G: BitMatrix, k: int) -> BitMatrix:
    """Drop the last prime from both W_{Sigma_1} blocks."""
    if k < 1:
        raise ValueError("the essential matrix needs a prime outside Sigma")
    keep = [i for i in range(G.rows) if i not in (k - 1, 2 * k - 1)]
    return G.submatrix(keep, keep)


# ----------------------------------------------------------------------------
# the enumeration oracle

@dataclass
class SelmerData:
    n: int
    q: int
    m: int
    sel2: int
    essential: int
    phi: tuple[int, int, int]
    phi_mod: tuple[int, int, int]
    phi_essential: tuple[int, int, int]
    phi_mod_essential: tuple[int, int, int]
    phi_mod_loc: tuple[int, int, int]
    gens: tuple[int, ...]
    basis: tuple[tuple[int, ...], ...] = field(repr=False)

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "q": self.q,
            "dims": {
                "sel2": self.sel2,
                "essential": self.essential,
                "phi": list(self.phi),
                "phi_mod": list(self.phi_mod),
                "phi_essential": list(self.phi_essential),
                "phi_mod_essential": list(self.phi_mod_essential),
            },
        }

    def ord_vectors(self, primes: Sequence[int], sigma: PlaceSet) -> list[np.ndarray]:
        """Images of the basis under x -> (ord_l x1, ord_l x2, Sigma-bits x1, Sigma-bits x2)."""
        g = len(self.gens)
        ns = len(sigma)
        pidx = [self.gens.index(l) for l in primes]
        out = []
        for b in self.basis:
            b = np.array(b, dtype=np.uint8)
            x1, x2 = b[:g], b[g:]
            out.append(np.concatenate([x1[pidx], x2[pidx], x1[:ns], x2[:ns]]))
        return out


def _popparity(x: np.ndarray) -> np.ndarray:
    return (np.bitwise_count(x) & 1).astype(bool)


def _mask(bits: Sequence[int]) -> int:
    return sum(1 << i for i, b in enumerate(bits) if b)


def _span_count(elements: np.ndarray, vec: int) -> int:
    """dim of span{vec} cap (the set 'elements')."""
    return int(vec != 0 and bool(np.isin(vec, elements)))


def selmer_oracle(family: CurveFamily, m: int, sigma: PlaceSet | None = None, cap: int = ORACLE_CAP) -> SelmerData:
    """2-Selmer data of E^(m) by enumerating Q(S,2)^2 against the local conditions."""
    sigma = sigma or family.sigma0
    q, n, primes = split_twist(m, sigma)
    S = sigma.generators + primes
    if len(S) > cap:
        raise ValueError(f"#S = {len(S)} exceeds the oracle cap {cap}")
    g = len(S)
    nb = 2 * g
    constraints: list[np.ndarray] = []
    loc_rows: dict[int, np.ndarray] = {}
    tors = family.torsion_images(m)
    for v in S:
        dim = local_dim(v)
        L = np.zeros((2 * dim, nb), dtype=np.uint8)
        for i, gen in enumerate(S):
            c = np.array(local_coords(gen, v), dtype=np.uint8)
            L[:dim, i] = c
            L[dim:, g + i] = c
        loc_rows[v] = L
        if v in sigma:
            img = kummer_image(family, m, v).basis
        else:
            img = _basis([local_pair(a, b, v) for a, b in tors[:2]], 2 * dim)
        Q = _annihilator(img, 2 * dim)
        constraints.append((Q.astype(np.int64) @ L.astype(np.int64)) % 2)
    C = np.concatenate(constraints).astype(np.uint8)
    masks = np.array([_mask(r) for r in C], dtype=np.int64)
    idx = np.arange(1 << nb, dtype=np.int64)
    ok = np.ones(idx.shape, dtype=bool)
    for mk in masks:
        ok &= ~_popparity(idx & mk)
    sel = idx[ok]

    comp1 = (1 << g) - 1
    lmask = _mask([0] * len(sigma) + [1] * len(primes))
    x1 = sel & comp1
    x2 = sel >> g
    strict_sets = (sel[x2 == 0], sel[x1 == 0], sel[x1 == x2])
    mod_sets = (sel[(x2 & lmask) == 0], sel[(x1 & lmask) == 0], sel[((x1 ^ x2) & lmask) == 0])

    # literal definition: x_pi locally trivial at every l | n
    def loc_trivial(xpi: np.ndarray) -> np.ndarray:
        good = np.ones(xpi.shape, dtype=bool)
        for l in primes:
            L = loc_rows[l][:2, :g]
            for row in L:
                good &= ~_popparity(xpi & _mask(row))
        return good

    loc_sets = (sel[loc_trivial(x2)], sel[loc_trivial(x1)], sel[loc_trivial(x1 ^ x2)])

    def dim_of(arr: np.ndarray) -> int:
        c = len(arr)
        d = c.bit_length() - 1
        if c != 1 << d:
            raise AssertionError("kernel size is not a power of two")
        return d

    tmask = [_mask(np.concatenate([global_bits(a, S), global_bits(b, S)])) for a, b in tors]
    if not all(np.isin(t, sel) for t in tmask):
        raise AssertionError("2-torsion is not everywhere locally a Kummer image")
    tdim = _rank([np.concatenate([global_bits(a, S), global_bits(b, S)]) for a, b in tors], nb)
    sel2 = dim_of(sel)
    strict = tuple(dim_of(s_) for s_ in strict_sets)
    mod = tuple(dim_of(s_) for s_ in mod_sets)
    # ker(pi_1) = P1, ker(pi_2) = P2, ker(pi_3) = P1 + P2
    strict_ess = tuple(strict[i] - _span_count(strict_sets[i], tmask[i]) for i in range(3))
    mod_ess = tuple(mod[i] - _span_count(mod_sets[i], tmask[i]) for i in range(3))

    basis: list[int] = []
    for x in sel.tolist():
        for b in basis:
            x = min(x, x ^ b)
        if x:
            basis.append(x)
    bvecs = tuple(tuple((b >> i) & 1 for i in range(nb)) for b in basis)
    return SelmerData(
        n=n, q=q.value(), m=m, sel2=sel2, essential=sel2 - tdim,
        phi=strict, phi_mod=mod,  # type: ignore[arg-type]
        phi_essential=strict_ess, phi_mod_essential=mod_ess,  # type: ignore[arg-type]
        phi_mod_loc=tuple(dim_of(s_) for s_ in loc_sets),  # type: ignore[arg-type]
        gens=S, basis=bvecs,
    )


__all__ = [
    "CurveFamily",
    "HighRankAltLevel2",
    "LocalImage",
    "LocalSpace",
    "ORACLE_CAP",
    "QuadraticSpace",
    "SelmerData",
    "KernelMatrices",
    "TwistClass",
    "bits_value",
    "build_gram_matrix",
    "build_kernel_matrix",
    "check_lagrangian_complement",
    "essential_gram",
    "find_lagrangian_complement",
    "global_bits",
    "kummer_image",
    "local_fact_matrix",
    "local_pair",
    "local_pairing",
    "local_phi",
    "quadratic_space_from",
    "selmer_oracle",
    "split_twist",
]
