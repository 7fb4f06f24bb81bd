"""Quadratic-residue arithmetic over Q: symbols, square classes, sieving.

Places are plain integers: an odd prime, 2, or -1 for the real place.
Local square classes are coordinate tuples over fixed bases:
odd p uses (u_p, p) with u_p the least positive non-residue,
p = 2 uses (-1, 2, 5) and the real place uses (-1,).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

INF = -1
Rational = int | Fraction

# largest sieve bound accepted without an explicit override (int32 table: ~400 MB)
SIEVE_CAP = 100_000_000


# ----------------------------------------------------------------------------
# small integer helpers

def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin for n < 3.3e24."""
    if n < 2:
        return False
    small = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)
    for p in small:
        if n % p == 0:
            return n == p
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in small:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def trial_factor(n: int) -> dict[int, int]:
    """Factor a small nonzero integer by trial division (sign dropped)."""
    n = abs(n)
    if n == 0:
        raise ValueError("cannot factor 0")
    out: dict[int, int] = {}
    p = 2
    while p * p <= n:
        while n % p == 0:
            out[p] = out.get(p, 0) + 1
            n //= p
        p += 1 if p == 2 else 2
    if n > 1:
        out[n] = out.get(n, 0) + 1
    return out


def valuation(x: int, p: int) -> int:
    if x == 0:
        raise ValueError("valuation of 0")
    v = 0
    while x % p == 0:
        x //= p
        v += 1
    return v


def squarefree_part(x: Rational) -> int:
    """Square-free integer in the same square class as the nonzero rational x."""
    fx = Fraction(x)
    if fx == 0:
        raise ValueError("zero has no square class")
    n = fx.numerator * fx.denominator
    sign = -1 if n < 0 else 1
    out = 1
    for p, e in trial_factor(n).items():
        if e % 2:
            out *= p
    return sign * out


def is_square(x: Rational) -> bool:
    return squarefree_part(x) == 1


def primes_up_to(n: int) -> list[int]:
    if n < 2:
        return []
    flags = np.ones(n + 1, dtype=bool)
    flags[:2] = False
    for p in range(2, int(n ** 0.5) + 1):
        if flags[p]:
            flags[p * p :: p] = False
    return [int(p) for p in np.flatnonzero(flags)]


# ----------------------------------------------------------------------------
# symbols

def legendre_additive(a: int, p: int) -> int:
    """0 if a is a nonzero square mod the odd prime p, 1 otherwise (Euler)."""
    if p < 3 or p % 2 == 0:
        raise ValueError(f"{p} is not an odd prime")
    a %= p
    if a == 0:
        raise ValueError(f"{p} divides the argument")
    return 0 if pow(a, (p - 1) // 2, p) == 1 else 1


@lru_cache(maxsize=None)
def least_nonresidue(p: int) -> int:
    u = 2
    while legendre_additive(u, p) == 0:
        u += 1
    return u


def _eps(u: int) -> int:
    return ((u - 1) // 2) % 2


def _omega(u: int) -> int:
    return ((u * u - 1) // 8) % 2


def hilbert_additive(a: Rational, b: Rational, place: int) -> int:
    """Additive Hilbert symbol: 0 iff z^2 = a x^2 + b y^2 is solvable nontrivially."""
    a = squarefree_part(a)
    b = squarefree_part(b)
    if place == INF:
        return 1 if (a < 0 and b < 0) else 0
    p = place
    alpha, beta = valuation(a, p), valuation(b, p)
    u, v = a // p ** alpha, b // p ** beta
    if p == 2:
        return (_eps(u) * _eps(v) + alpha * _omega(v) + beta * _omega(u)) % 2
    val = alpha * beta * ((p - 1) // 2)
    if beta % 2:
        val += legendre_additive(u, p)
    if alpha % 2:
        val += legendre_additive(v, p)
    return val % 2


# ----------------------------------------------------------------------------
# places and square classes

@dataclass(frozen=True)
class PlaceSet:
    """A finite set of places containing -1 (the real place) and 2."""

    odd_primes: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        primes = tuple(sorted(set(int(p) for p in self.odd_primes)))
        for p in primes:
            if p < 3 or not is_prime(p):
                raise ValueError(f"{p} is not an odd prime")
        object.__setattr__(self, "odd_primes", primes)

    @classmethod
    def parse(cls, text: str) -> "PlaceSet":
        items = [int(x) for x in text.replace(" ", "").split(",") if x]
        if -1 not in items or 2 not in items:
            raise ValueError("a place set must contain -1 and 2")
        return cls(tuple(p for p in items if p not in (-1, 2)))

    @classmethod
    def for_integers(cls, *values: int) -> "PlaceSet":
        """Smallest place set containing the primes of the given integers."""
        odd: set[int] = set()
        for v in values:
            odd.update(p for p in trial_factor(v) if p != 2)
        return cls(tuple(odd))

    @property
    def generators(self) -> tuple[int, ...]:
        return (-1, 2) + self.odd_primes

    @property
    def includes_minus_one(self) -> bool:
        return True

    @property
    def includes_two(self) -> bool:
        return True

    def __len__(self) -> int:
        return 2 + len(self.odd_primes)

    def __iter__(self):
        return iter(self.generators)

    def __contains__(self, p: object) -> bool:
        return p in self.generators

    def index(self, p: int) -> int:
        return self.generators.index(p)

    def union(self, *primes: int) -> "PlaceSet":
        return PlaceSet(self.odd_primes + tuple(primes))

    def coprime(self, n: int) -> bool:
        return n % 2 != 0 and all(n % p for p in self.odd_primes)

    def __str__(self) -> str:
        return ",".join(str(g) for g in self.generators)


@dataclass(frozen=True)
class SquareClass:
    """An element of Q(Sigma, 2): exponent bits over the generators of Sigma."""

    sigma: PlaceSet
    bits: tuple[int, ...]

    @classmethod
    def of(cls, x: Rational, sigma: PlaceSet) -> "SquareClass":
        sf = squarefree_part(x)
        bits = [1 if sf < 0 else 0, 0] + [0] * len(sigma.odd_primes)
        for p in trial_factor(sf):
            if p not in sigma or p == -1:
                raise ValueError(f"{x} is not supported on {sigma}")
            bits[sigma.index(p)] = 1
        return cls(sigma, tuple(bits))

    @classmethod
    def from_bits(cls, bits: Sequence[int], sigma: PlaceSet) -> "SquareClass":
        if len(bits) != len(sigma):
            raise ValueError("bit vector length differs from the place set size")
        return cls(sigma, tuple(int(b) & 1 for b in bits))

    def value(self) -> int:
        out = 1
        for g, b in zip(self.sigma.generators, self.bits):
            if b:
                out *= g
        return out

    def __mul__(self, other: "SquareClass") -> "SquareClass":
        if self.sigma != other.sigma:
            raise ValueError("square classes over different place sets")
        return SquareClass(self.sigma, tuple(x ^ y for x, y in zip(self.bits, other.bits)))

    def is_trivial(self) -> bool:
        return not any(self.bits)

    def __str__(self) -> str:
        return str(self.value())


@dataclass(frozen=True)
class LocalSquareClass:
    place: int
    coords: tuple[int, ...]


def local_dim(place: int) -> int:
    if place == INF:
        return 1
    return 3 if place == 2 else 2


def local_basis(place: int) -> tuple[int, ...]:
    """Integer representatives of the local basis at a place."""
    if place == INF:
        return (-1,)
    if place == 2:
        return (-1, 2, 5)
    return (least_nonresidue(place), place)


def _split(x: Rational, p: int) -> tuple[int, int]:
    """(v_p(x), an integer in the unit square class of x/p^v), no factoring needed."""
    fx = Fraction(x)
    if fx == 0:
        raise ValueError("zero has no square class")
    num, den = fx.numerator, fx.denominator
    vn = valuation(num, p)
    vd = valuation(den, p)
    return vn - vd, (num // p ** vn) * (den // p ** vd)


def local_coords(x: Rational, place: int) -> tuple[int, ...]:
    if place == INF:
        return (1 if Fraction(x) < 0 else 0,)
    v, u = _split(x, place)
    if place == 2:
        r = u % 8
        return ({1: 0, 3: 1, 5: 0, 7: 1}[r], v & 1, {1: 0, 3: 1, 5: 1, 7: 0}[r])
    return (legendre_additive(u, place), v & 1)


def is_local_square(x: Rational, place: int) -> bool:
    """True iff the nonzero rational x is a square in the completion."""
    if place == INF:
        return Fraction(x) > 0
    v, u = _split(x, place)
    if v & 1:
        return False
    if place == 2:
        return u % 8 == 1
    return legendre_additive(u, place) == 0


def localize(x: Rational | SquareClass, place: int) -> LocalSquareClass:
    """Coordinates of the class of x in the completion at a place."""
    if isinstance(x, SquareClass):
        x = x.value()
    return LocalSquareClass(place, local_coords(x, place))


def local_representative(coords: Sequence[int], place: int) -> int:
    out = 1
    for g, c in zip(local_basis(place), coords):
        if c & 1:
            out *= g
    return out


# ----------------------------------------------------------------------------
# Legendre-symbol configurations

def z_vector(prime: int, sigma: PlaceSet) -> tuple[int, ...]:
    """(⟦p/ℓ⟧ for p in Sigma) for a prime ℓ outside Sigma."""
    return tuple(legendre_additive(p, prime) for p in sigma.generators)


@dataclass
class OmegaPoint:
    """A configuration (a_ij, z^(p)) of additive Legendre symbols."""

    sigma: PlaceSet
    a: np.ndarray  # (k, k) uint8
    z: np.ndarray  # (#Sigma, k) uint8, rows ordered as sigma.generators
    primes: tuple[int, ...] | None = field(default=None, compare=False)

    @property
    def k(self) -> int:
        return int(self.a.shape[0])

    def zp(self, p: int) -> np.ndarray:
        return self.z[self.sigma.index(p)]

    def z_of(self, d: Rational | SquareClass) -> np.ndarray:
        """z_d for d in Q(Sigma, 2)."""
        cls = d if isinstance(d, SquareClass) else SquareClass.of(d, self.sigma)
        out = np.zeros(self.k, dtype=np.uint8)
        for bit, row in zip(cls.bits, self.z):
            if bit:
                out ^= row
        return out

    def s_vector(self) -> tuple[int, ...]:
        return tuple(int(x) for x in self.z.sum(axis=1) % 2)

    def check(self, s: Sequence[int] | None = None) -> None:
        """Raise AssertionError unless reciprocity, row sums and s hold."""
        a = self.a.astype(np.int64)
        zm = self.zp(-1).astype(np.int64)
        k = self.k
        off = ~np.eye(k, dtype=bool)
        recip = (a.T - a - np.outer(zm, zm)) % 2
        if (recip[off] != 0).any():
            raise AssertionError("reciprocity fails")
        if (a.sum(axis=1) % 2).any():
            raise AssertionError("row sums are not zero")
        if s is not None and tuple(s) != self.s_vector():
            raise AssertionError("class vector s does not match")


def omega_of(n: int, primes: Sequence[int], sigma: PlaceSet) -> OmegaPoint:
    """The Legendre-symbol configuration of n = product of the given primes."""
    ls = sorted(int(p) for p in primes)
    prod = 1
    for p in ls:
        prod *= p
    if prod != n or len(set(ls)) != len(ls):
        raise ValueError("factorization does not match n")
    if not sigma.coprime(n):
        raise ValueError(f"{n} is not coprime to {sigma}")
    k = len(ls)
    a = np.zeros((k, k), dtype=np.uint8)
    for i, li in enumerate(ls):
        for j, lj in enumerate(ls):
            a[i, j] = legendre_additive(n // li if i == j else lj, li)
    z = np.array([[legendre_additive(p, l) for l in ls] for p in sigma.generators], dtype=np.uint8).reshape(len(sigma), k)
    return OmegaPoint(sigma, a, z, tuple(ls))


def class_vector(primes: Sequence[int], sigma: PlaceSet) -> tuple[int, ...]:
    """s_p = ⟦p/n⟧ (Jacobi, additive) for n the product of the primes."""
    out = [0] * len(sigma)
    for l in primes:
        for i, bit in enumerate(z_vector(l, sigma)):
            out[i] ^= bit
    return tuple(out)


def spf_table(n: int) -> np.ndarray:
    """Smallest-prime-factor table for 0..n-1."""
    spf = np.zeros(max(n, 2), dtype=np.int32)
    for p in range(2, math.isqrt(max(n - 1, 1)) + 1):
        if spf[p] == 0:
            block = spf[p * p :: p]
            block[block == 0] = p
    idx = np.flatnonzero(spf == 0)
    spf[idx] = idx
    return spf


def sieve_squarefree(
    N: int,
    sigma: PlaceSet,
    s: Sequence[int] | None = None,
    include_one: bool = False,
    cap: int = SIEVE_CAP,
) -> Iterator[tuple[int, tuple[int, ...]]]:
    """Yield (n, primes) for square-free 1 < n < N coprime to Sigma.

    With ``s`` given, only n with ⟦p/n⟧ = s_p for every p in Sigma are kept.
    n = 1 is yielded first when ``include_one`` is set.
    """
    if N < 1:
        raise ValueError("N must be positive")
    if N > cap:
        raise ValueError(f"N={N} exceeds the sieve cap {cap}; pass a larger cap if memory allows")
    if s is not None:
        s = tuple(int(x) & 1 for x in s)
        if len(s) != len(sigma):
            raise ValueError("class vector length differs from the place set size")
    if include_one and N > 1 and (s is None or not any(s)):
        yield 1, ()
    if N <= 2:
        return
    spf = spf_table(N)
    bad = set(sigma.odd_primes) | {2}
    zcache: dict[int, tuple[int, ...]] = {}
    for n in range(3, N, 2):
        m = n
        ps: list[int] = []
        ok = True
        while m > 1:
            p = int(spf[m])
            m //= p
            if p in bad or m % p == 0:
                ok = False
                break
            ps.append(p)
        if not ok:
            continue
        if s is not None:
            acc = [0] * len(sigma)
            for p in ps:
                zv = zcache.get(p)
                if zv is None:
                    zv = zcache[p] = z_vector(p, sigma)
                for i, bit in enumerate(zv):
                    acc[i] ^= bit
            if tuple(acc) != s:
                continue
        yield n, tuple(ps)


__all__ = [
    "INF",
    "LocalSquareClass",
    "OmegaPoint",
    "PlaceSet",
    "SquareClass",
    "class_vector",
    "hilbert_additive",
    "is_prime",
    "is_square",
    "least_nonresidue",
    "legendre_additive",
    "local_basis",
    "local_coords",
    "local_dim",
    "is_local_square",
    "local_representative",
    "localize",
    "omega_of",
    "primes_up_to",
    "sieve_squarefree",
    "squarefree_part",
    "trial_factor",
    "valuation",
    "z_vector",
]
