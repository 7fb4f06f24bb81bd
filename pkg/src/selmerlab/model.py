"""Random alternating matrix models with zero diagonal blocks.

A model of size 2k + r over F2 is split into s "holes" (diagonal blocks of
size k + (t_i + r)/2 forced to zero) followed by one free block.  Each
matrix carries the refined corank (m, m_1', ..., m_s'), where m_j' is the
corank of the j-th block column taken with all rows.

Matrices are handled as dense uint8 stacks of shape (samples, n, n) with the
blocks laid out contiguously in the order hole_1, ..., hole_s, free.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from .gf2 import BitMatrix, batch_rank, pack_bits

SHARD = 4096
STEPS = 2


@dataclass(frozen=True)
class ModelParams:
    """Shape data of the model: residue r and hole parameters t."""

    r: int
    t: tuple[int, ...] = ()
    d: int = 2

    def __post_init__(self) -> None:
        object.__setattr__(self, "t", tuple(int(x) for x in self.t))
        if self.d != 2:
            raise ValueError("only d = 2 models are supported")
        if self.r not in (0, 1):
            raise ValueError("r must be 0 or 1")
        if len(self.t) > 2:
            raise ValueError("at most two holes")
        if any((ti - self.r) % 2 for ti in self.t):
            raise ValueError("every t_i must be congruent to r mod 2")
        if len(self.t) == 2 and sum(self.t) > 0:
            raise ValueError("two holes need t_1 + t_2 <= 0")

    @classmethod
    def of_type(cls, kind: str, r: int = 0, t1: int | None = None, t2: int | None = None) -> "ModelParams":
        kind = kind.upper()
        wanted = {"A": 0, "B": 1, "C": 2}[kind]
        t = tuple(x for x in (t1, t2) if x is not None)
        if len(t) != wanted:
            raise ValueError(f"type {kind} needs {wanted} hole parameter(s)")
        return cls(r, t)

    @property
    def s(self) -> int:
        return len(self.t)

    @property
    def type(self) -> str:
        return "ABC"[self.s]

    def size(self, k: int) -> int:
        return 2 * k + self.r

    def hole_sizes(self, k: int) -> tuple[int, ...]:
        return tuple(k + (ti + self.r) // 2 for ti in self.t)

    def block_sizes(self, k: int) -> tuple[int, ...]:
        holes = self.hole_sizes(k)
        return holes + (self.size(k) - sum(holes),)

    def min_k(self) -> int:
        k = 0
        while not self.admissible(k):
            k += 1
        return k

    def admissible(self, k: int) -> bool:
        return k >= 0 and all(b >= 0 for b in self.block_sizes(k))

    def check(self, k: int) -> None:
        if not self.admissible(k):
            raise ValueError(f"k={k} is too small for {self}")

    def offsets(self, k: int) -> tuple[int, ...]:
        return tuple(itertools.accumulate(self.block_sizes(k), initial=0))

    def state_ok(self, state: Sequence[int]) -> bool:
        """The refined-corank inequalities 0 <= m_j' <= m <= 2 m_j' - t_j."""
        m, *mp = state
        if m < 0 or (m - self.r) % 2:
            return False
        return all(0 <= x <= m <= 2 * x - ti for x, ti in zip(mp, self.t))

    def describe(self) -> dict:
        return {"type": self.type, "r": self.r, "t": list(self.t)}


@dataclass(frozen=True, order=True)
class RefinedCorank:
    m: int
    mp: tuple[int, ...] = ()

    @property
    def state(self) -> tuple[int, ...]:
        return (self.m,) + self.mp

    def check(self, params: ModelParams) -> None:
        if not params.state_ok(self.state):
            raise AssertionError(f"refined corank {self.state} violates the range for {params}")


# RNG -----------------------------------------------------------------------

def shard_rng(seed: int, shard: int) -> np.random.Generator:
    """Counter-based stream for one shard of SHARD consecutive sample indices."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(shard,))))


def shards(samples: int, start: int = 0) -> Iterator[tuple[int, int]]:
    """(shard index, count) pairs covering sample indices [start, start+samples)."""
    if start % SHARD:
        raise ValueError("shards must start on a shard boundary")
    first = start // SHARD
    for j in range((samples + SHARD - 1) // SHARD):
        yield first + j, min(SHARD, samples - j * SHARD)


# sampling and extension ------------------------------------------------------

def _hole_mask(params: ModelParams, k: int) -> np.ndarray:
    """True on entries that must vanish: the diagonal and every hole block."""
    n = params.size(k)
    mask = np.eye(n, dtype=bool)
    off = params.offsets(k)
    for j in range(params.s):
        mask[off[j]:off[j + 1], off[j]:off[j + 1]] = True
    return mask


def free_entries(params: ModelParams, k: int) -> int:
    mask = _hole_mask(params, k)
    return int(np.triu(~mask, 1).sum())


def sample_batch(params: ModelParams, k: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """count independent samples as a (count, n, n) uint8 stack."""
    params.check(k)
    n = params.size(k)
    upper = np.triu(~_hole_mask(params, k), 1)
    out = rng.integers(0, 2, size=(count, n, n), dtype=np.uint8) * upper
    return out | out.transpose(0, 2, 1)


def sample_model(params: ModelParams, k: int, rng: np.random.Generator) -> BitMatrix:
    return BitMatrix.from_dense(sample_batch(params, k, 1, rng)[0])


def enumerate_models(params: ModelParams, k: int, max_free: int = 22) -> np.ndarray:
    """Every matrix of the model at this k; each appears exactly once."""
    params.check(k)
    n = params.size(k)
    iu = np.nonzero(np.triu(~_hole_mask(params, k), 1))
    f = len(iu[0])
    if f > max_free:
        raise ValueError(f"{f} free bits is too many to enumerate")
    codes = np.arange(1 << f, dtype=np.int64)
    bits = ((codes[:, None] >> np.arange(f)) & 1).astype(np.uint8)
    out = np.zeros((1 << f, n, n), dtype=np.uint8)
    out[:, iu[0], iu[1]] = bits
    return out | out.transpose(0, 2, 1)


def _growth_blocks(params: ModelParams) -> tuple[int, ...]:
    """Block receiving the new row and column at each of the two steps."""
    return tuple(min(step, params.s) for step in range(STEPS))


def extend_batch(params: ModelParams, k: int, mats: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Grow each matrix from level k to k + 1, keeping it as a top-left corner per block."""
    sizes = list(params.block_sizes(k))
    cur = mats
    count = cur.shape[0]
    for block in _growth_blocks(params):
        n = cur.shape[1]
        off = list(itertools.accumulate(sizes, initial=0))
        pos = off[block + 1]
        v = rng.integers(0, 2, size=(count, n), dtype=np.uint8)
        if block < params.s:
            v[:, off[block]:off[block + 1]] = 0
        nxt = np.zeros((count, n + 1, n + 1), dtype=np.uint8)
        keep = np.r_[0:pos, pos + 1:n + 1]
        nxt[np.ix_(np.arange(count), keep, keep)] = cur
        nxt[:, pos, keep] = v
        nxt[:, keep, pos] = v
        cur = nxt
        sizes[block] += 1
    return cur


def extend_model(B: BitMatrix, params: ModelParams, k: int, rng: np.random.Generator) -> BitMatrix:
    return BitMatrix.from_dense(extend_batch(params, k, B.to_dense()[None], rng)[0])


def project_batch(params: ModelParams, k: int, mats: np.ndarray) -> np.ndarray:
    """Level k + 1 to level k: the top-left corner of every block."""
    big = params.offsets(k + 1)
    small = params.block_sizes(k)
    keep = np.concatenate([np.arange(big[j], big[j] + small[j]) for j in range(len(small))])
    return mats[:, keep][:, :, keep]


# refined coranks -------------------------------------------------------------

def refined_corank_batch(params: ModelParams, k: int, mats: np.ndarray) -> np.ndarray:
    """(count, 1 + s) array of (m, m_1', ..., m_s')."""
    n = params.size(k)
    off = params.offsets(k)
    out = np.empty((mats.shape[0], 1 + params.s), dtype=np.int64)
    out[:, 0] = n - batch_rank(pack_bits(mats), n)
    for j in range(params.s):
        w = off[j + 1] - off[j]
        # rank of the block column equals rank of its transpose (w rows, n cols)
        pillar = mats[:, :, off[j]:off[j + 1]].transpose(0, 2, 1)
        out[:, 1 + j] = w - batch_rank(pack_bits(pillar), n)
    return out


def refined_corank(B: BitMatrix, params: ModelParams, k: int) -> RefinedCorank:
    row = refined_corank_batch(params, k, B.to_dense()[None])[0]
    return RefinedCorank(int(row[0]), tuple(int(x) for x in row[1:]))


# histograms ------------------------------------------------------------------

@dataclass
class Histogram:
    """Counts over refined-corank states; mergeable by addition."""

    params: ModelParams
    k: int
    counts: Counter = field(default_factory=Counter)

    @property
    def samples(self) -> int:
        return sum(self.counts.values())

    def add_states(self, states: np.ndarray) -> None:
        keys, cnt = np.unique(states, axis=0, return_counts=True)
        for key, c in zip(keys, cnt):
            self.counts[tuple(int(x) for x in key)] += int(c)

    def __add__(self, other: "Histogram") -> "Histogram":
        if (self.params, self.k) != (other.params, other.k):
            raise ValueError("histograms of different models")
        return Histogram(self.params, self.k, self.counts + other.counts)

    def marginal(self, index: int = 0) -> dict[int, int]:
        out: Counter = Counter()
        for state, c in self.counts.items():
            out[state[index]] += c
        return dict(sorted(out.items()))

    def freq(self, index: int = 0) -> dict[int, float]:
        n = self.samples
        return {v: c / n for v, c in self.marginal(index).items()}

    def stderr(self, p: float) -> float:
        return math.sqrt(max(p * (1 - p), 0.0) / max(self.samples, 1))

    def mean_power(self, xi: int, index: int = 0) -> tuple[float, float]:
        """Mean of 2^(xi * value) with its standard error."""
        n = self.samples
        vals = np.array([2.0 ** (xi * v) for v in self.marginal(index)])
        cnt = np.array(list(self.marginal(index).values()), dtype=float)
        mean = float((vals * cnt).sum() / n)
        var = float((cnt * (vals - mean) ** 2).sum() / max(n - 1, 1))
        return mean, math.sqrt(var / n)

    def min_state(self, index: int = 0) -> int:
        return min(self.marginal(index))

    def rows(self) -> list[dict]:
        n = self.samples
        out = []
        for state in sorted(self.counts):
            c = self.counts[state]
            p = c / n
            padded = list(state) + [""] * (3 - len(state))
            out.append({"m": padded[0], "m1": padded[1], "m2": padded[2],
                        "count": c, "freq": p, "stderr": self.stderr(p)})
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=["m", "m1", "m2", "count", "freq", "stderr"], lineterminator="\n")
        w.writeheader()
        w.writerows(self.rows())
        return buf.getvalue()


def mc_distribution(params: ModelParams, k: int, samples: int, seed: int = 0) -> Histogram:
    """Monte Carlo histogram of refined coranks; deterministic in (seed, samples)."""
    if samples < 1:
        raise ValueError("samples must be positive")
    params.check(k)
    hist = Histogram(params, k)
    for shard, count in shards(samples):
        mats = sample_batch(params, k, count, shard_rng(seed, shard))
        states = refined_corank_batch(params, k, mats)
        hist.add_states(states)
    return hist


def exact_distribution(params: ModelParams, k: int) -> dict[tuple[int, ...], Fraction]:
    """Exact law of the refined corank by enumerating the whole model."""
    mats = enumerate_models(params, k)
    hist = Histogram(params, k)
    hist.add_states(refined_corank_batch(params, k, mats))
    total = hist.samples
    return {s: Fraction(c, total) for s, c in sorted(hist.counts.items())}


def transition_counts(params: ModelParams, k: int, samples: int, seed: int = 0) -> Counter:
    """Counts of (state at k, state at k+1) under one extension step."""
    params.check(k)
    out: Counter = Counter()
    for shard, count in shards(samples):
        rng = shard_rng(seed, shard)
        mats = sample_batch(params, k, count, rng)
        before = refined_corank_batch(params, k, mats)
        after = refined_corank_batch(params, k + 1, extend_batch(params, k, mats, rng))
        pairs = np.concatenate([before, after], axis=1)
        keys, cnt = np.unique(pairs, axis=0, return_counts=True)
        h = before.shape[1]
        for key, c in zip(keys, cnt):
            out[(tuple(int(x) for x in key[:h]), tuple(int(x) for x in key[h:]))] += int(c)
    return out


__all__ = [
    "Histogram",
    "ModelParams",
    "RefinedCorank",
    "SHARD",
    "enumerate_models",
    "exact_distribution",
    "extend_batch",
    "extend_model",
    "free_entries",
    "mc_distribution",
    "project_batch",
    "refined_corank",
    "refined_corank_batch",
    "sample_batch",
    "sample_model",
    "shard_rng",
    "shards",
    "transition_counts",
]
