"""Markov chains on refined coranks of the alternating models.

Transition probabilities are written in the variables

    tau_i = 2^{t_i},  x = 2^{m_1' - m},  y = 2^{-m_1'},  y_i = 2^{-m_i'},  z = 2^{-m},

and evaluate either to exact dyadic rationals (Fraction) or to floats.  A
state is a tuple (m,), (m, m_1') or (m, m_1', m_2') by type.
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence, Union

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .model import ModelParams, shard_rng, shards

Number = Union[Fraction, float]
State = tuple[int, ...]

DEFAULT_M = 40
FORBIDDEN_DM = (0, 2, -2)
ALLOWED_PILLAR = range(-2, 2)


@dataclass(frozen=True)
class ChainSpec:
    params: ModelParams
    M: int = DEFAULT_M

    @property
    def type(self) -> str:
        return self.params.type

    @property
    def t(self) -> tuple[int, ...]:
        return self.params.t

    def in_support(self, state: State) -> bool:
        """Membership of the equilibrium support I (no truncation)."""
        p = self.params
        if len(state) != 1 + p.s or not p.state_ok(state):
            return False
        if p.s == 2:
            m, a, b = state
            t1, t2 = p.t
            return m >= a + b and a - b >= t1 and b - a >= t2
        return True

    def states(self, M: int | None = None) -> list[State]:
        M = self.M if M is None else M
        s = self.params.s
        out = []
        for m in range(self.params.r, M + 1, 2):
            if s == 0:
                cand: Iterable[State] = [(m,)]
            elif s == 1:
                cand = ((m, a) for a in range(m + 1))
            else:
                cand = ((m, a, b) for a in range(m + 1) for b in range(m + 1))
            out.extend(c for c in cand if self.in_support(c))
        return out


# transition tables -----------------------------------------------------------

def _pow2(e: int, exact: bool) -> Number:
    return Fraction(2) ** e if exact else 2.0 ** e


def _row_A(m: int, exact: bool) -> dict[State, Number]:
    x = _pow2(-m, exact)
    return {
        (m + 2,): x * x / 2,
        (m,): x * (3 - 5 * x / 2),
        (m - 2,): (1 - x) * (1 - 2 * x),
    }


def _row_B(m: int, m1: int, t1: int, exact: bool) -> dict[State, Number]:
    tau, x, y = _pow2(t1, exact), _pow2(m1 - m, exact), _pow2(-m1, exact)
    return {
        (m, m1 + 1): tau * (1 - x) * y * y / 2,
        (m + 2, m1 + 1): tau * x * y * y / 2,
        (m - 2, m1): y * (1 - x) * (1 - 2 * x),
        (m, m1): y * (tau - 3 * tau * y / 2 + 3 * x - 5 * x * x / 2 + tau * x * y / 2),
        (m + 2, m1): x * y * (x - tau * y) / 2,
        (m - 2, m1 - 1): (1 - x) * (1 - y),
        (m, m1 - 1): (x - tau * y) * (1 - y),
    }


def _row_C(m: int, m1: int, m2: int, t1: int, t2: int, exact: bool) -> dict[State, Number]:
    t1p, t2p = _pow2(t1, exact), _pow2(t2, exact)
    y1, y2, z = _pow2(-m1, exact), _pow2(-m2, exact), _pow2(-m, exact)
    a = t1p * y1 * y1
    b = t2p * y2 * y2
    yy = y1 * y2
    up, same, down = m + 2, m, m - 2
    return {
        # m_new = m + 2
        (up, m1, m2 + 1): t2p * y2 * (z - a) / (2 * y1),
        (up, m1 + 1, m2 + 1): t1p * t2p * yy / 2,
        (up, m1, m2): (z - a) * (z - b) / (2 * yy),
        (up, m1 + 1, m2): t1p * y1 * (z - b) / (2 * y2),
        # m_new = m - 2
        (down, m1 - 1, m2): (1 - y1) * (y2 - z / y1),
        (down, m1, m2): (yy - z) * (yy - 2 * z) / yy,
        (down, m1 - 1, m2 - 1): (1 - y1) * (1 - y2),
        (down, m1, m2 - 1): (1 - y2) * (y1 - z / y2),
        # m_new = m
        (same, m1, m2 + 1): t2p * y2 * (yy - z) / (2 * y1),
        (same, m1 - 1, m2): (1 - y1) * (z - a) / y1,
        (same, m1, m2): t1p * y1 + t2p * y2 - 3 * (a + b) / 2 + z * (a + b - 5 * z) / (2 * yy) + 3 * z,
        (same, m1 + 1, m2): t1p * y1 * (yy - z) / (2 * y2),
        (same, m1, m2 - 1): (1 - y2) * (z - b) / y2,
    }


def transition_row(spec: ChainSpec, state: State, exact: bool = True) -> dict[State, Number]:
    """Nonzero transition probabilities out of a support state."""
    if not spec.in_support(state):
        return {}
    t = spec.t
    if spec.params.s == 0:
        raw = _row_A(state[0], exact)
    elif spec.params.s == 1:
        raw = _row_B(state[0], state[1], t[0], exact)
    else:
        raw = _row_C(state[0], state[1], state[2], t[0], t[1], exact)
    return {k: v for k, v in raw.items() if v != 0}


def transition_prob(spec: ChainSpec, state: State, new: State, exact: bool = True) -> Number:
    """P(state -> new); zero outside the support by contract."""
    zero: Number = Fraction(0) if exact else 0.0
    return transition_row(spec, tuple(state), exact).get(tuple(new), zero)


def transition_matrix(spec: ChainSpec, M: int | None = None) -> tuple[list[State], sparse.csr_matrix]:
    """Float matrix P[i, j] = P(i -> j) on the truncated support; leaking mass is dropped."""
    states = spec.states(M)
    index = {s: i for i, s in enumerate(states)}
    rows, cols, vals = [], [], []
    for i, s in enumerate(states):
        for new, p in transition_row(spec, s, exact=False).items():
            j = index.get(new)
            if j is not None:
                rows.append(i)
                cols.append(j)
                vals.append(p)
    n = len(states)
    return states, sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def dyadic(p: Fraction) -> tuple[int, int]:
    """(numerator, log2 denominator) of a dyadic rational."""
    den = p.denominator
    e = den.bit_length() - 1
    if den != 1 << e:
        raise ValueError(f"{p} is not dyadic")
    return p.numerator, e


def table_csv(spec: ChainSpec, M: int | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["m", "m1", "m2", "m_new", "m1_new", "m2_new", "prob_num", "prob_den_log2"])
    for s in spec.states(M):
        for new, p in sorted(transition_row(spec, s, exact=True).items()):
            num, e = dyadic(p)
            pad = lambda v: list(v) + [""] * (3 - len(v))  # noqa: E731
            w.writerow(pad(s) + pad(new) + [num, e])
    return buf.getvalue()


# closed forms ----------------------------------------------------------------

def _eta(tol: float = 1e-18) -> float:
    """prod_{i>=1} (1 - 2^-i)."""
    out, i = 1.0, 1
    while 2.0 ** -i > tol:
        out *= 1 - 2.0 ** -i
        i += 1
    return out


def _eta_plus(tol: float = 1e-18) -> float:
    """prod_{i>=1} (1 + 2^-i)."""
    out, i = 1.0, 1
    while 2.0 ** -i > tol:
        out *= 1 + 2.0 ** -i
        i += 1
    return out


def _q(n: int) -> Fraction:
    """prod_{i=1}^n (1 - 2^-i), exact."""
    out = Fraction(1)
    for i in range(1, n + 1):
        out *= 1 - Fraction(1, 2 ** i)
    return out


def pmat_closed(t: int | None, m: int) -> float:
    """Limit law of the corank of a random (k - t) x k matrix; t=None means -infinity."""
    if t is None:
        return 1.0 if m == 0 else 0.0
    if m < max(t, 0):
        return 0.0
    return float(Fraction(1, 2 ** (m * (m - t))) / (_q(m) * _q(m - t))) * _eta()


def lam(T: int, A: int, B: int) -> Fraction:
    """Weight of m inside the fibre of (m_1', m_2') for two holes."""
    if not (T >= 0 and 0 <= A <= 2 * T and 0 <= B <= min(A, 2 * T - A) and (A - B) % 2 == 0):
        return Fraction(0)
    h = (A - B) // 2
    out = Fraction(2) ** ((A - B) * (2 * T - A - B) // 2)
    for i in range(1, A - B + 1):
        out *= 2 ** (B + i) - 1
    for i in range(1, h + 1):
        out /= 2 ** (2 * i) - 1
    for i in range(h, A // 2):
        out *= 2 ** (2 * T + 2 - 2 * A + 2 * i) - 1
    for i in range(0, A // 2):
        out /= 2 ** (2 * T - 1 - 2 * i) - 1
    return out


def closed_prob(spec: ChainSpec, state: State) -> float:
    """Closed-form equilibrium probability of one state."""
    if not spec.in_support(state):
        return 0.0
    p = spec.params
    if p.s == 0:
        m = state[0]
        w = Fraction(1)
        for i in range(1, m + 1):
            w *= Fraction(2, 2 ** i - 1)
        return float(w) / _eta_plus()
    if p.s == 1:
        m, m1 = state
        t1 = p.t[0]
        ell = 2 * m1 - t1 - m
        e = m1 - t1
        w = Fraction(1, 2 ** (e * (e - 1) // 2))
        for i in range(ell):
            w *= 2 ** (e - i) - 1
        for i in range(1, ell // 2 + 1):
            w *= Fraction(4 ** (i - 1), 4 ** i - 1)
        return pmat_closed(t1, m1) * float(w)
    m, m1, m2 = state
    t1, t2 = p.t
    T, A, B = -(t1 + t2) // 2, m2 - m1 - t2, m - m1 - m2
    return pair_closed(t1, t2, m1, m2) * float(lam(T, A, B))


def pair_closed(t1: int, t2: int, m1: int, m2: int) -> float:
    """Joint limit law of the two pillar coranks."""
    if min(m1, m2) < 0 or m1 - m2 < t1 or m2 - m1 < t2:
        return 0.0
    e = m1 * m2 - m1 * (m1 - t1) - m2 * (m2 - t2)
    w = Fraction(2) ** e * _q(-t1 - t2)
    w /= _q(m1) * _q(m1 - m2 - t1) * _q(m2) * _q(m2 - m1 - t2)
    return float(w) * _eta()


@dataclass
class Distribution:
    probs: dict[State, float]
    mode: str = "float"
    meta: dict = field(default_factory=dict)

    def marginal(self, index: int = 0) -> dict[int, float]:
        out: Counter = Counter()
        for s, p in self.probs.items():
            out[s[index]] += p
        return dict(sorted(out.items()))

    def total(self) -> float:
        return math.fsum(self.probs.values())

    def moment(self, xi: int) -> float:
        return math.fsum(p * 2.0 ** (xi * s[0]) for s, p in self.probs.items())

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "states": [{"state": list(s), "p": p} for s, p in sorted(self.probs.items())],
            "marginal_m": {str(m): p for m, p in self.marginal(0).items()},
            **self.meta,
        }


def tv(a: Distribution | dict, b: Distribution | dict) -> float:
    pa = a.probs if isinstance(a, Distribution) else a
    pb = b.probs if isinstance(b, Distribution) else b
    keys = set(pa) | set(pb)
    return 0.5 * math.fsum(abs(pa.get(s, 0.0) - pb.get(s, 0.0)) for s in keys)


def equilibrium_closed(spec: ChainSpec) -> Distribution:
    probs = {s: closed_prob(spec, s) for s in spec.states()}
    probs = {s: p for s, p in probs.items() if p > 0}
    total = math.fsum(probs.values())
    return Distribution(probs, meta={"method": "closed", "truncation": spec.M, "leakage": 1 - total})


def equilibrium_power(
    spec: ChainSpec, tol: float = 1e-14, start: State | None = None, max_iter: int = 100_000
) -> Distribution:
    """Iterate x <- xP from a point mass until successive iterates are tol-close in TV."""
    states, P = transition_matrix(spec)
    PT = P.T.tocsr()
    x = np.zeros(len(states))
    x[states.index(tuple(start)) if start is not None else 0] = 1.0
    leak = 0.0
    for it in range(1, max_iter + 1):
        nxt = PT @ x
        leak = max(leak, 1.0 - nxt.sum())
        nxt /= nxt.sum()
        gap = 0.5 * np.abs(nxt - x).sum()
        x = nxt
        if gap < tol:
            break
    else:
        raise RuntimeError(f"power iteration did not reach tol {tol}; last TV step {gap}")
    probs = {s: float(p) for s, p in zip(states, x) if p > 0}
    return Distribution(probs, meta={"method": "power", "truncation": spec.M, "iterations": it,
                                     "last_step_tv": float(gap), "max_leakage": leak})


def stationarity_defect(spec: ChainSpec, dist: Distribution) -> float:
    """|| pi P - pi ||_1 on the truncated support."""
    states, P = transition_matrix(spec)
    x = np.array([dist.probs.get(s, 0.0) for s in states])
    return float(np.abs(P.T @ x - x).sum())


# structural checks -----------------------------------------------------------

@dataclass
class DriftReport:
    xi: int
    ratios: dict[State, float]
    m0: int
    sup_beyond: float
    steps: int = 1

    def to_json(self) -> dict:
        return {"xi": self.xi, "steps": self.steps, "m0": self.m0, "lambda": self.sup_beyond,
                "ratios": {",".join(map(str, s)): v for s, v in sorted(self.ratios.items())}}


def _step_row(spec: ChainSpec, state: State, steps: int) -> dict[State, float]:
    row = {state: 1.0}
    for _ in range(steps):
        nxt: Counter = Counter()
        for a, pa in row.items():
            for b, pb in transition_row(spec, a, exact=False).items():
                nxt[b] += pa * pb
        row = dict(nxt)
    return row


def check_drift(spec: ChainSpec, xi: int, steps: int = 1) -> DriftReport:
    """||P^steps e_j||_nu / nu(j) with nu(state) = 2^(xi m), and the smallest m0 past which it stays < 1.

    For type B one step is not enough: from (m, m) the chain almost surely
    keeps m and lowers the pillar corank, so the one-step ratio tends to 1
    along the diagonal. Two steps contract.
    """
    ratios = {}
    for s in spec.states():
        row = _step_row(spec, s, steps)
        ratios[s] = math.fsum(p * 2.0 ** (xi * (new[0] - s[0])) for new, p in row.items())
    ms = sorted({s[0] for s in ratios})
    m0 = ms[-1] + 2
    for m in reversed(ms):
        if all(v < 1 for s, v in ratios.items() if s[0] >= m):
            m0 = m
        else:
            break
    beyond = [v for s, v in ratios.items() if s[0] >= m0]
    return DriftReport(xi, ratios, m0, max(beyond) if beyond else float("nan"), steps)


def lazy_failures(spec: ChainSpec, M: int = 20) -> list[State]:
    """States whose self-transition probability vanishes."""
    return [s for s in spec.states(M) if transition_prob(spec, s, s) == 0]


def is_irreducible(spec: ChainSpec, M: int = 20) -> bool:
    states, P = transition_matrix(spec, M)
    n, _ = connected_components(P, directed=True, connection="strong")
    return n == 1


def row_sum_defects(spec: ChainSpec, M: int = 20) -> list[tuple[State, Fraction]]:
    """States whose exact row sum is not 1, or that have a negative entry."""
    bad = []
    for s in spec.states(M):
        row = transition_row(spec, s, exact=True)
        total = sum(row.values(), Fraction(0))
        if total != 1 or any(v < 0 for v in row.values()):
            bad.append((s, total))
    return bad


# empirical validation --------------------------------------------------------

def is_forbidden(before: State, after: State) -> bool:
    if after[0] - before[0] not in FORBIDDEN_DM:
        return True
    return any(b - a not in ALLOWED_PILLAR for a, b in zip(before[1:], after[1:]))


@dataclass
class ChainReport:
    source: str
    params: ModelParams
    k: int
    samples: int
    max_joint_dev: float
    max_cond_dev: float
    max_z: float
    forbidden: int
    outside_support: int
    rows: list[dict]

    def to_json(self) -> dict:
        return {
            "source": self.source, "model": self.params.describe(), "k": self.k,
            "samples": self.samples, "max_joint_dev": self.max_joint_dev,
            "max_cond_dev": self.max_cond_dev, "max_z": self.max_z,
            "forbidden": self.forbidden, "outside_support": self.outside_support,
        }


def compare_transitions(
    spec: ChainSpec, counts: Counter, source: str, k: int, min_count: int = 2000
) -> ChainReport:
    """Deviation of empirical transition frequencies from the table.

    The joint deviation |c(s->s')/N - c(s)/N * P(s->s')| weights each source
    state by how often it was seen; the conditional deviation is restricted
    to source states seen at least ``min_count`` times.
    """
    N = sum(counts.values())
    src: Counter = Counter()
    for (a, _), c in counts.items():
        src[a] += c
    rows = []
    forbidden = outside = 0
    jd = cd = mz = 0.0
    keys = set(counts)
    for a in src:
        for b in transition_row(spec, a, exact=False):
            keys.add((a, b))
    for a, b in sorted(keys):
        c = counts.get((a, b), 0)
        if c and is_forbidden(a, b):
            forbidden += c
        if c and not spec.in_support(a):
            outside += c
        p = float(transition_prob(spec, a, b, exact=False))
        n = src[a]
        emp = c / n
        joint = abs(c - n * p) / N
        jd = max(jd, joint)
        se = math.sqrt(max(p * (1 - p), 1e-300) / n)
        if n >= min_count:
            cd = max(cd, abs(emp - p))
            mz = max(mz, abs(emp - p) / se if p * (1 - p) > 0 else (0.0 if emp == p else math.inf))
        rows.append({"from": list(a), "to": list(b), "count": c, "source_count": n,
                     "empirical": emp, "table": p, "stderr": se})
    return ChainReport(source, spec.params, k, N, jd, cd, mz, forbidden, outside, rows)


def _collect(before: np.ndarray, after: np.ndarray, out: Counter) -> None:
    h = before.shape[1]
    pairs = np.concatenate([before, after], axis=1)
    keys, cnt = np.unique(pairs, axis=0, return_counts=True)
    for key, c in zip(keys, cnt):
        out[(tuple(int(x) for x in key[:h]), tuple(int(x) for x in key[h:]))] += int(c)


def model_transitions(params: ModelParams, k: int, samples: int, seed: int = 0) -> Counter:
    from .model import transition_counts

    return transition_counts(params, k, samples, seed)


def redei_transitions(cls, k: int, samples: int, seed: int = 0) -> Counter:
    """Empirical refined-corank transitions of a class's essential matrices.

    Configurations of k primes are drawn uniformly inside the class, one more
    prime is adjoined, and the essential refined coranks are read at both
    levels.
    """
    from .redei import extend_omega_batch, sample_omega_batch

    hr = cls.high_rank
    out: Counter = Counter()
    for shard, count in shards(samples):
        rng = shard_rng(seed, shard)
        batch = sample_omega_batch(k, cls.sigma, cls.s, rng, count)
        before = hr.refined_corank(batch)
        after = hr.refined_corank(extend_omega_batch(batch, rng))
        _collect(before, after, out)
    return out


def chain_validate(
    source: str, k: int, samples: int, seed: int = 0, params: ModelParams | None = None,
    cls=None, min_count: int = 2000,
) -> ChainReport:
    """Empirical one-step transitions versus the table, for a model or a twist class."""
    if source == "model":
        if params is None:
            raise ValueError("model source needs params")
        counts = model_transitions(params, k, samples, seed)
    elif source == "redei":
        if cls is None:
            raise ValueError("redei source needs a class")
        params = ModelParams(cls.r, cls.parameter)
        counts = redei_transitions(cls, k, samples, seed)
    else:
        raise ValueError(f"unknown source {source!r}")
    return compare_transitions(ChainSpec(params), counts, source, k, min_count)


__all__ = [
    "ChainReport",
    "ChainSpec",
    "Distribution",
    "DriftReport",
    "chain_validate",
    "check_drift",
    "closed_prob",
    "compare_transitions",
    "dyadic",
    "equilibrium_closed",
    "equilibrium_power",
    "is_forbidden",
    "is_irreducible",
    "lam",
    "lazy_failures",
    "model_transitions",
    "pair_closed",
    "pmat_closed",
    "redei_transitions",
    "row_sum_defects",
    "stationarity_defect",
    "table_csv",
    "transition_matrix",
    "transition_prob",
    "transition_row",
    "tv",
]
