"""Empirical Selmer statistics over a twist class, compared with the models.

For every square-free n < N in the class (n > 1), the essential Selmer
dimension dim S = corank - 2 and the three essential isogeny Selmer
dimensions dim S_phi (pi-strict corank, less one when d_pi is a square)
are computed either from the
symbolic kernel matrices evaluated on Legendre symbols (matrix mode) or by
the enumeration oracle (oracle mode).
"""

from __future__ import annotations

import csv
import io
import math
import time
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .arith import omega_of, sieve_squarefree
from .chains import ChainSpec, equilibrium_closed, pmat_closed
from .descent import TwistClass, selmer_oracle
from .model import ModelParams
from .moments import GenFnSpec, moment
from .redei import OmegaBatch, RESTRICTED

MATRIX = "matrix"
ORACLE = "oracle"
XI_MAX = 3
SCHEMA = "selmerlab.density/1"


@dataclass
class Dims:
    """Per-member dimensions: n, number of primes, dim S and dim S_phi for pi = 1, 2, 3."""

    n: np.ndarray
    k: np.ndarray
    S: np.ndarray
    phi: np.ndarray

    def __len__(self) -> int:
        return len(self.n)

    def select(self, mask: np.ndarray) -> "Dims":
        return Dims(self.n[mask], self.k[mask], self.S[mask], self.phi[mask])

    @classmethod
    def empty(cls) -> "Dims":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z, np.zeros((0, 3), dtype=np.int64))


def members(cls: TwistClass, N: int) -> list[tuple[int, tuple[int, ...]]]:
    return list(sieve_squarefree(N, cls.sigma, cls.s))


def matrix_dims(cls: TwistClass, pairs: Sequence[tuple[int, tuple[int, ...]]], chunk: int = 20000) -> Dims:
    """Dimensions from the kernel matrices, evaluated in batches grouped by k."""
    by_k: dict[int, list[tuple[int, tuple[int, ...]]]] = defaultdict(list)
    for n, ps in pairs:
        by_k[len(ps)].append((n, ps))
    exprs = [cls.kernel_expr] + [cls.kernel_variant(pi, False) for pi in (1, 2, 3)]
    # the torsion class of ker(pi) lies in the pi-strict group exactly when d_pi is a square
    torsion = np.array([int(sq) for sq in cls.family.kind.squares], dtype=np.int64)
    out = []
    for k in sorted(by_k):
        group = by_k[k]
        for lo in range(0, len(group), chunk):
            part = group[lo:lo + chunk]
            pts = [omega_of(n, ps, cls.sigma) for n, ps in part]
            batch = OmegaBatch(cls.sigma, np.stack([p.a for p in pts]), np.stack([p.z for p in pts]))
            cor = np.stack([e.corank_batch(batch, RESTRICTED) for e in exprs], axis=1)
            out.append(Dims(np.array([n for n, _ in part], dtype=np.int64), np.full(len(part), k, dtype=np.int64),
                            cor[:, 0] - 2, cor[:, 1:] - torsion))
    return _concat(out)


def oracle_dims(cls: TwistClass, pairs: Sequence[tuple[int, tuple[int, ...]]]) -> Dims:
    ns, ks, S, phi = [], [], [], []
    for n, ps in pairs:
        data = selmer_oracle(cls.family, cls.twist(n), cls.sigma)
        ns.append(n)
        ks.append(len(ps))
        S.append(data.essential)
        phi.append(data.phi_essential)
    if not ns:
        return Dims.empty()
    return Dims(np.array(ns), np.array(ks), np.array(S), np.array(phi, dtype=np.int64).reshape(-1, 3))


def _concat(parts: list[Dims]) -> Dims:
    if not parts:
        return Dims.empty()
    d = Dims(*(np.concatenate([getattr(p, f) for p in parts]) for f in ("n", "k", "S", "phi")))
    order = np.argsort(d.n, kind="stable")
    return d.select(order)


def essential_window(k: np.ndarray, N: int) -> np.ndarray:
    """|k - log log N| <= (log log N)^(2/3), natural logarithms."""
    ll = math.log(math.log(N))
    return np.abs(k - ll) <= ll ** (2 / 3)


def _hist(values: Iterable[int]) -> dict[int, int]:
    return dict(sorted(Counter(int(v) for v in values).items()))


def l1(counts: dict[int, int], model: dict[int, float]) -> float:
    total = sum(counts.values())
    keys = set(counts) | set(model)
    return math.fsum(abs(counts.get(d, 0) / total - model.get(d, 0.0)) for d in keys) if total else float("nan")


def model_marginal(r: int, t: Sequence[int]) -> dict[int, float]:
    return equilibrium_closed(ChainSpec(ModelParams(r, tuple(t)))).marginal(0)


def phi_parameters(cls: TwistClass) -> tuple[int | None, int | None, int | None]:
    """t_phi for pi = 1, 2, 3; None marks a non-square direction (t = -infinity)."""
    out: list[int | None] = [None, None, None]
    for pi, t in zip(cls.pillar_directions, cls.parameter):
        out[pi - 1] = t
    return tuple(out)  # type: ignore[return-value]


def pmat_marginal(t: int | None, top: int = 40) -> dict[int, float]:
    return {d: p for d in range(top + 1) if (p := pmat_closed(t, d)) > 0}


@dataclass
class Average:
    xi: int
    mean: float
    stderr: float
    target: Fraction
    count: int

    def to_json(self) -> dict:
        return {"xi": self.xi, "mean": self.mean, "stderr": self.stderr, "count": self.count,
                "target": {"exact": str(self.target), "float": float(self.target)},
                "rel_dev": abs(self.mean - float(self.target)) / float(self.target) if self.count else None}


def averages(S: np.ndarray, r: int, t: Sequence[int], xis: Sequence[int] = range(XI_MAX + 1)) -> list[Average]:
    out = []
    for xi in xis:
        target = moment(GenFnSpec(r, tuple(t)), xi)
        if len(S) == 0:
            out.append(Average(xi, float("nan"), float("nan"), target, 0))
            continue
        vals = 2.0 ** (xi * S.astype(np.float64))
        se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else float("nan")
        out.append(Average(xi, float(vals.mean()), se, target, len(vals)))
    return out


@dataclass
class DensityReport:
    """Histograms over one class and their model predictions."""

    cls: dict
    N: int
    mode: str
    essential: bool
    population: int
    counts_S: dict[int, int]
    counts_phi: list[dict[int, int]]
    joint: dict[tuple[int, ...], int]
    model_S: dict[int, float]
    model_phi: list[dict[int, float]]
    l1_S: float
    l1_phi: list[float]
    averages: list[Average]
    phi_by_k: list[dict[int, dict]]
    lower_bound_violations: int
    window_fraction: float
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA,
            "class": self.cls,
            "N": self.N,
            "mode": self.mode,
            "essential_window": self.essential,
            "population": self.population,
            "window_fraction": {"float": self.window_fraction},
            "counts_S": {str(d): c for d, c in self.counts_S.items()},
            "counts_phi": [{str(d): c for d, c in h.items()} for h in self.counts_phi],
            "joint": [{"state": list(s), "count": c} for s, c in sorted(self.joint.items())],
            "model_S": {"float": {str(d): p for d, p in self.model_S.items() if p > 1e-15}},
            "model_phi": [{"float": {str(d): p for d, p in h.items() if p > 1e-15}} for h in self.model_phi],
            "l1_S": {"float": self.l1_S},
            "l1_phi": {"float": self.l1_phi},
            "averages": [a.to_json() for a in self.averages],
            "phi_by_k": [{str(k): v for k, v in h.items()} for h in self.phi_by_k],
            "lower_bound_violations": self.lower_bound_violations,
            "meta": self.meta,
        }

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["statistic", "d", "count", "freq", "model"])
        total = max(self.population, 1)
        for d in sorted(set(self.counts_S) | {d for d, p in self.model_S.items() if p > 1e-12}):
            w.writerow(["S", d, self.counts_S.get(d, 0), self.counts_S.get(d, 0) / total, self.model_S.get(d, 0.0)])
        for pi, (h, m) in enumerate(zip(self.counts_phi, self.model_phi), start=1):
            for d in sorted(set(h) | {d for d, p in m.items() if p > 1e-12}):
                w.writerow([f"S_phi{pi}", d, h.get(d, 0), h.get(d, 0) / total, m.get(d, 0.0)])
        return buf.getvalue()


def _phi_by_k(dims: Dims) -> list[dict[int, dict]]:
    out = []
    for pi in range(3):
        per: dict[int, dict] = {}
        for k in sorted(set(dims.k.tolist())):
            sel = dims.k == k
            vals = dims.phi[sel, pi]
            per[int(k)] = {"count": int(sel.sum()), "positive": int((vals > 0).sum()),
                           "p_positive": float((vals > 0).mean())}
        out.append(per)
    return out


def report_from_dims(cls: TwistClass, dims: Dims, N: int, mode: str, essential: bool) -> DensityReport:
    r, t = cls.r, cls.parameter
    win = essential_window(dims.k, N) if len(dims) else np.zeros(0, dtype=bool)
    frac = float(win.mean()) if len(dims) else float("nan")
    used = dims.select(win) if essential else dims
    tphi = phi_parameters(cls)
    counts_S = _hist(used.S)
    counts_phi = [_hist(used.phi[:, i]) for i in range(3)]
    joint_cols = [used.S] + [used.phi[:, pi - 1] for pi in cls.pillar_directions]
    joint = Counter(tuple(int(x) for x in row) for row in zip(*joint_cols)) if len(used) else Counter()
    model_S = model_marginal(r, t)
    model_phi = [pmat_marginal(tp) for tp in tphi]
    floor = max(t) if t else 0
    return DensityReport(
        cls=cls.describe(), N=N, mode=mode, essential=essential, population=len(used),
        counts_S=counts_S, counts_phi=counts_phi, joint=dict(joint), model_S=model_S, model_phi=model_phi,
        l1_S=l1(counts_S, model_S), l1_phi=[l1(h, m) for h, m in zip(counts_phi, model_phi)],
        averages=averages(used.S, r, t), phi_by_k=_phi_by_k(used),
        lower_bound_violations=int((dims.S < floor).sum()), window_fraction=frac,
        meta={"t_phi": [x if x is not None else "-inf" for x in tphi]},
    )


def run_density(cls: TwistClass, N: int, mode: str = MATRIX, essential_window_only: bool = False,
                oracle_cap: int = 20_000) -> DensityReport:
    """Sieve the class below N, compute dimensions, and compare with the models."""
    start = time.time()
    pairs = members(cls, N)
    if mode == MATRIX:
        dims = matrix_dims(cls, pairs)
    elif mode == ORACLE:
        if N > oracle_cap:
            raise ValueError(f"oracle mode is limited to N <= {oracle_cap}")
        dims = oracle_dims(cls, pairs)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    rep = report_from_dims(cls, dims, N, mode, essential_window_only)
    rep.meta.update({"wall_time": round(time.time() - start, 3), "version": _version()})
    return rep


def run_average(cls: TwistClass, N: int, xi: int, essential_window_only: bool = False,
                mode: str = MATRIX) -> Average:
    """Empirical mean of 2^(xi dim S) over the class below N, with the model target."""
    if xi < 0:
        raise ValueError("xi must be nonnegative")
    if mode not in (MATRIX, ORACLE):
        raise ValueError(f"unknown mode {mode!r}")
    pairs = members(cls, N)
    dims = matrix_dims(cls, pairs) if mode == MATRIX else oracle_dims(cls, pairs)
    if essential_window_only:
        dims = dims.select(essential_window(dims.k, N))
    return averages(dims.S, cls.r, cls.parameter, [xi])[0]


def _version() -> str:
    from . import __version__

    return __version__


__all__ = [
    "Average",
    "DensityReport",
    "Dims",
    "MATRIX",
    "ORACLE",
    "SCHEMA",
    "averages",
    "essential_window",
    "l1",
    "matrix_dims",
    "members",
    "model_marginal",
    "oracle_dims",
    "phi_parameters",
    "pmat_marginal",
    "report_from_dims",
    "run_average",
    "run_density",
]
