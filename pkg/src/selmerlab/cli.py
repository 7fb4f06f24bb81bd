"""Command-line front end: ``selmerlab <subcommand> ...``.

Every subcommand prints one JSON document to stdout carrying a ``schema``
field.  Rational values are written as ``{"exact": "p/q"}`` and floating
values as ``{"float": x}``; integers (counts, dimensions) are exact by
nature and written bare.  Exit status is 0 on success, 1 when a
consistency check fails and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import csv
import hashlib
import io
import json
import math
import os
import re
import sys
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from . import __version__
from .arith import PlaceSet, is_prime
from .chains import (
    ChainSpec,
    chain_validate,
    check_drift,
    equilibrium_closed,
    equilibrium_power,
    stationarity_defect,
    table_csv,
    tv,
)
from .descent import (
    CurveFamily,
    SelmerData,
    TwistClass,
    build_gram_matrix,
    build_kernel_matrix,
    selmer_oracle,
    split_twist,
)
from .experiments import MATRIX, ORACLE, Dims, members, oracle_dims, report_from_dims, run_density
from .model import ModelParams, mc_distribution
from .moments import GenFnSpec, gen_fn_eval, moment

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_USAGE = 2
CACHE_ENV = "SELMERLAB_CACHE"


class UsageError(Exception):
    """Inadmissible parameters; reported with exit status 2."""


# ----------------------------------------------------------------------------
# output


def tag(value: Any) -> Any:
    """Recursively wrap Fractions and floats with their mode tag."""
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if isinstance(value, Fraction):
        return {"exact": str(value)}
    if isinstance(value, float):
        return {"float": value if math.isfinite(value) else str(value)}
    if isinstance(value, dict):
        if set(value) <= {"exact", "float"} and value:
            return value
        return {str(k): tag(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [tag(v) for v in value]
    if hasattr(value, "item"):
        return tag(value.item())
    raise TypeError(f"cannot serialize {type(value).__name__}")


def dumps(doc: dict) -> str:
    return json.dumps(tag(doc), sort_keys=True, separators=(",", ":"))


def write_csv(path: str | None, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    if not path:
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# ----------------------------------------------------------------------------
# cache


class SelmerCache:
    """Append-only JSON-lines store of oracle results keyed by (class hash, n).

    Each record carries a SHA-256 of its payload; records whose checksum does
    not match are skipped and counted in ``corrupt``.
    """

    def __init__(self, root: str | os.PathLike | None = None) -> None:
        base = root or os.environ.get(CACHE_ENV) or Path.home() / ".cache" / "selmerlab"
        self.root = Path(base)
        self.corrupt = 0

    @staticmethod
    def class_hash(cls: TwistClass) -> str:
        return hashlib.sha256(repr(cls.key()).encode()).hexdigest()[:16]

    @staticmethod
    def _checksum(payload: dict) -> str:
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    def _file(self, cls: TwistClass) -> Path:
        return self.root / f"{self.class_hash(cls)}.jsonl"

    def load(self, cls: TwistClass) -> dict[int, dict]:
        path = self._file(cls)
        out: dict[int, dict] = {}
        if not path.exists():
            return out
        with open(path) as fh:
            for line in fh:
                try:
                    rec = json.loads(line)
                    ok = rec["sha256"] == self._checksum(rec["data"])
                except (ValueError, KeyError, TypeError):
                    ok = False
                if not ok:
                    self.corrupt += 1
                    continue
                out[int(rec["n"])] = rec["data"]
        return out

    def append(self, cls: TwistClass, n: int, data: dict) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        rec = {"n": n, "data": data, "sha256": self._checksum(data)}
        with open(self._file(cls), "a") as fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _cached_oracle_dims(cls: TwistClass, pairs, cache: SelmerCache | None, jobs: int) -> Dims:
    import numpy as np

    known = cache.load(cls) if cache else {}
    todo = [(n, ps) for n, ps in pairs if n not in known]
    fresh = dict(zip([n for n, _ in todo], run_pool(_oracle_json, [(cls, n) for n, _ in todo], jobs)))
    if cache:
        for n, data in fresh.items():
            cache.append(cls, n, data)
    known.update(fresh)
    if not pairs:
        return Dims.empty()
    rows = [known[n]["dims"] for n, _ in pairs]
    return Dims(np.array([n for n, _ in pairs], dtype=np.int64), np.array([len(ps) for _, ps in pairs], dtype=np.int64),
                np.array([r["essential"] for r in rows], dtype=np.int64),
                np.array([r["phi_essential"] for r in rows], dtype=np.int64).reshape(-1, 3))


def _oracle_json(job: tuple[TwistClass, int]) -> dict:
    cls, n = job
    return selmer_oracle(cls.family, cls.twist(n), cls.sigma).to_json()


# ----------------------------------------------------------------------------
# worker pool


def run_pool(fn: Callable, items: Sequence, jobs: int) -> list:
    """Map fn over items in order; the first exception cancels pending work."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with cf.ProcessPoolExecutor(max_workers=jobs) as ex:
        futures = [ex.submit(fn, x) for x in items]
        try:
            return [f.result() for f in futures]
        except BaseException:
            ex.shutdown(wait=False, cancel_futures=True)
            raise


# ----------------------------------------------------------------------------
# argument helpers


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _family(args) -> CurveFamily:
    try:
        return CurveFamily(args.e1, args.e2)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _sigma(args, fam: CurveFamily) -> PlaceSet:
    if args.sigma is None:
        return fam.sigma0
    items = args.sigma
    if -1 not in items or 2 not in items:
        raise UsageError("--sigma must contain -1 and 2")
    odd = tuple(p for p in items if p not in (-1, 2))
    if any(p < 3 or not is_prime(p) for p in odd):
        raise UsageError("--sigma entries besides -1 and 2 must be odd primes")
    sigma = PlaceSet(odd)
    if tuple(items) != sigma.generators:
        raise UsageError(f"--sigma must be listed in the order {','.join(map(str, sigma.generators))}")
    return sigma


def _classes(args, fam: CurveFamily) -> list[TwistClass]:
    sigma = _sigma(args, fam)
    spec = getattr(args, "class_spec", None)
    if spec == "auto":
        return TwistClass.enumerate(fam, sigma)
    if args.q is None or args.s is None:
        raise UsageError("give --q and --s, or --class-spec auto")
    try:
        return [TwistClass(fam, sigma, args.q, args.s)]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _model(args) -> ModelParams:
    try:
        return ModelParams.of_type(args.type, args.r, args.t1, args.t2)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"inadmissible model parameters: {exc}") from exc


def _header(command: str, args) -> dict:
    return {"schema": f"selmerlab.{command}/1", "version": __version__}


# ----------------------------------------------------------------------------
# subcommands (each returns (document, checks))


def cmd_classify(args) -> tuple[dict, dict]:
    fam = _family(args)
    kind = fam.kind
    doc = {"type": kind.type, "d": list(kind.d), "squares": list(kind.squares),
           "sigma0": list(fam.sigma0.generators)}
    return doc, {}


def cmd_param(args) -> tuple[dict, dict]:
    from .experiments import phi_parameters

    fam = _family(args)
    out = []
    for cls in _classes(args, fam):
        d = cls.describe()
        d["t_phi"] = [x if x is not None else "-inf" for x in phi_parameters(cls)]
        d["pillar_directions"] = list(cls.pillar_directions)
        out.append(d)
    return {"classes": out}, {}


def cmd_selmer(args) -> tuple[dict, dict]:
    fam = _family(args)
    sigma = _sigma(args, fam)
    if args.m == 0:
        raise UsageError("m must be nonzero")
    try:
        q, n, primes = split_twist(args.m, sigma)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    cls = TwistClass.of_twist(fam, args.m, sigma)
    doc: dict[str, Any] = {"m": args.m, "n": n, "q": q.value(), "primes": list(primes), "class": cls.describe()}
    checks: dict[str, bool] = {}
    if n > 1:
        M = build_kernel_matrix(cls, n, primes)
        G = build_gram_matrix(cls, n, primes)
        matrix = {"sel2": M.B.corank(), "gram_sel2": G.corank(), "phi": [x.corank() for x in M.strict],
                  "phi_mod": [x.corank() for x in M.modified]}
        doc["matrix"] = matrix
        checks["matrix_equals_gram"] = matrix["sel2"] == matrix["gram_sel2"]
    if args.oracle or n == 1:
        cache = None if args.no_cache else SelmerCache()
        known = cache.load(cls) if cache else {}
        data = known.get(n)
        if data is None:
            data = selmer_oracle(fam, args.m, sigma).to_json()
            if cache:
                cache.append(cls, n, data)
        doc["oracle"] = data["dims"]
        if "matrix" in doc:
            checks["oracle_equals_matrix"] = (data["dims"]["sel2"] == doc["matrix"]["sel2"]
                                              and data["dims"]["phi"] == doc["matrix"]["phi"])
    return doc, checks


def cmd_density(args) -> tuple[dict, dict]:
    fam = _family(args)
    classes = _classes(args, fam)
    if args.max_n < 3:
        raise UsageError("--max-n must be at least 3")
    mode = ORACLE if args.oracle else MATRIX
    cache = None if args.no_cache else SelmerCache()
    reports = []
    violations = 0
    csv_rows: list[list] = []
    for cls in classes:
        if mode == MATRIX:
            rep = run_density(cls, args.max_n, MATRIX, args.essential)
        else:
            pairs = members(cls, args.max_n)
            dims = _cached_oracle_dims(cls, pairs, cache, args.jobs)
            rep = report_from_dims(cls, dims, args.max_n, ORACLE, args.essential)
        rep.meta.pop("wall_time", None)
        body = rep.to_json()
        body.pop("schema", None)
        if args.xi is not None:
            if args.xi >= len(rep.averages):
                raise UsageError(f"--xi is limited to {len(rep.averages) - 1}")
            body["average"] = rep.averages[args.xi].to_json()
        violations += rep.lower_bound_violations
        reports.append(body)
        for line in rep.csv().splitlines()[1:]:
            csv_rows.append([cls.q.value(), "".join(map(str, cls.s))] + line.split(","))
    write_csv(args.csv, ["q", "s", "statistic", "d", "count", "freq", "model"], csv_rows)
    return {"mode": mode, "reports": reports}, {"lower_bound_holds": violations == 0}


def cmd_model_sim(args) -> tuple[dict, dict]:
    params = _model(args)
    if not params.admissible(args.k):
        raise UsageError(f"k={args.k} is too small; need k >= {params.min_k()}")
    if args.samples < 2:
        raise UsageError("--samples must be at least 2")
    hist = mc_distribution(params, args.k, args.samples, args.seed)
    eq = equilibrium_closed(ChainSpec(params)).marginal(0)
    emp = hist.marginal(0)
    bins = []
    ok_bins = True
    for m in sorted(set(emp) | {m for m, p in eq.items() if p >= args.min_p}):
        p = eq.get(m, 0.0)
        f = emp.get(m, 0) / hist.samples
        se = math.sqrt(p * (1 - p) / hist.samples) if p > 0 else 0.0
        z = abs(f - p) / se if se > 0 else (0.0 if f == 0 else math.inf)
        checked = p >= args.min_p
        ok_bins &= (not checked) or z <= 3
        bins.append({"m": m, "count": emp.get(m, 0), "freq": f, "equilibrium": p, "z": z, "checked": checked})
    mean, se = hist.mean_power(1)
    target = Fraction(3) + sum((Fraction(2) ** t for t in params.t), Fraction(0))
    doc = {"model": params.describe(), "k": args.k, "samples": hist.samples, "seed": args.seed, "bins": bins,
           "states": [{"state": list(s), "count": c} for s, c in sorted(hist.counts.items())],
           "mean_2m": {"value": mean, "stderr": se, "target": target}}
    write_csv(args.csv, ["m", "m1", "m2", "count", "freq", "stderr"], [r.split(",") for r in hist.to_csv().splitlines()[1:]])
    return doc, {"bins_within_3_sigma": ok_bins, "mean_within_2_se": abs(mean - float(target)) <= 2 * se}


def cmd_markov_eq(args) -> tuple[dict, dict]:
    params = _model(args)
    spec = ChainSpec(params, args.M)
    want = {"closed": args.closed or not args.power, "power": args.power or not args.closed}
    doc: dict[str, Any] = {"model": params.describe(), "truncation": args.M}
    dists = {}
    if want["closed"]:
        dists["closed"] = equilibrium_closed(spec)
    if want["power"]:
        dists["power"] = equilibrium_power(spec, tol=args.tol)
    for name, d in dists.items():
        doc[name] = {**d.to_json(), "stationarity_defect": stationarity_defect(spec, d)}
    checks = {}
    if len(dists) == 2:
        dist = tv(dists["closed"], dists["power"])
        doc["tv"] = dist
        checks["tv_within"] = dist <= args.max_tv
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(table_csv(spec, min(args.M, 20)))
    return doc, checks


def cmd_moments(args) -> tuple[dict, dict]:
    t = tuple(x for x in (args.t1, args.t2) if x is not None)
    kind = (args.type or "ABC"[len(t)]).upper()
    if kind not in "ABC" or len(t) != "ABC".index(kind):
        raise UsageError(f"type {kind} needs {'ABC'.index(kind) if kind in 'ABC' else '?'} hole parameter(s)")
    r = args.r if args.r is not None else (t[0] % 2 if t else 0)
    try:
        spec = GenFnSpec(r, t)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.xi < 0:
        raise UsageError("--xi must be nonnegative")
    exact = moment(spec, args.xi)
    at_one = gen_fn_eval(spec, 1.0)
    doc = {"type": kind, "r": r, "t": list(t), "xi": args.xi,
           "moment": exact if args.exact else float(exact), "gen_fn_at_1": at_one}
    return doc, {"gen_fn_normalized": abs(at_one - 1) <= 1e-12}


def cmd_chain_validate(args) -> tuple[dict, dict]:
    if args.k < 1 or args.samples < 1:
        raise UsageError("--k and --samples must be positive")
    if args.source == "model":
        params = _model(args)
        if not params.admissible(args.k):
            raise UsageError(f"k={args.k} is too small; need k >= {params.min_k()}")
        rep = chain_validate("model", args.k, args.samples, args.seed, params=params, min_count=args.min_count)
    else:
        if args.e1 is None or args.e2 is None:
            raise UsageError("--source redei needs --e1 and --e2")
        classes = _classes(args, _family(args))
        if len(classes) != 1:
            raise UsageError("--source redei validates a single class")
        rep = chain_validate("redei", args.k, args.samples, args.seed, cls=classes[0], min_count=args.min_count)
    doc = rep.to_json()
    write_csv(args.csv, ["from", "to", "count", "source_count", "empirical", "table", "stderr"],
              ([" ".join(map(str, r["from"])), " ".join(map(str, r["to"])), r["count"], r["source_count"],
                r["empirical"], r["table"], r["stderr"]] for r in rep.rows))
    return doc, {"no_forbidden": rep.forbidden == 0, "joint_within": rep.max_joint_dev < args.max_dev}


def cmd_drift(args) -> tuple[dict, dict]:
    params = _model(args)
    if args.xi < 1:
        raise UsageError("--xi must be positive")
    if args.steps < 1:
        raise UsageError("--steps must be positive")
    rep = check_drift(ChainSpec(params, args.M), args.xi, args.steps)
    return {"model": params.describe(), **rep.to_json()}, {"drift_below_one": rep.sup_beyond < 1}


# ----------------------------------------------------------------------------
# parser


def _add_family(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--e1", type=int, required=required)
    p.add_argument("--e2", type=int, required=required)


def _add_class(p: argparse.ArgumentParser, auto: bool) -> None:
    p.add_argument("--sigma", type=_int_list, help="place set, e.g. -1,2,3 (default: bad places)")
    p.add_argument("--q", type=int, help="square class supported on sigma")
    p.add_argument("--s", type=_int_list, help="class vector ordered as sigma, e.g. 0,1,0")
    if auto:
        p.add_argument("--class-spec", choices=["auto", "explicit"], default="explicit")


def _add_model(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--type", choices=["A", "B", "C", "a", "b", "c"], required=required)
    p.add_argument("--r", type=int, default=0)
    p.add_argument("--t1", type=int)
    p.add_argument("--t2", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="selmerlab", description="2-Selmer statistics of quadratic twist families")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="type A/B/C of a family")
    _add_family(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("param", help="class parameters r, t_X and t")
    _add_family(p)
    _add_class(p, auto=True)
    p.set_defaults(func=cmd_param)

    p = sub.add_parser("selmer", help="Selmer dimensions of one twist")
    _add_family(p)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--sigma", type=_int_list)
    p.add_argument("--oracle", action="store_true", help="also run the enumeration oracle")
    p.add_argument("--no-cache", action="store_true")
    p.set_defaults(func=cmd_selmer)

    p = sub.add_parser("density", help="empirical Selmer distribution over a class")
    _add_family(p)
    _add_class(p, auto=True)
    p.add_argument("--max-n", type=int, required=True)
    p.add_argument("--essential", action="store_true", help="restrict to the essential prime-count window")
    p.add_argument("--xi", type=int)
    p.add_argument("--oracle", action="store_true", help="enumeration oracle instead of the kernel matrices")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-cache", action="store_true")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("model-sim", help="Monte Carlo of the alternating model")
    _add_model(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-p", type=float, default=1e-3)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_model_sim)

    p = sub.add_parser("markov-eq", help="equilibrium of the corank chain")
    _add_model(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--closed", action="store_true")
    g.add_argument("--power", action="store_true")
    p.add_argument("--tol", type=float, default=1e-14)
    p.add_argument("--M", type=int, default=40, help="truncation of the corank")
    p.add_argument("--max-tv", type=float, default=1e-9)
    p.add_argument("--csv", help="write the transition table (m <= 20)")
    p.set_defaults(func=cmd_markov_eq)

    p = sub.add_parser("moments", help="exact moments of 2^corank")
    p.add_argument("--type", choices=["A", "B", "C", "a", "b", "c"])
    p.add_argument("--r", type=int)
    p.add_argument("--t1", type=int)
    p.add_argument("--t2", type=int)
    p.add_argument("--xi", type=int, required=True)
    p.add_argument("--exact", action="store_true")
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("chain-validate", help="empirical transitions against the tables")
    p.add_argument("--source", choices=["model", "redei"], required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_model(p, required=False)
    _add_family(p, required=False)
    _add_class(p, auto=False)
    p.add_argument("--max-dev", type=float, default=0.01)
    p.add_argument("--min-count", type=int, default=2000)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_chain_validate)

    p = sub.add_parser("drift", help="Lyapunov drift of the chain")
    _add_model(p)
    p.add_argument("--xi", type=int, required=True)
    p.add_argument("--M", type=int, default=40)
    p.add_argument("--steps", type=int, default=1, help="drift of the steps-fold transition")
    p.set_defaults(func=cmd_drift)
    return parser


_NEGATIVE_LIST = re.compile(r"^-\d+(,-?\d+)+$")


def _join_negative_lists(argv: Sequence[str]) -> list[str]:
    """Let `--sigma -1,2,3` through: argparse would read -1,2,3 as an option."""
    out: list[str] = []
    for tok in argv:
        if out and out[-1].startswith("--") and "=" not in out[-1] and _NEGATIVE_LIST.match(tok):
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = _join_negative_lists(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "command", None) == "chain-validate" and args.source == "model" and args.type is None:
        print("selmerlab chain-validate: --source model needs --type", file=sys.stderr)
        return EXIT_USAGE
    try:
        doc, checks = args.func(args)
    except UsageError as exc:
        print(f"selmerlab {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AssertionError as exc:
        print(f"selmerlab {args.command}: internal check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    out = {**_header(args.command, args), **doc}
    if checks:
        out["checks"] = checks
    sys.stdout.write(dumps(out) + "\n")
    return EXIT_CHECK if checks and not all(checks.values()) else EXIT_OK


__all__ = ["SelmerCache", "build_parser", "dumps", "main", "run_pool", "tag"]


if __name__ == "__main__":
    sys.exit(main())
