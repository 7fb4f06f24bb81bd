import json
import math

import numpy as np
import pytest

from selmerlab.descent import CurveFamily, TwistClass
from selmerlab.moments import GenFnSpec, moment
from selmerlab.experiments import (
    MATRIX,
    ORACLE,
    averages,
    essential_window,
    l1,
    matrix_dims,
    members,
    model_marginal,
    oracle_dims,
    phi_parameters,
    pmat_marginal,
    run_average,
    run_density,
)


def _some_classes():
    out = []
    for e in [(1, -1), (1, -3), (9, 25)]:
        out.extend(TwistClass.enumerate(CurveFamily(*e))[1::7])
    return out


@pytest.mark.parametrize("cls", _some_classes(), ids=lambda c: f"{c.family.e1},{c.family.e2}-q{c.q}-s{''.join(map(str, c.s))}")
def test_matrix_dims_match_oracle(cls):
    pairs = members(cls, 1500)
    a, b = matrix_dims(cls, pairs, chunk=7), oracle_dims(cls, pairs)
    assert np.array_equal(a.n, b.n) and np.array_equal(a.k, b.k)
    assert np.array_equal(a.S, b.S)
    assert np.array_equal(a.phi, b.phi)


def test_l1_and_window():
    assert l1({0: 1, 2: 1}, {0: 0.5, 2: 0.5}) == 0
    assert l1({0: 2}, {2: 1.0}) == 2
    assert math.isnan(l1({}, {0: 1.0}))
    N = 10 ** 6
    ll = math.log(math.log(N))
    k = np.arange(10)
    assert essential_window(k, N).tolist() == [abs(x - ll) <= ll ** (2 / 3) for x in k]


def test_model_marginals_are_distributions():
    assert sum(model_marginal(0, (2,)).values()) == pytest.approx(1, abs=1e-12)
    assert pmat_marginal(None) == {0: 1.0}
    assert pmat_marginal(0)[0] == pytest.approx(0.288788, abs=1e-6)
    assert sum(pmat_marginal(-2).values()) == pytest.approx(1, abs=1e-12)


def test_phi_parameters_mark_non_square_directions():
    cls = TwistClass(CurveFamily(1, -3), CurveFamily(1, -3).sigma0, -1, (0, 0, 0))
    assert phi_parameters(cls) == (2, None, None)
    assert phi_parameters(TwistClass.enumerate(CurveFamily(1, -1))[0]) == (None, None, None)


def test_averages_constant_sample():
    out = averages(np.array([0, 0, 0]), 0, (), [0, 1])
    assert out[0].mean == 1 and out[1].mean == 1 and out[1].target == 3
    assert averages(np.array([], dtype=np.int64), 0, (), [1])[0].count == 0


def test_run_density_report():
    cls = TwistClass.enumerate(CurveFamily(1, -1))[0]
    rep = run_density(cls, 3000)
    doc = rep.to_json()
    assert doc["population"] == len(members(cls, 3000))
    assert sum(rep.counts_S.values()) == rep.population
    assert rep.lower_bound_violations == 0
    json.dumps(doc)
    assert rep.csv().splitlines()[0] == "statistic,d,count,freq,model"
    oracle = run_density(cls, 3000, ORACLE)
    assert oracle.counts_S == rep.counts_S and oracle.counts_phi == rep.counts_phi
    with pytest.raises(ValueError):
        run_density(cls, 10 ** 5, ORACLE)
    with pytest.raises(ValueError):
        run_density(cls, 100, "other")


def test_run_average_matches_report():
    cls = TwistClass.enumerate(CurveFamily(1, -3))[0]
    rep = run_density(cls, 5000, MATRIX, True)
    for xi in (1, 2):
        got = run_average(cls, 5000, xi, True)
        assert got.mean == rep.averages[xi].mean and got.count == rep.population
    high = run_average(cls, 5000, 5)
    assert high.target == moment(GenFnSpec(cls.r, cls.parameter), 5) and high.count > 0
    with pytest.raises(ValueError):
        run_average(cls, 5000, -1)
