import json

import pytest

from selmerlab.cli import SelmerCache, dumps, main, run_pool, tag
from selmerlab.descent import CurveFamily, TwistClass


@pytest.fixture(autouse=True)
def _cache_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("SELMERLAB_CACHE", str(tmp_path / "cache"))


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None), out


def test_classify(capsys):
    code, doc, _ = run(capsys, "classify", "--e1", "9", "--e2", "25")
    assert code == 0
    assert doc["schema"] == "selmerlab.classify/1"
    assert doc["type"] == "C" and doc["d"] == [-144, 225, 400] and doc["squares"] == [False, True, True]


def test_param_example(capsys):
    code, doc, _ = run(capsys, "param", "--e1", "1", "--e2", "-3", "--sigma", "-1,2,3", "--q", "-1", "--s", "0,1,0")
    assert code == 0
    (cls,) = doc["classes"]
    assert cls["parameter"] == [2] and cls["t_phi"][1:] == ["-inf", "-inf"]


def test_param_auto_lists_every_class(capsys):
    code, doc, _ = run(capsys, "param", "--e1", "1", "--e2", "-1", "--class-spec", "auto")
    assert code == 0 and len(doc["classes"]) == len(TwistClass.enumerate(CurveFamily(1, -1)))


def test_moments_exact(capsys):
    code, doc, _ = run(capsys, "moments", "--type", "A", "--xi", "2", "--exact")
    assert code == 0 and doc["moment"] == {"exact": "15"} and doc["checks"]["gen_fn_normalized"]
    code, doc, _ = run(capsys, "moments", "--type", "B", "--t1", "2", "--xi", "1")
    assert doc["moment"] == {"float": 7.0}


def test_markov_eq_both_routes(capsys, tmp_path):
    path = tmp_path / "table.csv"
    code, doc, _ = run(capsys, "markov-eq", "--type", "B", "--t1", "2", "--csv", str(path))
    assert code == 0 and doc["tv"]["float"] <= 1e-9 and doc["checks"] == {"tv_within": True}
    assert path.read_text().startswith("m,m1,m2,m_new")
    code, doc, _ = run(capsys, "markov-eq", "--type", "A", "--closed")
    assert code == 0 and "power" not in doc and "checks" not in doc


def test_selmer_routes_agree(capsys):
    code, doc, _ = run(capsys, "selmer", "--e1", "1", "--e2", "-1", "--m", "-105", "--oracle")
    assert code == 0
    assert doc["checks"] == {"matrix_equals_gram": True, "oracle_equals_matrix": True}


def test_model_sim_and_drift(capsys, tmp_path):
    path = tmp_path / "h.csv"
    code, doc, _ = run(capsys, "model-sim", "--type", "B", "--t1", "0", "--k", "12", "--samples", "20000",
                       "--seed", "3", "--csv", str(path))
    assert code == 0 and doc["mean_2m"]["target"] == {"exact": "4"}
    assert path.read_text().splitlines()[0] == "m,m1,m2,count,freq,stderr"
    code, doc, _ = run(capsys, "drift", "--type", "A", "--xi", "1")
    assert code == 0 and doc["checks"]["drift_below_one"]


def test_drift_failure_exit_code(capsys):
    # one step of the type B chain does not contract along the diagonal
    code, doc, _ = run(capsys, "drift", "--type", "B", "--t1", "0", "--xi", "1")
    assert code == 1 and doc["checks"] == {"drift_below_one": False}
    code, doc, _ = run(capsys, "drift", "--type", "B", "--t1", "0", "--xi", "1", "--steps", "2")
    assert code == 0


def test_chain_validate_model(capsys):
    code, doc, _ = run(capsys, "chain-validate", "--source", "model", "--type", "C", "--t1", "0", "--t2", "0",
                       "--k", "6", "--samples", "20000")
    assert code == 0 and doc["forbidden"] == 0


def test_chain_validate_tight_threshold_fails(capsys):
    code, doc, _ = run(capsys, "chain-validate", "--source", "model", "--type", "A", "--k", "6",
                       "--samples", "500", "--max-dev", "0")
    assert code == 1 and doc["checks"]["joint_within"] is False


@pytest.mark.parametrize("argv", [
    ["classify", "--e1", "3", "--e2", "3"],
    ["moments", "--type", "B", "--xi", "1"],
    ["moments", "--type", "B", "--t1", "1", "--r", "0", "--xi", "1"],
    ["model-sim", "--type", "B", "--t1", "-2", "--k", "0", "--samples", "10"],
    ["drift", "--type", "A", "--xi", "0"],
    ["selmer", "--e1", "1", "--e2", "-1", "--m", "0"],
    ["chain-validate", "--source", "model", "--k", "3", "--samples", "10"],
    ["nosuchcommand"],
    ["density", "--e1", "1"],
])
def test_usage_errors(capsys, argv):
    assert main(argv) == 2


def test_density_is_reproducible(capsys, tmp_path):
    argv = ["density", "--e1", "1", "--e2", "-1", "--sigma", "-1,2", "--q", "1", "--s", "0,1", "--max-n", "4000",
            "--xi", "1"]
    code, doc, first = run(capsys, *argv)
    assert code == 0 and doc["checks"] == {"lower_bound_holds": True}
    _, _, second = run(capsys, *argv)
    assert first == second
    path = tmp_path / "d.csv"
    code, oracle, _ = run(capsys, *argv, "--oracle", "--csv", str(path))
    assert code == 0
    assert oracle["reports"][0]["counts_S"] == doc["reports"][0]["counts_S"]
    assert path.read_text().splitlines()[0] == "q,s,statistic,d,count,freq,model"


def test_cache_round_trip_and_corruption(tmp_path):
    cache = SelmerCache(tmp_path)
    cls = TwistClass.enumerate(CurveFamily(1, -1))[0]
    cache.append(cls, 5, {"dims": {"sel2": 2}})
    cache.append(cls, 13, {"dims": {"sel2": 4}})
    assert cache.load(cls) == {5: {"dims": {"sel2": 2}}, 13: {"dims": {"sel2": 4}}}
    path = next(tmp_path.glob("*.jsonl"))
    lines = path.read_text().splitlines()
    lines[0] = lines[0].replace('"sel2": 2', '"sel2": 3')
    path.write_text("\n".join(lines + ["not json"]) + "\n")
    fresh = SelmerCache(tmp_path)
    assert fresh.load(cls) == {13: {"dims": {"sel2": 4}}}
    assert fresh.corrupt == 2


def test_oracle_density_uses_cache(capsys, tmp_path):
    argv = ["density", "--e1", "1", "--e2", "-1", "--sigma", "-1,2", "--q", "1", "--s", "0,0", "--max-n", "800",
            "--oracle"]
    _, first, _ = run(capsys, *argv)
    files = list((tmp_path / "cache").glob("*.jsonl"))
    assert len(files) == 1
    size = files[0].stat().st_size
    _, second, _ = run(capsys, *argv)
    assert first == second and files[0].stat().st_size == size


def test_tag_and_dumps():
    from fractions import Fraction

    assert tag({"a": Fraction(1, 3), "b": 0.5, "c": 2}) == {"a": {"exact": "1/3"}, "b": {"float": 0.5}, "c": 2}
    assert dumps({"b": 1, "a": [Fraction(1)]}) == '{"a":[{"exact":"1"}],"b":1}'


def _square(x):
    return x * x


def _boom(x):
    if x == 3:
        raise RuntimeError("boom")
    return x


def test_run_pool():
    assert run_pool(_square, [1, 2, 3], 2) == [1, 4, 9]
    with pytest.raises(RuntimeError):
        run_pool(_boom, list(range(6)), 2)
