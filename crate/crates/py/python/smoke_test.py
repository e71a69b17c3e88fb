"""Smoke test for the gus_py extension module.

Run after `maturin develop` in crates/py, or with the built shared library
copied to gus_py.so somewhere on PYTHONPATH.
"""

import math
import tempfile
from pathlib import Path

import gus_py


def check_algebra():
    l = gus_py.Gus.bernoulli(0.1, "l")
    o = gus_py.Gus.wor(1000, 150000, "o")
    g = l.join(o)
    assert g.relations == ["l", "o"]
    assert math.isclose(g.a, 0.1 * 1000 / 150000)
    assert math.isclose(g.b(["l", "o"]), g.a)
    assert math.isclose(sum(g.c_table().values()), g.a)
    assert gus_py.Gus.from_json(g.to_json()) == g
    half = gus_py.Gus.bernoulli(0.5, "l")
    assert math.isclose(half.union(half).a, 0.75)
    assert math.isclose(half.compact(half).a, 0.25)


def check_run():
    with tempfile.TemporaryDirectory() as tmp:
        gus_py.generate(tmp, scale="l=200,o=50,c=10,p=20", seed=3)
        plan = gus_py.Plan.load(Path(tmp) / "query1.json")
        assert plan.relations() == ["lineitem", "orders"]
        report = plan.run(seed=4, explain=True)
        assert report["gus"] == json_gus(plan.gus())
        lo, hi = report["ciChebyshev"]
        assert lo <= report["estimate"] <= hi
        assert [s["rule"] for s in report["trace"]] == ["translate", "translate", "join"]
        assert report == gus_py.estimate(Path(tmp) / "query1.json", seed=4, explain=True)
        assert "estimate" in plan.run(seed=4, text=True)
        try:
            gus_py.Plan.parse("{}")
        except gus_py.GusError as err:
            print("rejected empty document:", err)
        else:
            raise AssertionError("empty document accepted")


def json_gus(g):
    import json

    return json.loads(g.to_json())


if __name__ == "__main__":
    check_algebra()
    check_run()
    print("gus_py smoke test passed")
