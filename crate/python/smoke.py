"""Smoke test for the `kfsp` extension module.

Build first:

    cargo build --release -p kfsp-python --features extension-module

then run `python3 python/smoke.py`. If `kfsp` is not importable, the freshly
built library under target/release is copied to a temp dir and loaded.
"""

import importlib
import math
import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FIXTURE = os.path.join(ROOT, "crates", "core", "fixtures", "example1.json")


def import_kfsp():
    try:
        return importlib.import_module("kfsp")
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = os.path.join(ROOT, "target", profile, "libkfsp.so")
        if os.path.exists(lib):
            tmp = tempfile.mkdtemp()
            shutil.copy(lib, os.path.join(tmp, "kfsp.so"))
            sys.path.insert(0, tmp)
            return importlib.import_module("kfsp")
    sys.exit("kfsp extension not found; build crates/python first")


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    kfsp = import_kfsp()

    inst = kfsp.Instance.load(FIXTURE)
    assert inst.n == 4 and inst.input_node == 1
    assert inst.distances_from_input() == [1, 0, 1, 2]

    r = kfsp.place(inst)
    assert r["chosen"] == [0, 1, 0, 0], r
    assert close(r["trace_priori"], 1.0) and r["zeta"] == 0

    prior, post = kfsp.closed_form(inst, "0001")
    assert close(prior[0][0], 5.5125) and close(sum(post[i][i] for i in range(4)), 5.77)
    prior_dare, _ = kfsp.steady_covariance(inst, [0, 0, 0, 1])
    assert max(abs(x - y) for ra, rb in zip(prior, prior_dare) for x, y in zip(ra, rb)) < 1e-6

    a = kfsp.attack(inst, "1111")
    assert a["trace_priori"] >= r["trace_priori"]

    res = kfsp.resilient(inst)
    brute = kfsp.brute_force(inst, "rgkfsp")
    assert res["trace_priori"] == brute["objective"] or close(res["trace_priori"], brute["objective"], 1e-8)

    noisy = inst.with_sensor_noise(0.01)
    b = kfsp.noise_bound(noisy, "0001")
    assert b["trace_e"] > 0 and b["bound_priori"] > 5.77
    worst, _ = kfsp.steady_covariance(noisy, "0001")
    assert sum(worst[i][i] for i in range(4)) <= b["bound_priori"] + 1e-8

    assert kfsp.knapsack([10, 12, 10], [2, 3, 2], 5)[1] == 22

    gen = kfsp.Instance.normal(seed=7)
    assert kfsp.Instance.from_json(gen.to_json()).to_json() == gen.to_json()

    rows = kfsp.gap_rows("gkfsp", 2, [0.0, 0.1], seed=3, n=6, edge_count=9)
    for seed, s, opt, alg, bound, subopt in rows:
        if s == 0.0:
            assert close(alg, opt, 1e-8)
        if math.isfinite(bound):
            assert alg - opt <= bound + 1e-8

    try:
        kfsp.attack(inst, "01")
    except ValueError:
        pass
    else:
        raise AssertionError("bad placement length accepted")

    print("kfsp smoke test: ok")


if __name__ == "__main__":
    main()
