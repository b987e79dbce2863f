"""Smoke test for the gssbo_py extension module.

Build and install the wheel first:

    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/gssbo_py-*.whl
    python python/smoke_test.py
"""

import math
import tempfile

import gssbo_py


def main():
    obj = gssbo_py.Objective("hartmann6")
    assert obj.dim == 6
    x_star = [0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573]
    assert abs(obj(x_star) - obj.optimum) < 1e-4
    assert obj.regret([0.5] * 6) > 0.0

    pts = [[i / 9.0] for i in range(10)]
    ys = [math.sin(6.0 * p[0]) for p in pts]
    gp = gssbo_py.GpModel(pts, ys, lengthscale=0.2, noise=1e-4)
    mean, var = gp.posterior([pts[3][0]])
    assert abs(mean - ys[3]) < 1e-2 and 0.0 <= var < 1e-3
    sel = gp.select_subset(4)
    assert sel["indices"][0] == 9 and len(set(sel["indices"])) == 4

    record = gssbo_py.run(
        {
            "objective": "levy_2",
            "strategy": "gssbo",
            "n0": 5,
            "budget": 25,
            "fixed_m": 8,
            "seed": 1,
            "acquisition": {"n_candidates": 128},
        }
    )
    rows = record["rows"]
    assert len(rows) == 25 and record["switch_t"] == 9
    assert all(r["cum_regret"] >= 0.0 for r in rows)

    with tempfile.TemporaryDirectory() as out:
        summary = gssbo_py.run_grid(
            {
                "objectives": ["levy_2"],
                "strategies": ["gssbo", "rssbo"],
                "seeds": [0],
                "run": {"n0": 5, "budget": 15, "fixed_m": 6, "acquisition": {"n_candidates": 64}},
            },
            out,
        )
        assert len(summary["rows"]) == 2 and not summary["failures"]

    report = gssbo_py.nystrom_analysis({"n": 30, "m": 6})
    assert len(report["greedy"]["selected"]) == 6

    assert abs(gssbo_py.information_gain([1.0], 1.0) - 0.5 * math.log(2.0)) < 1e-12

    try:
        gssbo_py.Objective("nope")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown objective accepted")

    print("gssbo_py smoke test passed")


if __name__ == "__main__":
    main()
