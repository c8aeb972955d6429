#!/usr/bin/env python3
"""Smoke test for the mtflow_py extension module.

Builds nothing itself: run `cargo build -p mtflow-py --release` first, then
`python3 python/smoke_test.py`. The script locates the compiled cdylib,
exposes it under the importable name, and drives a miniature end-to-end
session: grid calculus sanity, a short volume-constrained flow, one bubble
analysis on a synthetic concentration profile, and a shooting cross-check.
"""

import json
import math
import os
import shutil
import sys
import tempfile

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def import_module():
    candidates = [
        os.path.join(REPO, "target", "release", "libmtflow_py.so"),
        os.path.join(REPO, "target", "debug", "libmtflow_py.so"),
    ]
    lib = next((c for c in candidates if os.path.exists(c)), None)
    if lib is None:
        sys.exit("build the extension first: cargo build -p mtflow-py --release")
    stage = tempfile.mkdtemp(prefix="mtflow-py-")
    shutil.copy(lib, os.path.join(stage, "mtflow_py.so"))
    sys.path.insert(0, stage)
    import mtflow_py

    return mtflow_py


checks = []


def check(name, ok, detail=""):
    checks.append((name, bool(ok)))
    print(f"{'ok  ' if ok else 'FAIL'} {name} {detail}")


def main():
    mt = import_module()

    # grid calculus
    g = mt.Grid.radial(1.0, 512)
    check("radial grid area", abs(g.area - math.pi) / math.pi < 1e-2, f"area={g.area:.6f}")

    one = mt.Field.from_values(g, [1.0] * g.node_count)
    check("integrate(1) = pi", abs(mt.integrate(one) - math.pi) / math.pi < 1e-2)

    para = mt.Field.from_values(
        g, [1.0 - x * x for (x, _) in g.coords()], zero_boundary=False
    )
    lap = mt.laplacian(para)
    interior = lap.values()[1:-1]
    check("laplacian(1-r^2) = -4", max(abs(v + 4.0) for v in interior) < 1e-8)

    m = mt.moser_function(g, math.exp(-1.0), 1.0)
    d = mt.dirichlet_energy(m)
    check("moser unit energy", abs(d - 1.0) < 0.02, f"D={d:.5f}")

    e = mt.mt_energy(m)
    alpha, w = mt.normalize_alpha(m, 2.0 * e)
    check("normalize_alpha doubles E", abs(mt.mt_energy(w) - 2.0 * e) <= 1e-8 * 2.0 * e, f"alpha={alpha:.4f}")

    lhs, rhs, holds = mt.check_lower_bound(m)
    check("lower bound (mass >= E/2)", holds, f"{lhs:.4f} >= {rhs:.4f}")

    # a short volume-constrained flow: conservation and dissipation
    seed = m.scaled(0.8)
    state = mt.FlowState.new(seed, "volume", None, 1e-3)
    rows, report = state.run(2.0)
    report = json.loads(report)
    E = [r[1] for r in rows]
    D = [r[2] for r in rows]
    lam = [r[3] for r in rows]
    check("flow ran", len(rows) > 10, f"steps={len(rows) - 1}, stop={report['reason']}")
    check("E conserved", max(abs(x - E[0]) / E[0] for x in E) <= 1e-8)
    check("D non-increasing", all(D[i + 1] <= D[i] + 1e-8 for i in range(len(D) - 1)))
    check("lambda positive", all(x > 0 for x in lam[1:]))

    # bubble analysis of a synthetic exact concentration profile
    g2 = mt.Grid.radial(2.0, 4096)
    u_peak, r_k = 6.0, 0.05
    lam_b = 4.0 / (r_k * r_k * u_peak * u_peak * math.exp(u_peak * u_peak))
    vals = [u_peak + mt.liouville_profile(x / r_k, y / r_k) / u_peak for (x, y) in g2.coords()]
    bubble = mt.Field.from_values(g2, vals)
    reports = json.loads(mt.analyze_snapshot(bubble, lam_b))
    top = reports[0]
    check("bubble level = 1", top["level"] == 1, f"local={top['local_energy']:.4f}")
    check("bubble profile matches eta0", top["profile_err"] < 0.05, f"err={top['profile_err']:.4f}")
    check(
        "local energy near 4pi quantum",
        abs(top["local_energy"] - mt.QUANTUM) < 0.1 * mt.QUANTUM,
    )

    # snapshot round trip
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "snap.csv")
        m.save(path)
        back = mt.Field.load(path)
        check("snapshot round trip", back.values() == m.values())

    # stationary oracle: lambda_volume collapses to lambda at a solution
    g3 = mt.Grid.radial(1.0, 1024)
    u_inf = mt.stationary_field(g3, 1.0)
    check("stationary lambda collapse", abs(mt.lambda_volume(u_inf) - 1.0) < 1e-3)

    check("preset list", mt.presets() == [
        "subcritical-ball",
        "quantize-radial",
        "quantize-cartesian",
        "coron-annulus-sweep",
        "dirichlet-mode-ball",
    ])

    failed = [n for n, ok in checks if not ok]
    print(f"\n{len(checks)} checks, {len(failed)} failed")
    if failed:
        sys.exit(1)


if __name__ == "__main__":
    main()
