#!/usr/bin/env python3
"""Smoke test for the cotrans_py extension module.

Builds nothing itself: expects the cdylib under target/{release,debug}.
Run from the repository root:

    cargo build -p cotrans-py --release
    python3 python/smoke_test.py
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def import_extension():
    for profile in ("release", "debug"):
        lib = REPO / "target" / profile / "libcotrans_py.so"
        if lib.exists():
            stage = Path(tempfile.mkdtemp(prefix="cotrans_py_"))
            shutil.copy(lib, stage / "cotrans_py.so")
            sys.path.insert(0, str(stage))
            import cotrans_py  # noqa: E402

            return cotrans_py
    sys.exit("build the extension first: cargo build -p cotrans-py --release")


def minjerk(t, T):
    s = min(max(t / T, 0.0), 1.0)
    return 10 * s**3 - 15 * s**4 + 6 * s**5


def main():
    ct = import_extension()

    # quaternion maps: round trip and product sanity
    q = ct.quat_exp([0.3, -0.2, 0.9])
    assert abs(sum(c * c for c in q) - 1.0) < 1e-12
    v = ct.quat_log(q)
    assert max(abs(a - b) for a, b in zip(v, [0.3, -0.2, 0.9])) < 1e-12
    ident = ct.quat_product(q, ct.quat_conjugate(q))
    assert abs(ident[0] - 1.0) < 1e-12 and max(abs(c) for c in ident[1:]) < 1e-12
    print("quaternion maps: ok")

    # synthetic minimum-jerk demonstration: line + fixed-axis rotation
    T, dt = 4.7, 0.002
    p0, pg = [0.0, -0.3, 0.15], [0.4, 0.25, 0.6]
    axis = [0.1, 0.2, math.pi / 3]
    ts, ps, qs = [], [], []
    n = int(round(T / dt)) + 1
    for k in range(n):
        t = k * dt
        s = minjerk(t, T)
        ts.append(t)
        ps.append([a + s * (b - a) for a, b in zip(p0, pg)])
        qs.append(ct.quat_exp([s * c for c in axis]))
    pos_model, orient_model = ct.train(ts, ps, qs, n_kernels=30)
    assert pos_model.kind == "position" and orient_model.kind == "orientation"
    assert pos_model.n_kernels == 30
    print("training: ok")

    # model JSON round trip
    restored = ct.DmpModel.from_json(pos_model.to_json())
    assert restored.kind == "position"

    # rollout to a shifted target converges
    new_goal = [0.55, 0.1, 0.45]
    new_rot = ct.quat_exp([0.0, 0.0, 0.8])
    traj = ct.rollout(
        pos_model, orient_model, p0, [1.0, 0.0, 0.0, 0.0], new_goal, new_rot,
        tau_p=4.7, tau_o=4.7,
    )
    t_end, p_end, q_end, v_end, w_end = traj[-1]
    err = math.dist(p_end, new_goal)
    assert err < 1e-3, f"rollout end {err} m from the target"
    dot = abs(sum(a * b for a, b in zip(q_end, new_rot)))
    assert 2 * math.acos(min(dot, 1.0)) < math.radians(0.5)
    print(f"rollout: ok (end error {err:.2e} m at t = {t_end:.2f} s)")

    # paired closed-loop episodes: the estimating scheme needs far less work
    sc = ct.random_scenarios(7, 1)[0]
    ekf = ct.run_episode(pos_model, orient_model, sc, "dmp_ekf")
    adm = ct.run_episode(pos_model, orient_model, sc, "admittance")
    assert ekf["settled"] and adm["settled"]
    assert ekf["max_innovation_residual"] < 1e-8
    assert ekf["est_err_pos_m"] < 0.02
    assert ekf["est_err_ori_rad"] < math.radians(5)
    ratio = ekf["work_J"] / adm["work_J"]
    assert ratio < 1.0, f"work ratio {ratio}"
    print(
        f"episode {sc.id}: work {ekf['work_J']:.2f} J vs admittance "
        f"{adm['work_J']:.2f} J (ratio {ratio:.2f}), "
        f"target error {1e3 * ekf['est_err_pos_m']:.1f} mm"
    )
    print("smoke test passed")


if __name__ == "__main__":
    main()
