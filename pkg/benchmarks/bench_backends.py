"""Wall-clock comparison of the numba and numpy kernels on the shipped workloads.

Usage: python benchmarks/bench_backends.py [--shots 1e6] [--repeat 3]

The first numba call per process compiles (or loads from cache) and is timed
separately as warm-up.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from qlbm.engine import presample_instructions, run_ensemble, run_hybrid
from qlbm.experiments import _as_int, boxcar_ic, double_vortex, linear_velocity, mape, uniform_ic
from qlbm.lattice import make_velocity_set, run_digital

D1Q3 = make_velocity_set("D1Q3")
D2Q9 = make_velocity_set("D2Q9")


def workloads():
    yield "D1Q3 N=32 boxcar T=1", boxcar_ic(32), 0.1, D1Q3, 1
    yield "D1Q3 N=32 boxcar T=50", boxcar_ic(32), 0.1, D1Q3, 50
    yield "D2Q9 32x16 vortex T=5", uniform_ic((32, 16), 1.0), double_vortex(32, 16), D2Q9, 5
    yield "D2Q9 32x16 vortex T=10", uniform_ic((32, 16), 1.0), double_vortex(32, 16), D2Q9, 10


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--shots", default="1e6")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    shots = _as_int("shots", args.shots)

    t0 = time.perf_counter()
    run_ensemble(boxcar_ic(8), 0.1, D1Q3, 2, 100, backend="numba")
    print(f"numba warm-up (compile or cache load): {time.perf_counter() - t0:.2f}s\n")

    print(f"{'workload':28s} {'numpy s':>9s} {'numba s':>9s} {'speedup':>8s} {'MAPE np':>8s} {'MAPE nb':>8s}")
    for name, rho0, u, vs, steps in workloads():
        ref = run_digital(rho0, u, vs, steps)
        t_np, e_np = best_of(lambda: run_ensemble(rho0, u, vs, steps, shots, 0, backend="numpy"), args.repeat)
        t_nb, e_nb = best_of(lambda: run_ensemble(rho0, u, vs, steps, shots, 0, backend="numba"), args.repeat)
        print(
            f"{name:28s} {t_np:9.3f} {t_nb:9.3f} {t_np / t_nb:8.1f} "
            f"{mape(ref, e_np.density):8.3f} {mape(ref, e_nb.density):8.3f}"
        )

    rho0, u = uniform_ic(8, 0.1), linear_velocity(8)
    instr = presample_instructions(D1Q3, 10, shots, np.random.default_rng(0))
    ref = run_digital(rho0, u, D1Q3, 10)
    run_hybrid(rho0, u, D1Q3, presample_instructions(D1Q3, 2, 10, np.random.default_rng(0)), backend="numba")
    t_np, e_np = best_of(lambda: run_hybrid(rho0, u, D1Q3, instr, 0, backend="numpy"), args.repeat)
    t_nb, e_nb = best_of(lambda: run_hybrid(rho0, u, D1Q3, instr, 0, backend="numba"), args.repeat)
    print(
        f"{'hybrid D1Q3 N=8 T=10':28s} {t_np:9.3f} {t_nb:9.3f} {t_np / t_nb:8.1f} "
        f"{mape(ref, e_np.density):8.3f} {mape(ref, e_nb.density):8.3f}"
    )


if __name__ == "__main__":
    main()
