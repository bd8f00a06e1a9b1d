"""Compare the numba-compiled kernels with the plain numpy fallback.

Each backend runs in its own interpreter because the switch is read at import
time (GSCSIM_DISABLE_NUMBA). Usage:

    python benchmarks/bench_kernels.py [--repeat 5] [--tf 20]
"""
import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import json, sys, time
import numpy as np
from gscsim import apply_load_step, backend, load_bundled, simulate, SimOptions
from gscsim.tds import initialize
from gscsim import kernels

repeat, tf = int(sys.argv[1]), float(sys.argv[2])
case = load_bundled("wscc9_vsm")
ev = apply_load_step(case, 5, 0.5, 0.5, 1.0)
model, w0, _ = initialize(case)
opts = SimOptions(tf=tf)

t0 = time.perf_counter()
simulate(case, options=SimOptions(tf=0.05), init=(model, w0))
warm = time.perf_counter() - t0

sims = []
for _ in range(repeat):
    t0 = time.perf_counter()
    tr = simulate(case, event=ev, options=opts, init=(model, w0))
    sims.append(time.perf_counter() - t0)

n_eval = 2000
t0 = time.perf_counter()
for _ in range(n_eval):
    model.fj(w0)
fj = (time.perf_counter() - t0) / n_eval

print(json.dumps({"backend": backend(), "warmup_s": warm, "sim_best_s": min(sims),
                  "sim_median_s": float(np.median(sims)), "eval_fj_us": fj * 1e6,
                  "omega_final": tr.omega[-1].tolist(), "newton_iterations": tr.newton_iterations}))
"""


def run(disable, repeat, tf):
    env = dict(os.environ)
    env.pop("GSCSIM_DISABLE_NUMBA", None)
    if disable:
        env["GSCSIM_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", CHILD, str(repeat), str(tf)], env=env,
                         capture_output=True, text=True)
    if out.returncode:
        sys.exit(out.stderr)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--tf", type=float, default=20.0)
    args = ap.parse_args()

    res = [run(False, args.repeat, args.tf), run(True, max(1, args.repeat // 2), args.tf)]
    print(f"{'backend':8s} {'warmup[s]':>10s} {'sim best[s]':>12s} {'sim med[s]':>11s} {'eval_fj[us]':>12s}")
    for r in res:
        print(f"{r['backend']:8s} {r['warmup_s']:10.3f} {r['sim_best_s']:12.4f} "
              f"{r['sim_median_s']:11.4f} {r['eval_fj_us']:12.1f}")
    a, b = res
    drift = max(abs(x - y) for x, y in zip(a["omega_final"], b["omega_final"]))
    print(f"speedup (simulation): {b['sim_best_s'] / a['sim_best_s']:.1f}x")
    print(f"max |omega_f(numba) - omega_f(numpy)| = {drift:.2e}")


if __name__ == "__main__":
    main()
