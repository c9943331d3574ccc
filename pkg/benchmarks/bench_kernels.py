"""Compare the numba-compiled kernels with the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each path is timed in its own interpreter (the fallback is selected with
GRU_ATTITUDE_DISABLE_NUMBA=1), so nested kernels never mix the two. Numba
compilation happens before timing and is cached on disk afterwards.
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np


def cases():
    from gru_attitude import gru, kernels

    rng = np.random.default_rng(0)
    inertia = np.diag([120.0, 100.0, 90.0])
    inv = np.linalg.inv(inertia)
    w = np.array([1e-3, -2e-3, 5e-4])
    torque = np.array([1e-4, 0.0, -5e-5])
    net = gru.init_network(3, 128, 3, 3, rng)  # default forecaster size
    packed = net.packed()
    window = rng.standard_normal((5, 3))
    return {
        "propagate (1 s, 10 RK4 substeps)": (kernels.propagate, (np.eye(3), w, inertia, inv, torque, 1.0, 10), 200),
        "gru_forward_window (3x128, w=5)": (kernels.gru_forward_window, (window, *packed), 50),
        "gru_rollout (3x128, 100 steps)": (kernels.gru_rollout, (window, 100, *packed), 2),
    }


def measure(repeat):
    out = {}
    for name, (fn, args, number) in cases().items():
        fn(*args)  # compile / warm up
        out[name] = min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number
    return out


def run_child(disable, repeat):
    from gru_attitude._accel import ENV_FLAG

    env = dict(os.environ)
    env.pop(ENV_FLAG, None)
    if disable:
        env[ENV_FLAG] = "1"
    cmd = [sys.executable, __file__, "--child", "--repeat", str(repeat)]
    return json.loads(subprocess.run(cmd, env=env, capture_output=True, text=True, check=True).stdout)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        print(json.dumps(measure(args.repeat)))
        return
    fast, slow = run_child(False, args.repeat), run_child(True, args.repeat)
    print(f"{'kernel':36s} {'numba [us]':>12s} {'numpy [us]':>12s} {'speedup':>8s}")
    for name in fast:
        print(f"{name:36s} {fast[name] * 1e6:12.1f} {slow[name] * 1e6:12.1f} {slow[name] / fast[name]:8.1f}x")


if __name__ == "__main__":
    main()
