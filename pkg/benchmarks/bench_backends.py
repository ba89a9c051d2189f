"""Time the numba kernels against the pure-numpy fallback.

Each backend runs in its own interpreter (the choice is made at import time
from FKMC_BACKEND).  Besides timings the script prints a digest of every
kernel's output, so bit-identical backends show matching digests.

    python benchmarks/bench_backends.py [--repeat 3]
"""

import argparse
import hashlib
import json
import os
import subprocess
import sys
import time

WORKER = r"""
import hashlib, json, sys, time
import numpy as np
from fkmc import kernels

repeat = int(sys.argv[1])
k0, k1 = 12345, 678
rng = np.random.default_rng(0)

def best(fn):
    fn()  # warm-up (also triggers compilation)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out

def digest(arr):
    return hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()[:16]

ids = np.arange(100_000, dtype=np.uint64)
small = np.arange(10_000, dtype=np.uint64)
dts = np.full(500, 0.002)
a = np.array([[1.0]])
mu = np.array([0.0])
x0 = np.zeros((1, small.shape[0]))
mats = rng.standard_normal((100_000, 3, 3))
spd = mats @ mats.transpose(0, 2, 1) + 0.1 * np.eye(3)
vals = rng.standard_normal(10_000_000)
n = 200_000
lower = np.full(n, -1.0)
diag = np.full(n, 2.5)
upper = np.full(n, -1.0)
rhs = rng.standard_normal(n)

cases = {
    "normals 100k x 20": (lambda: kernels.normals(k0, k1, 0, 0, ids, 0, 20), 2_000_000),
    "trace_constant 10k x 500": (
        lambda: kernels.trace_constant(x0, small, dts, mu, a, k0, k1, 0, 0, 1), 5_000_000),
    "cholesky_batch 100k 3x3": (lambda: kernels.cholesky_batch(spd, 1e-10)[0], 100_000),
    "kahan_sum 1e7": (lambda: np.array([kernels.kahan_sum(vals)]), 10_000_000),
    "thomas 2e5": (lambda: kernels.thomas(lower, diag, upper, rhs), n),
}
out = {}
for name, (fn, units) in cases.items():
    t, res = best(fn)
    out[name] = {"seconds": t, "ns_per_unit": 1e9 * t / units, "digest": digest(res)}
print(json.dumps({"backend": kernels.BACKEND, "cases": out}))
"""


def run_backend(name, repeat):
    env = dict(os.environ, FKMC_BACKEND=name)
    res = subprocess.run([sys.executable, "-c", WORKER, str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    results = {b: run_backend(b, args.repeat) for b in ("numba", "numpy")}
    nb, np_ = results["numba"]["cases"], results["numpy"]["cases"]
    print(f"{'kernel':28s} {'numba ns/unit':>14s} {'numpy ns/unit':>14s} {'speed-up':>9s}  same output")
    for name in nb:
        a, b = nb[name], np_[name]
        same = a["digest"] == b["digest"]
        print(f"{name:28s} {a['ns_per_unit']:14.2f} {b['ns_per_unit']:14.2f} "
              f"{b['seconds'] / a['seconds']:9.2f}  {'yes' if same else 'no'}")


if __name__ == "__main__":
    main()
