"""Compare the numba and numpy block kernels.

Times each kernel on the same inputs through both backend modules, then
runs an end-to-end fit plus bias correction in two subprocesses, one with
``MVNBIAS_DISABLE_JIT=1``.

    python3 benchmarks/bench_kernels.py [--n 20000] [--repeat 7]
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from mvnbias.kernels import numba_backend, numpy_backend

END_TO_END = """
import time
import numpy as np
from mvnbias import BACKEND, bias_vector, fit, simple_eiv
from mvnbias.simulation import simulate_dataset
spec = simple_eiv(57.0)
theta = np.array([67.0, 0.42, 70.0, 247.0, 43.0])
data = simulate_dataset(spec, theta, {n}, np.random.default_rng(0))
fit(spec, data)  # compile / warm up
best = float("inf")
for _ in range({repeat}):
    t0 = time.perf_counter()
    res = fit(spec, data)
    bias_vector(spec, res.theta_hat, data)
    best = min(best, time.perf_counter() - t0)
print(BACKEND, best)
"""


def inputs(n, q=2, p=5, seed=0):
    rng = np.random.default_rng(seed)
    L = rng.normal(size=(n, q, q))
    sigma = L @ np.swapaxes(L, 1, 2) + q * np.eye(q)
    C = rng.normal(size=(p, n, q, q))
    C2 = rng.normal(size=(p, p, n, q, q))
    return dict(
        sigma=sigma,
        resid=rng.normal(size=(n, q)),
        a=rng.normal(size=(p, n, q)),
        C=C + np.swapaxes(C, -1, -2),
        a2=rng.normal(size=(p, p, n, q)),
        C2=C2 + np.swapaxes(C2, -1, -2),
        vc=rng.normal(size=(n, q, q)),
        kinv=np.eye(p),
    )


def calls(mod, x, sinv, logdet):
    return {
        "factor": lambda: mod.factor(x["sigma"]),
        "loglik": lambda: mod.loglik(x["resid"], sinv, logdet),
        "contract": lambda: mod.contract(sinv, x["a"], x["C"], x["resid"], x["vc"]),
        "information": lambda: mod.information(sinv, x["a"], x["C"]),
        "xi_blocks": lambda: mod.xi_blocks(x["a"], x["a2"], x["C2"], x["kinv"]),
    }


def best_of(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=7)
    args = ap.parse_args()
    if numba_backend is None:
        sys.exit("numba is not installed")

    x = inputs(args.n)
    sinv, logdet, _ = numpy_backend.factor(x["sigma"])
    fast = calls(numba_backend, x, sinv, logdet)
    slow = calls(numpy_backend, x, sinv, logdet)
    print(f"kernels, n={args.n}, q=2, p=5 (best of {args.repeat})")
    print(f"{'kernel':<12} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for name in fast:
        t_np = best_of(slow[name], args.repeat)
        t_nb = best_of(fast[name], args.repeat)
        print(f"{name:<12} {1e3 * t_np:>10.3f} {1e3 * t_nb:>10.3f} {t_np / t_nb:>8.1f}")

    print(f"\nfit + bias, simple EIV model, n={args.n}")
    code = END_TO_END.format(n=args.n, repeat=args.repeat)
    for flag in ("0", "1"):
        env = dict(os.environ, MVNBIAS_DISABLE_JIT=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        backend, seconds = out.stdout.split()
        print(f"{backend:<12} {1e3 * float(seconds):>10.3f} ms")


if __name__ == "__main__":
    main()
