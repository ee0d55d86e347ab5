"""Benchmark the compiled sampling kernel against the pure-Python backend.

Both backends consume the same PCG64 bitstream, so alongside the
timings this script asserts that their outputs are bit-identical on
the benchmark workload.

Run from a checkout with the package installed::

    python3 benchmarks/bench_kernels.py --users 10000 --reps 50
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from caprisk import kernels
from caprisk.distributions import CompoundSpec, LogNormal, NegBinomial, kernel_codes


def time_backend(backend: str, users: int, reps: int, codes, seed: int) -> tuple[float, np.ndarray]:
    impl = kernels._IMPLS[backend]
    fk, fa, fb, sk, sa, sb = codes
    bit_generator = np.random.PCG64(seed)
    last = None
    start = time.perf_counter()
    for _ in range(reps):
        last = impl.compound_aggregates(bit_generator, users, fk, fa, fb, sk, sa, sb)
    elapsed = time.perf_counter() - start
    return elapsed / reps, last


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--users", type=int, default=10000, help="cohort size per replication")
    parser.add_argument("--reps", type=int, default=50, help="replications to average over")
    parser.add_argument("--seed", type=int, default=20260515)
    args = parser.parse_args()

    spec = CompoundSpec(NegBinomial(1.0, 0.07), LogNormal(-0.311, 1.5))
    codes = kernel_codes(spec)
    backends = kernels.available_backends()
    print(f"workload: NegBinomial-LogNormal, {args.users} users x {args.reps} replications")
    print(f"backends: {', '.join(backends)} (active: {kernels.active_backend()})")

    results = {}
    for backend in backends:
        per_rep, last = time_backend(backend, args.users, args.reps, codes, args.seed)
        results[backend] = (per_rep, last)
        print(f"  {backend:>8}: {per_rep * 1e3:8.3f} ms/replication")

    if "compiled" in results and "python" in results:
        ratio = results["python"][0] / results["compiled"][0]
        print(f"speedup: compiled is {ratio:.2f}x the python backend")
        if np.array_equal(results["python"][1], results["compiled"][1]):
            print("outputs: bit-identical across backends")
        else:
            raise SystemExit("outputs differ between backends; kernel parity is broken")


if __name__ == "__main__":
    main()
