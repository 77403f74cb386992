"""Compare the compiled hashing kernels with the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import os
import timeit

from managedcoin import _kernels_py

try:
    from managedcoin import _kernels
except ImportError:
    _kernels = None

HEADER = os.urandom(108)
EASY = ((1 << 250) - 1).to_bytes(32, "big")
IMPOSSIBLE = bytes(32)  # no hash meets it, so every nonce in the range is tried
LEAVES = [os.urandom(32) for _ in range(1000)]
TX = os.urandom(250)


def workloads(impl):
    return {
        "sha256d 250 B x1000": lambda: [impl.sha256d(TX) for _ in range(1000)],
        "merkle 1000 leaves": lambda: impl.merkle_root(LEAVES),
        "scan_nonce 20k (miss)": lambda: impl.scan_nonce(HEADER, IMPOSSIBLE, 0, 20_000),
        "scan_nonce 2^-6 target": lambda: impl.scan_nonce(HEADER, EASY, 0, 1 << 20),
    }


def best_of(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation` first")
        return
    fast, slow = workloads(_kernels), workloads(_kernels_py)
    print(f"{'workload':<26}{'cython ms':>11}{'python ms':>11}{'speedup':>9}")
    for name in fast:
        c = best_of(fast[name], args.repeat) * 1e3
        p = best_of(slow[name], args.repeat) * 1e3
        print(f"{name:<26}{c:>11.3f}{p:>11.3f}{p / c:>8.1f}x")


if __name__ == "__main__":
    main()
