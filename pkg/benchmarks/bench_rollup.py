"""Benchmark the compiled rollup kernel against the pure-Python fallback.

Usage: python benchmarks/bench_rollup.py [n_facts]
"""

import random
import sys
import time
from array import array

from spmdw.rollup import _kernel_py

try:
    from spmdw.rollup import _kernel_c
except ImportError:
    _kernel_c = None


def make_columns(n_facts: int, n_groups: int, seed: int = 1):
    rng = random.Random(seed)
    anc = array("i", (rng.randrange(-1, n_groups) for _ in range(n_facts)))
    values = array("d", (rng.uniform(0, 1000) for _ in range(n_facts)))
    statuses = array("b", (rng.randrange(-1, 5) for _ in range(n_facts)))
    return anc, values, statuses


def timeit(fn, repeat: int = 5) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    n_facts = int(sys.argv[1]) if len(sys.argv) > 1 else 500_000
    n_groups = 256
    anc, values, statuses = make_columns(n_facts, n_groups)

    kernels = [("python", _kernel_py)]
    if _kernel_c is not None:
        kernels.append(("compiled", _kernel_c))

    print(f"{n_facts} facts, {n_groups} groups, min_rank=1")
    print(f"{'backend':<10} {'rollup_filtered':>16} {'rollup_grouped':>16}")
    timings = {}
    for name, mod in kernels:
        t_filtered = timeit(lambda: mod.rollup_filtered(anc, values, statuses, 7, 1))
        t_grouped = timeit(lambda: mod.rollup_grouped(anc, values, statuses, n_groups, 1))
        timings[name] = (t_filtered, t_grouped)
        print(f"{name:<10} {t_filtered * 1e3:>13.2f} ms {t_grouped * 1e3:>13.2f} ms")

    if "compiled" in timings:
        f_speedup = timings["python"][0] / timings["compiled"][0]
        g_speedup = timings["python"][1] / timings["compiled"][1]
        print(f"speedup    {f_speedup:>14.1f}x {g_speedup:>15.1f}x")
        # same inputs, same outputs, bit for bit
        a = _kernel_py.rollup_grouped(anc, values, statuses, n_groups, 1)
        b = _kernel_c.rollup_grouped(anc, values, statuses, n_groups, 1)
        assert a == b, "backends disagree"
        print("backends agree bit-for-bit")
    return 0


if __name__ == "__main__":
    sys.exit(main())
