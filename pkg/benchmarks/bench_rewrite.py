"""Benchmark: compiled rewrite kernel vs the pure-Python twin.

Two workloads: (1) raw normalization over generated redex-heavy terms,
(2) an end-to-end equivalence check (the kernel sits on its hot path).

Run:  python3 benchmarks/bench_rewrite.py
"""

import random
import statistics
import sys
import time

sys.setrecursionlimit(100_000)

from openbisim import _rewrite_py, kernel
from openbisim.terms import Theory, dy_asym, _encode  # noqa: E402

try:
    from openbisim import _rewrite as _rewrite_cy
except ImportError:
    _rewrite_cy = None


def generate_terms(n, depth, seed=0x5EED):
    rng = random.Random(seed)
    th = dy_asym()
    symbols = [(f, a) for f, a in th.symbols() if a > 0]
    names = ["m", "n", "k", "x", "y"]

    def gen(d):
        if d == 0 or rng.random() < 0.2:
            return rng.choice(names)
        fn, arity = rng.choice(symbols)
        if fn == "adec" and rng.random() < 0.6:
            # plant a redex: adec(aenc(M, pk(K)), K)
            key = gen(d - 1)
            return ("adec", ("aenc", gen(d - 1), ("pk", key)), key)
        if fn in ("fst", "snd") and rng.random() < 0.6:
            return (fn, ("pair", gen(d - 1), gen(d - 1)))
        return (fn,) + tuple(gen(d - 1) for _ in range(arity))

    return [gen(depth) for _ in range(n)]


def bench_kernel(impl, terms, rules, repeat=5):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        for t in terms:
            impl.normalize(t, rules, 10_000)
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_check(repeat=3):
    from openbisim.bisim import CheckConfig, quasi_open_check
    from openbisim.syntax import parse_process
    from openbisim.terms import dy_asym as mk

    src_a = ("new k, r. out(a, pk(k)). in(a, x). out(a, r). 0")
    src_b = ("new k, r. out(a, pk(k)). in(a, x). "
             "if x = pk(k) then out(a, aenc(pair(m, r), pk(k))). 0 "
             "else out(a, r). 0")
    times = []
    for _ in range(repeat):
        th = mk()  # fresh caches each round
        t0 = time.perf_counter()
        quasi_open_check(parse_process(src_a), parse_process(src_b), th,
                         CheckConfig(recipe_depth=1, max_depth=24))
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    th = dy_asym()
    rules = th._encoded
    terms = generate_terms(4000, 5)

    py = bench_kernel(_rewrite_py, terms, rules)
    print(f"normalize x4000 (depth-5 terms)  pure python : {py * 1e3:8.1f} ms")
    if _rewrite_cy is not None:
        cy = bench_kernel(_rewrite_cy, terms, rules)
        print(f"normalize x4000 (depth-5 terms)  cython      : {cy * 1e3:8.1f} ms")
        print(f"speedup: {py / cy:.2f}x")
    else:
        print("compiled kernel not built; only the fallback was measured")

    print(f"active kernel for end-to-end run: {kernel.IMPLEMENTATION}")
    print(f"server privacy check end-to-end : {bench_check() * 1e3:8.1f} ms")


if __name__ == "__main__":
    main()
