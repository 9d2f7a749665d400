"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--kg-dir data/umls] [--repeat 5]

Times the raw sparse operations on random matrices, then the refinement
pipeline on a slice of mined UMLS rules, once per available backend.
"""
import argparse
import time
from pathlib import Path

import numpy as np

from treerule import sparse
from treerule.sparse import SparseBinaryMatrix, hop, intersection_size, mask, mask_complement


def random_matrix(rng, rows, cols, density):
    nnz = int(rows * cols * density)
    return SparseBinaryMatrix.from_pairs(rng.integers(0, rows, nnz), rng.integers(0, cols, nnz), (rows, cols))


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def kernel_cases(rng):
    cases = []
    for n, b, d in ((500, 100, 0.01), (5000, 100, 0.001), (15000, 100, 0.0005)):
        m = random_matrix(rng, n, n, d)
        v = random_matrix(rng, b, n, 0.02)
        w = random_matrix(rng, b, n, 0.02)
        cases.append((f"hop {b}x{n} @ {n}x{n} (nnz {m.nnz})", lambda v=v, m=m: hop(v, m)))
        h = hop(v, m)
        cases.append((f"mask/complement {b}x{n}", lambda h=h, w=w: (mask(h, w), mask_complement(h, w))))
        cases.append((f"intersection_size {b}x{n}", lambda h=h, w=w: intersection_size(h, w)))
    return cases


def pipeline_case(kg_dir):
    from treerule.kg import load_split
    from treerule.miner import MinerConfig, mine
    from treerule.refiner import RefineConfig, refine_rules

    kg = load_split(kg_dir)
    rules = mine(kg, MinerConfig(max_rules_per_head=10))
    return f"refine {len(rules)} UMLS rules", lambda: refine_rules(kg, rules, RefineConfig())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kg-dir", default=str(Path(__file__).resolve().parents[1] / "data" / "umls"))
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    backends = sparse.available_backends()
    cases = kernel_cases(np.random.default_rng(0))
    if (Path(args.kg_dir) / "train.txt").is_file():
        cases.append(pipeline_case(args.kg_dir))
    width = max(len(name) for name, _ in cases)
    print(f"{'case':<{width}}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    previous = sparse.BACKEND
    for name, fn in cases:
        row = []
        for b in backends:
            sparse.use_backend(b)
            fn()  # warm-up
            row.append(best_of(fn, args.repeat))
        line = f"{name:<{width}}" + "".join(f"{t * 1000:>10.2f}ms" for t in row)
        if len(row) > 1:
            line += f"{row[backends.index('python')] / row[backends.index('cython')]:>11.1f}x"
        print(line)
    sparse.use_backend(previous)


if __name__ == "__main__":
    main()
