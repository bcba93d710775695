"""Time the compiled and pure-Python kernels on the same inputs.

    python3 benchmarks/bench_kernels.py [--chars 20000] [--repeat 5]
"""

from __future__ import annotations

import argparse
import random
import timeit

import numpy as np

from crowdrev import _pykernels
from crowdrev.synth import CodeGenerator
from crowdrev.winnow import normalize

try:
    from crowdrev import _ckernels
except ImportError:
    _ckernels = None


def cases(chars: int, k: int, w: int):
    gen = CodeGenerator(random.Random(1))
    text = normalize(gen.document(chars))
    other = normalize(gen.document(chars))
    hashes = _pykernels.kgram_hashes(text, k)
    fa = np.sort(_pykernels.winnow_select(hashes, w)[0])
    fb = np.sort(_pykernels.winnow_select(_pykernels.kgram_hashes(other, k), w)[0])
    return {
        "kgram_hashes": lambda m: m.kgram_hashes(text, k),
        "winnow_select": lambda m: m.winnow_select(hashes, w),
        "intersection_size": lambda m: m.intersection_size(fa, fb),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--chars", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--k", type=int, default=12)
    ap.add_argument("--w", type=int, default=8)
    args = ap.parse_args()
    backends = {"python": _pykernels}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    else:
        print("compiled kernels not built; timing the pure-Python backend only")
    print(f"{'kernel':<18} {'backend':<8} {'best ms':>10} {'speedup':>8}")
    for name, fn in cases(args.chars, args.k, args.w).items():
        base = None
        for label, mod in backends.items():
            number = 3 if label == "python" else 50
            best = min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat)) / number
            base = base or best
            print(f"{name:<18} {label:<8} {best * 1e3:>10.3f} {base / best:>7.1f}x")


if __name__ == "__main__":
    main()
