"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from pagehtr import _kernels
from pagehtr.metrics import _code_matrix


def cases(rng):
    words = ["".join(rng.choice(list("abcde \n"), int(rng.integers(40, 120)))) for _ in range(20)]
    a, al = _code_matrix(words)
    x64 = rng.standard_normal((4, 16, 32, 128))
    x32 = x64.astype(np.float32)
    cols = _kernels.python.im2col(x32, 3, 3, 1)
    return {
        "levenshtein (~100 chars)": lambda k: k.levenshtein(words[0], words[1]),
        "levenshtein_matrix 20x20": lambda k: k.levenshtein_matrix(a, al, a, al),
        "im2col 4x16x32x128 k3 f32": lambda k: k.im2col(x32, 3, 3, 1),
        "im2col 4x16x32x128 k3 s2 f64": lambda k: k.im2col(x64, 3, 3, 2),
        "col2im 4x16x32x128 k3 f32": lambda k: k.col2im(cols, 16, 32, 128, 3, 3, 1),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _kernels.cython is None:
        raise SystemExit("compiled extension not built; run pip install -e . --no-build-isolation")
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, fn in cases(rng).items():
        t = {}
        for label, mod in (("python", _kernels.python), ("cython", _kernels.cython)):
            fn(mod)
            t[label] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:32s} {t['python']:10.2f} {t['cython']:10.2f} {t['python'] / t['cython']:7.1f}x", flush=True)


if __name__ == "__main__":
    main()
