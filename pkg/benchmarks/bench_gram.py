"""Time Gram construction with the compiled extension and the numpy fallback.

    python benchmarks/bench_gram.py --sizes 500 1000 2000 --repeat 3
"""

import argparse
import sys
import timeit

import numpy as np

from krrcate import _gram_py
from krrcate.kernels import _sobolev_coefs

try:
    from krrcate import _gram_ext
except ImportError:
    _gram_ext = None


def cases(n, rng):
    x1 = rng.uniform(size=(n, 1))
    x10 = rng.uniform(-1, 1, size=(n, 10))
    low1, high1 = _sobolev_coefs(1)
    low2, high2 = _sobolev_coefs(2)
    return {
        "sobolev1 d=1": lambda m: m.sobolev_gram(x1, x1, low1, high1, True),
        "sobolev2 d=1": lambda m: m.sobolev_gram(x1, x1, low2, high2, True),
        "matern1.5 d=10": lambda m: m.matern_gram(x10, x10, 1.5, 2.6, True),
        "matern2.5 d=10": lambda m: m.matern_gram(x10, x10, 2.5, 2.4, True),
        "rbf d=10": lambda m: m.rbf_gram(x10, x10, 2.1, True),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[500, 1000, 2000])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    if _gram_ext is None:
        print("compiled extension not built; only the numpy fallback is timed", file=sys.stderr)

    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}{'n':>6}{'python ms':>12}{'compiled ms':>13}{'speedup':>9}{'max |diff|':>12}")
    for n in args.sizes:
        for name, fn in cases(n, rng).items():
            t_py = min(timeit.repeat(lambda: fn(_gram_py), number=1, repeat=args.repeat))
            if _gram_ext is None:
                print(f"{name:<16}{n:>6}{t_py * 1e3:>12.1f}{'-':>13}{'-':>9}{'-':>12}")
                continue
            t_c = min(timeit.repeat(lambda: fn(_gram_ext), number=1, repeat=args.repeat))
            diff = np.abs(fn(_gram_py) - fn(_gram_ext)).max()
            print(f"{name:<16}{n:>6}{t_py * 1e3:>12.1f}{t_c * 1e3:>13.1f}{t_py / t_c:>9.1f}{diff:>12.1e}")


if __name__ == "__main__":
    main()
