"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat R]
"""

import argparse
import timeit

import numpy as np

from phlab import kernels, mane
from phlab.measures import MODES
from phlab.parallel import uniform_seeds


def cases(spec):
    prm = spec.params
    X = uniform_seeds(0, 2000)
    Q = np.broadcast_to(np.eye(3), (X.shape[0], 3, 3)).copy()
    Q2 = np.ascontiguousarray(Q[:, :, :2])
    few = X[:50]
    return {
        "apply_batch (2000 pts)": lambda k: k.apply_batch(prm, X),
        "iterate (2000 pts x 100)": lambda k: k.iterate(prm, X, 100),
        "qr_steps (2000 pts x 100)": lambda k: k.qr_steps(prm, X, Q, 100, True),
        "cu_steps (2000 pts x 100)": lambda k: k.cu_steps(prm, X, Q2, 100, True),
        "birkhoff_sums (50 pts x 2000)": lambda k: k.birkhoff_sums(prm, few, 100, 2000, MODES),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    avail = kernels.backends()
    spec = mane()
    print(f"{'kernel':34s}" + "".join(f"{name:>12s}" for name in avail) + "     speedup")
    for label, fn in cases(spec).items():
        t = {name: min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)) for name, mod in avail.items()}
        speed = f"{t['python'] / t['cython']:10.1f}x" if "cython" in t else "         -"
        print(f"{label:34s}" + "".join(f"{v:11.4f}s" for v in t.values()) + speed)


if __name__ == "__main__":
    main()
