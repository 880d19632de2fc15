"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both backends are imported directly, so the environment switch is not
needed.  Results are checked for agreement before timing.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from curvflow import _pykernels

try:
    from curvflow import _ckernels
except ImportError:
    _ckernels = None


def cases(rng: np.random.Generator) -> dict[str, tuple]:
    m = 512
    sub = rng.uniform(-1, 0, m - 1)
    sup = rng.uniform(-1, 0, m - 1)
    diag = 3.0 + rng.uniform(0, 1, m)
    rhs = rng.normal(size=m)
    t = rng.uniform(0.5, 1.5, m - 1)
    mass = rng.uniform(0, 1, m)
    u = rng.uniform(0.5, 1.5, m)
    p = 3
    lam = 10 ** rng.uniform(2, 4, p)
    pts = rng.uniform(-0.3, 0.3, (p, 5))
    return {"tridiag_solve": (sub, diag, sup, rhs), "fv_apply": (t, mass, u),
            "pair_table": (lam, pts, 5)}


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=2000)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; only the fallback is available")
        return 1
    data = cases(np.random.default_rng(0))
    print(f"{'kernel':15s} {'python us':>10s} {'compiled us':>12s} {'speedup':>8s}")
    for name, a in data.items():
        fp, fc = getattr(_pykernels, name), getattr(_ckernels, name)
        rp, rc = fp(*a), fc(*a)
        pairs = zip(rp, rc) if isinstance(rp, tuple) else [(rp, rc)]
        for x, y in pairs:
            assert np.allclose(x, y, rtol=1e-12, atol=1e-14), name
        tp = min(timeit.repeat(lambda: fp(*a), number=args.repeat, repeat=3)) / args.repeat
        tc = min(timeit.repeat(lambda: fc(*a), number=args.repeat, repeat=3)) / args.repeat
        print(f"{name:15s} {tp * 1e6:10.2f} {tc * 1e6:12.2f} {tp / tc:8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
