"""
Against random projections
==========================

Signs of a random orthonormal projection are the usual floor for hashing.
With only four bits the supervised codes should sit far above it.
"""

from rslh.cli import run_bench

for seed in range(3):
    out = run_bench(seed=seed)
    print(f"seed {seed}: rslh {out['rslh']['map']:.3f}  boosted {out['rslh_boosted']['map']:.3f}  "
          f"random {out['baseline']['map']:.3f}  ({out['seconds']:.1f}s)")
