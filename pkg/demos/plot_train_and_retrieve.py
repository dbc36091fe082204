"""
Training short codes and ranking by Hamming distance
=====================================================

Four bits for ten classes: the regime where a code is only slightly longer
than log2 of the class count.
"""

import numpy as np

from rslh import Hyperparams, evaluate, make_blobs, split, train
from rslh.dataio import SplitSpec

# ten Gaussian blobs in 32 dimensions, 200 queries held out
ds = make_blobs(2200, 32, 10, seed=0)
query, db = split(ds, SplitSpec(200 / 2200, seed=0))

# 300 anchors keeps the kernel map small; everything else is at its default
model = train(db, Hyperparams(L=4, n_anchors=300), seed=0)
print("sweeps:", model.n_sweeps)
print("objective per sweep:", np.round(model.objective_trace, 3))

# queries go through the same kernel map and projection as the database
report = evaluate(model.encode(query.features), model.encode(db.features), query.labels, db.labels)
print(report.to_json())
