"""
Boosting: choosing balanced bits from several runs
==================================================

Three runs give a pool of twelve bits. Spectral clustering groups bits that
carry the same split of the data, and each group keeps its most balanced bit.
"""

import numpy as np

from rslh import Hyperparams, balance_degree, boost, evaluate, make_blobs, split, train
from rslh.dataio import SplitSpec

ds = make_blobs(2200, 32, 10, seed=2)
query, db = split(ds, SplitSpec(200 / 2200, seed=2))
hp = Hyperparams(L=4, n_anchors=300)

boosted = boost(db, hp, T=3, seed=2)
pool = boosted.pool
print("pool rows (run, bit):", pool.provenance.tolist())
print("cluster of each pool row:", boosted.assignment.tolist())
print("balance degree of each pool row:", [balance_degree(r) for r in pool.bits])
print("selected rows:", boosted.selected.tolist())

plain = train(db, hp, seed=2)
for name, m in (("plain", plain), ("boosted", boosted)):
    rep = evaluate(m.encode(query.features), m.encode(db.features), query.labels, db.labels)
    print(f"{name:8s} mAP {rep.map:.4f}   mean balance {np.mean([balance_degree(r) for r in m.H]):.1f}")
