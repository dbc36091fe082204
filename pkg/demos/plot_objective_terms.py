"""
Watching the alternating steps
==============================

The trainer accepts a callback that fires after each of the four updates.
Here it records the objective after every single step, which makes the
descent visible at a finer grain than the per-sweep trace.
"""

import numpy as np

from rslh import Hyperparams, make_blobs, train
from rslh.core import build_similarity, compute_G, compute_R, objective_terms

ds = make_blobs(500, 16, 10, seed=1)
hp = Hyperparams(L=4, n_anchors=200, max_iters=5)

log = []


def watch(step, state):
    B = state["B"]
    log.append((step, float(np.linalg.norm(B @ B.T - np.eye(hp.L)))))


model = train(ds, hp, seed=1, callback=watch)

for step, drift in log[:8]:
    print(f"after {step}: ||BB^T - I|| = {drift:.1e}")

# the final objective split into its six terms
S = build_similarity(ds.Y)
X = model.kernel(ds.features)
R = compute_R(S, X)
G = compute_G(S, R)
names = ("label fit", "mutual regression", "H close to B", "similarity", "projection", "ridge")
for name, value in zip(names, objective_terms(model.W, model.B, model.H, model.P, hp, X, ds.Y, G, R)):
    print(f"{name:18s} {value:.6g}")
