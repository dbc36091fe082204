"""
Features, codes and models on disk
==================================
"""

import tempfile
from pathlib import Path

import numpy as np

from rslh import Hyperparams, make_blobs, train
from rslh import dataio

tmp = Path(tempfile.mkdtemp())
ds = make_blobs(400, 8, 5, seed=3)

# features are stored as float32, one column per sample
dataio.save_features(ds.features.astype(np.float32), tmp / "train.slhf")
dataio.save_labels(ds.labels, tmp / "train.labels")

model = train(ds, Hyperparams(L=3, n_anchors=100), seed=3)
dataio.save_model(model, tmp / "model.slhm")

codes = model.encode(ds.features)
dataio.save_codes(codes, tmp / "train.slhc")

# three bits per sample fit in one byte; the header is 20 bytes
print("code file size:", (tmp / "train.slhc").stat().st_size, "bytes for", ds.n, "samples")

back = dataio.load_model(tmp / "model.slhm")
print("reloaded model encodes identically:", np.array_equal(back.encode(ds.features), codes))
