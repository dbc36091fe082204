"""Reinforced short-length supervised hashing (RSLH) with bit-pool boosting."""
from .boosting import BoostedModel, balance_degree, boost
from .core import Hyperparams, RslhModel, encode, train
from .dataio import Dataset, SplitSpec, load_model, make_blobs, save_model, split
from .evaluation import EvalReport, baseline_random_rotation, evaluate
from .kernelmap import KernelMap, apply_kernel, fit_kernel

__version__ = "0.1.0"

__all__ = [
    "BoostedModel",
    "Dataset",
    "EvalReport",
    "Hyperparams",
    "KernelMap",
    "RslhModel",
    "SplitSpec",
    "apply_kernel",
    "balance_degree",
    "baseline_random_rotation",
    "boost",
    "encode",
    "evaluate",
    "fit_kernel",
    "load_model",
    "make_blobs",
    "save_model",
    "split",
    "train",
]
