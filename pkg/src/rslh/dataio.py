"""Datasets, label matrices, splits and the on-disk formats.

Binary layouts (all integers little-endian):

``SLHF`` features
    magic ``b"SLHF"``, u32 version (1), u32 rows, u32 cols, then
    ``rows * cols`` float32 values in row-major order. Rows are feature
    dimensions and columns are samples. Values widen to float64 on load.

``SLHC`` codes
    magic ``b"SLHC"``, u32 version (1), u32 L, u64 n, then for each sample
    ``ceil(L / 8)`` bytes. Bit ``k`` of the sample (LSB first within a byte)
    is 1 iff entry ``k`` of the code is +1; padding bits are 0.

``SLHM`` models
    magic ``b"SLHM"``, u32 version (1), u32 flags (bit 0 set for boosted
    models), u32 entry count, then entries. Each entry is a u16 name length,
    the UTF-8 name, a 2-byte dtype tag (``f8``, ``f4`` or ``i1``), u32 rows,
    u32 cols and the row-major payload. Scalars are stored as 1x1 entries.

Label files hold one decimal class id per line (UTF-8, LF newlines).
"""
from __future__ import annotations

import csv
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "FormatError",
    "BadMagicError",
    "VersionError",
    "DimensionError",
    "TruncatedError",
    "CsvParseError",
    "LabelError",
    "Dataset",
    "SplitSpec",
    "PackedCodes",
    "build_label_matrix",
    "labels_from_matrix",
    "split",
    "make_blobs",
    "load_features",
    "save_features",
    "load_labels",
    "save_labels",
    "pack_codes",
    "unpack_codes",
    "save_codes",
    "load_codes",
    "write_container",
    "read_container",
    "atomic_write",
    "save_model",
    "load_model",
]

FEATURE_MAGIC = b"SLHF"
CODE_MAGIC = b"SLHC"
MODEL_MAGIC = b"SLHM"
VERSION = 1
FLAG_BOOSTED = 1

# refuse headers that would ask for more than 16 GiB of float32 payload
MAX_ELEMENTS = 1 << 32

_DTYPES = {b"f8": np.dtype("<f8"), b"f4": np.dtype("<f4"), b"i1": np.dtype("i1")}


class FormatError(ValueError):
    """Base class for malformed input files."""


class BadMagicError(FormatError):
    pass


class VersionError(FormatError):
    pass


class DimensionError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class CsvParseError(FormatError):
    pass


class LabelError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    """Features (``m x n``, one column per sample) with single-label class ids."""

    features: np.ndarray
    labels: np.ndarray
    c: int

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels)
        if features.ndim != 2:
            raise ValueError(f"features must be 2-D (m x n), got shape {features.shape}")
        if labels.ndim != 1 or labels.shape[0] != features.shape[1]:
            raise ValueError(f"need one label per sample: {labels.shape} labels for {features.shape[1]} samples")
        if features.shape[1] < 1:
            raise ValueError("dataset is empty")
        if self.c < 2:
            raise ValueError(f"need at least 2 classes, got c={self.c}")
        if not np.issubdtype(labels.dtype, np.integer):
            raise LabelError("labels must be integers")
        if labels.min() < 0 or labels.max() >= self.c:
            raise LabelError(f"labels must lie in [0, {self.c})")
        if not np.all(np.isfinite(features)):
            raise ValueError("features contain non-finite values")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels.astype(np.int64))

    @property
    def n(self) -> int:
        return self.features.shape[1]

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def Y(self) -> np.ndarray:
        return build_label_matrix(self.labels, self.c)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.features[:, idx], self.labels[idx], self.c)


@dataclass(frozen=True)
class SplitSpec:
    query_fraction: float
    seed: int = 0


def build_label_matrix(labels, c: int) -> np.ndarray:
    """The ``c x n`` matrix with +1 at each sample's class and -1 elsewhere."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise LabelError("labels must be a 1-D sequence")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        bad = labels[(labels < 0) | (labels >= c)][0]
        raise LabelError(f"class id {bad} outside [0, {c})")
    Y = -np.ones((c, labels.size))
    Y[labels, np.arange(labels.size)] = 1.0
    return Y


def labels_from_matrix(Y) -> np.ndarray:
    return np.argmax(np.asarray(Y), axis=0)


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Stratified query/database split; every class keeps a database sample.

    The query set has ``round(query_fraction * n)`` samples, allocated to
    classes in proportion to their size.
    """
    frac = spec.query_fraction
    if not 0.0 < frac < 1.0:
        raise ValueError(f"query_fraction must lie in (0, 1), got {frac}")
    classes, counts = np.unique(ds.labels, return_counts=True)
    singles = classes[counts == 1]
    if singles.size:
        raise ValueError(f"class {int(singles[0])} has a single sample and cannot be stratified")
    n_query = int(round(frac * ds.n))
    capacity = counts - 1
    if n_query < 1 or n_query > capacity.sum():
        raise ValueError(f"query fraction {frac} gives an infeasible query size {n_query} for n={ds.n}")

    # largest-remainder apportionment, capped so each class keeps one db sample
    share = frac * counts
    alloc = np.minimum(np.floor(share).astype(np.int64), capacity)
    order = np.lexsort((classes, -(share - np.floor(share))))
    while alloc.sum() < n_query:
        for i in order:
            if alloc.sum() == n_query:
                break
            if alloc[i] < capacity[i]:
                alloc[i] += 1

    rng = np.random.default_rng(spec.seed)
    query = []
    for k, take in zip(classes, alloc):
        members = np.flatnonzero(ds.labels == k)
        query.append(rng.permutation(members)[:take])
    q_idx = np.sort(np.concatenate(query))
    mask = np.ones(ds.n, dtype=bool)
    mask[q_idx] = False
    return ds.subset(q_idx), ds.subset(np.flatnonzero(mask))


def make_blobs(n: int, dim: int, c: int, seed: int, center_scale: float = 1.0, spread: float = 1.0) -> Dataset:
    """Isotropic Gaussian clusters, ``n // c`` (or one more) samples per class."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(scale=center_scale, size=(c, dim))
    labels = rng.permutation(np.arange(n) % c)
    feats = centers[labels] + rng.normal(scale=spread, size=(n, dim))
    return Dataset(feats.T, labels, c)


# -- byte-level helpers -----------------------------------------------------

def atomic_write(path, data: bytes) -> None:
    """Write ``data`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.data):
            raise TruncatedError(f"need {size} bytes at offset {self.pos}, only {len(self.data) - self.pos} left")
        chunk = self.data[self.pos : self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def header(self, magic: bytes):
        got = self.take(4)
        if got != magic:
            raise BadMagicError(f"expected magic {magic!r}, got {got!r}")
        (version,) = self.unpack("<I")
        if version != VERSION:
            raise VersionError(f"unsupported {magic.decode()} version {version}")

    def done(self):
        if self.pos != len(self.data):
            raise FormatError(f"{len(self.data) - self.pos} trailing bytes")


def _check_dims(rows: int, cols: int) -> None:
    if rows < 1 or cols < 1:
        raise DimensionError(f"empty matrix {rows}x{cols}")
    if rows * cols > MAX_ELEMENTS:
        raise DimensionError(f"{rows}x{cols} exceeds the {MAX_ELEMENTS}-element limit")


# -- features and labels ----------------------------------------------------

def save_features(features, path) -> None:
    a = np.asarray(features, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("features must be 2-D")
    _check_dims(*a.shape)
    header = FEATURE_MAGIC + struct.pack("<III", VERSION, a.shape[0], a.shape[1])
    atomic_write(path, header + a.astype("<f4").tobytes(order="C"))


def load_features(path, format: str = "binary") -> np.ndarray:
    """Read a feature matrix (``m x n``) from an SLHF file or a CSV file.

    CSV input has one sample per line and one dimension per comma-separated
    cell, so it is transposed on load.
    """
    if format == "csv":
        return _load_features_csv(path)
    if format != "binary":
        raise ValueError(f"unknown feature format {format!r}")
    r = _Reader(Path(path).read_bytes())
    r.header(FEATURE_MAGIC)
    rows, cols = r.unpack("<II")
    _check_dims(rows, cols)
    payload = np.frombuffer(r.take(4 * rows * cols), dtype="<f4")
    r.done()
    return payload.astype(np.float64).reshape(rows, cols)


def _load_features_csv(path) -> np.ndarray:
    samples = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                samples.append([float(cell) for cell in row])
            except ValueError as exc:
                raise CsvParseError(f"{path}:{lineno}: {exc}") from None
            if len(samples[-1]) != len(samples[0]):
                raise CsvParseError(f"{path}:{lineno}: expected {len(samples[0])} cells, got {len(samples[-1])}")
    if not samples:
        raise DimensionError(f"{path}: no samples")
    a = np.array(samples, dtype=np.float64).T
    if not np.all(np.isfinite(a)):
        raise CsvParseError(f"{path}: non-finite value")
    return np.ascontiguousarray(a)


def load_labels(path) -> np.ndarray:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if not line.isdigit():
                raise LabelError(f"{path}:{lineno}: not a class id: {line!r}")
            out.append(int(line))
    if not out:
        raise LabelError(f"{path}: no labels")
    return np.array(out, dtype=np.int64)


def save_labels(labels, path) -> None:
    text = "".join(f"{int(k)}\n" for k in np.asarray(labels))
    atomic_write(path, text.encode("utf-8"))


# -- codes ------------------------------------------------------------------

@dataclass(frozen=True)
class PackedCodes:
    """Codes in the SLHC memory layout: ``words`` is ``n x ceil(L/8)`` uint8."""

    words: np.ndarray
    L: int

    @property
    def n(self) -> int:
        return self.words.shape[0]


def pack_codes(H) -> PackedCodes:
    H = np.asarray(H)
    if H.ndim != 2:
        raise ValueError("codes must be an L x n matrix")
    if not np.all((H == 1) | (H == -1)):
        raise ValueError("codes must contain only -1 and +1")
    words = np.packbits(H.T > 0, axis=1, bitorder="little")
    return PackedCodes(np.ascontiguousarray(words), H.shape[0])


def unpack_codes(packed: PackedCodes) -> np.ndarray:
    bits = np.unpackbits(packed.words, axis=1, count=packed.L, bitorder="little")
    return (2 * bits.astype(np.int8) - 1).T.copy()


def save_codes(H, path) -> None:
    packed = pack_codes(H)
    header = CODE_MAGIC + struct.pack("<IIQ", VERSION, packed.L, packed.n)
    atomic_write(path, header + packed.words.tobytes())


def load_codes(path) -> np.ndarray:
    r = _Reader(Path(path).read_bytes())
    r.header(CODE_MAGIC)
    L, n = r.unpack("<IQ")
    _check_dims(L, n)
    width = (L + 7) // 8
    words = np.frombuffer(r.take(width * n), dtype=np.uint8).reshape(n, width)
    r.done()
    return unpack_codes(PackedCodes(words, L))


# -- model container --------------------------------------------------------

def write_container(path, entries: dict, flags: int = 0) -> None:
    """Serialize named 2-D arrays into an SLHM file; insertion order is kept."""
    parts = [MODEL_MAGIC, struct.pack("<III", VERSION, flags, len(entries))]
    for name, value in entries.items():
        a = np.asarray(value)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2:
            raise ValueError(f"entry {name!r} must be 2-D")
        if a.dtype == np.int8:
            tag = b"i1"
        elif a.dtype == np.float32:
            tag = b"f4"
        else:
            tag = b"f8"
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw + tag + struct.pack("<II", *a.shape))
        parts.append(np.ascontiguousarray(a, dtype=_DTYPES[tag]).tobytes())
    atomic_write(path, b"".join(parts))


def read_container(path) -> tuple[dict, int]:
    r = _Reader(Path(path).read_bytes())
    r.header(MODEL_MAGIC)
    flags, count = r.unpack("<II")
    entries = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        tag = r.take(2)
        if tag not in _DTYPES:
            raise FormatError(f"entry {name!r}: unknown dtype tag {tag!r}")
        rows, cols = r.unpack("<II")
        _check_dims(rows, cols)
        dtype = _DTYPES[tag]
        payload = np.frombuffer(r.take(dtype.itemsize * rows * cols), dtype=dtype)
        entries[name] = payload.reshape(rows, cols).astype(dtype.newbyteorder("="))
    r.done()
    return entries, flags


# -- models -----------------------------------------------------------------

_HYPER_FIELDS = ("L", "alpha", "beta", "gamma", "mu", "lam", "max_iters", "rel_tol", "n_anchors", "sigma")
_INT_FIELDS = {"L", "max_iters", "n_anchors"}


def save_model(model, path) -> None:
    """Write a plain or boosted model to an SLHM file."""
    from .boosting import BoostedModel

    entries = {}
    for name in _HYPER_FIELDS:
        value = getattr(model.hyper, name)
        entries[f"hyper.{name}"] = np.full((1, 1), np.nan if value is None else float(value))
    entries["kernel.anchors"] = model.kernel.anchors
    entries["kernel.sigma"] = np.full((1, 1), model.kernel.sigma)
    entries["P"] = model.P
    entries["H"] = np.asarray(model.H, dtype=np.int8)
    if isinstance(model, BoostedModel):
        flags = FLAG_BOOSTED
        entries["selected"] = model.selected.reshape(1, -1).astype(np.float64)
        entries["assignment"] = model.assignment.reshape(1, -1).astype(np.float64)
        entries["used_fallback"] = np.full((1, 1), float(model.used_fallback))
    else:
        flags = 0
        for name in ("W", "B", "R", "G"):
            entries[name] = getattr(model, name)
        entries["objective_trace"] = np.asarray(model.objective_trace, dtype=np.float64).reshape(1, -1)
    write_container(path, entries, flags)


def load_model(path):
    """Read an SLHM file back into an ``RslhModel`` or ``BoostedModel``."""
    from .boosting import BoostedModel
    from .core import Hyperparams, RslhModel
    from .kernelmap import KernelMap

    entries, flags = read_container(path)
    try:
        values = {}
        for name in _HYPER_FIELDS:
            v = float(entries[f"hyper.{name}"][0, 0])
            values[name] = None if np.isnan(v) else (int(v) if name in _INT_FIELDS else v)
        hyper = Hyperparams(**values)
        kernel = KernelMap(entries["kernel.anchors"], float(entries["kernel.sigma"][0, 0]))
        if flags & FLAG_BOOSTED:
            return BoostedModel(
                selected=entries["selected"][0].astype(np.int64),
                H=entries["H"],
                P=entries["P"],
                kernel=kernel,
                hyper=hyper,
                assignment=entries["assignment"][0].astype(np.int64),
                used_fallback=bool(entries["used_fallback"][0, 0]),
            )
        return RslhModel(
            W=entries["W"], B=entries["B"], H=entries["H"], P=entries["P"],
            R=entries["R"], G=entries["G"], kernel=kernel, hyper=hyper,
            objective_trace=tuple(entries["objective_trace"][0].tolist()),
        )
    except KeyError as exc:
        raise FormatError(f"model file is missing entry {exc}") from None
