"""Datasets: dense text matrices, synthetic blobs and class-subset sampling.

Dense text format: one sample per line, fields separated by whitespace or
commas, no header. Blank lines and lines starting with ``#`` are skipped.
With labels, the last field of every row is an integer class label.
"""
from __future__ import annotations

import hashlib
import json
import math
import re
import urllib.request
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .errors import DataFormatError, InputError, ParameterError

__all__ = [
    "DataMatrix",
    "SubsetSpec",
    "load_dense_matrix",
    "write_dense_matrix",
    "read_matrix",
    "write_matrix",
    "synth_blobs",
    "sample_class_subsets",
    "choose_class_combinations",
    "take_classes",
    "load_manifest",
    "fetch_dataset",
]

_SPLIT = re.compile(r"[,\s]+")


@dataclass(frozen=True)
class DataMatrix:
    """Samples stored column-wise: ``X`` has shape (p, n)."""

    X: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim != 2:
            raise InputError(f"X must be 2-D, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise InputError("X contains non-finite entries")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        if self.labels is not None:
            labels = np.array(self.labels, dtype=int)
            if labels.shape != (X.shape[1],):
                raise InputError(f"expected {X.shape[1]} labels, got {labels.shape}")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @property
    def p(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        if self.labels is None:
            return 0
        return len(np.unique(self.labels))

    @property
    def nonnegative(self) -> bool:
        return bool(np.all(self.X >= 0))


@dataclass(frozen=True)
class SubsetSpec:
    N: int
    count: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.N < 1:
            raise ParameterError(f"N must be >= 1, got {self.N}")
        if self.count < 1:
            raise ParameterError(f"count must be >= 1, got {self.count}")


def _parse_rows(path):
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = [f for f in _SPLIT.split(line) if f]
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise DataFormatError(
                    f"{path}: expected {width} fields, found {len(fields)}", row=lineno)
            values = []
            for col, f in enumerate(fields, 1):
                try:
                    values.append(float(f))
                except ValueError:
                    raise DataFormatError(f"{path}: cannot parse {f!r}", row=lineno, column=col) from None
            rows.append(values)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return np.array(rows, dtype=float)


def read_matrix(path) -> np.ndarray:
    """Read a dense text matrix as stored (rows as in the file)."""
    return _parse_rows(path)


def write_matrix(path, M, fmt="%.17g"):
    np.savetxt(path, np.atleast_2d(M), fmt=fmt)


def load_dense_matrix(path, has_labels: bool = False) -> DataMatrix:
    """Load samples stored one per row; returns a feature-major DataMatrix."""
    A = _parse_rows(path)
    labels = None
    if has_labels:
        if A.shape[1] < 2:
            raise DataFormatError(f"{path}: need at least one feature plus the label")
        raw = A[:, -1]
        bad = np.flatnonzero(raw != np.round(raw))
        if bad.size:
            raise DataFormatError(f"{path}: label is not an integer (data row {bad[0] + 1})",
                                  column=A.shape[1])
        labels = raw.astype(int)
        A = A[:, :-1]
    if not np.all(np.isfinite(A)):
        r, c = np.argwhere(~np.isfinite(A))[0]
        raise DataFormatError(f"{path}: non-finite value", row=int(r) + 1, column=int(c) + 1)
    return DataMatrix(A.T, labels)


def write_dense_matrix(path, data: DataMatrix):
    """Inverse of :func:`load_dense_matrix`."""
    rows = data.X.T
    with open(path, "w") as fh:
        for i, row in enumerate(rows):
            fields = [repr(float(v)) for v in row]
            if data.labels is not None:
                fields.append(str(int(data.labels[i])))
            fh.write(" ".join(fields) + "\n")


def synth_blobs(centers: Sequence[Sequence[float]], per_cluster: int, noise_sd: float,
                seed: int = 0) -> DataMatrix:
    """Isotropic Gaussian clusters, shifted per feature to be nonnegative.

    The shift is only applied when a coordinate would be negative, so
    noise-free samples around nonnegative centers equal their centers.
    """
    C = np.asarray(centers, dtype=float)
    if C.ndim != 2 or C.shape[0] < 2:
        raise InputError("need at least two centers given as a (m, p) array")
    if noise_sd < 0:
        raise ParameterError(f"noise_sd must be >= 0, got {noise_sd}")
    if per_cluster < 1:
        raise ParameterError("per_cluster must be >= 1")
    rng = np.random.default_rng(seed)
    m, p = C.shape
    S = np.repeat(C, per_cluster, axis=0) + noise_sd * rng.standard_normal((m * per_cluster, p))
    low = S.min(axis=0)
    S = S - np.minimum(low, 0.0)
    labels = np.repeat(np.arange(m), per_cluster)
    return DataMatrix(S.T, labels)


def take_classes(data: DataMatrix, classes) -> DataMatrix:
    """Samples of ``classes`` in their original order, labels re-indexed to
    positions in ``classes``."""
    classes = list(classes)
    mask = np.isin(data.labels, classes)
    remap = {c: i for i, c in enumerate(classes)}
    labels = np.array([remap[c] for c in data.labels[mask].tolist()], dtype=int)
    return DataMatrix(data.X[:, mask], labels)


def choose_class_combinations(data: DataMatrix, spec: SubsetSpec) -> List[tuple]:
    """Distinct sorted N-class combinations, ``spec.count`` of them at most.

    Every combination is returned when there are at most ``spec.count``.
    """
    if data.labels is None:
        raise InputError("class subsets need labelled data")
    classes = np.unique(data.labels).tolist()
    total = len(classes)
    if spec.N > total:
        raise ParameterError(f"N={spec.N} exceeds the {total} available classes")
    n_comb = math.comb(total, spec.N)
    rng = np.random.default_rng(spec.seed)
    if n_comb <= spec.count:
        chosen = list(combinations(range(total), spec.N))
    elif n_comb <= 100_000:
        pool = list(combinations(range(total), spec.N))
        chosen = [pool[i] for i in rng.choice(n_comb, size=spec.count, replace=False)]
    else:
        seen = set()
        chosen = []
        while len(chosen) < spec.count:
            c = tuple(sorted(rng.choice(total, size=spec.N, replace=False).tolist()))
            if c not in seen:
                seen.add(c)
                chosen.append(c)
    return [tuple(classes[i] for i in c) for c in chosen]


def sample_class_subsets(data: DataMatrix, spec: SubsetSpec) -> List[DataMatrix]:
    """Draw distinct N-class combinations uniformly without replacement and
    extract their samples; labels become ``0..N-1`` in sorted class order."""
    return [take_classes(data, c) for c in choose_class_combinations(data, spec)]


def load_manifest(path=None) -> dict:
    """Read a dataset manifest; defaults to the bundled one."""
    if path is None:
        path = Path(__file__).with_name("datasets.json")
    with open(path) as fh:
        return json.load(fh)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _convert_onehot(raw_path, out_path, n_features, n_classes):
    A = _parse_rows(raw_path)
    if A.shape[1] != n_features + n_classes:
        raise DataFormatError(
            f"{raw_path}: expected {n_features + n_classes} fields, found {A.shape[1]}")
    onehot = A[:, n_features:]
    labels = np.argmax(onehot, axis=1)
    write_dense_matrix(out_path, DataMatrix(A[:, :n_features].T, labels))


def fetch_dataset(name: str, dest_dir, manifest=None, url: Optional[str] = None) -> Path:
    """Download ``name`` from the manifest, verify its checksum and convert it
    to the dense format with a trailing label column.

    Returns the path of the converted file. A manifest entry without a
    ``sha256`` is downloaded unverified and the digest is written next to
    the file so later fetches can pin it.
    """
    entries = manifest if manifest is not None else load_manifest()
    if name not in entries:
        raise InputError(f"unknown dataset {name!r}; known: {sorted(entries)}")
    entry = entries[name]
    dest = Path(dest_dir)
    dest.mkdir(parents=True, exist_ok=True)
    raw = dest / f"{name}.raw"
    urllib.request.urlretrieve(url or entry["url"], raw)
    digest = _sha256(raw)
    expected = entry.get("sha256")
    if expected and digest != expected:
        raw.unlink()
        raise InputError(f"checksum mismatch for {name}: expected {expected}, got {digest}")
    (dest / f"{name}.sha256").write_text(digest + "\n")
    out = dest / f"{name}.txt"
    fmt = entry.get("format", "dense")
    if fmt == "onehot":
        _convert_onehot(raw, out, entry["n_features"], entry["n_classes"])
    else:
        raw.replace(out)
        return out
    raw.unlink()
    return out
