"""Reader for the LIBSVM sparse text format ``<label> <idx>:<val> ...``."""
from __future__ import annotations

import io
import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


@dataclass(frozen=True)
class SvmDataset:
    X: sp.csr_matrix
    y: np.ndarray
    source: str = "<stream>"

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    def rows(self):
        """Rows as lists of ``(index, value)`` pairs with 1-based indices."""
        out = []
        for i in range(self.m):
            lo, hi = self.X.indptr[i], self.X.indptr[i + 1]
            out.append([(int(j) + 1, float(v)) for j, v in zip(self.X.indices[lo:hi], self.X.data[lo:hi])])
        return out


def _map_labels(raw: list[float]) -> np.ndarray:
    distinct = list(dict.fromkeys(raw))
    if len(distinct) > 2:
        raise ParseError(f"expected binary labels, found {len(distinct)} distinct values")
    lo, hi = min(distinct), max(distinct)
    if lo < 0 < hi or len(distinct) == 1 and lo != 0:
        return np.sign(np.asarray(raw))
    # labels not separated by sign, e.g. {0, 1} or {2, 4}: first one seen is +1
    first = distinct[0]
    return np.where(np.asarray(raw) == first, 1.0, -1.0)


def parse_libsvm(stream, source: str | None = None) -> SvmDataset:
    """Parse LIBSVM text into a CSR feature matrix and labels in {-1, +1}.

    Indices are 1-based and must be strictly increasing within a line; the
    feature count is the largest index seen.  Blank lines and ``#`` comments
    are skipped.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    labels, indptr, indices, data = [], [0], [], []
    for lineno, line in enumerate(stream, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            labels.append(float(tokens[0]))
        except ValueError:
            raise ParseError(f"bad label {tokens[0]!r}", lineno) from None
        last = 0
        for tok in tokens[1:]:
            idx, sep, val = tok.partition(":")
            try:
                if not sep:
                    raise ValueError
                j, v = int(idx), float(val)
            except ValueError:
                raise ParseError(f"malformed token {tok!r}", lineno) from None
            if j <= last:
                raise ParseError(f"index {j} is not greater than previous index {last}", lineno)
            last = j
            indices.append(j - 1)
            data.append(v)
        indptr.append(len(indices))
    if not labels:
        raise ParseError("no data")
    n = max(indices) + 1 if indices else 0
    X = sp.csr_matrix((np.asarray(data, dtype=float), np.asarray(indices, dtype=np.int64), np.asarray(indptr)),
                      shape=(len(labels), n))
    return SvmDataset(X, _map_labels(labels), source or getattr(stream, "name", "<stream>"))


def load_libsvm(path: str | os.PathLike) -> SvmDataset:
    with open(path) as fh:
        return parse_libsvm(fh, str(path))


def dump_libsvm(X, y, stream) -> None:
    """Write ``(X, y)`` in LIBSVM format; zero entries are omitted."""
    X = sp.csr_matrix(X)
    for i in range(X.shape[0]):
        lo, hi = X.indptr[i], X.indptr[i + 1]
        feats = " ".join(f"{j + 1}:{float(v)!r}" for j, v in zip(X.indices[lo:hi], X.data[lo:hi]) if v != 0)
        stream.write(f"{int(y[i]):+d} {feats}".rstrip() + "\n")


def synthetic_dataset(m: int = 270, n: int = 13, seed: int = 0, density: float = 0.8,
                      noise: float = 1.0) -> SvmDataset:
    """Random binary classification data with unequal feature scales.

    Labels come from a noisy linear model so the classes overlap.  Feature
    scales span about three orders of magnitude, as in unscaled LIBSVM sets.
    """
    rng = np.random.default_rng(seed)
    scales = 10.0 ** rng.uniform(-1.0, 2.0, size=n)
    dense = rng.standard_normal((m, n)) * scales
    dense[rng.random((m, n)) > density] = 0.0
    w_true = rng.standard_normal(n) / scales
    logits = dense @ w_true + noise * rng.standard_normal(m)
    y = np.where(logits > 0, 1.0, -1.0)
    return SvmDataset(sp.csr_matrix(dense), y, f"synthetic-{m}x{n}-s{seed}")
