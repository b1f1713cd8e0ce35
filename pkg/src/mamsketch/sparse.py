"""Sparse vectors as sorted index/value arrays, plus their CSV file format."""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class SparseVector:
    """
    A vector of dimension ``dim`` holding only its nonzero entries.

    ``indices`` are 0-based and strictly increasing; ``values`` are nonzero.
    Use ``from_pairs`` to build one from unsorted data with repeats.
    """

    dim: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).ravel()
        val = np.asarray(self.values).ravel()
        if idx.shape != val.shape:
            raise ValueError("indices and values differ in length")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.dim:
                raise IndexError(f"index out of range [0, {self.dim})")
            if np.any(np.diff(idx) <= 0):
                raise ValueError("indices must be strictly increasing")
        idx.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_pairs(cls, dim, indices, values) -> "SparseVector":
        """Sum values at repeated indices, drop exact zeros."""
        idx = np.asarray(indices, dtype=np.int64).ravel()
        val = np.asarray(values).ravel()
        uniq, inv = np.unique(idx, return_inverse=True)
        acc = np.zeros(uniq.size, dtype=np.result_type(val, float))
        np.add.at(acc, inv, val)
        keep = acc != 0
        return cls(int(dim), uniq[keep], acc[keep])

    @classmethod
    def from_dense(cls, x) -> "SparseVector":
        x = np.asarray(x)
        idx = np.flatnonzero(x)
        return cls(x.size, idx, x[idx])

    @classmethod
    def zeros(cls, dim) -> "SparseVector":
        return cls(int(dim), np.empty(0, np.int64), np.empty(0))

    @property
    def nnz(self) -> int:
        return self.indices.size

    def __len__(self):
        return self.nnz

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim, dtype=np.result_type(self.values, float))
        out[self.indices] = self.values
        return out

    def norm(self, ord=2) -> float:
        return float(np.linalg.norm(self.values, ord)) if self.nnz else 0.0

    def scaled(self, c) -> "SparseVector":
        return SparseVector(self.dim, self.indices, self.values * c)

    def dot(self, other: "SparseVector"):
        """Hermitian inner product <self, other> = sum conj(self_i) other_i."""
        _, a, b = np.intersect1d(self.indices, other.indices, assume_unique=True, return_indices=True)
        return np.vdot(self.values[a], other.values[b])

    def best_s_term(self, s: int) -> "SparseVector":
        """Keep the s largest-magnitude entries (ties broken by smaller index)."""
        if s >= self.nnz:
            return self
        order = np.lexsort((self.indices, -np.abs(self.values)))[:s]
        order.sort()
        return SparseVector(self.dim, self.indices[order], self.values[order])

    def sub(self, other: "SparseVector") -> "SparseVector":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        return SparseVector.from_pairs(
            self.dim,
            np.concatenate([self.indices, other.indices]),
            np.concatenate([self.values, -np.asarray(other.values)]),
        )

    def equals(self, other: "SparseVector") -> bool:
        return (
            self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )


def write_sparse_csv(path, vec: SparseVector) -> None:
    """
    Write ``dim,<N>`` followed by one ``index,value`` line per entry.

    Indices are written 1-based.  Complex vectors use ``index,real,imag``.
    """
    cplx = np.iscomplexobj(vec.values)
    with open(path, "w", newline="\n") as fh:
        fh.write(f"dim,{vec.dim}\n")
        for i, v in zip(vec.indices.tolist(), vec.values.tolist()):
            if cplx:
                fh.write(f"{i + 1},{v.real!r},{v.imag!r}\n")
            else:
                fh.write(f"{i + 1},{float(v)!r}\n")


def read_sparse_csv(path: str | os.PathLike) -> SparseVector:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if len(header) != 2 or header[0] != "dim":
            raise ValueError(f"{path}: missing 'dim,<N>' header")
        dim = int(header[1])
        idx, vals = [], []
        for lineno, line in enumerate(fh, 2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) == 2:
                vals.append(float(parts[1]))
            elif len(parts) == 3:
                vals.append(complex(float(parts[1]), float(parts[2])))
            else:
                raise ValueError(f"{path}:{lineno}: malformed entry {line!r}")
            i = int(parts[0])
            if not 1 <= i <= dim:
                raise ValueError(f"{path}:{lineno}: index {i} outside [1, {dim}]")
            idx.append(i - 1)
    if not idx:
        return SparseVector.zeros(dim)
    return SparseVector.from_pairs(dim, idx, vals)
