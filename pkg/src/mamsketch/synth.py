"""
Random low-rank PSD test matrices with sparse eigenvectors, kept in factored form.

A = sum_j c q^j u_j u_j^T where each u_j is built from s random support
indices (drawn with replacement) carrying standard normal values, then
l2-normalized.  The u_j are not orthogonalized.
"""
from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .measure import parse_keyvalue
from .sparse import SparseVector, read_sparse_csv, write_sparse_csv

__all__ = [
    "TestMatrixSpec",
    "GroundTruth",
    "generate",
    "orthogonality_report",
    "lowrank_entries",
    "write_ground_truth",
    "read_ground_truth",
]


@dataclass(frozen=True)
class TestMatrixSpec:
    __test__ = False  # not a pytest class

    N: int
    r: int
    s: int
    decay: float = 0.5
    scale: float = 1.0
    seed: int = 0
    disjoint: bool = False

    def __post_init__(self):
        if self.N < 1 or self.r < 1 or self.s < 1:
            raise ValueError("N, r and s must be positive")
        if not 0 < self.decay < 1:
            raise ValueError("decay must lie in (0, 1)")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.disjoint and self.r * self.s > self.N:
            raise ValueError("disjoint supports need r*s <= N")
        if self.r * self.s > self.N:
            warnings.warn(f"r*s = {self.r * self.s} exceeds N = {self.N}; supports will collide heavily")


@dataclass(frozen=True, eq=False)
class GroundTruth:
    eigvals: list[float]
    eigvecs: list[SparseVector]
    spec: TestMatrixSpec | None = field(default=None, compare=False)

    @property
    def N(self) -> int:
        return self.eigvecs[0].dim

    def factors(self):
        return list(zip(self.eigvals, self.eigvecs))

    def to_dense(self) -> np.ndarray:
        U = np.column_stack([u.to_dense() for u in self.eigvecs])
        return (U * np.asarray(self.eigvals)[None, :]) @ U.conj().T


def _draw_vector(rng, N, s, disjoint_pool=None):
    while True:
        if disjoint_pool is not None:
            supp = disjoint_pool
        else:
            supp = rng.integers(0, N, size=s)
        vals = rng.standard_normal(s)
        u = SparseVector.from_pairs(N, supp, vals)
        nrm = u.norm()
        if nrm > 0:
            return u.scaled(1.0 / nrm)


def generate(spec: TestMatrixSpec) -> GroundTruth:
    """Draw the r sparse unit eigenvectors and the eigenvalues c q^j, j = 1..r."""
    rng = np.random.default_rng(spec.seed)
    r, s, N = spec.r, spec.s, spec.N
    if spec.disjoint:
        supports = rng.choice(N, size=r * s, replace=False)
    else:
        supports = rng.integers(0, N, size=r * s)
    values = rng.standard_normal(r * s)
    vecs = []
    for j in range(r):
        sl = slice(j * s, (j + 1) * s)
        u = SparseVector.from_pairs(N, supports[sl], values[sl])
        nrm = u.norm()
        if nrm == 0:
            # duplicate indices cancelled exactly; redraw this vector
            u = _draw_vector(rng, N, s, supports[sl] if spec.disjoint else None)
        else:
            u = u.scaled(1.0 / nrm)
        vecs.append(u)
    eigvals = [spec.scale * spec.decay**j for j in range(1, r + 1)]
    return GroundTruth(eigvals, vecs, spec)


def orthogonality_report(gt: GroundTruth) -> float:
    """Largest |<u_i, u_j>| over distinct pairs, computed on the supports."""
    worst = 0.0
    vecs = gt.eigvecs
    for i in range(len(vecs)):
        for j in range(i + 1, len(vecs)):
            worst = max(worst, abs(vecs[i].dot(vecs[j])))
    return float(worst)


def lowrank_entries(gt: GroundTruth):
    """
    Nonzero entries of A = sum_j lam_j u_j u_j^* as 0-based (rows, cols, vals).

    Entries are ordered by column, then row, so the result can also be replayed
    as a column stream.  Only the union of the supports is touched.
    """
    rows, cols, vals = [], [], []
    for lam, u in gt.factors():
        i, j = np.meshgrid(u.indices, u.indices, indexing="ij")
        rows.append(i.ravel())
        cols.append(j.ravel())
        vals.append(lam * np.outer(u.values, u.values.conj()).ravel())
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(gt.N, gt.N)
    ).tocsc()
    A.sum_duplicates()
    A.eliminate_zeros()
    A.sort_indices()
    coo = A.tocoo()
    return coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data


def write_ground_truth(directory, gt: GroundTruth) -> Path:
    """Write one sparse CSV per eigenvector and a key=value ``manifest.txt``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lines = [f"N={gt.N}", f"r={len(gt.eigvecs)}"]
    if gt.spec is not None:
        sp_ = gt.spec
        lines += [f"s={sp_.s}", f"decay={sp_.decay!r}", f"scale={sp_.scale!r}", f"seed={sp_.seed}"]
        lines.append(f"disjoint={int(sp_.disjoint)}")
    for j, (lam, u) in enumerate(gt.factors(), 1):
        name = f"u_{j:03d}.csv"
        write_sparse_csv(d / name, u)
        lines.append(f"eigval.{j}={lam!r}")
        lines.append(f"eigvec.{j}={name}")
    (d / "manifest.txt").write_text("\n".join(lines) + "\n")
    return d / "manifest.txt"


def read_ground_truth(path: str | os.PathLike) -> GroundTruth:
    """Load from a directory holding ``manifest.txt`` or from the manifest itself."""
    p = Path(path)
    if p.is_dir():
        p = p / "manifest.txt"
    kv = parse_keyvalue(p.read_text())
    r = int(kv["r"])
    vals, vecs = [], []
    for j in range(1, r + 1):
        vals.append(float(kv[f"eigval.{j}"]))
        vecs.append(read_sparse_csv(p.parent / kv[f"eigvec.{j}"]))
    spec = None
    if "s" in kv:
        spec = TestMatrixSpec(
            N=int(kv["N"]),
            r=r,
            s=int(kv["s"]),
            decay=float(kv["decay"]),
            scale=float(kv["scale"]),
            seed=int(kv["seed"]),
            disjoint=kv.get("disjoint", "0") == "1",
        )
    return GroundTruth(vals, vecs, spec)
