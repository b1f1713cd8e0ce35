"""Top eigenpairs of a finalized sketch and the relative gaps between them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

__all__ = ["EigenPair", "EigenError", "top_eigs", "relative_gaps", "write_eigpairs_csv", "read_eigpairs_csv"]


class EigenError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class EigenPair:
    value: float
    vector: np.ndarray
    index: int


def _fix_phase(V: np.ndarray) -> np.ndarray:
    """Scale each column so its largest-magnitude entry is positive real."""
    k = np.argmax(np.abs(V), axis=0)
    piv = V[k, np.arange(V.shape[1])]
    return V * (np.abs(piv) / piv)[None, :]


def top_eigs(sketch, ell: int, tol: float = 1e-10) -> list[EigenPair]:
    """
    The ``ell`` largest eigenpairs of a finalized Hermitian sketch, descending.

    A full decomposition (Householder tridiagonalization + implicit QL/QR) is
    used when every pair is requested; otherwise only the top ``ell`` pairs of
    the tridiagonal form are extracted.  Each pair must satisfy
    ``||Q v - lam v|| <= tol * ||Q||_F``.
    """
    if not getattr(sketch, "finalized", False):
        raise ValueError("sketch must be finalized before eigendecomposition")
    Q = sketch.data
    m = Q.shape[0]
    if not 1 <= ell <= m:
        raise ValueError(f"ell={ell} outside [1, {m}]")
    if ell == m:
        w, V = la.eigh(Q, driver="ev")
    else:
        w, V = la.eigh(Q, driver="evr", subset_by_index=[m - ell, m - 1])
    w = w[::-1]
    V = _fix_phase(V[:, ::-1])
    scale = np.linalg.norm(Q)
    resid = np.linalg.norm(Q @ V - V * w[None, :], axis=0)
    worst = int(np.argmax(resid))
    if resid[worst] > tol * scale:
        raise EigenError(
            f"eigenpair {worst + 1} residual {resid[worst]:.3e} exceeds {tol:.1e} * ||Q||_F"
        )
    return [EigenPair(float(w[k]), V[:, k].copy(), k + 1) for k in range(ell)]


def relative_gaps(pairs) -> list[float]:
    """g_j = (lam_j - lam_{j+1}) / lam_j for consecutive pairs."""
    vals = [p.value if isinstance(p, EigenPair) else float(p) for p in pairs]
    if len(vals) < 2:
        raise ValueError("need at least two eigenvalues")
    gaps = []
    for j in range(len(vals) - 1):
        if vals[j] <= 0:
            raise ZeroDivisionError(f"eigenvalue {j + 1} is not positive ({vals[j]})")
        gaps.append((vals[j] - vals[j + 1]) / vals[j])
    return gaps


def write_eigpairs_csv(path, pairs) -> None:
    """One line per pair: rank, eigenvalue, then the vector entries."""
    with open(path, "w", newline="\n") as fh:
        for p in pairs:
            vec = p.vector
            if np.iscomplexobj(vec):
                cells = [repr(complex(v)) for v in vec]
            else:
                cells = [repr(float(v)) for v in vec]
            fh.write(",".join([str(p.index), repr(float(p.value))] + cells) + "\n")


def read_eigpairs_csv(path) -> list[EigenPair]:
    pairs = []
    with open(path) as fh:
        for line in fh:
            cells = line.strip().split(",")
            if len(cells) < 3:
                continue
            try:
                vec = np.array([float(c) for c in cells[2:]])
            except ValueError:
                vec = np.array([complex(c) for c in cells[2:]])
            pairs.append(EigenPair(float(cells[1]), vec, int(cells[0])))
    return pairs
