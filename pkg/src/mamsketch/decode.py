"""
Compressive-sensing decoders that turn measurement vectors back into sparse vectors.

``decode_sublinear`` reads the bit-testing structure of a ``CoherentEnsemble``;
its cost depends on the number of rows of W, not on N.  ``decode_cosamp`` runs
CoSaMP against a ``HadamardEnsemble`` using only fast products with M and M^*.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .measure import (
    CoherentEnsemble,
    HadamardEnsemble,
    MeasurementVector,
    SizingWarning,
    apply_coherent,
)
from .sparse import SparseVector, read_sparse_csv, write_sparse_csv

__all__ = [
    "SparseVector",
    "DecodeReport",
    "DecodeError",
    "decode_sublinear",
    "decode_cosamp",
    "beta_m",
    "lower_median",
    "read_sparse_csv",
    "write_sparse_csv",
]


class DecodeError(ArithmeticError):
    pass


@dataclass(frozen=True)
class DecodeReport:
    candidates_scored: int
    medians_used: int
    residual_norm: float


def _data(y) -> np.ndarray:
    if isinstance(y, MeasurementVector):
        return y.data
    return np.asarray(y)


def lower_median(a: np.ndarray, axis=-1) -> np.ndarray:
    """Median along ``axis``; for an even count the lower of the two middle values."""
    a = np.sort(a, axis=axis)
    k = (a.shape[axis] - 1) // 2
    return np.take(a, k, axis=axis)


def _median_values(c: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(c):
        return lower_median(c.real) + 1j * lower_median(c.imag)
    return lower_median(c)


def _top_k(indices: np.ndarray, values: np.ndarray, k: int, dim: int) -> SparseVector:
    nz = values != 0
    indices, values = indices[nz], values[nz]
    if indices.size > k:
        order = np.lexsort((indices, -np.abs(values)))[:k]
        indices, values = indices[order], values[order]
    order = np.argsort(indices)
    return SparseVector(dim, indices[order], values[order])


def decode_sublinear(ens: CoherentEnsemble, y, s: int) -> tuple[SparseVector, DecodeReport]:
    """
    Recover a 2s-sparse estimate of u from y ~= M u for a coherent ensemble M.

    Every row w of W yields one candidate index from its bit-test pairs
    (bit set iff |bit measurement| > |complement measurement|).  A candidate is
    kept only if its own W column actually hits row w.  Each surviving index is
    then valued by the lower median, over its K rows of W, of the row-of-ones
    measurement with the scale and the sign D_jj undone.  The 2s entries of
    largest magnitude are returned.
    """
    y = _data(y)
    if y.shape != (ens.m,):
        raise ValueError(f"measurement length {y.shape} does not match m = {ens.m}")
    if s <= 0:
        raise ValueError("sparsity s must be positive")
    if ens.K < 4 * ens.d * s + 1:
        warnings.warn(
            f"K={ens.K} < 4*alpha*s+1 = {4 * ens.d * s + 1}; exact recovery not guaranteed",
            SizingWarning,
            stacklevel=2,
        )
    L, mw, q = ens.L, ens.m_w, ens.q
    Y = y.reshape(2 * L, mw)
    active = np.flatnonzero(np.any(Y != 0, axis=0))
    if active.size == 0:
        return SparseVector.zeros(ens.N), DecodeReport(0, ens.K, 0.0)

    cand = np.zeros(active.size, dtype=np.int64)
    for b in range(1, L):
        bit = np.abs(Y[b, active]) > np.abs(Y[L + b, active])
        cand |= bit.astype(np.int64) << (b - 1)

    x_eval = active // q
    ok = (cand < ens.N) & (x_eval < ens.K)
    cand, rows, x_eval = cand[ok], active[ok], x_eval[ok]
    if cand.size:
        hit = ens.w_rows(cand)[np.arange(cand.size), x_eval] == rows
        cand = cand[hit]
    uniq = np.unique(cand)
    if uniq.size == 0:
        return SparseVector.zeros(ens.N), DecodeReport(0, ens.K, float(np.linalg.norm(y)))

    R = ens.w_rows(uniq)
    est = Y[0, R] * (ens.signs(uniq)[:, None] / ens.scale)
    vals = _median_values(est)
    xhat = _top_k(uniq, vals, 2 * s, ens.N)
    resid = float(np.linalg.norm(y - apply_coherent(ens, xhat)))
    return xhat, DecodeReport(int(uniq.size), ens.K, resid)


def _cg_restricted(ens, y, T, maxiter, iteration):
    """Least squares min ||y - M_T z|| by CG on the normal equations."""

    def normal_op(z):
        v = np.zeros(ens.N, dtype=z.dtype)
        v[T] = z
        return ens.adjoint(ens.apply(v))[T]

    rhs = ens.adjoint(y)[T]
    z = np.zeros(T.size, dtype=rhs.dtype)
    r = rhs.copy()
    p = r.copy()
    rr = np.vdot(r, r).real
    stop = (1e-15 * np.linalg.norm(rhs)) ** 2
    for _ in range(maxiter):
        if rr <= stop:
            break
        Ap = normal_op(p)
        pAp = np.vdot(p, Ap).real
        if not np.isfinite(pAp) or pAp <= 1e-14 * np.vdot(p, p).real:
            raise DecodeError(f"singular least-squares subproblem at CoSaMP iteration {iteration}")
        a = rr / pAp
        z += a * p
        r -= a * Ap
        rr_new = np.vdot(r, r).real
        p = r + (rr_new / rr) * p
        rr = rr_new
    return z


def decode_cosamp(
    ens: HadamardEnsemble, y, s: int, eta: float = 1e-12, max_iters: int = 50
) -> SparseVector:
    """
    CoSaMP recovery of an s-sparse u from y ~= M u.

    Halts once the residual falls below ``eta * ||y||`` or stops improving by
    at least that much, or after ``max_iters`` iterations.
    """
    y = _data(y)
    if y.shape != (ens.m,):
        raise ValueError(f"measurement length {y.shape} does not match m = {ens.m}")
    if s <= 0:
        raise ValueError("sparsity s must be positive")
    if eta <= 0:
        raise ValueError("eta must be positive")
    if ens.m < 8 * s * math.log2(max(ens.N, 2)):
        warnings.warn(
            f"m={ens.m} < 8 s log2 N; RIP of order 4s is doubtful", SizingWarning, stacklevel=2
        )
    dtype = np.result_type(y, float)
    ynorm = float(np.linalg.norm(y))
    x_idx = np.empty(0, np.int64)
    x_val = np.empty(0, dtype)
    if ynorm == 0:
        return SparseVector.zeros(ens.N)
    r = y.astype(dtype, copy=True)
    rnorm = ynorm
    for it in range(1, max_iters + 1):
        proxy = ens.adjoint(r)
        omega = np.argpartition(-np.abs(proxy), min(2 * s, ens.N) - 1)[: 2 * s]
        T = np.union1d(omega, x_idx)
        z = _cg_restricted(ens, y, T, 3 * s, it)
        keep = np.sort(np.argpartition(-np.abs(z), min(s, T.size) - 1)[:s])
        new_idx, new_val = T[keep], z[keep]
        v = np.zeros(ens.N, dtype=dtype)
        v[new_idx] = new_val
        r_new = y - ens.apply(v)
        new_norm = float(np.linalg.norm(r_new))
        if new_norm <= rnorm:
            x_idx, x_val, r = new_idx, new_val, r_new
        if new_norm <= eta * ynorm or rnorm - new_norm < eta * ynorm:
            break
        rnorm = new_norm
    return SparseVector.from_pairs(ens.N, x_idx, x_val)


def beta_m(ens: CoherentEnsemble, n, s: int) -> float:
    """Flatness statistic ||n||_inf sqrt(s K (1 + ceil(log2 N))) / ||n||_2."""
    n = _data(n)
    n2 = float(np.linalg.norm(n))
    if n2 == 0:
        raise ValueError("beta_m is undefined for the zero vector")
    return float(np.max(np.abs(n))) * math.sqrt(s * ens.K * ens.L) / n2
