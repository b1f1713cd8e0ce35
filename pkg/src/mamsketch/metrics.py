"""
Sign/phase-aligned errors and per-trial experiment bookkeeping.

All eigenvectors involved are unit norm, so the relative errors reported in
experiments coincide with the absolute errors computed here.
"""
from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import asdict, dataclass

import numpy as np

from .decode import beta_m
from .measure import CoherentEnsemble
from .sparse import SparseVector

__all__ = [
    "ErrorRecord",
    "aligned_error",
    "evaluate_trial",
    "aggregate",
    "write_trial_csv",
    "write_aggregate_csv",
    "subspace_distortion",
    "sublinear_error_bound",
]


@dataclass(frozen=True)
class ErrorRecord:
    trial: int
    j: int
    pre_inversion_err: float
    post_inversion_err: float
    beta: float
    sign: float


def _is_complex(x) -> bool:
    return np.iscomplexobj(x.values if isinstance(x, SparseVector) else x)


def aligned_error(a, b) -> tuple[float, complex | float]:
    """
    min over unit scalars c of ||a - c b||, and the minimizing c.

    Real inputs minimize over c in {+1, -1} (ties go to +1); complex inputs use
    the closed-form optimal phase c = <b, a> / |<b, a>|.  Accepts two dense
    vectors or two SparseVectors.
    """
    sparse = isinstance(a, SparseVector)
    if sparse != isinstance(b, SparseVector):
        raise TypeError("pass two dense vectors or two SparseVectors")
    if sparse:
        if a.dim != b.dim:
            raise ValueError(f"length mismatch: {a.dim} vs {b.dim}")
        dist = lambda c: a.sub(b.scaled(c)).norm()  # noqa: E731
        inner = b.dot(a)
    else:
        a, b = np.asarray(a), np.asarray(b)
        if a.shape != b.shape:
            raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
        dist = lambda c: float(np.linalg.norm(a - c * b))  # noqa: E731
        inner = np.vdot(b, a)
    if _is_complex(a) or _is_complex(b):
        c = inner / abs(inner) if inner != 0 else 1.0 + 0j
        return dist(c), complex(c)
    plus, minus = dist(1.0), dist(-1.0)
    return (plus, 1.0) if plus <= minus else (minus, -1.0)


def evaluate_trial(gt, pairs, decodes, ens, s: int, trial: int = 0) -> list[ErrorRecord]:
    """
    Pre- and post-inversion errors for each recovered eigenvector.

    ``pairs[j]`` is the j-th eigenpair of the sketch and ``decodes[j]`` the
    sparse vector decoded from it.  beta is evaluated on the measurement
    residual ũ_j - sign * M u_j (NaN for non-coherent ensembles or a zero
    residual).
    """
    if len(decodes) < len(pairs):
        raise ValueError(f"{len(pairs)} eigenpairs but only {len(decodes)} decodes")
    if len(pairs) > len(gt.eigvecs):
        raise ValueError("more eigenpairs than ground-truth eigenvectors")
    out = []
    for k, pair in enumerate(pairs):
        u = gt.eigvecs[k]
        Mu = ens.apply(u)
        pre, sign = aligned_error(pair.vector, Mu)
        resid = pair.vector - sign * Mu
        beta = math.nan
        if isinstance(ens, CoherentEnsemble) and np.any(resid):
            beta = beta_m(ens, resid, s)
        post, _ = aligned_error(u, decodes[k])
        out.append(ErrorRecord(trial, k + 1, pre, post, beta, sign))
    return out


def aggregate(records_by_x) -> list[dict]:
    """
    Mean errors per (x, j) over trials.

    ``records_by_x`` maps a swept parameter value to the ErrorRecords of all
    its trials.
    """
    rows = []
    for x in records_by_x:
        per_j = defaultdict(list)
        for rec in records_by_x[x]:
            per_j[rec.j].append(rec)
        for j in sorted(per_j):
            recs = per_j[j]
            rows.append(
                {
                    "x": x,
                    "j": j,
                    "mean_pre_err": float(np.mean([r.pre_inversion_err for r in recs])),
                    "mean_post_err": float(np.mean([r.post_inversion_err for r in recs])),
                    "mean_beta": float(np.mean([r.beta for r in recs])),
                }
            )
    return rows


def write_trial_csv(path, records_by_x) -> None:
    fields = ["x"] + list(ErrorRecord.__dataclass_fields__)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for x, recs in records_by_x.items():
            for rec in recs:
                row = asdict(rec)
                row["x"] = x
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def write_aggregate_csv(path, rows) -> None:
    fields = ["x", "j", "mean_pre_err", "mean_post_err", "mean_beta"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def subspace_distortion(ens, vecs) -> float:
    """
    Smallest eps for which M is an eps-JL map of span(vecs).

    Computed exactly from the extreme singular values of M U, U an orthonormal
    basis of the span (dense in N; keep N moderate).
    """
    U = np.column_stack([v.to_dense() if isinstance(v, SparseVector) else np.asarray(v) for v in vecs])
    Qb, _ = np.linalg.qr(U)
    MU = np.column_stack([ens.apply(Qb[:, k]) for k in range(Qb.shape[1])])
    sv = np.linalg.svd(MU, compute_uv=False)
    return float(max(sv[0] ** 2 - 1.0, 1.0 - sv[-1] ** 2))


def sublinear_error_bound(u: SparseVector, s: int, ens, noise) -> float:
    """
    ||u - u_2s||_2 + 6(1+sqrt 2)(||u - u_s||_1 / sqrt s + beta_m(n) ||n||_2).

    The right-hand side of the sublinear decoder guarantee for measurements
    M u + n; beta_m(n) ||n||_2 equals sqrt(s K L) ||n||_inf.
    """
    tail2 = u.sub(u.best_s_term(2 * s)).norm(2)
    tail1 = u.sub(u.best_s_term(s)).norm(1)
    noise = np.asarray(noise)
    noise_term = 0.0
    if np.any(noise):
        noise_term = beta_m(ens, noise, s) * float(np.linalg.norm(noise))
    return tail2 + 6 * (1 + math.sqrt(2)) * (tail1 / math.sqrt(s) + noise_term)
