"""
Implicit structured measurement ensembles.

Two families are provided, neither of which is ever stored as a matrix:

* ``CoherentEnsemble``: M = (W ⊙ B'_N) D / sqrt(K (1 + ceil(log2 N))), where W is a
  Reed-Solomon style binary coherent matrix, B'_N the extended bit-testing matrix
  and D a Rademacher diagonal.  Columns are sparse and generated on demand from
  the column index alone.
* ``HadamardEnsemble``: M = sqrt(N_pad / m) R H D, a subsampled randomized
  Walsh-Hadamard transform with O(N log N) products and adjoint products.

Indices are 0-based throughout this module.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "CoherentParams",
    "HadamardParams",
    "CoherentEnsemble",
    "HadamardEnsemble",
    "MeasurementVector",
    "SizingWarning",
    "build_coherent",
    "build_hadamard",
    "coherent_params",
    "bit_test_matrix",
    "bit_test_rows",
    "coherent_column",
    "apply_coherent",
    "apply_hadamard",
    "adjoint_hadamard",
    "fwht",
    "rademacher",
    "is_prime",
    "next_prime",
    "ensemble_from_descriptor",
    "parse_keyvalue",
]


class SizingWarning(UserWarning):
    """Raised when an ensemble is too small for the guarantee it is used with."""


# ---------------------------------------------------------------------------
# small helpers


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


def next_prime(n: int) -> int:
    """Smallest prime >= n."""
    p = max(2, int(n))
    while not is_prime(p):
        p += 1
    return p


def ceil_log2(n: int) -> int:
    return (int(n) - 1).bit_length() if n > 1 else 0


_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _splitmix64(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * _MIX1
    z = z ^ (z >> np.uint64(27))
    z = z * _MIX2
    return z ^ (z >> np.uint64(31))


def rademacher(seed: int, idx) -> np.ndarray:
    """
    Counter-based Rademacher signs D_jj for the 0-based indices ``idx``.

    Each sign depends only on (seed, j), so any subset of the diagonal can be
    regenerated in any order without storing D.
    """
    j = np.asarray(idx, dtype=np.uint64)
    with np.errstate(over="ignore"):
        key = _splitmix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ _GOLDEN)
        z = _splitmix64(key + (j + np.uint64(1)) * _GOLDEN)
    return np.where(z >> np.uint64(63), -1.0, 1.0)


def parse_keyvalue(text: str) -> dict[str, str]:
    """Parse a flat ``key=value`` block; blank lines and ``#`` comments are skipped."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


# ---------------------------------------------------------------------------
# bit testing


def bit_test_rows(N: int) -> int:
    """Number of rows of B'_N, i.e. 2 (1 + ceil(log2 N))."""
    return 2 * (1 + ceil_log2(N))


def bit_test_matrix(N: int) -> np.ndarray:
    """
    Dense extended bit-testing matrix B'_N (small N only).

    Rows 0..L-1 form B_N: a row of ones followed by the bits of j (LSB first)
    for the 0-based column j.  Rows L..2L-1 hold the bitwise complement.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    L = 1 + ceil_log2(N)
    j = np.arange(N)
    B = np.zeros((L, N), dtype=np.int8)
    B[0] = 1
    for b in range(1, L):
        B[b] = (j >> (b - 1)) & 1
    return np.vstack([B, 1 - B])


def _bit_rows_of(js: np.ndarray, L: int) -> np.ndarray:
    """Rows of B'_N holding a one for each column in ``js``; shape (len(js), L)."""
    out = np.empty((js.size, L), dtype=np.int64)
    out[:, 0] = 0
    for b in range(1, L):
        bit = (js >> (b - 1)) & 1
        out[:, b] = np.where(bit == 1, b, L + b)
    return out


# ---------------------------------------------------------------------------
# coherent ensemble


@dataclass(frozen=True)
class CoherentParams:
    N: int
    K: int
    q: int
    d: int
    seed: int = 0
    s_max: int | None = None

    def __post_init__(self):
        if self.N < 1 or self.K < 1 or self.d < 1:
            raise ValueError("N, K and d must be positive")
        if not is_prime(self.q):
            raise ValueError(f"q={self.q} is not prime")
        if self.K > self.q:
            raise ValueError(f"K={self.K} exceeds field size q={self.q}")
        if self.q ** (self.d + 1) < self.N:
            raise ValueError(f"q^(d+1) = {self.q ** (self.d + 1)} < N = {self.N}")
        if self.s_max is not None and self.K < 4 * self.d * self.s_max + 1:
            warnings.warn(
                f"K={self.K} < 4*alpha*s+1 = {4 * self.d * self.s_max + 1}; "
                "sublinear recovery guarantee does not apply",
                SizingWarning,
                stacklevel=3,
            )

    @property
    def alpha(self) -> int:
        return self.d

    @property
    def m_w(self) -> int:
        return self.q * self.q

    @property
    def L(self) -> int:
        return 1 + ceil_log2(self.N)

    @property
    def m(self) -> int:
        return 2 * self.L * self.m_w


def coherent_params(N, K, seed=0, q=None, d=None, s_max=None) -> CoherentParams:
    """Fill in q (smallest prime >= K) and d (smallest with q^(d+1) >= N) when omitted."""
    if q is None:
        q = next_prime(K)
    if d is None:
        d = 1
        while q ** (d + 1) < N:
            d += 1
    return CoherentParams(N=int(N), K=int(K), q=int(q), d=int(d), seed=int(seed), s_max=s_max)


class CoherentEnsemble:
    """
    Implicit M = scale * (W ⊙ B'_N) D.

    Column j of W puts ones at rows x*q + P_j(x) for x = 0..K-1, where P_j is
    the polynomial over GF(q) whose coefficients are the base-q digits of j
    (least significant first).  Row (b, w) of the Khatri-Rao product lives at
    flat index b * m_w + w.
    """

    kind = "coherent"

    def __init__(self, params: CoherentParams, flip_seed: int | None = None):
        self.params = params
        self.flip_seed = flip_seed
        self.N = params.N
        self.K = params.K
        self.q = params.q
        self.d = params.d
        self.L = params.L
        self.m_w = params.m_w
        self.m = params.m
        self.scale = 1.0 / math.sqrt(self.K * self.L)
        self._powers = self.q ** np.arange(self.d + 1, dtype=np.int64)

    def __repr__(self):
        p = self.params
        return f"CoherentEnsemble(N={p.N}, K={p.K}, q={p.q}, d={p.d}, m={self.m})"

    def with_sign_flip(self, flip_seed: int) -> "CoherentEnsemble":
        """Same ensemble with D replaced by D' D, D' = rademacher(flip_seed)."""
        if self.flip_seed is not None:
            raise ValueError("ensemble already carries a sign flip")
        return CoherentEnsemble(self.params, flip_seed=flip_seed)

    def signs(self, js) -> np.ndarray:
        s = rademacher(self.params.seed, js)
        if self.flip_seed is not None:
            s = s * rademacher(self.flip_seed, js)
        return s

    def _check_cols(self, js) -> np.ndarray:
        js = np.atleast_1d(np.asarray(js, dtype=np.int64))
        if js.size and (js.min() < 0 or js.max() >= self.N):
            raise IndexError(f"column index out of range [0, {self.N})")
        return js

    def w_rows(self, js) -> np.ndarray:
        """Rows of W holding a one, shape (len(js), K)."""
        js = self._check_cols(js)
        q = self.q
        coeffs = (js[:, None] // self._powers[None, :]) % q
        x = np.arange(self.K, dtype=np.int64)
        val = np.zeros((js.size, self.K), dtype=np.int64)
        for k in range(self.d, -1, -1):
            val = (val * x[None, :] + coeffs[:, k : k + 1]) % q
        return x[None, :] * q + val

    def column_support(self, js) -> np.ndarray:
        """Flat row indices of the nonzeros of each column, shape (len(js), K*L)."""
        js = self._check_cols(js)
        wr = self.w_rows(js)
        br = _bit_rows_of(js, self.L)
        rows = br[:, :, None] * self.m_w + wr[:, None, :]
        return rows.reshape(js.size, -1)

    def columns(self, js) -> tuple[np.ndarray, np.ndarray]:
        """(rows, values) of the requested columns, each of shape (len(js), K*L)."""
        js = self._check_cols(js)
        rows = self.column_support(js)
        vals = np.repeat((self.scale * self.signs(js))[:, None], rows.shape[1], axis=1)
        return rows, vals

    def column_block(self, js) -> sp.csc_matrix:
        """Sparse m x len(js) block holding the requested columns."""
        js = self._check_cols(js)
        rows, vals = self.columns(js)
        nnz = rows.shape[1]
        indptr = np.arange(js.size + 1, dtype=np.int64) * nnz
        return sp.csc_matrix((vals.ravel(), rows.ravel(), indptr), shape=(self.m, js.size))

    def apply(self, v) -> np.ndarray:
        return apply_coherent(self, v)

    def adjoint(self, y) -> np.ndarray:
        """M^* y as a dense length-N vector (O(N K log N); small N only)."""
        y = np.asarray(y)
        if y.shape != (self.m,):
            raise ValueError(f"expected length {self.m}, got {y.shape}")
        out = np.zeros(self.N, dtype=np.result_type(y, float))
        for start in range(0, self.N, 4096):
            js = np.arange(start, min(self.N, start + 4096))
            rows, vals = self.columns(js)
            out[start : start + js.size] = (vals * y[rows]).sum(axis=1)
        return out

    def to_dense(self) -> np.ndarray:
        blk = self.column_block(np.arange(self.N))
        return blk.toarray()

    def descriptor(self) -> str:
        p = self.params
        lines = [
            "construction=coherent",
            f"N={p.N}",
            f"K={p.K}",
            f"q={p.q}",
            f"d={p.d}",
            f"seed={p.seed}",
        ]
        if self.flip_seed is not None:
            lines.append(f"flip_seed={self.flip_seed}")
        return "\n".join(lines) + "\n"


def build_coherent(params: CoherentParams) -> CoherentEnsemble:
    return CoherentEnsemble(params)


def coherent_column(ens: CoherentEnsemble, j: int) -> tuple[np.ndarray, np.ndarray]:
    """Sorted (row, value) pairs of column j (0-based) of M."""
    if not 0 <= j < ens.N:
        raise IndexError(f"column {j} out of range [0, {ens.N})")
    rows, vals = ens.columns([j])
    order = np.argsort(rows[0])
    return rows[0][order], vals[0][order]


def _nonzeros(v, N):
    """(indices, values) of a dense vector or SparseVector-like object of dimension N."""
    if hasattr(v, "indices") and hasattr(v, "values"):
        if v.dim != N:
            raise ValueError(f"vector dimension {v.dim} != N = {N}")
        return np.asarray(v.indices, dtype=np.int64), np.asarray(v.values)
    v = np.asarray(v)
    if v.shape != (N,):
        raise ValueError(f"expected length {N}, got shape {v.shape}")
    idx = np.flatnonzero(v)
    return idx, v[idx]


def apply_coherent(ens: CoherentEnsemble, v, chunk: int = 8192) -> np.ndarray:
    """M v, touching only the nonzeros of v (cost nnz(v) * K * L)."""
    idx, val = _nonzeros(v, ens.N)
    dtype = np.result_type(val, float)
    y = np.zeros(ens.m, dtype=dtype)
    for start in range(0, idx.size, chunk):
        js = idx[start : start + chunk]
        rows, cvals = ens.columns(js)
        w = (cvals * val[start : start + chunk, None]).ravel()
        r = rows.ravel()
        if np.iscomplexobj(w):
            y += np.bincount(r, weights=w.real, minlength=ens.m)
            y += 1j * np.bincount(r, weights=w.imag, minlength=ens.m)
        else:
            y += np.bincount(r, weights=w, minlength=ens.m)
    return y


# ---------------------------------------------------------------------------
# Hadamard ensemble


def fwht(x: np.ndarray) -> np.ndarray:
    """
    Orthonormal fast Walsh-Hadamard transform along the last axis.

    Length must be a power of two.  Natural (Sylvester) ordering, so the result
    equals ``x @ scipy.linalg.hadamard(n) / sqrt(n)``.
    """
    x = np.array(x, dtype=np.result_type(x, float), copy=True)
    n = x.shape[-1]
    if n & (n - 1):
        raise ValueError(f"length {n} is not a power of two")
    lead = x.shape[:-1]
    h = 1
    while h < n:
        y = x.reshape(*lead, n // (2 * h), 2, h)
        a = y[..., 0, :].copy()
        y[..., 0, :] += y[..., 1, :]
        y[..., 1, :] = a - y[..., 1, :]
        h *= 2
    return x / math.sqrt(n)


@dataclass(frozen=True)
class HadamardParams:
    N: int
    m: int
    seed: int = 0
    rows_seed: int = 0
    rows: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.N < 1 or self.m < 1:
            raise ValueError("N and m must be positive")
        rows = self.rows
        if rows is None:
            rng = np.random.default_rng(self.rows_seed)
            rows = rng.integers(0, self.N_pad, size=self.m)
        rows = np.asarray(rows, dtype=np.int64)
        if rows.shape != (self.m,) or rows.min() < 0 or rows.max() >= self.N_pad:
            raise ValueError("rows must be m indices in [0, N_pad)")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def N_pad(self) -> int:
        return 1 << ceil_log2(self.N)


class HadamardEnsemble:
    """Implicit M = sqrt(N_pad/m) R H D with H the orthonormal Walsh-Hadamard matrix."""

    kind = "hadamard"

    def __init__(self, params: HadamardParams):
        self.params = params
        self.N = params.N
        self.N_pad = params.N_pad
        self.m = params.m
        self.rows = params.rows
        self.scale = math.sqrt(self.N_pad / self.m)
        self.D = rademacher(params.seed, np.arange(self.N))

    def __repr__(self):
        return f"HadamardEnsemble(N={self.N}, N_pad={self.N_pad}, m={self.m})"

    def signs(self, js) -> np.ndarray:
        return self.D[np.asarray(js, dtype=np.int64)]

    def column_block(self, js) -> np.ndarray:
        """Dense m x len(js) block of columns of M."""
        js = np.atleast_1d(np.asarray(js, dtype=np.int64))
        if js.size and (js.min() < 0 or js.max() >= self.N):
            raise IndexError(f"column index out of range [0, {self.N})")
        par = np.bitwise_count(self.rows[:, None] & js[None, :]) & 1
        H = np.where(par == 1, -1.0, 1.0) / math.sqrt(self.N_pad)
        return self.scale * H * self.D[js][None, :]

    def apply(self, v) -> np.ndarray:
        return apply_hadamard(self, v)

    def adjoint(self, y) -> np.ndarray:
        return adjoint_hadamard(self, y)

    def to_dense(self) -> np.ndarray:
        return self.column_block(np.arange(self.N))

    def descriptor(self) -> str:
        p = self.params
        return (
            "construction=hadamard\n"
            f"N={p.N}\nN_pad={p.N_pad}\nm={p.m}\nseed={p.seed}\nrows_seed={p.rows_seed}\n"
        )


def build_hadamard(params: HadamardParams) -> HadamardEnsemble:
    return HadamardEnsemble(params)


def apply_hadamard(ens: HadamardEnsemble, v) -> np.ndarray:
    idx, val = _nonzeros(v, ens.N)
    x = np.zeros(ens.N_pad, dtype=np.result_type(val, float))
    x[idx] = val * ens.D[idx]
    return ens.scale * fwht(x)[ens.rows]


def adjoint_hadamard(ens: HadamardEnsemble, y) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (ens.m,):
        raise ValueError(f"expected length {ens.m}, got shape {y.shape}")
    z = np.zeros(ens.N_pad, dtype=np.result_type(y, float))
    np.add.at(z, ens.rows, y)
    return ens.scale * ens.D * fwht(z)[: ens.N]


# ---------------------------------------------------------------------------


@dataclass
class MeasurementVector:
    data: np.ndarray
    ensemble_id: str = ""

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 1:
            raise ValueError("measurement data must be one-dimensional")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("measurement data must be finite")

    def __len__(self):
        return self.data.size


def ensemble_from_descriptor(text: str):
    """Rebuild an ensemble from the key=value block written by ``descriptor()``."""
    kv = parse_keyvalue(text)
    kind = kv.get("construction")
    if kind == "coherent":
        params = CoherentParams(
            N=int(kv["N"]), K=int(kv["K"]), q=int(kv["q"]), d=int(kv["d"]), seed=int(kv["seed"])
        )
        ens = CoherentEnsemble(params)
        if "flip_seed" in kv:
            ens = ens.with_sign_flip(int(kv["flip_seed"]))
        return ens
    if kind == "hadamard":
        params = HadamardParams(
            N=int(kv["N"]), m=int(kv["m"]), seed=int(kv["seed"]), rows_seed=int(kv["rows_seed"])
        )
        if "N_pad" in kv and int(kv["N_pad"]) != params.N_pad:
            raise ValueError("descriptor N_pad inconsistent with N")
        return HadamardEnsemble(params)
    raise ValueError(f"unknown construction {kind!r}")
