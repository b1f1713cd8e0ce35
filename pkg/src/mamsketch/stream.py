"""
One-pass accumulation of the m x m sketch Q = M A M^*.

Three input shapes are supported: (row, col, value) entry streams, column
streams, and low-rank factor lists A = sum_j w_j u_j u_j^*.  Partial sketches of
disjoint stream shards can be summed with ``merge_sketches``.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .measure import ensemble_from_descriptor, parse_keyvalue
from .sparse import SparseVector

__all__ = [
    "Sketch",
    "StreamError",
    "sketch_entries",
    "sketch_entry_chunks",
    "sketch_columns",
    "sketch_lowrank",
    "finalize",
    "merge_sketches",
    "ENTRY_DTYPE",
    "read_entries_csv",
    "read_entries_binary",
    "write_entries_csv",
    "write_entries_binary",
    "columns_from_entries",
    "write_sketch",
    "read_sketch",
]

ENTRY_DTYPE = np.dtype([("row", "<u8"), ("col", "<u8"), ("value", "<f8")])
SKETCH_MAGIC = "MAMSKETCH 1"


class StreamError(ValueError):
    pass


@dataclass
class Sketch:
    m: int
    data: np.ndarray
    ensemble_ref: str
    entries_seen: int = 0
    hermitian_defect: float | None = None
    finalized: bool = False
    compensated: bool = False
    _comp: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def empty(cls, ens, dtype=float, compensated=False) -> "Sketch":
        data = np.zeros((ens.m, ens.m), dtype=dtype)
        comp = np.zeros_like(data) if compensated else None
        return cls(ens.m, data, ens.descriptor(), compensated=compensated, _comp=comp)

    def ensemble(self):
        return ensemble_from_descriptor(self.ensemble_ref)

    def _promote(self, dtype):
        if np.result_type(self.data, dtype) != self.data.dtype:
            self.data = self.data.astype(np.result_type(self.data, dtype))
            if self._comp is not None:
                self._comp = self._comp.astype(self.data.dtype)

    def add_dense(self, delta: np.ndarray) -> None:
        self._promote(delta.dtype)
        if self._comp is None:
            self.data += delta
            return
        y = delta - self._comp
        t = self.data + y
        self._comp = (t - self.data) - y
        self.data = t

    def add_coo(self, r, c, v) -> None:
        """Add values at unique (r, c) positions."""
        self._promote(v.dtype)
        if self._comp is None:
            self.data[r, c] += v
            return
        y = v - self._comp[r, c]
        old = self.data[r, c]
        t = old + y
        self._comp[r, c] = (t - old) - y
        self.data[r, c] = t


def _check_chunk(rows, cols, vals, N, offset):
    bad = (rows < 0) | (rows >= N) | (cols < 0) | (cols >= N)
    if bad.any():
        k = int(np.argmax(bad))
        raise StreamError(
            f"entry {offset + k}: index ({int(rows[k])}, {int(cols[k])}) outside [0, {N})"
        )
    fin = np.isfinite(vals)
    if not fin.all():
        k = int(np.argmin(fin))
        raise StreamError(f"entry {offset + k}: non-finite value {vals[k]!r}")


def _accumulate_chunk(sk: Sketch, ens, rows, cols, vals) -> None:
    U, inv = np.unique(np.concatenate([rows, cols]), return_inverse=True)
    n = rows.size
    A = sp.csr_matrix((vals, (inv[:n], inv[n:])), shape=(U.size, U.size))
    B = ens.column_block(U)
    if sp.issparse(B):
        P = (B @ A @ B.T).tocoo()
        P.sum_duplicates()
        sk.add_coo(P.row, P.col, P.data)
    else:
        sk.add_dense(B @ (A @ B.T))


def sketch_entry_chunks(ens, chunks, compensated=False) -> Sketch:
    """
    Accumulate ``sum a_jk m_j m_k^*`` over chunks of (rows, cols, values) arrays.

    Indices are 0-based.  Repeated (row, col) pairs are summed.
    """
    sk = Sketch.empty(ens, compensated=compensated)
    seen = 0
    for rows, cols, vals in chunks:
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals)
        _check_chunk(rows, cols, vals, ens.N, seen)
        if rows.size:
            _accumulate_chunk(sk, ens, rows, cols, vals)
        seen += rows.size
    sk.entries_seen = seen
    return sk


def _batched(iterable, n):
    it = iter(iterable)
    while batch := list(itertools.islice(it, n)):
        yield batch


def sketch_entries(ens, triples, chunk: int = 65536, compensated=False) -> Sketch:
    """One pass over an iterable of 0-based ``(row, col, value)`` triples."""

    def chunks():
        for batch in _batched(triples, chunk):
            r, c, v = zip(*batch)
            yield np.array(r, dtype=np.int64), np.array(c, dtype=np.int64), np.array(v)

    return sketch_entry_chunks(ens, chunks(), compensated=compensated)


def _as_column(a, N):
    if isinstance(a, SparseVector):
        if a.dim != N:
            raise StreamError(f"column dimension {a.dim} != N = {N}")
        return a
    a = np.asarray(a)
    if a.shape != (N,):
        raise StreamError(f"column has shape {a.shape}, expected ({N},)")
    return a


def sketch_columns(ens, columns, batch: int = 256, compensated=False) -> Sketch:
    """
    One pass over ``(j, a_j)`` pairs, a_j the j-th column of A (dense or SparseVector).

    Each column contributes the rank-one update (M a_j) m_j^*.
    """
    sk = Sketch.empty(ens, compensated=compensated)
    seen = 0
    for group in _batched(columns, batch):
        js = np.array([j for j, _ in group], dtype=np.int64)
        if js.size and (js.min() < 0 or js.max() >= ens.N):
            k = int(np.argmax((js < 0) | (js >= ens.N)))
            raise StreamError(f"column {seen + k}: index {int(js[k])} outside [0, {ens.N})")
        qs = []
        for k, (_, a) in enumerate(group):
            a = _as_column(a, ens.N)
            vals = a.values if isinstance(a, SparseVector) else a
            if not np.all(np.isfinite(vals)):
                raise StreamError(f"column {seen + k}: non-finite value")
            qs.append(ens.apply(a))
        Qb = np.column_stack(qs)
        B = ens.column_block(js)
        if sp.issparse(B):
            delta = np.asarray((B @ Qb.T).T)
        else:
            delta = Qb @ B.T
        sk.add_dense(delta)
        seen += js.size
    sk.entries_seen = seen
    return sk


def sketch_lowrank(ens, factors) -> Sketch:
    """Sketch of A = sum_j w_j u_j u_j^* computed as sum_j w_j (M u_j)(M u_j)^*."""
    cols = []
    seen = 0
    for w, u in factors:
        if w < 0:
            raise ValueError(f"negative factor weight {w}")
        if not np.isfinite(w):
            raise ValueError("non-finite factor weight")
        cols.append(np.sqrt(w) * ens.apply(u))
        seen += u.nnz if isinstance(u, SparseVector) else int(np.count_nonzero(u))
    sk = Sketch.empty(ens)
    if cols:
        Y = np.column_stack(cols)
        sk.add_dense(Y @ Y.conj().T)
    sk.entries_seen = seen
    return sk


def finalize(sketch: Sketch) -> Sketch:
    """Record the Hermitian defect and replace the data by (Q + Q^*) / 2."""
    Q = sketch.data
    QH = Q.conj().T
    defect = float(np.max(np.abs(Q - QH))) if Q.size else 0.0
    return replace(
        sketch,
        data=(Q + QH) / 2,
        hermitian_defect=defect,
        finalized=True,
        _comp=None,
    )


def merge_sketches(sketches) -> Sketch:
    """Sum partial sketches taken over disjoint shards of one stream."""
    sketches = list(sketches)
    if not sketches:
        raise ValueError("nothing to merge")
    ref = sketches[0].ensemble_ref
    if any(s.ensemble_ref != ref for s in sketches):
        raise ValueError("sketches were taken with different ensembles")
    if any(s.finalized for s in sketches):
        raise ValueError("merge partial sketches before finalizing")
    out = Sketch(sketches[0].m, np.zeros_like(sketches[0].data), ref)
    for s in sketches:
        out.add_dense(s.data)
        out.entries_seen += s.entries_seen
    return out


# ---------------------------------------------------------------------------
# entry stream files (1-based indices on disk)


def read_entries_csv(path, chunk: int = 65536):
    """Yield 0-based (rows, cols, values) chunks from a ``row,col,value`` CSV file."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        r, c, v = [], [], []
        for rec in reader:
            lineno = reader.line_num
            if not rec or rec[0].lstrip().startswith("#"):
                continue
            if lineno == 1 and rec[0].strip().lower() == "row":
                continue
            if len(rec) != 3:
                raise StreamError(f"{path}:{lineno}: expected row,col,value")
            try:
                r.append(int(rec[0]) - 1)
                c.append(int(rec[1]) - 1)
                v.append(float(rec[2]))
            except ValueError as exc:
                raise StreamError(f"{path}:{lineno}: {exc}") from None
            if len(r) >= chunk:
                yield np.array(r, np.int64), np.array(c, np.int64), np.array(v)
                r, c, v = [], [], []
        if r:
            yield np.array(r, np.int64), np.array(c, np.int64), np.array(v)


def read_entries_binary(path, chunk: int = 1 << 20):
    """Yield 0-based chunks from little-endian (u64 row, u64 col, f64 value) records."""
    with open(path, "rb") as fh:
        while True:
            buf = fh.read(chunk * ENTRY_DTYPE.itemsize)
            if not buf:
                break
            if len(buf) % ENTRY_DTYPE.itemsize:
                raise StreamError(f"{path}: truncated record at end of file")
            rec = np.frombuffer(buf, dtype=ENTRY_DTYPE)
            rows = rec["row"].astype(np.int64) - 1
            cols = rec["col"].astype(np.int64) - 1
            yield rows, cols, rec["value"].astype(np.float64)


def write_entries_csv(path, rows, cols, vals) -> None:
    with open(path, "w", newline="\n") as fh:
        for r, c, v in zip(np.asarray(rows).tolist(), np.asarray(cols).tolist(), np.asarray(vals).tolist()):
            fh.write(f"{r + 1},{c + 1},{v!r}\n")


def write_entries_binary(path, rows, cols, vals) -> None:
    rec = np.empty(len(rows), dtype=ENTRY_DTYPE)
    rec["row"] = np.asarray(rows, dtype=np.int64) + 1
    rec["col"] = np.asarray(cols, dtype=np.int64) + 1
    rec["value"] = vals
    rec.tofile(path)


def columns_from_entries(chunks, N):
    """
    Regroup a column-ordered entry stream into ``(j, SparseVector)`` columns.

    Entries of one column must be contiguous; a column that reappears after
    another has started is an error (it would need a second pass).
    """
    done = set()
    cur, idx, val = None, [], []
    pos = 0
    for rows, cols, vals in chunks:
        for r, c, v in zip(rows.tolist(), cols.tolist(), vals.tolist()):
            if c != cur:
                if cur is not None:
                    done.add(cur)
                    yield cur, SparseVector.from_pairs(N, idx, val)
                if c in done:
                    raise StreamError(f"entry {pos}: column {c + 1} is not contiguous")
                if not (0 <= r < N and 0 <= c < N):
                    raise StreamError(f"entry {pos}: index ({r + 1}, {c + 1}) outside [1, {N}]")
                cur, idx, val = c, [], []
            if not 0 <= r < N:
                raise StreamError(f"entry {pos}: row {r + 1} outside [1, {N}]")
            idx.append(r)
            val.append(v)
            pos += 1
    if cur is not None:
        yield cur, SparseVector.from_pairs(N, idx, val)


# ---------------------------------------------------------------------------
# sketch files


def write_sketch(path, sketch: Sketch) -> None:
    """Text header (m, bookkeeping, ensemble descriptor), ``END``, then row-major data."""
    cplx = np.iscomplexobj(sketch.data)
    header = [
        SKETCH_MAGIC,
        f"m={sketch.m}",
        f"dtype={'c16' if cplx else 'f8'}",
        f"entries_seen={sketch.entries_seen}",
        f"finalized={int(sketch.finalized)}",
        f"hermitian_defect={sketch.hermitian_defect!r}" if sketch.hermitian_defect is not None else "hermitian_defect=",
    ]
    header += ["ensemble." + line for line in sketch.ensemble_ref.strip().splitlines()]
    header.append("END")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(sketch.data, dtype="<c16" if cplx else "<f8").tobytes())


def read_sketch(path) -> Sketch:
    with open(path, "rb") as fh:
        first = fh.readline().decode("ascii").strip()
        if first != SKETCH_MAGIC:
            raise StreamError(f"{path}: not a sketch file")
        lines = []
        while True:
            line = fh.readline()
            if not line:
                raise StreamError(f"{path}: header not terminated")
            line = line.decode("ascii").strip()
            if line == "END":
                break
            lines.append(line)
        blob = fh.read()
    kv = parse_keyvalue("\n".join(lines))
    m = int(kv["m"])
    dtype = "<c16" if kv["dtype"] == "c16" else "<f8"
    data = np.frombuffer(blob, dtype=dtype)
    if data.size != m * m:
        raise StreamError(f"{path}: expected {m * m} values, found {data.size}")
    ens_lines = [f"{k[len('ensemble.'):]}={v}" for k, v in kv.items() if k.startswith("ensemble.")]
    defect = kv.get("hermitian_defect", "")
    return Sketch(
        m=m,
        data=data.reshape(m, m).astype(dtype[1:]),
        ensemble_ref="\n".join(ens_lines) + "\n",
        entries_seen=int(kv.get("entries_seen", 0)),
        hermitian_defect=float(defect) if defect else None,
        finalized=kv.get("finalized") == "1",
    )
