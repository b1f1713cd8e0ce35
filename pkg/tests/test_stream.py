import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mamsketch.measure import HadamardEnsemble, HadamardParams, build_coherent, coherent_params
from mamsketch.sparse import SparseVector
from mamsketch.stream import (
    Sketch,
    StreamError,
    columns_from_entries,
    finalize,
    merge_sketches,
    read_entries_binary,
    read_entries_csv,
    read_sketch,
    sketch_columns,
    sketch_entries,
    sketch_entry_chunks,
    sketch_lowrank,
    write_entries_binary,
    write_entries_csv,
    write_sketch,
)

from oracles import dense_coherent_oracle


def rel_fro(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


@pytest.fixture(scope="module")
def ens64():
    return build_coherent(coherent_params(64, 5, seed=21, q=5, d=2))


@pytest.fixture(scope="module")
def M64(ens64):
    return dense_coherent_oracle(ens64)


def random_psd(rng, N, rank=None):
    G = rng.standard_normal((N, rank or N))
    return G @ G.T


def triples_of(A):
    r, c = np.nonzero(A)
    return list(zip(r.tolist(), c.tolist(), A[r, c].tolist()))


def test_entries_match_dense(ens64, M64, rng):
    A = random_psd(rng, 64)
    sk = sketch_entries(ens64, triples_of(A), chunk=500)
    assert rel_fro(sk.data, M64 @ A @ M64.T) <= 1e-10
    assert sk.entries_seen == 64 * 64


def test_columns_match_entries(ens64, M64, rng):
    A = random_psd(rng, 64, 5)
    cols = [(j, A[:, j]) for j in range(64)]
    sk = sketch_columns(ens64, cols, batch=7)
    ref = sketch_entries(ens64, triples_of(A))
    assert rel_fro(sk.data, ref.data) <= 1e-10
    assert rel_fro(sk.data, M64 @ A @ M64.T) <= 1e-10


def test_lowrank_matches_entries(ens64, M64, rng):
    vecs = [SparseVector.from_dense(rng.standard_normal(64) * (rng.random(64) < 0.3)) for _ in range(3)]
    w = [0.5, 0.25, 0.125]
    A = sum(wi * np.outer(v.to_dense(), v.to_dense()) for wi, v in zip(w, vecs))
    sk = sketch_lowrank(ens64, list(zip(w, vecs)))
    assert rel_fro(sk.data, sketch_entries(ens64, triples_of(A)).data) <= 1e-10
    assert rel_fro(sk.data, M64 @ A @ M64.T) <= 1e-10


def test_rank_one_basis_cases(ens64, M64):
    m5 = M64[:, 5]
    e5 = np.zeros(64)
    e5[5] = 1
    np.testing.assert_allclose(sketch_lowrank(ens64, [(1.0, e5)]).data, np.outer(m5, m5), atol=1e-15)
    e1 = np.zeros(64)
    e1[0] = 1
    sk = sketch_columns(ens64, [(0, e1)])
    np.testing.assert_allclose(sk.data, np.outer(M64[:, 0], M64[:, 0]), atol=1e-15)


def test_empty_and_zero_streams(ens64):
    assert not np.any(sketch_entries(ens64, []).data)
    assert not np.any(sketch_columns(ens64, [(j, np.zeros(64)) for j in range(5)]).data)
    assert sketch_entries(ens64, []).data.shape == (ens64.m, ens64.m)


def test_permuted_stream_identical(ens64, rng):
    A = random_psd(rng, 64)
    t = triples_of(A)
    perm = [t[i] for i in rng.permutation(len(t))]
    a = sketch_entries(ens64, t, chunk=300).data
    b = sketch_entries(ens64, perm, chunk=300).data
    assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(a))


def test_duplicates_are_summed(ens64):
    a = sketch_entries(ens64, [(1, 2, 1.0), (1, 2, 2.0)]).data
    b = sketch_entries(ens64, [(1, 2, 3.0)]).data
    np.testing.assert_allclose(a, b, atol=1e-15)


def test_compensated_matches(ens64, M64, rng):
    A = random_psd(rng, 64)
    sk = sketch_entries(ens64, triples_of(A), chunk=100, compensated=True)
    assert rel_fro(sk.data, M64 @ A @ M64.T) <= 1e-12


def test_hadamard_entries(rng):
    ens = HadamardEnsemble(HadamardParams(64, 40, seed=2, rows_seed=3))
    M = ens.to_dense()
    A = random_psd(rng, 64)
    sk = sketch_entries(ens, triples_of(A))
    assert rel_fro(sk.data, M @ A @ M.T) <= 1e-10


@pytest.mark.parametrize(
    "bad, msg",
    [([(0, 64, 1.0)], "outside"), ([(-1, 0, 1.0)], "outside"), ([(0, 0, np.nan)], "non-finite")],
)
def test_entry_errors(ens64, bad, msg):
    with pytest.raises(StreamError, match=msg):
        sketch_entries(ens64, [(0, 0, 1.0)] + bad)


def test_position_in_error(ens64):
    with pytest.raises(StreamError, match="entry 2"):
        sketch_entries(ens64, [(0, 0, 1.0), (1, 1, 1.0), (0, 99, 1.0)])


def test_lowrank_negative_weight(ens64):
    with pytest.raises(ValueError):
        sketch_lowrank(ens64, [(-1.0, np.ones(64))])


def test_finalize(ens64, rng):
    A = random_psd(rng, 64)
    sk = sketch_entries(ens64, triples_of(A))
    before = sk.data.copy()
    fin = finalize(sk)
    assert fin.finalized
    assert fin.hermitian_defect == pytest.approx(np.max(np.abs(before - before.T)), abs=0)
    assert np.array_equal(fin.data, fin.data.T)
    sym = Sketch(3, np.diag([3.0, 2.0, 1.0]), "")
    out = finalize(sym)
    assert out.hermitian_defect == 0
    np.testing.assert_array_equal(out.data, sym.data)


def test_psd_preserved(ens64, rng):
    A = random_psd(rng, 64, 4)
    fin = finalize(sketch_entries(ens64, triples_of(A)))
    w = np.linalg.eigvalsh(fin.data)
    assert w.min() >= -1e-8 * np.abs(w).max()


def test_merge_rejects_mismatched(ens64):
    a = Sketch.empty(ens64)
    b = Sketch.empty(build_coherent(coherent_params(64, 5, seed=22, q=5, d=2)))
    with pytest.raises(ValueError):
        merge_sketches([a, b])
    with pytest.raises(ValueError):
        merge_sketches([finalize(a)])
    with pytest.raises(ValueError):
        merge_sketches([])


@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_partition_merge_property(ens64, parts, seed):
    rng = np.random.default_rng(seed)
    A = random_psd(rng, 64, 3)
    t = triples_of(A)
    labels = rng.integers(0, parts, len(t))
    shards = [[x for x, l in zip(t, labels) if l == p] for p in range(parts)]
    merged = merge_sketches([sketch_entries(ens64, s) for s in shards])
    single = sketch_entries(ens64, t)
    assert np.max(np.abs(merged.data - single.data)) <= 1e-10 * np.max(np.abs(single.data))
    assert merged.entries_seen == len(t)


# --- files --------------------------------------------------------------------


def test_entry_files_roundtrip(tmp_path, rng):
    r = rng.integers(0, 50, 300)
    c = np.sort(rng.integers(0, 50, 300))
    v = rng.standard_normal(300)
    write_entries_csv(tmp_path / "e.csv", r, c, v)
    write_entries_binary(tmp_path / "e.bin", r, c, v)
    assert (tmp_path / "e.csv").read_text().splitlines()[0].split(",")[0] == str(r[0] + 1)
    for reader, f in ((read_entries_csv, "e.csv"), (read_entries_binary, "e.bin")):
        chunks = list(reader(tmp_path / f, 64))
        rr, cc, vv = (np.concatenate(x) for x in zip(*chunks))
        np.testing.assert_array_equal(rr, r)
        np.testing.assert_array_equal(cc, c)
        np.testing.assert_array_equal(vv, v)


def test_csv_header_comments_and_errors(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("row,col,value\n# comment\n1,1,2.5\n\n3,2,-1\n")
    (r, c, v), = read_entries_csv(p)
    np.testing.assert_array_equal(r, [0, 2])
    np.testing.assert_array_equal(c, [0, 1])
    p.write_text("1,1\n")
    with pytest.raises(StreamError, match=":1"):
        list(read_entries_csv(p))
    p.write_text("1,1,x\n")
    with pytest.raises(StreamError):
        list(read_entries_csv(p))
    (tmp_path / "t.bin").write_bytes(b"\0" * 30)
    with pytest.raises(StreamError, match="truncated"):
        list(read_entries_binary(tmp_path / "t.bin"))


def test_columns_from_entries(ens64, rng):
    A = random_psd(rng, 64, 2) * (rng.random((64, 64)) < 0.2)
    c, r = np.nonzero(A.T)  # column-major order
    chunks = [(r[i:i + 50], c[i:i + 50], A[r, c][i:i + 50]) for i in range(0, r.size, 50)]
    cols = list(columns_from_entries(chunks, 64))
    assert [j for j, _ in cols] == sorted(set(c.tolist()))
    for j, col in cols:
        np.testing.assert_array_equal(col.to_dense(), A[:, j])
    bad = [(np.array([0, 0, 0]), np.array([0, 1, 0]), np.ones(3))]
    with pytest.raises(StreamError, match="contiguous"):
        list(columns_from_entries(bad, 64))


def test_sketch_file_roundtrip(tmp_path, ens64, rng):
    A = random_psd(rng, 64, 2)
    sk = finalize(sketch_entries(ens64, triples_of(A)))
    write_sketch(tmp_path / "a.sk", sk)
    back = read_sketch(tmp_path / "a.sk")
    np.testing.assert_array_equal(back.data, sk.data)
    assert back.ensemble_ref == sk.ensemble_ref
    assert back.finalized and back.entries_seen == sk.entries_seen
    assert back.hermitian_defect == sk.hermitian_defect
    write_sketch(tmp_path / "b.sk", back)
    assert (tmp_path / "a.sk").read_bytes() == (tmp_path / "b.sk").read_bytes()
    (tmp_path / "c.sk").write_bytes((tmp_path / "a.sk").read_bytes()[:-8])
    with pytest.raises(StreamError):
        read_sketch(tmp_path / "c.sk")
    (tmp_path / "d.sk").write_bytes(b"nope\n")
    with pytest.raises(StreamError):
        read_sketch(tmp_path / "d.sk")


def test_complex_columns(ens64, M64, rng):
    Z = rng.standard_normal((64, 2)) + 1j * rng.standard_normal((64, 2))
    A = Z @ Z.conj().T
    sk = sketch_columns(ens64, [(j, A[:, j]) for j in range(64)])
    assert rel_fro(sk.data, M64 @ A @ M64.T) <= 1e-10


def test_chunks_api(ens64, M64, rng):
    A = random_psd(rng, 64)
    r, c = np.nonzero(A)
    sk = sketch_entry_chunks(ens64, [(r, c, A[r, c])])
    assert rel_fro(sk.data, M64 @ A @ M64.T) <= 1e-10
