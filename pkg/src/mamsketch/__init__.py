"""
Streaming MAM* sketches of huge low-rank matrices and sparse eigenvector
recovery from them.

Typical use::

    ens = build_coherent(coherent_params(N, K, seed=1))
    sk = finalize(sketch_lowrank(ens, gt.factors()))
    pairs = top_eigs(sk, 4)
    u1, _ = decode_sublinear(ens, pairs[0].vector, s)
"""
from .decode import DecodeError, DecodeReport, beta_m, decode_cosamp, decode_sublinear
from .eig import EigenError, EigenPair, relative_gaps, top_eigs
from .measure import (
    CoherentEnsemble,
    CoherentParams,
    HadamardEnsemble,
    HadamardParams,
    MeasurementVector,
    SizingWarning,
    build_coherent,
    build_hadamard,
    coherent_params,
    ensemble_from_descriptor,
)
from .metrics import ErrorRecord, aligned_error, evaluate_trial
from .sparse import SparseVector
from .stream import (
    Sketch,
    StreamError,
    finalize,
    merge_sketches,
    read_sketch,
    sketch_columns,
    sketch_entries,
    sketch_lowrank,
    write_sketch,
)
from .synth import GroundTruth, TestMatrixSpec, generate

__version__ = "0.1.0"
