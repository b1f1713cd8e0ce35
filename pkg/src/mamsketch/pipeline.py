"""
Run configuration and end-to-end trials: generate -> sketch -> eig -> decode -> evaluate.
"""
from __future__ import annotations

import dataclasses
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from .decode import DecodeError, decode_cosamp, decode_sublinear
from .eig import top_eigs
from .measure import (
    CoherentEnsemble,
    HadamardEnsemble,
    HadamardParams,
    SizingWarning,
    build_coherent,
    coherent_params,
    parse_keyvalue,
)
from .metrics import evaluate_trial
from .stream import columns_from_entries, finalize, sketch_columns, sketch_entry_chunks, sketch_lowrank
from .synth import TestMatrixSpec, generate, lowrank_entries

__all__ = ["ConfigError", "RunConfig", "load_config", "make_ensemble", "run_trial", "run_experiment"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # test matrix
    N: int = 4095
    r: int = 20
    s: int = 5
    decay: float = 0.5
    scale: float = 1.0
    disjoint: bool = False
    # measurement ensemble
    ensemble: str = "coherent"
    K: int = 11
    q: int = 0  # 0: smallest prime >= K
    d: int = 0  # 0: smallest d with q^(d+1) >= N
    m: int = 0  # hadamard only
    ens_seed: int = 1
    rows_seed: int = 0
    # recovery
    ell: int = 4
    decoder: str = "sublinear"
    eta: float = 1e-12
    # orchestration
    seed: int = 0
    trials: int = 1
    seeds: str = ""  # comma list; overrides seed/trials
    sweep: str = ""  # name of a field to sweep
    sweep_values: str = ""
    input_kind: str = "factors"
    format: str = "csv"
    chunk: int = 65536
    compensated: bool = False
    threads: int = 1
    out: str = "run"

    def __post_init__(self):
        if self.ensemble not in ("coherent", "hadamard"):
            raise ConfigError(f"ensemble must be coherent or hadamard, not {self.ensemble!r}")
        if self.decoder not in ("sublinear", "cosamp"):
            raise ConfigError(f"decoder must be sublinear or cosamp, not {self.decoder!r}")
        if self.decoder == "sublinear" and self.ensemble != "coherent":
            raise ConfigError("the sublinear decoder needs the coherent ensemble")
        if self.decoder == "cosamp" and self.ensemble != "hadamard":
            raise ConfigError("the cosamp decoder needs the hadamard ensemble")
        if self.ensemble == "hadamard" and self.m < 1:
            raise ConfigError("hadamard ensemble needs m >= 1")
        if self.input_kind not in ("factors", "entries", "columns"):
            raise ConfigError(f"input_kind must be factors, entries or columns, not {self.input_kind!r}")
        if self.format not in ("csv", "binary"):
            raise ConfigError(f"format must be csv or binary, not {self.format!r}")
        for name in ("N", "r", "s", "K", "ell", "trials", "threads", "chunk"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.sweep and self.sweep not in _FIELD_TYPES:
            raise ConfigError(f"cannot sweep unknown field {self.sweep!r}")
        if self.sweep and not self.sweep_values:
            raise ConfigError("sweep given without sweep_values")

    def seed_list(self) -> list[int]:
        if self.seeds:
            return [int(x) for x in self.seeds.split(",") if x.strip()]
        return [self.seed + k for k in range(self.trials)]

    def sweep_list(self) -> list:
        if not self.sweep:
            return []
        conv = _FIELD_TYPES[self.sweep]
        return [_convert(self.sweep, conv, v.strip()) for v in self.sweep_values.split(",") if v.strip()]

    def matrix_spec(self, seed: int) -> TestMatrixSpec:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return TestMatrixSpec(
                N=self.N, r=self.r, s=self.s, decay=self.decay, scale=self.scale,
                seed=seed, disjoint=self.disjoint,
            )

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(name, typ, raw: str):
    try:
        if typ in (bool, "bool"):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off", ""):
                return False
            raise ValueError(raw)
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def load_config(text: str = "", overrides: dict | None = None) -> RunConfig:
    """Parse a flat key=value file, then apply overrides (already strings or typed)."""
    kv = parse_keyvalue(text) if text else {}
    kv.update({k: v for k, v in (overrides or {}).items() if v is not None})
    vals = {}
    for k, v in kv.items():
        if k not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {k!r}")
        vals[k] = _convert(k, _FIELD_TYPES[k], v) if isinstance(v, str) else v
    return RunConfig(**vals)


def diag_seed(cfg: RunConfig, seed: int) -> int:
    """Seed of the random diagonal D for one trial, mixed from ens_seed and the trial seed."""
    return int(np.random.SeedSequence([cfg.ens_seed, seed]).generate_state(1, np.uint64)[0] >> 1)


def make_ensemble(cfg: RunConfig, seed: int):
    dseed = diag_seed(cfg, seed)
    if cfg.ensemble == "coherent":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SizingWarning)
            try:
                p = coherent_params(cfg.N, cfg.K, seed=dseed, q=cfg.q or None, d=cfg.d or None, s_max=cfg.s)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        ens = build_coherent(p)
    else:
        try:
            ens = HadamardEnsemble(HadamardParams(cfg.N, cfg.m, seed=dseed, rows_seed=cfg.rows_seed))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if cfg.ell > ens.m:
        raise ConfigError(f"ell={cfg.ell} exceeds the sketch size m={ens.m}")
    return ens


def sketch_ground_truth(cfg: RunConfig, ens, gt):
    """Sketch A along the configured input path (factored, entry stream or column stream)."""
    if cfg.input_kind == "factors":
        return sketch_lowrank(ens, gt.factors())
    rows, cols, vals = lowrank_entries(gt)
    n = rows.size
    chunks = [(rows[i:i + cfg.chunk], cols[i:i + cfg.chunk], vals[i:i + cfg.chunk]) for i in range(0, n, cfg.chunk)]
    if cfg.input_kind == "entries":
        return sketch_entry_chunks(ens, chunks, compensated=cfg.compensated)
    return sketch_columns(ens, columns_from_entries(chunks, cfg.N), compensated=cfg.compensated)


def recover(cfg: RunConfig, ens, sketch):
    """Top-ell eigenpairs of a finalized sketch and the sparse decode of each."""
    pairs = top_eigs(sketch, cfg.ell)
    decodes = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SizingWarning)
        for p in pairs:
            try:
                if isinstance(ens, CoherentEnsemble):
                    x, _ = decode_sublinear(ens, p.vector, cfg.s)
                else:
                    x = decode_cosamp(ens, p.vector, cfg.s, eta=cfg.eta)
            except DecodeError as exc:
                raise DecodeError(f"eigenvector {p.index}: {exc}") from None
            decodes.append(x)
    return pairs, decodes


def run_trial(cfg: RunConfig, seed: int):
    gt = generate(cfg.matrix_spec(seed))
    ens = make_ensemble(cfg, seed)
    sk = finalize(sketch_ground_truth(cfg, ens, gt))
    pairs, decodes = recover(cfg, ens, sk)
    return evaluate_trial(gt, pairs, decodes, ens, cfg.s, trial=seed)


def run_experiment(cfg: RunConfig) -> dict:
    """
    All trials for every swept value, as {x: [ErrorRecord, ...]}.

    Trials run on up to ``cfg.threads`` threads; results are collected in seed
    order so the output does not depend on scheduling.
    """
    if cfg.sweep:
        configs = [(x, cfg.replace(**{cfg.sweep: x})) for x in cfg.sweep_list()]
    else:
        configs = [(cfg.s, cfg)]
    out = {}
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        for x, c in configs:
            results = pool.map(lambda sd, c=c: run_trial(c, sd), c.seed_list())
            out[x] = [rec for recs in results for rec in recs]
    return out
