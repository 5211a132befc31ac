"""Coherence, heterogeneity and entry-distribution statistics.

Everything here works on small, materialized matrices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.special import erf, ndtri

from .errors import ConfigurationError
from .operator import SrmOperator
from .randomize import RandomizerKind, RandomizerSpec, build_randomizer, derive_seed
from .transforms import (
    MATERIALIZE_CAP,
    LinearMap,
    TransformKind,
    TransformSpec,
    basis_map,
    block_apply,
    materialize,
)

__all__ = [
    "CoherenceReport",
    "HeterogeneityReport",
    "NormalityReport",
    "ScalingConfig",
    "product_matrix",
    "mutual_coherence",
    "cumulative_coherence",
    "heterogeneity",
    "ks_distance_normal",
    "normality_report",
    "coherence_scaling_check",
]


@dataclass
class CoherenceReport:
    mu: float
    mu_n: float
    n: int
    b: int
    mu_c: float | None = None
    entries: np.ndarray | None = field(default=None, repr=False)


@dataclass
class HeterogeneityReport:
    rho_per_column: np.ndarray
    rho_psi: float
    support_sizes: np.ndarray


@dataclass
class NormalityReport:
    sample: np.ndarray = field(repr=False)
    ks_distance: float
    sigma2_hat: float
    qq_pairs: np.ndarray = field(repr=False)
    n: int = 0
    num_seeds: int = 0


def product_matrix(A, psi, cap: int = MATERIALIZE_CAP) -> np.ndarray:
    """Dense ``A @ Psi``: entry ``(i, j)`` is <row i of A, column j of Psi>."""
    if psi.dim_out != A.dim_in:
        raise ConfigurationError(f"A takes {A.dim_in} inputs but Psi produces {psi.dim_out}")
    return materialize(
        LinearMap(lambda c: A.forward(psi.forward(c)), lambda y: psi.adjoint(A.adjoint(y)), psi.dim_in, A.dim_out),
        cap=cap,
    )


def mutual_coherence(A, psi, cap: int = MATERIALIZE_CAP, block_size: int | None = None) -> CoherenceReport:
    S = product_matrix(A, psi, cap)
    mu = float(np.max(np.abs(S)))
    n = A.dim_in
    return CoherenceReport(mu, math.sqrt(n) * mu, n, block_size or n, entries=S)


def cumulative_coherence(A, psi, support: Sequence[int], cap: int = MATERIALIZE_CAP) -> float:
    """Largest row norm of ``A @ Psi[:, T]``."""
    T = np.asarray(support, dtype=int)
    if T.size == 0:
        raise ConfigurationError("support must be nonempty")
    S = product_matrix(A, psi, cap)[:, T]
    return float(np.max(np.sqrt(np.sum(S * S, axis=1))))


def heterogeneity(psi, cap: int = MATERIALIZE_CAP, zero_tol: float = 1e-12) -> HeterogeneityReport:
    """Per-column ratio of the largest magnitude to the RMS of the nonzero entries."""
    P = psi if isinstance(psi, np.ndarray) else materialize(psi, cap=cap)
    mag = np.abs(P)
    nz = mag > zero_tol
    sizes = nz.sum(axis=0)
    empty = np.flatnonzero(sizes == 0)
    if empty.size:
        raise ConfigurationError(f"column {int(empty[0])} of Psi is all zero")
    mean_sq = np.where(nz, mag * mag, 0.0).sum(axis=0) / sizes
    rho = mag.max(axis=0) / np.sqrt(mean_sq)
    return HeterogeneityReport(rho, float(rho.max()), sizes)


def ks_distance_normal(sample) -> float:
    """Kolmogorov-Smirnov distance of ``sample`` to the standard normal CDF."""
    z = np.sort(np.asarray(sample, dtype=float).ravel())
    n = z.size
    if n == 0:
        raise ConfigurationError("empty sample")
    cdf = 0.5 * (1.0 + erf(z / math.sqrt(2.0)))
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


def _with_randomizer_seed(op: SrmOperator, seed: int) -> SrmOperator:
    return SrmOperator(op.n, op.m, op.transform, replace(op.randomizer_spec, seed=seed), op.subsample)


def normality_report(op: SrmOperator, psi, num_seeds: int = 10, master_seed: int | None = None,
                     cap: int = MATERIALIZE_CAP, quantiles: int = 99) -> NormalityReport:
    """Pool entries of ``D F R Psi`` over independent randomizer seeds.

    The ``sqrt(N/M)`` factor is divided out so ``sigma2_hat`` is the raw
    entry variance.  Entries are standardized by the pooled mean and
    variance before the KS and QQ statistics; treating dependent entries as
    one sample is a heuristic.
    """
    if num_seeds < 1:
        raise ConfigurationError("num_seeds must be >= 1")
    master = op.randomizer_spec.seed if master_seed is None else master_seed
    chunks = []
    for s in range(num_seeds):
        op_s = _with_randomizer_seed(op, derive_seed(master, s))
        chunks.append((product_matrix(op_s, psi, cap) / op.scale).ravel())
    raw = np.concatenate(chunks)
    sigma2 = float(raw.var())
    sample = (raw - raw.mean()) / math.sqrt(sigma2)
    p = np.arange(1, quantiles + 1) / (quantiles + 1)
    qq = np.column_stack([ndtri(p), np.quantile(sample, p)])
    return NormalityReport(sample, ks_distance_normal(sample), sigma2, qq, op.n, num_seeds)


@dataclass(frozen=True)
class ScalingConfig:
    ns: tuple = (128, 256, 512, 1024)
    block: int | None = None  # None -> dense, B = N
    kind: str = "dct"
    randomizers: tuple = ("local", "global")
    psi: str = "db8"
    seeds: int = 50
    master_seed: int = 0


HETEROGENEITY_NOTE = (
    "the global-randomizer bound is stated with a condition on rho_k that cannot hold for "
    "columns with small support (rho_k <= sqrt(|T_k|)); the support size |T_k| is reported instead"
)


def coherence_scaling_check(config: ScalingConfig, cap: int = MATERIALIZE_CAP):
    """Max-over-seeds coherence of ``F R`` with ``Psi`` on a grid of (N, B).

    Returns ``(rows, meta)``.  Each row carries ``n, b, randomizer, mu``
    and ``normalized_stat = mu * sqrt(B / ln N)``; ``meta`` records the
    heterogeneity of ``Psi`` per N.
    """
    rows = []
    meta = {"note": HETEROGENEITY_NOTE, "psi": config.psi, "kind": config.kind}
    for n in config.ns:
        b = n if config.block is None else config.block
        tspec = TransformSpec(TransformKind(config.kind), b, n)
        P = materialize(basis_map(config.psi, n), cap=cap)
        het = heterogeneity(P)
        meta[f"rho_psi[n={n}]"] = het.rho_psi
        meta[f"min_support[n={n}]"] = int(het.support_sizes.min())
        max_f = float(np.max(np.abs(materialize(LinearMap(
            lambda v: block_apply(tspec, v), lambda v: v, n, n), cap=cap))))
        for rk in config.randomizers:
            kind = RandomizerKind(rk)
            mu = 0.0
            for s in range(config.seeds):
                seed = derive_seed(config.master_seed, n, b, list(RandomizerKind).index(kind), s)
                r = build_randomizer(RandomizerSpec(kind, seed, n))
                RP = P * r.signs[:, None] if r.signs is not None else P[r.perm, :]
                S = block_apply(tspec, RP.T)  # rows of S.T are F applied to columns of R Psi
                mu = max(mu, float(np.max(np.abs(S))))
            rows.append({
                "n": n,
                "b": b,
                "randomizer": kind.value,
                "mu": mu,
                "normalized_stat": mu * math.sqrt(b / math.log(n)),
                "max_abs_f": max_f,
            })
    return rows, meta
