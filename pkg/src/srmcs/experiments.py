"""Monte-Carlo harness: phase curves, measurement scaling, compressible
signals and sensing benchmarks.

Every trial draws its seeds from ``derive_seed(master_seed, trial_index)``
so results do not depend on scheduling; concurrent runs are reduced in
trial order.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError
from .operator import compose, make_operator
from .randomize import derive_seed, make_rng, random_signs
from .recovery import SparseSignalSpec, check_exact_recovery, generate_sparse_signal, solve_l1
from .transforms import basis_map, dense_map, materialize

__all__ = [
    "Ensemble",
    "TrialConfig",
    "PhaseCurve",
    "BenchRecord",
    "CompressibleConfig",
    "config_hash",
    "write_csv",
    "wilson_halfwidth",
    "trial_seeds",
    "build_sensing",
    "run_recovery_trial",
    "run_phase_curve",
    "run_measurement_scaling",
    "compressible_signal",
    "psnr",
    "run_compressible_experiment",
    "bench_sensing",
    "storage_bits_srm",
]

# experiment-level solver settings: tighter than the library default so the
# l1 solve sits at the basis-pursuit limit
EXP_TOL = 1e-8
EXP_MAX_ITER = 5000

_ENSEMBLE_RE = re.compile(r"^(wht|dct)(\d+)?-([lg])$")


@dataclass(frozen=True)
class Ensemble:
    """Sensing ensemble: ``kind`` is ``wht``, ``dct`` or ``gaussian``.

    ``block=None`` means the full (dense) transform.  Names follow the
    ``wht64-l`` / ``dct32-g`` convention; a block larger than N is clamped
    to N.
    """

    kind: str
    block: int | None = None
    randomizer: str = "local"

    @classmethod
    def parse(cls, name: str) -> "Ensemble":
        s = str(name).strip().lower()
        if s in ("gaussian", "gaussian_dense", "gauss"):
            return cls("gaussian", None, "none")
        m = _ENSEMBLE_RE.match(s)
        if not m:
            raise ConfigurationError(f"unknown ensemble {name!r}")
        kind, block, r = m.groups()
        return cls(kind, int(block) if block else None, "local" if r == "l" else "global")

    @property
    def name(self) -> str:
        if self.kind == "gaussian":
            return "gaussian"
        return f"{self.kind}{self.block or ''}-{self.randomizer[0]}"

    def block_for(self, n: int) -> int:
        return n if self.block is None else min(self.block, n)


@dataclass(frozen=True)
class TrialConfig:
    n: int
    m: int
    k: int
    ensemble: str = "wht-l"
    psi: str = "identity"
    trials: int = 200
    master_seed: int = 0
    rel_tol: float = 1e-3
    include_dc: bool = False
    tol: float = EXP_TOL
    max_iter: int = EXP_MAX_ITER

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if not 1 <= self.m <= self.n:
            raise ConfigurationError(f"m exceeds n (m={self.m}, n={self.n})" if self.m > self.n
                                     else f"m must be >= 1, got {self.m}")
        if not 0 <= self.k <= self.n:
            raise ConfigurationError(f"k must lie in [0, n], got {self.k}")
        Ensemble.parse(self.ensemble)

    def with_(self, **kw) -> "TrialConfig":
        d = asdict(self)
        d.update(kw)
        return TrialConfig(**d)


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def csv_text(columns: Sequence[str], rows: Iterable[Sequence], config: dict | None = None) -> str:
    buf = io.StringIO()
    if config is not None:
        buf.write(f"# master_seed={config.get('master_seed')}\n")
        buf.write(f"# config_hash={config_hash(config)}\n")
        buf.write(f"# config={json.dumps(config, sort_keys=True, separators=(',', ':'), default=str)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_csv(path, columns, rows, config: dict | None = None) -> str:
    text = csv_text(columns, rows, config)
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


class _CsvStream:
    """Appends rows to a CSV file as they are produced."""

    def __init__(self, path, columns, config):
        self.fh = open(path, "w", encoding="utf-8", newline="") if path is not None else None
        if self.fh:
            self.fh.write(csv_text(columns, [], config))
            self.fh.flush()
            self.w = csv.writer(self.fh, lineterminator="\n")

    def row(self, r):
        if self.fh:
            self.w.writerow([_fmt(v) for v in r])
            self.fh.flush()

    def close(self):
        if self.fh:
            self.fh.close()


def wilson_halfwidth(successes: int, trials: int, z: float = 1.959963984540054) -> float:
    """Half-width of the 95% Wilson score interval."""
    if trials <= 0:
        raise ConfigurationError("trials must be positive")
    p = successes / trials
    denom = 1.0 + z * z / trials
    return z / denom * math.sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials * trials))


def trial_seeds(master_seed: int, index: int) -> dict:
    base = derive_seed(master_seed, index)
    return {
        "signal": derive_seed(base, 0),
        "randomizer": derive_seed(base, 1),
        "subsample": derive_seed(base, 2),
        "gaussian": derive_seed(base, 3),
    }


@lru_cache(maxsize=32)
def _basis_matrix(psi: str, n: int) -> np.ndarray:
    P = materialize(basis_map(psi, n))
    P.setflags(write=False)
    return P


def build_sensing(ensemble: str, n: int, m: int, seeds: dict, include_dc: bool = False):
    """Sensing operator for one trial: an :class:`SrmOperator` or a dense
    Gaussian :class:`LinearMap` with i.i.d. N(0, 1/M) entries."""
    ens = Ensemble.parse(ensemble)
    if ens.kind == "gaussian":
        G = make_rng(seeds["gaussian"]).standard_normal((m, n)) / math.sqrt(m)
        return dense_map(G)
    return make_operator(n, m, ens.kind, ens.block_for(n), ens.randomizer,
                         seeds["randomizer"], seeds["subsample"], include_dc)


def _dense_system(cfg: TrialConfig, seeds: dict) -> np.ndarray:
    phi = build_sensing(cfg.ensemble, cfg.n, cfg.m, seeds, cfg.include_dc)
    return materialize(phi) @ _basis_matrix(cfg.psi, cfg.n)


def run_recovery_trial(cfg: TrialConfig, index: int) -> bool:
    """One draw of signal and operator, one l1 solve; True on exact recovery.

    A solve that hits ``max_iter`` without converging counts as a failure.
    """
    seeds = trial_seeds(cfg.master_seed, index)
    _, alpha = generate_sparse_signal(SparseSignalSpec(cfg.n, cfg.k, cfg.psi, seeds["signal"]))
    # n is small in these experiments; a dense A = Phi Psi is the fastest route
    A = dense_map(_dense_system(cfg, seeds))
    y = A.forward(alpha)
    res = solve_l1(A, y, tol=cfg.tol, max_iter=cfg.max_iter)
    return bool(res.converged and check_exact_recovery(res.alpha_hat, alpha, cfg.rel_tol))


def _count_successes(cfg: TrialConfig, threads: int) -> int:
    idx = range(cfg.trials)
    if threads <= 1:
        return sum(run_recovery_trial(cfg, i) for i in idx)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return sum(pool.map(lambda i: run_recovery_trial(cfg, i), idx))


@dataclass
class PhaseCurve:
    ensemble: str
    n: int
    m: int
    axis: list
    trials: int
    successes: list = field(default_factory=list)
    probabilities: list = field(default_factory=list)
    wilson_halfwidth: list = field(default_factory=list)
    axis_name: str = "k"

    COLUMNS = ("ensemble", "n", "m", "k", "trials", "successes", "probability", "wilson_halfwidth")

    def rows(self):
        for i, a in enumerate(self.axis):
            k, m = (a, self.m) if self.axis_name == "k" else (None, a)
            yield (self.ensemble, self.n, m, k, self.trials, self.successes[i],
                   self.probabilities[i], self.wilson_halfwidth[i])

    def to_csv(self, path=None, config=None) -> str:
        return write_csv(path, self.COLUMNS, self.rows(), config)


def run_phase_curve(cfg: TrialConfig, ks: Sequence[int], threads: int | None = None,
                    csv_path=None, config: dict | None = None) -> PhaseCurve:
    """Empirical recovery probability for each sparsity in ``ks``."""
    ks = [int(k) for k in ks]
    if not ks:
        raise ConfigurationError("K grid must be nonempty")
    threads = threads or os.cpu_count() or 1
    name = Ensemble.parse(cfg.ensemble).name
    curve = PhaseCurve(name, cfg.n, cfg.m, ks, cfg.trials)
    stream = _CsvStream(csv_path, PhaseCurve.COLUMNS, config)
    try:
        for k in ks:
            s = _count_successes(cfg.with_(k=k), threads)
            p = s / cfg.trials
            hw = wilson_halfwidth(s, cfg.trials)
            curve.successes.append(s)
            curve.probabilities.append(p)
            curve.wilson_halfwidth.append(hw)
            stream.row((name, cfg.n, cfg.m, k, cfg.trials, s, p, hw))
    finally:
        stream.close()
    return curve


SCALING_COLUMNS = ("k", "m_star", "ratio")


def run_measurement_scaling(cfg: TrialConfig, ks: Sequence[int], p_star: float = 0.9,
                            resolution: int = 4, threads: int | None = None, csv_path=None,
                            config: dict | None = None):
    """Smallest M reaching recovery rate ``p_star``, per K, by bisection.

    ``cfg.trials`` trials per probe; M is resolved to ``resolution``.  When
    even M = N - resolution fails the result saturates at N.  Returns a
    list of ``(k, m_star, m_star / (k ln N))``.
    """
    if not 0 < p_star < 1:
        raise ConfigurationError("p_star must lie in (0, 1)")
    threads = threads or os.cpu_count() or 1
    n = cfg.n
    out = []
    stream = _CsvStream(csv_path, SCALING_COLUMNS, config)
    try:
        for k in ks:
            lo, hi = 0, n
            while hi - lo > resolution:
                mid = (lo + hi) // 2
                s = _count_successes(cfg.with_(k=int(k), m=mid), threads)
                if s >= p_star * cfg.trials:
                    hi = mid
                else:
                    lo = mid
            ratio = hi / (k * math.log(n)) if k > 0 else 0.0
            out.append((int(k), hi, ratio))
            stream.row(out[-1])
    finally:
        stream.close()
    return out


# ------------------------------------------------------ compressible signals


@dataclass(frozen=True)
class CompressibleConfig:
    n: int = 4096
    rates: tuple = (0.15, 0.25, 0.35, 0.5)
    ensembles: tuple = ("dct-l", "wht32-g")
    psi: str = "db8"
    decay: float = 1.5
    master_seed: int = 0
    include_dc: bool = True
    tau_rel: float = 1e-6
    tol: float = 1e-8
    max_iter: int = 2000


def compressible_signal(n: int, decay: float, seed: int, psi: str = "db8"):
    """Coefficients with magnitudes ``i**-decay`` in coarse-to-fine order
    and random signs; returns ``(x, alpha)``."""
    rng = make_rng(seed)
    alpha = np.arange(1, n + 1, dtype=float) ** (-decay) * random_signs(rng, n)
    return basis_map(psi, n).forward(alpha), alpha


def psnr(x, x_hat) -> float:
    x, x_hat = np.asarray(x, float), np.asarray(x_hat, float)
    rms = math.sqrt(float(np.mean((x - x_hat) ** 2)))
    peak = float(np.max(np.abs(x)))
    if rms == 0.0:
        return math.inf
    return 20.0 * math.log10(peak / rms)


COMPRESSIBLE_COLUMNS = ("ensemble", "n", "rate", "m", "psnr_db", "iterations", "converged")


def run_compressible_experiment(cfg: CompressibleConfig, csv_path=None, config: dict | None = None):
    """Reconstruct one power-law signal at each sampling rate, per ensemble."""
    n = cfg.n
    x, _ = compressible_signal(n, cfg.decay, derive_seed(cfg.master_seed, 0), cfg.psi)
    psi = basis_map(cfg.psi, n)
    seeds = trial_seeds(cfg.master_seed, 1)
    rows = []
    stream = _CsvStream(csv_path, COMPRESSIBLE_COLUMNS, config)
    try:
        for ens_name in cfg.ensembles:
            ens = Ensemble.parse(ens_name)
            if ens.kind == "gaussian":
                continue  # omitted at this size
            for rate in cfg.rates:
                m = max(1, int(round(rate * n)))
                op = build_sensing(ens_name, n, m, seeds, cfg.include_dc)
                A = compose(op, psi)
                res = solve_l1(A, op.forward(x), tol=cfg.tol, max_iter=cfg.max_iter,
                               tau_rel=cfg.tau_rel, lipschitz=1.02 * n / m)
                row = (ens.name, n, rate, m, psnr(x, psi.forward(res.alpha_hat)),
                       res.iterations, res.converged)
                rows.append(row)
                stream.row(row)
    finally:
        stream.close()
    return rows


# ---------------------------------------------------------------- benchmarks


@dataclass
class BenchRecord:
    n: int
    m: int
    srm_forward_time: float
    dense_multiply_time: float | None
    storage_bits_srm: int
    storage_bits_dense: int

    COLUMNS = ("n", "m", "t_srm_s", "t_dense_s", "bits_srm", "bits_dense")

    def row(self):
        return (self.n, self.m, self.srm_forward_time,
                "" if self.dense_multiply_time is None else self.dense_multiply_time,
                self.storage_bits_srm, self.storage_bits_dense)


def storage_bits_srm(n: int) -> int:
    """Bits to store the D and R diagonals plus the fast transform: 2N + N log2 N."""
    return 2 * n + n * int(round(math.log2(n)))


def _median_time(f, reps: int) -> float:
    f()
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        f()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def bench_sensing(sizes: Sequence[int], m_ratio: float = 0.25, reps: int = 20, ensemble: str = "wht-l",
                  dense_max_n: int = 8192, seed: int = 0) -> list:
    """Median wall-clock time of SRM forward vs an explicit dense M x N multiply."""
    out = []
    for n in sizes:
        if n < 1 or n & (n - 1):
            raise ConfigurationError(f"benchmark sizes must be powers of two, got {n}")
        m = max(1, int(n * m_ratio))
        seeds = trial_seeds(seed, n)
        op = build_sensing(ensemble, n, m, seeds)
        x = make_rng(seeds["signal"]).standard_normal(n)
        t_srm = _median_time(lambda: op.forward(x), reps)
        t_dense = None
        if n <= dense_max_n:
            try:
                D = make_rng(seeds["gaussian"]).standard_normal((m, n))
                t_dense = _median_time(lambda: D @ x, reps)
                del D
            except MemoryError:
                t_dense = None
        out.append(BenchRecord(n, m, t_srm, t_dense, storage_bits_srm(n), m * n))
    return out
