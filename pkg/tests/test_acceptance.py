"""End-to-end acceptance checks.

Each test prints one ``[PASS]``/``[FAIL]`` line; run with ``pytest tests/test_acceptance.py -s``
to see them. The Monte-Carlo checks take several minutes in total.
"""
import math
import time

import numpy as np
import pytest

from srmcs.analysis import (
    ScalingConfig,
    coherence_scaling_check,
    cumulative_coherence,
    mutual_coherence,
    normality_report,
)
from srmcs.cli import main
from srmcs.experiments import (
    CompressibleConfig,
    TrialConfig,
    bench_sensing,
    build_sensing,
    run_compressible_experiment,
    run_measurement_scaling,
    run_phase_curve,
    trial_seeds,
)
from srmcs.operator import make_operator
from srmcs.randomize import derive_seed
from srmcs.transforms import TransformSpec, basis_map, identity_map, materialize, transform_map

pytestmark = pytest.mark.slow

MASTER = 2024
KS_PHASE = [10, 20, 30, 40, 50, 60]


def report(number, ok, detail):
    print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
    assert ok, detail


@pytest.fixture(scope="session")
def phase_curves():
    cache = {}

    def get(ensemble, psi, ks):
        key = (ensemble, psi, tuple(ks))
        if key not in cache:
            cfg = TrialConfig(256, 128, 0, ensemble, psi, trials=200, master_seed=MASTER)
            cache[key] = run_phase_curve(cfg, ks)
        return cache[key]

    return get


SRM_ENSEMBLES = [
    ("wht", None, "local"), ("wht", None, "global"), ("wht", 16, "local"), ("wht", 16, "global"),
    ("dct", None, "local"), ("dct", None, "global"), ("dct", 8, "local"), ("dct", 8, "global"),
]


def test_1_operator_suite():
    t0 = time.perf_counter()
    failures = []
    rng = np.random.default_rng(1)
    for kind, block, r in SRM_ENSEMBLES:
        name = f"{kind}{block or ''}-{r}"
        for n in (16, 32, 64):
            full = make_operator(n, n, kind, block, r, derive_seed(MASTER, n, 1), derive_seed(MASTER, n, 2))
            FR = materialize(full)
            if np.max(np.abs(FR.T @ FR - np.eye(n))) > 1e-10:
                failures.append(f"{name} n={n} orthonormality")
            op = make_operator(n, n // 2, kind, block, r, derive_seed(MASTER, n, 3), derive_seed(MASTER, n, 4))
            P = materialize(op)
            x, z = rng.standard_normal((2, n))
            y = rng.standard_normal(n // 2)
            if abs(op.forward(x) @ y - x @ op.adjoint(y)) > 1e-10 * np.linalg.norm(x) * np.linalg.norm(y):
                failures.append(f"{name} n={n} adjoint")
            lhs, rhs = op.forward(2 * x - 3 * z), 2 * op.forward(x) - 3 * op.forward(z)
            if np.linalg.norm(lhs - rhs) > 1e-10 * np.linalg.norm(rhs):
                failures.append(f"{name} n={n} linearity")
            if np.max(np.abs(P @ x - op.forward(x))) > 1e-12:
                failures.append(f"{name} n={n} materialized forward")
            if np.max(np.abs(materialize(op, adjoint=True) - P.T)) > 1e-12:
                failures.append(f"{name} n={n} materialized adjoint")
    G = build_sensing("gaussian", 64, 32, trial_seeds(MASTER, 0))
    x, y = rng.standard_normal(64), rng.standard_normal(32)
    if abs(G.forward(x) @ y - x @ G.adjoint(y)) > 1e-10 * np.linalg.norm(x) * np.linalg.norm(y):
        failures.append("gaussian adjoint")
    elapsed = time.perf_counter() - t0
    report(1, not failures and elapsed < 30, f"{len(failures)} failures {failures[:3]}, {elapsed:.1f}s")


def test_2_coherence_oracles():
    bad = []
    for n in (16, 64, 256):
        W = transform_map(TransformSpec.full("wht", n))
        if abs(mutual_coherence(W, identity_map(n)).mu - 1 / math.sqrt(n)) > 1e-15:
            bad.append(f"mu wht n={n}")
        for k in (1, 4, 9):
            T = np.random.default_rng(k).choice(n, size=min(k, n), replace=False)
            if abs(cumulative_coherence(W, identity_map(n), T) - math.sqrt(len(T) / n)) > 1e-14:
                bad.append(f"mu_c wht n={n} k={k}")
    n = 64
    rng = np.random.default_rng(MASTER)
    for i in range(100):
        kind = ["wht", "dct"][i % 2]
        r = ["local", "global"][(i // 2) % 2]
        block = [None, 16, 4, 1][(i // 4) % 4]
        A = make_operator(n, n, kind, block, r, derive_seed(MASTER, 2, i), 0)
        psi = basis_map(["identity", "idct", "db8", "wht"][(i // 3) % 4], n)
        mu = mutual_coherence(A, psi).mu
        if not 1 / math.sqrt(n) - 1e-10 <= mu <= 1 + 1e-10:
            bad.append(f"bounds draw {i}")
        k = int(rng.integers(1, 33))
        T = rng.choice(n, size=k, replace=False)
        if cumulative_coherence(A, psi, T) > math.sqrt(k) * mu + 1e-10:
            bad.append(f"mu_c bound draw {i}")
    report(2, not bad, f"{len(bad)} violations {bad[:3]}")


def test_3_normality():
    t0 = time.perf_counter()
    ks = {}
    for r in ("local", "global"):
        op = make_operator(256, 128, "dct", None, r, derive_seed(MASTER, 3), derive_seed(MASTER, 4))
        rep = normality_report(op, basis_map("db8", 256), num_seeds=10, master_seed=MASTER)
        ks[r] = rep.ks_distance
    elapsed = time.perf_counter() - t0
    ok = max(ks.values()) <= 0.05 and elapsed < 60
    report(3, ok, f"KS local={ks['local']:.4f} global={ks['global']:.4f} (<= 0.05), {elapsed:.1f}s")


def test_4_coherence_scaling():
    ns = (128, 256, 512, 1024)
    rows, _ = coherence_scaling_check(ScalingConfig(ns=ns, kind="dct", randomizers=("local",), psi="db8",
                                                    seeds=50, master_seed=MASTER))
    stat = [r["normalized_stat"] for r in rows]
    spread = max(stat) / min(stat)
    rows_b, _ = coherence_scaling_check(ScalingConfig(ns=ns, block=32, kind="dct", randomizers=("local",),
                                                      psi="identity", seeds=50, master_seed=MASTER))
    ratios = [r["mu"] / r["max_abs_f"] for r in rows_b]
    ok = spread < 2 and all(0.5 <= q <= 2 for q in ratios)
    report(4, ok, f"dense stat {[round(s, 3) for s in stat]} spread {spread:.3f} (< 2); "
                  f"block mu/max|F| {[round(q, 3) for q in ratios]} in [0.5, 2]")


def test_5_phase_curve(phase_curves):
    srm = phase_curves("wht256-l", "idct", KS_PHASE)
    gauss = phase_curves("gaussian", "idct", KS_PHASE)
    gaps = [abs(a - b) for a, b in zip(srm.probabilities, gauss.probabilities)]
    ok = max(gaps) <= 0.10 and srm.probabilities[0] >= 0.95 and gauss.probabilities[0] >= 0.95
    report(5, ok, f"P(srm)={list(srm.probabilities)} P(gauss)={list(gauss.probabilities)} "
                  f"max gap {max(gaps):.3f} (<= 0.10)")


def test_6_block_tradeoff(phase_curves):
    ks = [20, 30, 40]
    dense = phase_curves("wht256-l", "identity", ks).probabilities
    block = phase_curves("wht64-l", "identity", ks).probabilities
    glob = phase_curves("wht64-g", "db8", ks).probabilities
    loc = phase_curves("wht64-l", "db8", ks).probabilities
    ok = all(d >= b - 0.05 for d, b in zip(dense, block)) and all(g >= l - 0.05 for g, l in zip(glob, loc))
    report(6, ok, f"identity: dense {list(dense)} vs block {list(block)}; "
                  f"db8: global {list(glob)} vs local {list(loc)}")


def test_7_measurement_scaling():
    cfg = TrialConfig(256, 128, 5, "wht256-l", "idct", trials=100, master_seed=MASTER)
    rows = run_measurement_scaling(cfg, [5, 10, 15, 20], 0.9)
    ratios = [r for _, _, r in rows]
    band = max(ratios) / min(ratios)
    report(7, band <= 2, f"M* {[m for _, m, _ in rows]} ratios {[round(r, 3) for r in ratios]} band {band:.3f} (<= 2)")


def test_8_benchmark():
    [rec] = bench_sensing([4096], m_ratio=0.25, reps=20, ensemble="wht-l", seed=MASTER)
    speedup = rec.dense_multiply_time / rec.srm_forward_time
    ok = rec.m == 1024 and speedup >= 10 and rec.storage_bits_srm == 2 * 4096 + 4096 * 12 == 57344
    report(8, ok, f"speedup {speedup:.1f}x (>= 10), storage bits {rec.storage_bits_srm} (== 57344)")


def test_9_compressible():
    cfg = CompressibleConfig(n=4096, rates=(0.35,), ensembles=("dct-l", "wht32-g"), master_seed=MASTER)
    rows = run_compressible_experiment(cfg)
    psnr = {r[0]: r[4] for r in rows}
    gap = abs(psnr["dct-l"] - psnr["wht32-g"])
    report(9, gap <= 2, f"PSNR dct-l {psnr['dct-l']:.2f} dB, wht32-g {psnr['wht32-g']:.2f} dB, gap {gap:.2f} (<= 2)")


DETERMINISM_RUNS = {
    "phase": "phase --n 128 --m 64 --psi idct --ensemble wht-l --k 5,15,25 --trials 20",
    "phase-gauss": "phase --n 128 --m 64 --psi db8 --ensemble gaussian --k 5,15 --trials 10",
    "mstar": "mstar --n 128 --psi identity --ensemble dct32-g --k 3,6 --trials 10",
    "compressible": "compressible --n 512 --rates 0.25,0.5 --ensembles dct-l,wht32-g",
    "qq": "qq --n 128 --m 64 --seeds 3",
    "coherence": "coherence --n 128 --f dct --psi db8 --ns 64,128 --seeds 5",
}


def body(path):
    return b"".join(l for l in open(path, "rb") if not l.startswith(b"#"))


def test_10_determinism(tmp_path):
    mismatched = []
    for name, cmd in DETERMINISM_RUNS.items():
        outs = []
        for rep in range(2):
            out = tmp_path / f"{name}-{rep}.csv"
            code = main(cmd.split() + ["--master-seed", str(MASTER), "--output", str(out)])
            assert code == 0, f"{name} exited {code}"
            outs.append(out)
        if body(outs[0]) != body(outs[1]) or not body(outs[0]):
            mismatched.append(name)
    report(10, not mismatched, f"{len(DETERMINISM_RUNS) - len(mismatched)}/{len(DETERMINISM_RUNS)} "
                               f"experiments byte-identical {mismatched or ''}")
