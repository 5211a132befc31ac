"""Quick invariant checks across all modules, for ``srmcs selftest``."""
from __future__ import annotations

import math

import numpy as np

from .analysis import cumulative_coherence, heterogeneity, ks_distance_normal, mutual_coherence
from .operator import compose, make_operator
from .randomize import RandomizerKind, RandomizerSpec, apply_randomizer, apply_randomizer_adjoint, build_randomizer
from .recovery import SparseSignalSpec, check_exact_recovery, generate_sparse_signal, solve_l1, solve_omp
from .transforms import TransformKind, TransformSpec, basis_map, materialize, transform_map
from .experiments import storage_bits_srm, wilson_halfwidth


def _orthonormal_transforms():
    for kind, b in [("wht", 16), ("wht", 64), ("dct", 64), ("dct", 8), ("identity", 64), ("db8", 64)]:
        F = materialize(transform_map(TransformSpec(TransformKind(kind), b, 64)))
        if not np.allclose(F.T @ F, np.eye(64), atol=1e-10):
            return False
    return True


def _adjoints():
    rng = np.random.default_rng(1)
    for kind, block, r in [("wht", 256, "local"), ("dct", 64, "global"), ("wht", 32, "global")]:
        op = make_operator(256, 128, kind, block, r, 3, 4)
        A = compose(op, basis_map("db8", 256))
        x, y = rng.standard_normal(256), rng.standard_normal(128)
        if abs(A.forward(x) @ y - x @ A.adjoint(y)) > 1e-10 * np.linalg.norm(x) * np.linalg.norm(y):
            return False
    return True


def _randomizers():
    v = np.arange(32, dtype=float)
    g = build_randomizer(RandomizerSpec(RandomizerKind.GLOBAL, 5, 32))
    loc = build_randomizer(RandomizerSpec(RandomizerKind.LOCAL, 5, 32))
    return (np.array_equal(np.sort(g.perm), np.arange(32))
            and np.array_equal(apply_randomizer_adjoint(g, apply_randomizer(g, v)), v)
            and np.array_equal(apply_randomizer(loc, apply_randomizer(loc, v)), v))


def _row_orthogonality():
    op = make_operator(64, 16, "dct", 64, "global", 9, 10)
    P = materialize(op)
    return np.allclose(P @ P.T, (64 / 16) * np.eye(16), atol=1e-10)


def _coherence():
    n = 16
    wht = transform_map(TransformSpec.full("wht", n))
    I = basis_map("identity", n)
    return (abs(mutual_coherence(wht, I).mu - 0.25) < 1e-12
            and abs(cumulative_coherence(wht, I, [0, 3, 5, 9]) - 0.5) < 1e-12
            and abs(heterogeneity(I).rho_psi - 1.0) < 1e-12)


def _ks():
    z = np.random.default_rng(0).standard_normal(10_000)
    return ks_distance_normal(z) <= 0.02


def _recovery():
    op = make_operator(64, 32, "wht", 64, "local", 11, 12)
    A = compose(op, basis_map("identity", 64))
    _, alpha = generate_sparse_signal(SparseSignalSpec(64, 4, "identity", 13))
    y = A.forward(alpha)
    l1 = solve_l1(A, y, tol=1e-10, max_iter=20000)
    omp = solve_omp(A, y, 4)
    return check_exact_recovery(l1.alpha_hat, alpha) and check_exact_recovery(omp.alpha_hat, alpha)


def _bookkeeping():
    return storage_bits_srm(4096) == 57344 and wilson_halfwidth(250, 500) < wilson_halfwidth(50, 100)


CHECKS = [
    ("transforms.orthonormal", _orthonormal_transforms),
    ("operator.adjoint", _adjoints),
    ("operator.row_orthogonality", _row_orthogonality),
    ("randomize.bijection_involution", _randomizers),
    ("analysis.coherence_oracles", _coherence),
    ("analysis.ks_normal_sample", _ks),
    ("recovery.l1_and_omp", _recovery),
    ("experiments.bookkeeping", _bookkeeping),
]


def run_selftest():
    passed = failed = 0
    lines = []
    for name, check in CHECKS:
        try:
            ok = bool(check())
        except Exception as exc:  # a crashing check is a failed check
            ok = False
            name = f"{name} ({type(exc).__name__}: {exc})"
        lines.append(f"{'PASS' if ok else 'FAIL'} {name}")
        passed += ok
        failed += not ok
    return passed, failed, lines
