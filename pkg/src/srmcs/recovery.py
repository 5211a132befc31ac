"""Sparse recovery from ``y = Phi Psi alpha``.

:func:`solve_l1` minimizes ``0.5*||y - A a||^2 + tau*||a||_1`` with a
monotone accelerated proximal-gradient iteration, decreasing ``tau``
geometrically to its target, and finishes with a least-squares refit on the
detected support.  :func:`solve_omp` is an independent greedy solver used to
cross-check it.

``A`` is anything with ``forward``, ``adjoint``, ``dim_in`` and ``dim_out``
(a :class:`~srmcs.transforms.LinearMap`, an operator, or a composed one).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, LengthError
from .randomize import fisher_yates, make_rng, random_signs
from .transforms import basis_map

__all__ = [
    "SparseSignalSpec",
    "SolveResult",
    "generate_sparse_signal",
    "power_norm_sq",
    "soft_threshold",
    "lasso_objective",
    "solve_l1",
    "solve_omp",
    "check_exact_recovery",
    "relative_error",
]

TAU_REL = 1e-4
CONTINUATION = 0.5
TOL = 1e-6
MAX_ITER = 2000
DEBIAS_ITER = 50
EXACT_REL_TOL = 1e-3


@dataclass(frozen=True)
class SparseSignalSpec:
    n: int
    k: int
    basis: str = "identity"
    seed: int = 0


def generate_sparse_signal(spec: SparseSignalSpec, psi=None):
    """Return ``(x, alpha)`` with ``alpha`` exactly K-sparse and ``x = Psi alpha``.

    Support is a uniform K-subset, signs are fair coin flips, magnitudes are
    ``|N(0, 1)|``.  ``psi`` overrides the basis named in ``spec``.
    """
    n, k = spec.n, spec.k
    if not 0 <= k <= n:
        raise ConfigurationError(f"sparsity K={k} must lie in [0, N={n}]")
    rng = make_rng(spec.seed)
    support = np.sort(fisher_yates(rng, n, prefix=k)[:k])
    signs = random_signs(rng, k).astype(float)
    mags = np.abs(rng.standard_normal(k))
    alpha = np.zeros(n)
    alpha[support] = signs * mags
    psi = basis_map(spec.basis, n) if psi is None else psi
    return psi.forward(alpha), alpha


@dataclass
class SolveResult:
    alpha_hat: np.ndarray
    iterations: int
    residual: float
    converged: bool
    tau: float | None = None
    alpha_lasso: np.ndarray | None = field(default=None, repr=False)
    support: np.ndarray | None = field(default=None, repr=False)
    # (tau, objective) for every accepted iterate; only filled when trace=True
    history: list = field(default_factory=list, repr=False)

    def to_dict(self, alpha_true=None) -> dict:
        d = {
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "residual": float(self.residual),
        }
        if alpha_true is not None:
            d["rel_error"] = relative_error(self.alpha_hat, alpha_true)
        return d

    def to_json(self, alpha_true=None) -> str:
        return json.dumps(self.to_dict(alpha_true), sort_keys=True)


def soft_threshold(v, thresh):
    return np.sign(v) * np.maximum(np.abs(v) - thresh, 0.0)


def lasso_objective(A, y, alpha, tau) -> float:
    r = y - A.forward(alpha)
    return 0.5 * float(r @ r) + tau * float(np.abs(alpha).sum())


def power_norm_sq(A, iters: int = 50, seed: int = 0x5EED) -> float:
    """Power-method estimate of the largest eigenvalue of ``A^T A``."""
    v = make_rng(seed).standard_normal(A.dim_in)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = A.adjoint(A.forward(v))
        lam_new = float(np.linalg.norm(w))
        if lam_new == 0.0:
            return 0.0
        v = w / lam_new
        if abs(lam_new - lam) <= 1e-12 * lam_new:
            lam = lam_new
            break
        lam = lam_new
    return lam


def _cgls_on_support(A, y, x0, support, iters):
    """Least squares restricted to ``support``, warm-started from ``x0``."""
    n = A.dim_in
    x = np.zeros(n)
    x[support] = x0[support]
    r = y - A.forward(x)
    s = A.adjoint(r)[support]
    p = s.copy()
    gamma = float(s @ s)
    for _ in range(iters):
        if gamma <= 1e-30:
            break
        pf = np.zeros(n)
        pf[support] = p
        q = A.forward(pf)
        qq = float(q @ q)
        if qq <= 0.0:
            break
        a = gamma / qq
        x[support] += a * p
        r -= a * q
        s = A.adjoint(r)[support]
        gamma_new = float(s @ s)
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new
    return x


def solve_l1(
    A,
    y,
    tau: float | None = None,
    tol: float = TOL,
    max_iter: int = MAX_ITER,
    *,
    tau_rel: float = TAU_REL,
    continuation: float = CONTINUATION,
    debias: bool = True,
    debias_iter: int = DEBIAS_ITER,
    lipschitz: float | None = None,
    trace: bool = False,
) -> SolveResult:
    """l1-regularized least squares with continuation and debiasing.

    ``tau`` defaults to ``tau_rel * ||A^T y||_inf``.  Each continuation stage
    runs monotone FISTA until the relative change of the objective between
    accepted iterates drops below ``tol``; the final stage decides
    ``converged``.  Running out of ``max_iter`` is not an error: the best
    iterate is returned with ``converged=False``.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (A.dim_out,):
        raise LengthError(f"measurement vector has shape {y.shape}, expected ({A.dim_out},)")
    if tol <= 0:
        raise ConfigurationError("tol must be positive")
    if not 0 < continuation < 1:
        raise ConfigurationError("continuation factor must lie in (0, 1)")

    n = A.dim_in
    aty = A.adjoint(y)
    aty_max = float(np.max(np.abs(aty))) if n else 0.0
    if tau is None:
        tau = tau_rel * aty_max
    if aty_max == 0.0 or tau >= aty_max:
        # zero is optimal
        zero = np.zeros(n)
        return SolveResult(zero, 0, float(np.linalg.norm(y)), True, tau, zero.copy(), np.array([], dtype=int))
    if tau <= 0:
        raise ConfigurationError("tau must be positive")

    L = power_norm_sq(A) * 1.05 if lipschitz is None else float(lipschitz)
    step = 1.0 / L

    x = np.zeros(n)
    ax = np.zeros(A.dim_out)
    history = []
    iterations = 0
    converged = False
    stage_tau = max(tau, continuation * aty_max)

    while True:
        final_stage = stage_tau <= tau
        t = 1.0
        yk, ayk = x.copy(), ax.copy()
        r = y - ax
        f_x = 0.5 * float(r @ r) + stage_tau * float(np.abs(x).sum())
        stage_done = False
        while iterations < max_iter:
            iterations += 1
            grad = A.adjoint(ayk - y)
            z = soft_threshold(yk - step * grad, stage_tau * step)
            az = A.forward(z)
            rz = y - az
            f_z = 0.5 * float(rz @ rz) + stage_tau * float(np.abs(z).sum())
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            if f_z <= f_x:
                x_prev, ax_prev = x, ax
                x, ax = z, az
                change = (f_x - f_z) / max(f_z, 1e-300)
                f_x = f_z
                if trace:
                    history.append((stage_tau, f_x))
                yk = x + ((t - 1.0) / t_next) * (x - x_prev)
                ayk = ax + ((t - 1.0) / t_next) * (ax - ax_prev)
                if change < tol:
                    stage_done = True
                    t = t_next
                    break
            else:
                yk = x + (t / t_next) * (z - x)
                ayk = ax + (t / t_next) * (az - ax)
            t = t_next
        if final_stage or iterations >= max_iter:
            converged = final_stage and stage_done
            break
        stage_tau = max(tau, continuation * stage_tau)

    alpha_lasso = x
    support = np.flatnonzero(alpha_lasso)
    if len(support) > A.dim_out:
        keep = np.argsort(-np.abs(alpha_lasso[support]), kind="stable")[: A.dim_out]
        support = np.sort(support[keep])
    alpha_hat = alpha_lasso
    if debias and len(support):
        alpha_hat = _cgls_on_support(A, y, alpha_lasso, support, debias_iter)
    residual = float(np.linalg.norm(y - A.forward(alpha_hat)))
    return SolveResult(alpha_hat, iterations, residual, converged, tau, alpha_lasso, support, history)


def solve_omp(A, y, k_max: int, residual_tol: float = 1e-10) -> SolveResult:
    """Orthogonal Matching Pursuit.

    Picks the atom most correlated with the residual, refits by least
    squares on the grown support (normal equations with a 1e-12 ridge), and
    stops after ``k_max`` atoms or once ``||r|| <= residual_tol``.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (A.dim_out,):
        raise LengthError(f"measurement vector has shape {y.shape}, expected ({A.dim_out},)")
    if k_max > A.dim_out:
        raise ConfigurationError(f"k_max={k_max} exceeds the number of measurements {A.dim_out}")
    n = A.dim_in
    support: list[int] = []
    atoms = []
    coef = np.zeros(0)
    r = y.copy()
    it = 0
    while len(support) < k_max and np.linalg.norm(r) > residual_tol:
        corr = np.abs(A.adjoint(r))
        corr[support] = -1.0
        j = int(np.argmax(corr))
        e = np.zeros(n)
        e[j] = 1.0
        support.append(j)
        atoms.append(A.forward(e))
        As = np.column_stack(atoms)
        G = As.T @ As + 1e-12 * np.eye(len(support))
        coef = np.linalg.solve(G, As.T @ y)
        r = y - As @ coef
        it += 1
    alpha = np.zeros(n)
    alpha[support] = coef
    res = float(np.linalg.norm(r))
    return SolveResult(alpha, it, res, res <= residual_tol or len(support) == k_max, None, None,
                       np.array(sorted(support), dtype=int))


def relative_error(alpha_hat, alpha) -> float:
    alpha_hat, alpha = np.asarray(alpha_hat, float), np.asarray(alpha, float)
    den = float(np.linalg.norm(alpha))
    num = float(np.linalg.norm(alpha_hat - alpha))
    return num / den if den > 0 else num


def check_exact_recovery(alpha_hat, alpha, rel_tol: float = EXACT_REL_TOL) -> bool:
    """``||alpha_hat - alpha|| <= rel_tol * ||alpha||``; for ``alpha = 0``, ``||alpha_hat|| <= rel_tol``."""
    alpha_hat, alpha = np.asarray(alpha_hat, float), np.asarray(alpha, float)
    if alpha_hat.shape != alpha.shape:
        raise LengthError(f"length mismatch: {alpha_hat.shape} vs {alpha.shape}")
    den = float(np.linalg.norm(alpha))
    if den == 0.0:
        return float(np.linalg.norm(alpha_hat)) <= rel_tol
    return float(np.linalg.norm(alpha_hat - alpha)) <= rel_tol * den
