"""Fast orthonormal transforms and sparsifying bases.

Every transform here acts along the last axis of its input, so a 2-D array
of shape ``(batch, n)`` is transformed row by row in one call.  That is what
makes :func:`materialize` cheap: it pushes an identity matrix through the map.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.fft
import scipy.linalg

from .errors import ConfigurationError, LengthError, SizeError

__all__ = [
    "TransformKind",
    "TransformSpec",
    "LinearMap",
    "wht_apply",
    "dct_apply",
    "dct_inverse",
    "block_apply",
    "block_adjoint",
    "daubechies_lowpass",
    "max_wavelet_levels",
    "wavelet_analysis",
    "wavelet_synthesis",
    "transform_map",
    "basis_map",
    "identity_map",
    "dense_map",
    "materialize",
    "MATERIALIZE_CAP",
]

MATERIALIZE_CAP = 4096
DB_ORDER = 8


class TransformKind(str, enum.Enum):
    WHT = "wht"
    DCT = "dct"
    IDENTITY = "identity"
    DB8_WAVELET = "db8"


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class TransformSpec:
    """Which orthonormal ``F`` to apply, and on what block size.

    ``block_size`` must divide ``signal_length``; WHT blocks must be powers
    of two.  ``IDENTITY`` ignores the block size.
    """

    kind: TransformKind
    block_size: int
    signal_length: int

    def __post_init__(self):
        object.__setattr__(self, "kind", TransformKind(self.kind))
        n, b = self.signal_length, self.block_size
        if n < 1 or b < 1:
            raise ConfigurationError(f"block_size and signal_length must be positive, got B={b}, N={n}")
        if n % b:
            raise ConfigurationError(f"block size {b} does not divide signal length {n}")
        if self.kind is TransformKind.WHT and not _is_pow2(b):
            raise ConfigurationError(f"WHT block size must be a power of two, got {b}")

    @classmethod
    def full(cls, kind, n: int) -> "TransformSpec":
        return cls(TransformKind(kind), n, n)


@dataclass(frozen=True)
class LinearMap:
    """A matrix-free linear map ``R^dim_in -> R^dim_out`` with its adjoint.

    Both callables must act on the last axis of their argument.
    """

    forward: Callable[[np.ndarray], np.ndarray]
    adjoint: Callable[[np.ndarray], np.ndarray]
    dim_in: int
    dim_out: int

    def __call__(self, x):
        return self.forward(x)

    @property
    def T(self) -> "LinearMap":
        return LinearMap(self.adjoint, self.forward, self.dim_out, self.dim_in)

    def __matmul__(self, other: "LinearMap") -> "LinearMap":
        if other.dim_out != self.dim_in:
            raise ConfigurationError(
                f"cannot compose {self.dim_out}x{self.dim_in} with {other.dim_out}x{other.dim_in}"
            )
        return LinearMap(
            lambda x: self.forward(other.forward(x)),
            lambda y: other.adjoint(self.adjoint(y)),
            other.dim_in,
            self.dim_out,
        )


def _check_last(v: np.ndarray, n: int, what: str = "vector"):
    if v.shape[-1] != n:
        raise LengthError(f"{what} has length {v.shape[-1]}, expected {n}")


WHT_MAX_RADIX_BITS = 6


@lru_cache(maxsize=None)
def _hadamard_kernel(r: int) -> np.ndarray:
    h = scipy.linalg.hadamard(r).astype(float) / math.sqrt(r)
    h.setflags(write=False)
    return h


def _wht_radices(n: int) -> list[int]:
    bits = n.bit_length() - 1
    stages = max(1, -(-bits // WHT_MAX_RADIX_BITS))
    sizes = [bits // stages + (i < bits % stages) for i in range(stages)]
    return [1 << b for b in sizes]


def wht_apply(v) -> np.ndarray:
    """Orthonormal Walsh-Hadamard transform (natural/Hadamard ordering).

    Mixed-radix form of the butterfly: ``H_n = H_r1 (x) H_r2 (x) ...`` with
    each radix at most 64, so the signal is reshaped to ``(r1, r2, ...)`` and
    a small dense Hadamard kernel is applied along every axis.  Cost is
    ``n * sum(r_i)``, i.e. ``O(n log n)`` with the per-stage work done in BLAS.
    The normalized transform is its own inverse.
    """
    v = np.asarray(v, dtype=float)
    n = v.shape[-1]
    if not _is_pow2(n):
        raise LengthError(f"WHT length must be a power of two, got {n}")
    lead = v.shape[:-1]
    out = v.reshape(-1, n)
    pre = out.shape[0]
    post = n
    for r in _wht_radices(n):
        post //= r
        h = _hadamard_kernel(r)
        if post == 1:
            out = out.reshape(-1, r) @ h
        else:
            out = np.matmul(h, out.reshape(pre, r, post))
        pre *= r
    return out.reshape(lead + (n,))


def dct_apply(v) -> np.ndarray:
    """Orthonormal DCT-II along the last axis."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] < 1:
        raise LengthError("DCT needs at least one sample")
    return scipy.fft.dct(v, type=2, norm="ortho", axis=-1)


def dct_inverse(v) -> np.ndarray:
    """Inverse (= transpose) of :func:`dct_apply`, i.e. orthonormal DCT-III."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] < 1:
        raise LengthError("DCT needs at least one sample")
    return scipy.fft.idct(v, type=2, norm="ortho", axis=-1)


# ---------------------------------------------------------------- wavelets


@lru_cache(maxsize=None)
def daubechies_lowpass(order: int = DB_ORDER) -> tuple:
    """Minimum-phase Daubechies scaling filter with ``order`` vanishing moments.

    Obtained by spectral factorization of the Daubechies half-band
    polynomial; taps sum to sqrt(2).  ``order=8`` gives the 16-tap filter.
    """
    if order < 1:
        raise ConfigurationError("wavelet order must be >= 1")
    poly = [math.comb(order - 1 + k, k) for k in range(order)]
    zeros = [-1.0] * order
    if order > 1:
        for y in np.roots(poly[::-1]):
            # sin^2(w/2) = y  <=>  z^2 - (2 - 4y) z + 1 = 0; keep the root inside the unit circle
            r = np.roots([1.0, -(2.0 - 4.0 * y), 1.0])
            zeros.append(r[np.argmin(np.abs(r))])
    h = np.real(np.poly(np.array(zeros, dtype=complex)))
    h *= math.sqrt(2.0) / h.sum()
    return tuple(float(c) for c in h)


def _qmf_pair(order: int):
    h = np.array(daubechies_lowpass(order))
    g = h[::-1] * np.array([(-1) ** k for k in range(len(h))])
    return h, g


def max_wavelet_levels(n: int, order: int = DB_ORDER) -> int:
    """Deepest decomposition whose coarsest band is still >= the filter length."""
    taps = 2 * order
    if n < taps:
        return 0
    return int(math.floor(math.log2(n / (taps - 1))))


def _check_levels(n: int, levels: int):
    if levels < 0:
        raise ConfigurationError(f"levels must be non-negative, got {levels}")
    if n % (1 << levels):
        raise ConfigurationError(f"length {n} is not divisible by 2**{levels}")


def _analysis_step(x, h, g):
    even, odd = x[..., 0::2], x[..., 1::2]
    a = np.zeros_like(even)
    d = np.zeros_like(even)
    for j in range(len(h) // 2):
        e = np.roll(even, -j, axis=-1)
        o = np.roll(odd, -j, axis=-1)
        a += h[2 * j] * e + h[2 * j + 1] * o
        d += g[2 * j] * e + g[2 * j + 1] * o
    return a, d


def _synthesis_step(a, d, h, g):
    even = np.zeros_like(a)
    odd = np.zeros_like(a)
    for j in range(len(h) // 2):
        ra = np.roll(a, j, axis=-1)
        rd = np.roll(d, j, axis=-1)
        even += h[2 * j] * ra + g[2 * j] * rd
        odd += h[2 * j + 1] * ra + g[2 * j + 1] * rd
    out = np.empty(a.shape[:-1] + (2 * a.shape[-1],))
    out[..., 0::2] = even
    out[..., 1::2] = odd
    return out


def wavelet_analysis(v, levels: int, order: int = DB_ORDER) -> np.ndarray:
    """Periodized orthogonal Daubechies decomposition.

    Coefficients are laid out coarse to fine: ``[a_L, d_L, d_{L-1}, ..., d_1]``.
    """
    x = np.asarray(v, dtype=float)
    n = x.shape[-1]
    _check_levels(n, levels)
    h, g = _qmf_pair(order)
    details = []
    a = x
    for _ in range(levels):
        a, d = _analysis_step(a, h, g)
        details.append(d)
    return np.concatenate([a] + details[::-1], axis=-1)


def wavelet_synthesis(coeffs, levels: int, order: int = DB_ORDER) -> np.ndarray:
    """Inverse (= transpose) of :func:`wavelet_analysis`."""
    c = np.asarray(coeffs, dtype=float)
    n = c.shape[-1]
    _check_levels(n, levels)
    h, g = _qmf_pair(order)
    size = n >> levels
    a = c[..., :size]
    while size < n:
        d = c[..., size:2 * size]
        a = _synthesis_step(a, d, h, g)
        size *= 2
    return np.array(a, dtype=float, copy=True)


# ---------------------------------------------------------- block transforms


def _base_pair(kind: TransformKind, b: int):
    if kind is TransformKind.WHT:
        return wht_apply, wht_apply
    if kind is TransformKind.DCT:
        return dct_apply, dct_inverse
    if kind is TransformKind.DB8_WAVELET:
        lv = max_wavelet_levels(b)
        return (lambda x: wavelet_analysis(x, lv)), (lambda x: wavelet_synthesis(x, lv))
    raise ConfigurationError(f"no base transform for {kind}")


def _blockwise(spec: TransformSpec, v, inverse: bool) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n, b = spec.signal_length, spec.block_size
    _check_last(v, n)
    if spec.kind is TransformKind.IDENTITY or b == 1:
        # 1x1 orthonormal block is fixed to +1
        return v.copy()
    fwd, inv = _base_pair(spec.kind, b)
    f = inv if inverse else fwd
    lead = v.shape[:-1]
    out = f(v.reshape(lead + (n // b, b)))
    return out.reshape(lead + (n,))


def block_apply(spec: TransformSpec, v) -> np.ndarray:
    """Apply the block-diagonal transform: the base transform on every length-B block."""
    return _blockwise(spec, v, inverse=False)


def block_adjoint(spec: TransformSpec, v) -> np.ndarray:
    """Transpose (= inverse) of :func:`block_apply`."""
    return _blockwise(spec, v, inverse=True)


def transform_map(spec: TransformSpec) -> LinearMap:
    n = spec.signal_length
    return LinearMap(lambda v: block_apply(spec, v), lambda v: block_adjoint(spec, v), n, n)


def identity_map(n: int) -> LinearMap:
    return LinearMap(lambda v: np.array(v, dtype=float), lambda v: np.array(v, dtype=float), n, n)


def dense_map(matrix) -> LinearMap:
    A = np.asarray(matrix, dtype=float)
    return LinearMap(lambda v: np.asarray(v) @ A.T, lambda v: np.asarray(v) @ A, A.shape[1], A.shape[0])


_BASIS_ALIASES = {
    "identity": "identity",
    "id": "identity",
    "idct": "idct",
    "dct": "idct",
    "db8": "db8",
    "wavelet": "db8",
    "wht": "wht",
}


def basis_map(name: str, n: int, levels: int | None = None) -> LinearMap:
    """Sparsifying basis ``Psi`` as a map from coefficients to signal.

    ``idct``: columns are the DCT-II basis vectors (synthesis by DCT-III).
    ``db8``: periodized Daubechies-8 wavelet synthesis.
    ``wht``: normalized Hadamard.  ``identity``: canonical basis.
    """
    key = _BASIS_ALIASES.get(str(name).lower())
    if key is None:
        raise ConfigurationError(f"unknown sparsifying basis {name!r}")
    if key == "identity":
        return identity_map(n)
    if key == "idct":
        return LinearMap(dct_inverse, dct_apply, n, n)
    if key == "wht":
        if not _is_pow2(n):
            raise ConfigurationError(f"WHT basis needs a power-of-two length, got {n}")
        return LinearMap(wht_apply, wht_apply, n, n)
    lv = max_wavelet_levels(n) if levels is None else levels
    _check_levels(n, lv)
    return LinearMap(lambda c: wavelet_synthesis(c, lv), lambda x: wavelet_analysis(x, lv), n, n)


def materialize(lmap: LinearMap, cap: int = MATERIALIZE_CAP, adjoint: bool = False) -> np.ndarray:
    """Dense matrix of a linear map; column ``j`` is ``forward(e_j)``.

    With ``adjoint=True`` the adjoint is materialized instead, which should
    equal the transpose of the forward matrix.
    """
    dim_in = lmap.dim_out if adjoint else lmap.dim_in
    if dim_in > cap:
        raise SizeError(f"refusing to materialize a map with {dim_in} inputs (cap {cap})")
    f = lmap.adjoint if adjoint else lmap.forward
    cols = f(np.eye(dim_in))
    return np.ascontiguousarray(np.asarray(cols, dtype=float).T)
