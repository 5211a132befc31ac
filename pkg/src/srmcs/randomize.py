"""Pre-randomization: local sign flips and global permutations.

All randomness comes from numpy's PCG64 bit generator seeded with a 64-bit
integer, so every draw can be replayed from its seed alone.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, LengthError

__all__ = [
    "RandomizerKind",
    "RandomizerSpec",
    "Randomizer",
    "make_rng",
    "derive_seed",
    "random_signs",
    "fisher_yates",
    "build_randomizer",
    "apply_randomizer",
    "apply_randomizer_adjoint",
]

_U64 = (1 << 64) - 1


class RandomizerKind(str, enum.Enum):
    LOCAL = "local"
    GLOBAL = "global"


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator for a 64-bit unsigned seed."""
    seed = int(seed)
    if not 0 <= seed <= _U64:
        raise ConfigurationError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def derive_seed(master_seed: int, *keys: int) -> int:
    """Child 64-bit seed for ``(master_seed, *keys)`` via numpy's SeedSequence hashing."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def random_signs(rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` fair +-1 draws: top bit of each raw 64-bit output, 0 -> +1, 1 -> -1."""
    raw = rng.bit_generator.random_raw(n)
    bits = (np.asarray(raw, dtype=np.uint64) >> np.uint64(63)).astype(np.int8)
    return (1 - 2 * bits).astype(np.int8)


def fisher_yates(rng: np.random.Generator, n: int, prefix: int | None = None) -> np.ndarray:
    """Uniform random permutation of ``range(n)`` by Fisher-Yates.

    With ``prefix=m`` only the first ``m`` swaps are performed, so the first
    ``m`` entries are a uniform ``m``-subset in uniform order.
    """
    m = n if prefix is None else prefix
    perm = np.arange(n, dtype=np.int64)
    if n < 2 or m < 1:
        return perm
    steps = min(m, n - 1)
    # position i swaps with a uniform pick from [i, n)
    picks = rng.integers(np.arange(steps), n, dtype=np.int64)
    for i, j in enumerate(picks.tolist()):
        perm[i], perm[j] = perm[j], perm[i]
    return perm


@dataclass(frozen=True)
class RandomizerSpec:
    kind: RandomizerKind
    seed: int
    length: int

    def __post_init__(self):
        object.__setattr__(self, "kind", RandomizerKind(self.kind))
        if self.length < 1:
            raise ConfigurationError(f"randomizer length must be >= 1, got {self.length}")
        if not 0 <= int(self.seed) <= _U64:
            raise ConfigurationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


@dataclass(frozen=True)
class Randomizer:
    """Built randomizer.  ``signs`` is set for LOCAL, ``perm`` for GLOBAL.

    For GLOBAL, ``(R v)[i] = v[perm[i]]``.
    """

    spec: RandomizerSpec
    signs: np.ndarray | None = None
    perm: np.ndarray | None = None
    inverse_perm: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.spec.length

    def as_array(self) -> np.ndarray:
        return self.signs if self.signs is not None else self.perm


def build_randomizer(spec: RandomizerSpec) -> Randomizer:
    rng = make_rng(spec.seed)
    if spec.kind is RandomizerKind.LOCAL:
        signs = random_signs(rng, spec.length)
        signs.setflags(write=False)
        return Randomizer(spec, signs=signs)
    perm = fisher_yates(rng, spec.length)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(spec.length)
    perm.setflags(write=False)
    inv.setflags(write=False)
    return Randomizer(spec, perm=perm, inverse_perm=inv)


def _check(r: Randomizer, v) -> np.ndarray:
    v = np.asarray(v)
    if v.shape[-1] != r.n:
        raise LengthError(f"randomizer of length {r.n} applied to vector of length {v.shape[-1]}")
    return v


def apply_randomizer(r: Randomizer, v) -> np.ndarray:
    v = _check(r, v)
    if r.signs is not None:
        return v * r.signs
    return v[..., r.perm]


def apply_randomizer_adjoint(r: Randomizer, v) -> np.ndarray:
    v = _check(r, v)
    if r.signs is not None:
        return v * r.signs
    return v[..., r.inverse_perm]
