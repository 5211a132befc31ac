"""The structurally random sensing operator ``sqrt(N/M) * D * F * R``."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, LengthError
from .randomize import (
    Randomizer,
    RandomizerKind,
    RandomizerSpec,
    apply_randomizer,
    apply_randomizer_adjoint,
    build_randomizer,
    fisher_yates,
    make_rng,
)
from .transforms import (
    MATERIALIZE_CAP,
    LinearMap,
    TransformKind,
    TransformSpec,
    block_adjoint,
    block_apply,
    materialize,
)

__all__ = [
    "SubsampleSet",
    "SrmOperator",
    "ComposedOperator",
    "make_subsampler",
    "make_operator",
    "srm_forward",
    "srm_adjoint",
    "compose",
    "entries_in_sign_set",
]


@dataclass(frozen=True)
class SubsampleSet:
    omega: np.ndarray
    include_dc: bool
    seed: int
    n: int

    @property
    def m(self) -> int:
        return len(self.omega)


def make_subsampler(seed: int, n: int, m: int, include_dc: bool = False) -> SubsampleSet:
    """Uniform size-``m`` subset of ``range(n)`` drawn without replacement.

    With ``include_dc`` row 0 is always kept and the other ``m - 1`` rows
    come uniformly from ``1..n-1``.
    """
    if not 1 <= m <= n:
        raise ConfigurationError(f"need 1 <= m <= n, got m={m}, n={n}")
    rng = make_rng(seed)
    if include_dc:
        rest = fisher_yates(rng, n - 1, prefix=m - 1)[: m - 1] + 1
        omega = np.concatenate([[0], rest])
    else:
        omega = fisher_yates(rng, n, prefix=m)[:m]
    omega = np.sort(omega).astype(np.int64)
    omega.setflags(write=False)
    return SubsampleSet(omega, bool(include_dc), int(seed), n)


@dataclass(frozen=True)
class SrmOperator:
    """Immutable SRM operator; also usable as a :class:`LinearMap`."""

    n: int
    m: int
    transform: TransformSpec
    randomizer_spec: RandomizerSpec
    subsample: SubsampleSet
    randomizer: Randomizer = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 1 <= self.m <= self.n:
            raise ConfigurationError(f"need 1 <= m <= n, got m={self.m}, n={self.n}")
        if self.transform.signal_length != self.n or self.randomizer_spec.length != self.n:
            raise ConfigurationError("transform/randomizer length does not match n")
        if self.subsample.m != self.m or self.subsample.n != self.n:
            raise ConfigurationError("subsample set does not match (n, m)")
        object.__setattr__(self, "randomizer", build_randomizer(self.randomizer_spec))

    @property
    def scale(self) -> float:
        return math.sqrt(self.n / self.m)

    @property
    def dim_in(self) -> int:
        return self.n

    @property
    def dim_out(self) -> int:
        return self.m

    def forward(self, x):
        return srm_forward(self, x)

    def adjoint(self, y):
        return srm_adjoint(self, y)

    def as_map(self) -> LinearMap:
        return LinearMap(self.forward, self.adjoint, self.n, self.m)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "transform": {"kind": self.transform.kind.value, "block": self.transform.block_size},
            "randomizer": {"kind": self.randomizer_spec.kind.value, "seed": int(self.randomizer_spec.seed)},
            "subsample": {"seed": int(self.subsample.seed), "include_dc": self.subsample.include_dc},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SrmOperator":
        return make_operator(
            n=int(d["n"]),
            m=int(d["m"]),
            kind=d["transform"]["kind"],
            block=int(d["transform"]["block"]),
            randomizer=d["randomizer"]["kind"],
            randomizer_seed=int(d["randomizer"]["seed"]),
            subsample_seed=int(d["subsample"]["seed"]),
            include_dc=bool(d["subsample"]["include_dc"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "SrmOperator":
        return cls.from_dict(json.loads(text))


def make_operator(
    n: int,
    m: int,
    kind="wht",
    block: int | None = None,
    randomizer="local",
    randomizer_seed: int = 0,
    subsample_seed: int = 1,
    include_dc: bool = False,
) -> SrmOperator:
    tspec = TransformSpec(TransformKind(kind), n if block is None else block, n)
    rspec = RandomizerSpec(RandomizerKind(randomizer), randomizer_seed, n)
    sub = make_subsampler(subsample_seed, n, m, include_dc)
    return SrmOperator(n, m, tspec, rspec, sub)


def srm_forward(op: SrmOperator, x) -> np.ndarray:
    """Pre-randomize, transform, keep the rows in ``omega``, rescale."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != op.n:
        raise LengthError(f"operator expects length {op.n}, got {x.shape[-1]}")
    z = block_apply(op.transform, apply_randomizer(op.randomizer, x))
    return op.scale * z[..., op.subsample.omega]


def srm_adjoint(op: SrmOperator, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != op.m:
        raise LengthError(f"adjoint expects length {op.m}, got {y.shape[-1]}")
    z = np.zeros(y.shape[:-1] + (op.n,))
    z[..., op.subsample.omega] = op.scale * y
    return apply_randomizer_adjoint(op.randomizer, block_adjoint(op.transform, z))


@dataclass(frozen=True)
class ComposedOperator:
    """``A = Phi Psi`` acting on coefficient vectors."""

    phi: object
    psi: LinearMap

    @property
    def dim_in(self) -> int:
        return self.psi.dim_in

    @property
    def dim_out(self) -> int:
        return self.phi.dim_out

    def forward(self, alpha):
        return self.phi.forward(self.psi.forward(alpha))

    def adjoint(self, y):
        return self.psi.adjoint(self.phi.adjoint(y))

    def as_map(self) -> LinearMap:
        return LinearMap(self.forward, self.adjoint, self.dim_in, self.dim_out)


def compose(op, psi: LinearMap) -> ComposedOperator:
    if psi.dim_out != op.dim_in or psi.dim_in != op.dim_in:
        raise ConfigurationError(
            f"basis of shape {psi.dim_out}x{psi.dim_in} does not fit operator with n={op.dim_in}"
        )
    return ComposedOperator(op, psi)


def entries_in_sign_set(op: SrmOperator, cap: int = MATERIALIZE_CAP, atol: float = 1e-12) -> bool:
    """True iff every entry of ``D F R`` times ``sqrt(B)`` is +-1."""
    dense = materialize(op.as_map(), cap=cap) / op.scale
    dense *= math.sqrt(op.transform.block_size)
    return bool(np.all(np.abs(np.abs(dense) - 1.0) <= atol))
