"""Structurally random matrices for compressive sensing.

Sensing operator ``sqrt(N/M) * D * F * R``: a random sign flip or
permutation ``R``, a fast orthonormal transform ``F`` (optionally block
diagonal) and a random row selection ``D``.  Includes l1 and OMP recovery,
coherence statistics and a Monte-Carlo experiment harness.
"""
from .errors import ConfigurationError, LengthError, SizeError, SrmError
from .operator import ComposedOperator, SrmOperator, compose, make_operator, make_subsampler
from .randomize import RandomizerKind, RandomizerSpec, build_randomizer
from .recovery import SolveResult, SparseSignalSpec, check_exact_recovery, generate_sparse_signal, solve_l1, solve_omp
from .transforms import LinearMap, TransformKind, TransformSpec, basis_map, materialize

__version__ = "0.1.0"
