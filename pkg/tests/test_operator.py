import json
import math

import numpy as np
import pytest

from srmcs.errors import ConfigurationError, LengthError
from srmcs.operator import (
    SrmOperator,
    compose,
    entries_in_sign_set,
    make_operator,
    make_subsampler,
    srm_adjoint,
    srm_forward,
)
from srmcs.randomize import derive_seed
from srmcs.transforms import basis_map, identity_map, materialize

ENSEMBLES = [
    ("wht", None, "local"),
    ("wht", None, "global"),
    ("wht", 8, "local"),
    ("wht", 8, "global"),
    ("dct", None, "local"),
    ("dct", 16, "global"),
    ("identity", None, "local"),
    ("db8", None, "global"),
]
IDS = [f"{k}{b or ''}-{r}" for k, b, r in ENSEMBLES]


def explicit_phi(op: SrmOperator) -> np.ndarray:
    """Build sqrt(N/M) D F R from its three factors."""
    n = op.n
    F = materialize(SrmOperator(n, n, op.transform, op.randomizer_spec,
                                make_subsampler(0, n, n)).as_map())  # F R with M = N
    D = np.eye(n)[op.subsample.omega]
    return op.scale * D @ F


class TestSubsampler:
    def test_full(self):
        np.testing.assert_array_equal(make_subsampler(3, 10, 10).omega, np.arange(10))

    def test_forced_dc(self):
        np.testing.assert_array_equal(make_subsampler(3, 10, 1, include_dc=True).omega, [0])
        for s in range(50):
            om = make_subsampler(s, 32, 5, include_dc=True).omega
            assert om[0] == 0 and len(set(om.tolist())) == 5

    def test_size_and_sorted(self):
        om = make_subsampler(11, 100, 37).omega
        assert len(om) == 37 and np.all(np.diff(om) > 0)

    def test_m_exceeds_n(self):
        with pytest.raises(ConfigurationError):
            make_subsampler(0, 8, 9)

    def test_inclusion_frequency(self):
        counts = np.zeros(8)
        for i in range(10_000):
            counts[make_subsampler(derive_seed(1, i), 8, 4).omega] += 1
        np.testing.assert_allclose(counts / 10_000, 0.5, atol=0.02)


class TestForwardAdjoint:
    def test_identity_full(self):
        op = make_operator(16, 16, "identity", None, "local", 5, 6)
        x = np.random.default_rng(0).standard_normal(16)
        assert op.scale == 1.0
        np.testing.assert_array_equal(srm_forward(op, x), op.randomizer.signs * x)

    @pytest.mark.parametrize("kind,block,r", ENSEMBLES, ids=IDS)
    def test_materialized_equals_functional(self, kind, block, r):
        op = make_operator(32, 8, kind, block, r, 7, 8)
        P = explicit_phi(op)
        x = np.random.default_rng(1).standard_normal(32)
        np.testing.assert_allclose(P @ x, srm_forward(op, x), atol=1e-12)
        np.testing.assert_allclose(materialize(op, adjoint=True), P.T, atol=1e-12)

    def test_energy_on_average(self):
        x = np.random.default_rng(2).standard_normal(128)
        ratios = [np.sum(srm_forward(make_operator(128, 32, "dct", None, "local", s, 1000 + s), x) ** 2)
                  / np.sum(x**2) for s in range(200)]
        assert 0.9 <= np.mean(ratios) <= 1.1

    @pytest.mark.parametrize("kind,block,r", ENSEMBLES, ids=IDS)
    def test_adjoint_consistency(self, kind, block, r):
        op = make_operator(256, 128, kind, block, r, 9, 10)
        rng = np.random.default_rng(3)
        for _ in range(20):
            x, y = rng.standard_normal(256), rng.standard_normal(128)
            assert abs(op.forward(x) @ y - x @ op.adjoint(y)) <= 1e-10 * np.linalg.norm(x) * np.linalg.norm(y)

    @pytest.mark.parametrize("r", ["local", "global"])
    def test_full_sampling_is_orthonormal(self, r):
        op = make_operator(64, 64, "wht", None, r, 1, 2)
        x = np.random.default_rng(4).standard_normal(64)
        np.testing.assert_allclose(srm_adjoint(op, srm_forward(op, x)), x, atol=1e-10)

    def test_length_errors(self):
        op = make_operator(16, 4)
        with pytest.raises(LengthError):
            op.forward(np.ones(15))
        with pytest.raises(LengthError):
            op.adjoint(np.ones(5))

    @pytest.mark.parametrize("kind,block,r", ENSEMBLES, ids=IDS)
    def test_linearity(self, kind, block, r):
        op = make_operator(64, 24, kind, block, r, 3, 4)
        rng = np.random.default_rng(5)
        x, z = rng.standard_normal((2, 64))
        a, b = 2.5, -0.75
        lhs, rhs = op.forward(a * x + b * z), a * op.forward(x) + b * op.forward(z)
        assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(rhs)

    @pytest.mark.parametrize("kind,block,r", ENSEMBLES, ids=IDS)
    def test_row_orthogonality(self, kind, block, r):
        op = make_operator(64, 20, kind, block, r, 12, 13)
        P = materialize(op)
        np.testing.assert_allclose(P @ P.T, (64 / 20) * np.eye(20), atol=1e-10)

    def test_determinism_bitwise(self):
        x = np.random.default_rng(6).standard_normal(128)
        a = make_operator(128, 40, "dct", 32, "global", 77, 78).forward(x)
        b = make_operator(128, 40, "dct", 32, "global", 77, 78).forward(x)
        assert a.tobytes() == b.tobytes()

    def test_scale_invariant(self):
        op = make_operator(100, 30, "dct")
        assert op.scale**2 * op.m / op.n == pytest.approx(1.0, abs=1e-15)


class TestCompose:
    def test_identity_basis(self):
        op = make_operator(32, 12, "wht", None, "global", 1, 2)
        A = compose(op, identity_map(32))
        x = np.random.default_rng(7).standard_normal(32)
        np.testing.assert_array_equal(A.forward(x), op.forward(x))

    @pytest.mark.parametrize("psi", ["idct", "db8", "wht"])
    def test_matrix_product(self, psi):
        op = make_operator(32, 12, "dct", 8, "local", 1, 2)
        P = basis_map(psi, 32)
        np.testing.assert_allclose(materialize(compose(op, P)), materialize(op) @ materialize(P), atol=1e-12)

    def test_adjoint(self):
        A = compose(make_operator(256, 128, "wht", 64, "local", 1, 2), basis_map("db8", 256))
        rng = np.random.default_rng(8)
        x, y = rng.standard_normal(256), rng.standard_normal(128)
        assert abs(A.forward(x) @ y - x @ A.adjoint(y)) <= 1e-10 * np.linalg.norm(x) * np.linalg.norm(y)

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigurationError):
            compose(make_operator(32, 8), identity_map(16))


class TestSignSet:
    def test_wht_local(self):
        assert entries_in_sign_set(make_operator(16, 8, "wht", None, "local", 1, 2))

    def test_dct_local(self):
        assert not entries_in_sign_set(make_operator(16, 8, "dct", None, "local", 1, 2))

    def test_wht_global(self):
        assert entries_in_sign_set(make_operator(32, 32, "wht", None, "global", 1, 2))


def test_json_round_trip():
    op = make_operator(64, 20, "dct", 16, "global", 123456789012345, 42, include_dc=True)
    d = json.loads(op.to_json())
    assert d == {"n": 64, "m": 20, "transform": {"kind": "dct", "block": 16},
                 "randomizer": {"kind": "global", "seed": 123456789012345},
                 "subsample": {"seed": 42, "include_dc": True}}
    op2 = SrmOperator.from_json(op.to_json())
    x = np.random.default_rng(9).standard_normal(64)
    assert op2.forward(x).tobytes() == op.forward(x).tobytes()
    assert 0 in op2.subsample.omega.tolist()
