"""
Tests for the spectral field type and the exact Fourier arithmetic.

Validates:
- Leray projection and field invariants
- Sobolev inner products and norms of real order
- Laplacian and linear combinations
- The bilinear map P against the double-sum oracle
"""

import numpy as np
import pytest
from pydantic import ValidationError

from app.models.spectral import ProblemSpec, SpectralField, invariant_defects
from app.services import spectral_core as sc
from tests import oracles
from tests.conftest import random_field


def single_pair(dim=3, k=(1, 0, 0), c=(0, 1, 0)):
    return SpectralField.from_modes(dim, {tuple(k): np.asarray(c, dtype=complex)})


class TestSpectralField:
    def test_from_modes_inserts_conjugate(self):
        field = SpectralField.from_modes(3, {(1, 2, 0): [2.0, -1.0, 1j]})
        np.testing.assert_array_equal(field.coefficient((-1, -2, 0)), np.conj([2.0, -1.0, 1j]))
        assert field.truncation == 2

    def test_rejects_divergence(self):
        with pytest.raises(ValueError, match="divergence"):
            SpectralField.from_modes(3, {(1, 0, 0): [1.0, 0.0, 0.0]})

    def test_rejects_inconsistent_partner(self):
        with pytest.raises(ValueError, match="conjugate"):
            SpectralField.from_modes(2, {(1, 0): [0.0, 1.0], (-1, 0): [0.0, 2.0]})

    def test_rejects_mean(self):
        coeffs = np.zeros((2, 3, 3), dtype=complex)
        coeffs[:, 1, 1] = [1.0, 0.0]
        with pytest.raises(ValueError, match="mean"):
            SpectralField(dim=2, truncation=1, coeffs=coeffs)

    def test_immutable(self):
        field = single_pair()
        with pytest.raises(ValidationError):
            field.truncation = 3
        with pytest.raises(ValueError):
            field.coeffs[0, 0, 0, 0] = 1.0

    def test_invariant_defects_within_tolerance(self):
        field = random_field(3, 3.0, seed=1)
        divergence, reality = invariant_defects(field)
        scale = np.max(np.abs(field.coeffs))
        assert divergence <= 1e-12 * scale
        assert reality <= 1e-12 * scale

    def test_json_dict_lists_canonical_modes(self):
        field = single_pair(k=(0, 1, 1), c=(1.0, 1j, -1j))
        data = field.to_json_dict()
        assert data["dim"] == 3
        assert [m["k"] for m in data["modes"]] == [[0, 1, 1]]
        restored = SpectralField.from_json_dict(data)
        np.testing.assert_array_equal(restored.coeffs, field.coeffs)

    def test_truncate_and_pad(self):
        field = random_field(2, 3.0, seed=2)
        low = sc.truncate(field, 1)
        assert low.truncation == 1
        np.testing.assert_array_equal(low.coefficient((1, -1)), field.coefficient((1, -1)))
        padded = sc.pad(low, 4)
        np.testing.assert_array_equal(padded.coefficient((1, 1)), field.coefficient((1, 1)))
        np.testing.assert_array_equal(padded.coefficient((3, 0)), np.zeros(2))


class TestLerayProject:
    def test_identity_on_divergence_free(self):
        field = random_field(3, 2.0, seed=3)
        raw = {k: c for k, c in field.canonical_modes()}
        projected = sc.leray_project(raw, 3)
        np.testing.assert_allclose(projected.coeffs, field.coeffs, atol=1e-14)

    def test_gradient_is_annihilated(self, rng):
        raw = {}
        for k in [(1, 0, 0), (1, 2, -1), (0, 1, 1), (2, -1, 0)]:
            phi = complex(rng.standard_normal(), rng.standard_normal())
            raw[k] = 1j * np.asarray(k) * phi
        projected = sc.leray_project(raw, 3)
        assert np.max(np.abs(projected.coeffs)) < 1e-14

    def test_by_hand_example(self):
        projected = sc.leray_project({(1, 0, 0): [2.0, 1.0, 0.0]}, 3)
        np.testing.assert_allclose(projected.coefficient((1, 0, 0)), [0.0, 1.0, 0.0])
        np.testing.assert_allclose(projected.coefficient((-1, 0, 0)), [0.0, 1.0, 0.0])

    def test_drops_mean_mode(self):
        projected = sc.leray_project({(0, 0): [1.0, 1.0], (0, 1): [1.0, 0.0]}, 2)
        np.testing.assert_array_equal(projected.coefficient((0, 0)), np.zeros(2))

    def test_rejects_dimension_one(self):
        with pytest.raises(ValueError, match="at least 2"):
            sc.leray_project({(1,): [1.0]}, 1)


class TestSobolev:
    @pytest.mark.parametrize("s", [0.0, 1.5, 3.0, 4.25])
    def test_zero_field(self, s):
        assert sc.sobolev_inner(SpectralField.zeros(3, 2), SpectralField.zeros(3, 2), s) == 0.0
        assert sc.sobolev_norm(SpectralField.zeros(3), s) == 0.0

    @pytest.mark.parametrize("s", [0.0, 1.0, 2.5, 3.0])
    def test_single_pair(self, s):
        field = single_pair()
        assert sc.sobolev_inner(field, field, s) == pytest.approx(2.0, rel=1e-15)
        assert sc.sobolev_norm(field, s) == pytest.approx(np.sqrt(2.0), rel=1e-15)

    @pytest.mark.parametrize("s", [0.5, 2.0, 3.5])
    def test_pair_at_two(self, s):
        field = SpectralField.from_modes(2, {(2, 0): [0.0, 1.0]})
        assert sc.sobolev_norm(field, s) == pytest.approx(2.0 ** s * np.sqrt(2.0), rel=1e-14)

    def test_matches_direct_sum(self):
        v = random_field(3, 4.0, seed=4)
        w = random_field(3, 4.0, seed=5)
        for s in (0.0, 1.5, 3.0):
            expected = oracles.sobolev_inner(v, w, s)
            assert sc.sobolev_inner(v, w, s) == pytest.approx(expected, rel=1e-12)

    def test_symmetry(self):
        v = random_field(2, 4.0, seed=6)
        w = random_field(2, 3.0, seed=7)
        assert sc.sobolev_inner(v, w, 2.5) == pytest.approx(sc.sobolev_inner(w, v, 2.5), rel=1e-13)

    def test_monotone_in_order(self):
        for seed in range(1000):
            field = random_field(2 + seed % 2, 3.0, seed=seed)
            norms = [sc.sobolev_norm(field, s) for s in (0.0, 1.0, 2.5, 3.0, 4.5)]
            assert all(b >= a - 1e-13 * b for a, b in zip(norms, norms[1:]))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="Dimension mismatch"):
            sc.sobolev_inner(single_pair(), SpectralField.zeros(2), 1.0)

    def test_norms_array_matches_norm(self):
        field = random_field(3, 3.0, seed=8)
        norms = sc.sobolev_norms_array(field.coeffs, 3, field.truncation, [2.0, 3.0])
        assert norms[3.0] == pytest.approx(sc.sobolev_norm(field, 3.0), rel=1e-13)


class TestLinearOps:
    def test_laplacian_of_unit_pair_negates(self):
        field = single_pair()
        np.testing.assert_array_equal(sc.laplacian(field).coeffs, -field.coeffs)

    def test_laplacian_shifts_order(self):
        field = random_field(3, 3.0, seed=9)
        assert sc.sobolev_norm(sc.laplacian(field), 1.5) == pytest.approx(sc.sobolev_norm(field, 3.5), rel=1e-13)

    def test_axpy(self):
        v = random_field(2, 3.0, seed=10)
        w = random_field(2, 2.0, seed=11)
        np.testing.assert_array_equal(sc.field_axpy(0.0, v, w).coefficient((1, 1)), w.coefficient((1, 1)))
        np.testing.assert_array_equal(sc.field_axpy(1.0, v, SpectralField.zeros(2)).coeffs, v.coeffs)
        assert not np.any(sc.field_axpy(-1.0, v, v).coeffs)

    def test_axpy_of_nearly_equal_fields(self):
        v = random_field(3, 3.0, seed=1)
        gap = sc.field_axpy(-1.0, v, sc.field_scale(1.0 + 1e-6, v))
        assert sc.sobolev_norm(gap, 3.0) == pytest.approx(1e-6 * sc.sobolev_norm(v, 3.0), rel=1e-6)
        _, reality = invariant_defects(gap)
        assert reality == 0.0

    def test_arithmetic_result_is_symmetrized(self):
        v = random_field(2, 2.0, seed=2)
        noisy = np.array(v.coeffs)
        noisy[0, 3, 4] += 1e-3
        noisy[(slice(None), 2, 2)] = 1e-3
        field = SpectralField.from_arithmetic(2, v.truncation, noisy)
        _, reality = invariant_defects(field)
        assert reality == 0.0
        assert not np.any(field.coefficient((0, 0)))
        assert not field.coeffs.flags.writeable
        with pytest.raises(ValueError, match="does not match"):
            SpectralField.from_arithmetic(2, v.truncation + 1, noisy)

    def test_products_of_random_fields_stay_valid(self):
        v = random_field(3, 3.0, seed=3)
        w = random_field(3, 2.0, seed=4)
        result = sc.bilinear_p(v, w)
        divergence, reality = invariant_defects(result)
        assert reality == 0.0
        assert divergence < 1e-12 * np.max(np.abs(result.coeffs))


class TestBilinear:
    def test_zero_argument(self):
        v = random_field(3, 2.0, seed=12)
        assert not np.any(sc.bilinear_p(v, SpectralField.zeros(3)).coeffs)
        assert not np.any(sc.bilinear_p(SpectralField.zeros(3), v).coeffs)

    @pytest.mark.parametrize("dim,k,c", [(2, (1, 2), (2.0, -1.0)), (3, (1, -1, 2), (1.0, 1.0, 0.0))])
    def test_single_pair_vanishes(self, dim, k, c):
        field = SpectralField.from_modes(dim, {k: np.asarray(c) * (1 + 0.5j)})
        result = sc.bilinear_p(field, field)
        assert np.max(np.abs(result.coeffs)) < 1e-13
        assert np.max(np.abs(oracles.bilinear_p(field, field))) < 1e-13

    def test_crossed_pairs(self):
        v = SpectralField.from_modes(3, {(1, 0, 0): [0.0, 1.0, 0.0]})
        w = SpectralField.from_modes(3, {(0, 1, 0): [1.0, 0.0, 0.0]})
        result = sc.bilinear_p(v, w)
        active = {
            k for k in [(1, 1, 0), (-1, -1, 0), (1, -1, 0), (-1, 1, 0)]
            if np.max(np.abs(result.coefficient(k))) > 1e-12
        }
        assert len(active) == 4
        assert np.count_nonzero(np.any(np.abs(result.coeffs) > 1e-12, axis=0)) == 4
        np.testing.assert_allclose(result.coeffs, oracles.bilinear_p(v, w), atol=1e-14)

    def test_matches_double_sum(self):
        rng = np.random.default_rng(99)
        for trial in range(200):
            dim = 2 + trial % 2
            v = random_field(dim, float(rng.integers(1, 5)), seed=1000 + trial, decay=1.0)
            w = random_field(dim, float(rng.integers(1, 5)), seed=5000 + trial, decay=1.0)
            result = sc.bilinear_p(v, w)
            expected = oracles.bilinear_p(v, w)
            scale = np.sqrt(np.sum(np.abs(expected) ** 2))
            error = np.sqrt(np.sum(np.abs(result.coeffs - expected) ** 2))
            assert error <= 1e-12 * scale

    def test_output_satisfies_invariants(self):
        v = random_field(3, 3.0, seed=13)
        w = random_field(3, 2.0, seed=14)
        result = sc.bilinear_p(v, w)
        assert result.truncation == v.truncation + w.truncation
        divergence, reality = invariant_defects(result)
        assert divergence <= 1e-12 * np.max(np.abs(result.coeffs))
        assert reality == 0.0

    def test_energy_orthogonality(self):
        v = random_field(3, 3.0, seed=15)
        w = random_field(3, 3.0, seed=16)
        product = sc.bilinear_p(v, w)
        scale = sc.sobolev_norm(product, 0.0) * sc.sobolev_norm(w, 0.0)
        assert abs(sc.sobolev_inner(product, w, 0.0)) <= 1e-12 * scale


class TestProblemSpec:
    def test_rejects_low_base_order(self):
        with pytest.raises(ValidationError, match="must exceed"):
            ProblemSpec(dim=3, nu=1.0, n=2.5, datum=SpectralField.zeros(3))

    def test_rejects_order_below_base(self):
        with pytest.raises(ValidationError, match="below the base order"):
            ProblemSpec(dim=3, nu=1.0, n=3.0, orders=[2.9], datum=SpectralField.zeros(3))

    def test_bound_orders(self):
        spec = ProblemSpec(dim=3, nu=1.0, n=3, orders=[4, 3, 4.5], datum=SpectralField.zeros(3))
        assert spec.bound_orders == [3.0, 4.0, 4.5]
        assert spec.forcing_is_zero
