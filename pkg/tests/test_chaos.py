import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wiener_coupling.chaos import (ChaosSpectrum, ChaosVariable, Kernel, MAX_ORDER, coupled_second_moment_exact,
                                   d12_ratio_profile, evaluate, lemma_multiplier_bounds, malliavin_norm_exact,
                                   multiplier)
from wiener_coupling.wiener import CouplingFunction, make_grid, sample_bundle

spectra = st.lists(st.floats(0, 10), min_size=1, max_size=12).map(lambda a: ChaosSpectrum(tuple(a)))


@pytest.fixture(scope="module")
def bundle():
    return sample_bundle(make_grid(0, 1, 4), 1, 200_000, 3)


class TestVariables:
    def test_brownian_moments(self, bundle):
        x = evaluate(ChaosVariable.brownian(1.0), bundle, CouplingFunction.constant(0))
        assert abs(x.mean()) < 4 * math.sqrt(1 / x.size)
        assert x.var() == pytest.approx(1.0, rel=0.01)
        np.testing.assert_allclose(x, bundle.increments_W.sum(axis=1)[:, 0], atol=1e-12)

    def test_second_order(self, bundle):
        x = evaluate(ChaosVariable.hermite(2), bundle, CouplingFunction.constant(0))
        w = bundle.increments_W.sum(axis=1)[:, 0]
        np.testing.assert_allclose(x, w**2 - 1, atol=1e-12)
        assert x.var() == pytest.approx(2.0, rel=0.02)

    def test_full_decoupling(self, bundle):
        x = evaluate(ChaosVariable.brownian(1.0), bundle, CouplingFunction.constant(1))
        np.testing.assert_allclose(x, bundle.increments_Wp.sum(axis=1)[:, 0], atol=1e-12)

    def test_spectrum_and_mean(self):
        xi = ChaosVariable(1, (Kernel(0, 0.5), Kernel(0.5, 1)), ((2.0, (0, 0)), (1.5, (1, 1)), (0.5, (3, 0))))
        assert xi.mean == 2.0
        assert xi.spectrum().a == (0.0, 2.25, 0.25)
        assert xi.max_order == 3

    def test_hermite_spectrum(self):
        for n in range(1, 5):
            assert ChaosVariable.hermite(n, 0, 2).spectrum().a[n - 1] == pytest.approx(math.factorial(n) * 2**n)

    def test_rejects_overlap_and_order(self):
        with pytest.raises(ValueError):
            ChaosVariable(1, (Kernel(0, 0.6), Kernel(0.5, 1)), ((1.0, (1, 1)),))
        with pytest.raises(ValueError):
            ChaosVariable.hermite(MAX_ORDER + 1)
        with pytest.raises(ValueError):
            Kernel(0.5, 0.5)

    def test_rejects_unaligned_kernel(self):
        b = sample_bundle(make_grid(0, 1, 4), 1, 10, 0)
        with pytest.raises(ValueError, match="not aligned"):
            evaluate(ChaosVariable.hermite(1, 0, 0.3), b, CouplingFunction.constant(0))

    def test_multidimensional_components(self):
        b = sample_bundle(make_grid(0, 1, 2), 2, 100_000, 5)
        xi = ChaosVariable(2, (Kernel(0, 1, 0), Kernel(0, 1, 1)), ((1.0, (1, 1)),))
        x = evaluate(xi, b, CouplingFunction.constant(0))
        assert x.var() == pytest.approx(1.0, rel=0.03)
        assert xi.spectrum().a == (0.0, 1.0)


class TestExact:
    @pytest.mark.parametrize("r, expected", [(1.0, 2.0), (0.5, 2 * (1 - math.sqrt(0.75)))])
    def test_brownian(self, r, expected):
        assert coupled_second_moment_exact(ChaosSpectrum((1.0,)), r) == pytest.approx(expected)

    def test_second_order_value(self):
        assert coupled_second_moment_exact(ChaosSpectrum.from_orders({2: 2.0}), 0.5) == pytest.approx(1.0)

    @pytest.mark.parametrize("r", [-0.1, 1.1])
    def test_rejects_r(self, r):
        with pytest.raises(ValueError):
            coupled_second_moment_exact(ChaosSpectrum((1.0,)), r)

    @given(spectra)
    def test_zero_at_identity(self, spec):
        assert coupled_second_moment_exact(spec, 0.0) == 0.0

    @given(spectra, st.floats(0, 1), st.floats(0, 1))
    def test_monotone_in_r(self, spec, r1, r2):
        lo, hi = sorted((r1, r2))
        assert coupled_second_moment_exact(spec, lo) <= coupled_second_moment_exact(spec, hi) + 1e-12

    @given(spectra)
    def test_full_decoupling_is_twice_variance(self, spec):
        assert coupled_second_moment_exact(spec, 1.0) == pytest.approx(2 * spec.variance)

    @pytest.mark.parametrize("orders, expected", [({1: 1.0}, 1.0), ({2: 2.0}, 2.0), ({}, 0.0)])
    def test_malliavin_norm(self, orders, expected):
        assert malliavin_norm_exact(ChaosSpectrum.from_orders(orders)) == pytest.approx(expected)

    def test_multiplier_small_r_precision(self):
        assert multiplier(2, 1e-18) == pytest.approx(1e-18, rel=1e-12)
        assert multiplier(1, 1.0) == 1.0


class TestLemma:
    @pytest.mark.parametrize("orders, r", [({1: 1.0}, 1.0), ({2: 1.0}, 1.0), ({3: 1.0}, 0.5)])
    def test_examples(self, orders, r):
        rep = lemma_multiplier_bounds(ChaosSpectrum.from_orders(orders), [r])
        assert rep.c1_ok and rep.c2_ok

    def test_third_order_margin(self):
        rep = lemma_multiplier_bounds(ChaosSpectrum.from_orders({3: 1.0}), [0.5])
        assert rep.bound_margin == pytest.approx(3 * 0.5 - (1 - 0.5**1.5))

    def test_equality_second_order(self):
        rep = lemma_multiplier_bounds(ChaosSpectrum.from_orders({2: 1.0}), np.linspace(0, 1, 11))
        assert abs(rep.per_order_margin) < 1e-15

    @given(spectra, st.lists(st.floats(0, 1), min_size=1, max_size=30))
    def test_both_directions(self, spec, r):
        rep = lemma_multiplier_bounds(spec, r)
        assert rep.c1_ok and rep.c2_ok

    def test_rejects_grid(self):
        with pytest.raises(ValueError):
            lemma_multiplier_bounds(ChaosSpectrum((1.0,)), [1.5])


class TestProfile:
    def test_mc_matches_exact(self, bundle):
        for xi in (ChaosVariable.brownian(1.0), ChaosVariable.hermite(2), ChaosVariable.hermite(3)):
            prof = d12_ratio_profile(xi, bundle, [0.1, 0.5, 1.0])
            assert prof.agrees
            assert prof.lower_bracket_ok and prof.upper_bracket_ok

    def test_brownian_profile_limit(self, bundle):
        prof = d12_ratio_profile(ChaosVariable.brownian(1.0), bundle, [1e-4, 0.5])
        assert prof.exact[0] == pytest.approx(1.0, rel=1e-6)
        assert prof.malliavin_norm == pytest.approx(1.0)

    def test_constant_profile(self, bundle):
        prof = d12_ratio_profile(ChaosVariable.constant(3.0), bundle, [0.2, 1.0])
        np.testing.assert_array_equal(prof.mc, 0.0)
        np.testing.assert_array_equal(prof.exact, 0.0)
