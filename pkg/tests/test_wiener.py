import numpy as np
import pytest
from hypothesis import given, strategies as st

from wiener_coupling.wiener import (BLOCK_PATHS, CouplingFunction, couple, couple_increments,
                                    coupling_l2_mass, make_grid, sample_bundle)


@pytest.mark.parametrize("t0, T, n, nodes", [
    (0, 1, 4, [0, 0.25, 0.5, 0.75, 1]),
    (0, 2, 1, [0, 2]),
    (0.5, 1.5, 2, [0.5, 1.0, 1.5]),
])
def test_grid_nodes(t0, T, n, nodes):
    g = make_grid(t0, T, n)
    np.testing.assert_allclose(g.nodes, nodes)
    assert g.h == pytest.approx((T - t0) / n)


@pytest.mark.parametrize("t0, T, n", [(1, 1, 4), (1, 0.5, 4), (0, 1, 0), (-0.1, 1, 2)])
def test_grid_rejects(t0, T, n):
    with pytest.raises(ValueError):
        make_grid(t0, T, n)


def test_index_of_and_refine():
    g = make_grid(0, 1, 8)
    assert g.index_of(0.375) == 3
    assert g.is_node(0.5) and not g.is_node(0.3)
    with pytest.raises(ValueError):
        g.index_of(0.3)
    assert g.refine(2).n_steps == 16


@given(st.integers(0, 10), st.integers(1, 64), st.floats(0.1, 5))
def test_grid_invariants(t0_num, n, length):
    t0 = t0_num / 4
    g = make_grid(t0, t0 + length, n)
    assert g.nodes[0] == t0 and g.nodes[-1] == pytest.approx(t0 + length)
    assert np.all(np.diff(g.nodes) > 0)
    np.testing.assert_allclose(np.diff(g.nodes), g.h)


class TestCouplingFunction:
    def test_indicator_values(self):
        phi = CouplingFunction.indicator(0.25, 0.5)
        np.testing.assert_array_equal(phi([0.25, 0.3, 0.5, 0.6]), [0, 1, 1, 0])

    @pytest.mark.parametrize("make", [
        lambda: CouplingFunction.constant(1.2),
        lambda: CouplingFunction.constant(-0.1),
        lambda: CouplingFunction.indicator(0.5, 0.5),
        lambda: CouplingFunction.piecewise([0, 1], [1.5]),
        lambda: CouplingFunction.piecewise([0, 1, 0.5], [0.2, 0.3]),
    ])
    def test_rejects_bad(self, make):
        with pytest.raises(ValueError):
            make()

    def test_identity(self):
        assert CouplingFunction.constant(0).is_identity
        assert not CouplingFunction.indicator(0, 1).is_identity

    def test_off_grid_breakpoint_rejected(self):
        g = make_grid(0, 1, 8)
        with pytest.raises(ValueError, match="not a grid node"):
            CouplingFunction.piecewise([0, 0.3, 1], [0.5, 1]).on_grid(g)
        with pytest.raises(ValueError):
            CouplingFunction.indicator(0.1, 0.5).on_grid(g)

    def test_on_grid_uses_step_interior(self):
        g = make_grid(0, 1, 4)
        np.testing.assert_array_equal(CouplingFunction.indicator(0.25, 0.5).on_grid(g), [0, 1, 0, 0])

    @given(st.floats(0, 1), st.floats(0.01, 3))
    def test_values_in_unit_interval(self, r, u):
        for phi in (CouplingFunction.constant(r), CouplingFunction.indicator(0.1, 0.7),
                    CouplingFunction.piecewise([0, 0.5, 2], [r, 1 - r])):
            v = phi(u)
            assert 0 <= v <= 1


@pytest.mark.parametrize("phi, t0, T, expected", [
    (CouplingFunction.indicator(0.2, 0.7), 0, 1, np.sqrt(0.5)),
    (CouplingFunction.constant(0.3), 0, 2, 0.3 * np.sqrt(2)),
    (CouplingFunction.piecewise([0, 1, 2], [0.5, 1]), 0, 2, np.sqrt(1.25)),
])
def test_coupling_l2_mass(phi, t0, T, expected):
    assert coupling_l2_mass(phi, t0, T) == pytest.approx(expected)


class TestBundle:
    def test_reproducible_and_chunk_invariant(self):
        g = make_grid(0, 1, 50)
        b = sample_bundle(g, 2, 2500, 42)
        full = b.dW()
        np.testing.assert_array_equal(full, sample_bundle(g, 2, 2500, 42).dW())
        parts = np.concatenate([b.dW(slice(p0, min(p0 + 700, 2500)), slice(None)) for p0 in range(0, 2500, 700)])
        np.testing.assert_array_equal(full, parts)
        steps = np.concatenate([b.dW(slice(None), slice(k, k + 7)) for k in range(0, 50, 7)], axis=1)
        np.testing.assert_array_equal(full, steps)

    def test_path_independent_of_ensemble_size(self):
        g = make_grid(0, 1, 10)
        small = sample_bundle(g, 1, BLOCK_PATHS + 5, 3).dW()
        large = sample_bundle(g, 1, 3 * BLOCK_PATHS, 3).dW()
        np.testing.assert_array_equal(small, large[:BLOCK_PATHS + 5])

    def test_seeds_differ(self):
        g = make_grid(0, 1, 4)
        assert not np.array_equal(sample_bundle(g, 1, 10, 1).dW(), sample_bundle(g, 1, 10, 2).dW())

    def test_increments_read_only(self):
        b = sample_bundle(make_grid(0, 1, 4), 1, 10, 1)
        with pytest.raises(ValueError):
            b.increments_W[0, 0, 0] = 1.0

    def test_law_of_terminal_values(self):
        T, n = 2.0, 10**6
        b = sample_bundle(make_grid(0, T, 2), 1, n, 2024)
        WT = b.increments_W.sum(axis=1)[:, 0]
        WpT = b.increments_Wp.sum(axis=1)[:, 0]
        assert abs(WT.mean()) <= 4 * np.sqrt(T / n)
        assert abs(WT.var() - T) <= 5 * T * np.sqrt(2 / n)
        assert abs(np.mean(WT * WpT)) <= 4 * T / 1e3

    def test_increment_variance(self):
        g = make_grid(0, 1, 16)
        dw = sample_bundle(g, 3, 20000, 5).increments_W
        assert abs(dw.mean()) < 4 * np.sqrt(g.h / dw.size)
        assert dw.var() == pytest.approx(g.h, rel=0.01)

    def test_initial_levels(self):
        b = sample_bundle(make_grid(0.5, 1, 4), 1, 50000, 9)
        w0, wp0 = b.initial_levels()
        assert w0.var() == pytest.approx(0.5, rel=0.03)
        assert abs(np.mean(w0 * wp0)) < 0.02


class TestCouple:
    def setup_method(self):
        self.g = make_grid(0, 1, 8)
        self.b = sample_bundle(self.g, 1, 500, 11)

    def test_identity_bit_exact(self):
        assert np.array_equal(couple(self.b, CouplingFunction.constant(0)), self.b.increments_W)
        assert np.array_equal(couple(self.b, CouplingFunction.piecewise([0, 1], [0.0])), self.b.increments_W)

    def test_full_replacement(self):
        assert np.array_equal(couple(self.b, CouplingFunction.constant(1)), self.b.increments_Wp)

    def test_indicator_replaces_window(self):
        out = couple(self.b, CouplingFunction.indicator(0.25, 0.5))
        np.testing.assert_array_equal(out[:, 2:4], self.b.increments_Wp[:, 2:4])
        np.testing.assert_array_equal(out[:, :2], self.b.increments_W[:, :2])
        np.testing.assert_array_equal(out[:, 4:], self.b.increments_W[:, 4:])

    @given(st.floats(0, 1))
    def test_mixing_formula(self, r):
        dw, dwp = self.b.increments_W, self.b.increments_Wp
        out = couple_increments(dw, dwp, np.full(self.g.n_steps, r))
        np.testing.assert_allclose(out, np.sqrt(1 - r * r) * dw + r * dwp, atol=1e-15)

    def test_cutoff_distance_mc(self):
        a, c = 0.25, 0.625
        b = sample_bundle(self.g, 1, 10**6, 77)
        d2 = (b.increments_W.sum(axis=1) - couple(b, CouplingFunction.indicator(a, c)).sum(axis=1))[:, 0] ** 2
        se = d2.std(ddof=1) / np.sqrt(d2.size)
        assert abs(d2.mean() - 2 * (c - a)) <= 5 * se

    @given(st.floats(0, 1))
    def test_coupled_increments_keep_variance(self, r):
        out = couple(self.b.with_paths(4000), CouplingFunction.constant(r))
        assert out.var() == pytest.approx(self.g.h, rel=0.1)
