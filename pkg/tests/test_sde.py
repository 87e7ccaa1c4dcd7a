import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wiener_coupling.presets import make_preset
from wiener_coupling.sde import (PathEnsemble, SdeModel, brownian_model, coupled_solve, coupled_sweep,
                                 euler_solve, lamperti_cir, potential_indicator)
from wiener_coupling.wiener import CouplingFunction, make_grid, sample_bundle


def constant_model():
    return SdeModel("zero", 1, 1, drift=lambda s, x, aux: np.zeros_like(x),
                    diffusion=lambda s, x, aux: np.zeros_like(x))


def test_constant_path():
    g = make_grid(0, 1, 16)
    X = euler_solve(constant_model(), 5.0, g, sample_bundle(g, 1, 7, 0).increments_W)
    np.testing.assert_array_equal(X.states, 5.0)


def test_brownian_model_reproduces_driver():
    g = make_grid(0, 1, 32)
    b = sample_bundle(g, 2, 100, 1)
    X = euler_solve(brownian_model(2), 0.0, g, b.increments_W)
    np.testing.assert_allclose(X.states[:, -1], b.increments_W.sum(axis=1), atol=1e-12)


def test_driver_shape_checked():
    g = make_grid(0, 1, 8)
    with pytest.raises(ValueError):
        euler_solve(constant_model(), 0.0, g, np.zeros((3, 7, 1)))


def test_non_finite_aborts_with_location():
    g = make_grid(0, 1, 64)
    boom = SdeModel("boom", 1, 1, drift=lambda s, x, aux: 1e300 * (x + 1) ** 3,
                    diffusion=lambda s, x, aux: np.zeros_like(x))
    with pytest.raises(FloatingPointError, match=r"path \d+, step \d+"):
        with np.errstate(all="ignore"):
            euler_solve(boom, 1.0, g, np.zeros((4, 64, 1)))


def test_hoelder_models_scalar():
    with pytest.raises(ValueError):
        SdeModel("x", 2, 1, drift=None, diffusion=None, theta=0.5)
    with pytest.raises(ValueError):
        SdeModel("x", 1, 1, drift=None, diffusion=None, theta=0.0)


def test_linear_second_moment():
    g = make_grid(0, 1, 2**12)
    b = sample_bundle(g, 1, 10**5, 21)
    m = make_preset("linear", mu=0.0, sigma=0.2)
    res = coupled_sweep([(m, CouplingFunction.constant(0))], b, 1.0)
    x2 = res.terminal_X[0, :, 0] ** 2
    assert abs(x2.mean() - math.exp(0.04)) <= 5 * x2.std(ddof=1) / math.sqrt(x2.size)


def test_cir_mean():
    g = make_grid(0, 1, 2**12)
    b = sample_bundle(g, 1, 10**5, 22)
    m = make_preset("cir")
    x = coupled_sweep([(m, CouplingFunction.constant(0))], b, 1.0).terminal_X[0, :, 0]
    expected = math.exp(-1) + (1 - math.exp(-1))
    assert abs(x.mean() - expected) <= 5 * x.std(ddof=1) / math.sqrt(x.size)


class TestCoupled:
    def setup_method(self):
        self.g = make_grid(0, 1, 64)
        self.b = sample_bundle(self.g, 1, 3000, 4)

    def test_identity_bit_exact(self):
        X, Xp = coupled_solve(make_preset("cir"), 1.0, self.g, self.b, CouplingFunction.constant(0))
        assert np.array_equal(X.states, Xp.states)

    def test_locality_before_window(self):
        X, Xp = coupled_solve(make_preset("linear"), 1.0, self.g, self.b, CouplingFunction.indicator(0.5, 0.75))
        k = self.g.index_of(0.5)
        assert np.array_equal(X.states[:, :k + 1], Xp.states[:, :k + 1])
        assert not np.array_equal(X.states[:, k + 2], Xp.states[:, k + 2])

    def test_full_replacement_equals_independent_solve(self):
        m = make_preset("linear")
        _, Xp = coupled_solve(m, 1.0, self.g, self.b, CouplingFunction.constant(1))
        ref = euler_solve(m, 1.0, self.g, self.b.increments_Wp)
        np.testing.assert_allclose(Xp.states, ref.states, rtol=1e-13)

    def test_matches_euler_on_coupled_driver(self):
        from wiener_coupling.wiener import couple
        m = make_preset("cir")
        phi = CouplingFunction.piecewise([0, 0.25, 0.5], [0.3, 0.9])
        _, Xp = coupled_solve(m, 1.0, self.g, self.b, phi)
        ref = euler_solve(m, 1.0, self.g, couple(self.b, phi))
        np.testing.assert_allclose(Xp.states, ref.states, rtol=1e-12)

    def test_lambda_vanishes_for_deterministic_drift(self):
        _, Xp = coupled_solve(make_preset("linear"), 1.0, self.g, self.b, CouplingFunction.indicator(0.25, 0.5))
        np.testing.assert_array_equal(Xp.diagnostics["Lambda"], 0.0)
        assert np.all(Xp.diagnostics["Delta"] >= 0)

    def test_equal_marginals(self):
        b = sample_bundle(self.g, 1, 40000, 8)
        X, Xp = coupled_solve(make_preset("linear", sigma=0.4), 1.0, self.g, b, CouplingFunction.indicator(0.25, 0.5))
        for k in (16, 40, 64):
            x, y = X.states[:, k, 0], Xp.states[:, k, 0]
            se = math.sqrt((x.var() + y.var()) / x.size)
            assert abs(x.mean() - y.mean()) <= 4 * se
            assert y.var() == pytest.approx(x.var(), rel=0.05)

    def test_random_initial_value_transfers(self):
        g = make_grid(0.5, 1.0, 16)
        b = sample_bundle(g, 1, 20000, 1)
        xi = lambda w0: 1.0 + w0[:, 0]
        X, Xp = coupled_solve(make_preset("linear"), xi, g, b, CouplingFunction.indicator(0.0, 0.25))
        d = np.abs(X.states[:, 0, 0] - Xp.states[:, 0, 0])
        # W_0.5 - W^phi_0.5 has variance 2 * 0.25 * ... for alpha = 1/2 mixing of the level
        assert np.mean(d**2) == pytest.approx(2 * 0.5 * (1 - 0.5), rel=0.05)

    def test_sweep_thread_and_chunk_invariance(self):
        m = make_preset("cir")
        cases = [(m, CouplingFunction.indicator(0.25, 0.25 + L)) for L in (0.125, 0.25)]
        r1 = coupled_sweep(cases, self.b, 1.0, chunk_paths=3000, chunk_steps=64)
        r2 = coupled_sweep(cases, self.b, 1.0, chunk_paths=1024, chunk_steps=10, threads=3)
        np.testing.assert_array_equal(r1.sup_all, r2.sup_all)
        np.testing.assert_array_equal(r1.terminal_Xphi, r2.terminal_Xphi)

    def test_sweep_matches_solve(self):
        m = make_preset("linear")
        phi = CouplingFunction.indicator(0.25, 0.5)
        X, Xp = coupled_solve(m, 1.0, self.g, self.b, phi)
        res = coupled_sweep([(m, phi)], self.b, 1.0, record_nodes=(32,))
        np.testing.assert_allclose(res.sup_all[0], np.abs(X.states - Xp.states).max(axis=(1, 2)))
        win = np.abs(X.states - Xp.states)[:, 16:33, 0].max(axis=1)
        np.testing.assert_allclose(res.sup_window[0], win)
        np.testing.assert_allclose(res.nodes[32][1][0], Xp.states[:, 32])


def test_indicator_potential_lambda():
    g = make_grid(0, 1, 64)
    b = sample_bundle(g, 1, 2000, 5)
    m = make_preset("controlled_indicator", K=0.0, a=0.25)
    X, Xp = coupled_solve(m, 1.0, g, b, CouplingFunction.indicator(0.25, 0.5))
    assert np.mean(Xp.diagnostics["Lambda"]) > 0


class TestPotential:
    def test_levels(self):
        U = potential_indicator(-1e9, 0.25)
        s = np.linspace(0, 1, 9)
        w = np.random.default_rng(0).normal(size=(5, 9))
        np.testing.assert_array_equal(U(s[None, :], w), np.broadcast_to((s > 0.25).astype(float), (5, 9)))
        np.testing.assert_array_equal(potential_indicator(1e9, 0.0)(s[None, :], w), 0.0)

    def test_mc_bound(self):
        g = make_grid(0, 1, 256)
        b = sample_bundle(g, 1, 20000, 6)
        a, c = 0.25, 0.5
        from wiener_coupling.wiener import couple
        W = np.cumsum(b.increments_W[:, :, 0], axis=1)
        Wp = np.cumsum(couple(b, CouplingFunction.indicator(a, c))[:, :, 0], axis=1)
        U = potential_indicator(0.0, a)
        s = g.nodes[1:][None, :]
        kc = g.index_of(c)
        diff = np.abs(U(s, W) - U(s, Wp))[:, kc:].sum(axis=1) * g.h
        lhs = math.sqrt(np.mean(diff**2))
        assert lhs <= 8 * 2.0**2 * math.sqrt((1 - c) * (c - a))


class TestLamperti:
    @pytest.mark.parametrize("x, y", [(4.0, 2.0), (0.0, 0.0), (-0.01, 0.0)])
    def test_values(self, x, y):
        g = make_grid(0, 1, 2)
        out = lamperti_cir(PathEnsemble(g, np.full((3, 3, 1), x)))
        np.testing.assert_array_equal(out.states, y)


def test_path_features():
    seen = {}

    def drift(s, x, aux):
        seen["keys"] = set(aux)
        return 0.1 * aux["running_max"]

    m = SdeModel("pf", 1, 1, drift=drift, diffusion=lambda s, x, aux: 0.2 * x, path_features=True, K_b=0.1,
                 K_sigma=0.2)
    g = make_grid(0, 1, 16)
    X = euler_solve(m, 1.0, g, sample_bundle(g, 1, 100, 0).increments_W)
    assert {"running_max", "running_integral", "W"} <= seen["keys"]
    assert np.all(np.isfinite(X.states))
    rb, rs = m.check_growth()
    assert rb <= 1.0 + 1e-12 and rs <= 1.0 + 1e-12


@pytest.mark.parametrize("name", ["linear", "cir", "holder_power", "controlled_indicator"])
def test_growth_conditions(name):
    rb, rs = make_preset(name).check_growth()
    assert rb <= 1 + 1e-12 and rs <= 1 + 1e-12


def test_l1_isometry_driftless_hoelder():
    c = 0.25
    g = make_grid(0, 2, 2**11)
    b = sample_bundle(g, 1, 40000, 13)
    m = make_preset("holder_sharpness", c=c)
    res = coupled_sweep([(m, CouplingFunction.constant(0))], b, 0.0, record_nodes=(g.index_of(c),))
    xc = np.abs(res.nodes[g.index_of(c)][0][0, :, 0])
    xT = np.abs(res.terminal_X[0, :, 0])
    se = xT.std(ddof=1) / math.sqrt(xT.size)
    assert abs(xT.mean() - xc.mean()) <= 4 * se
    assert xc.mean() == pytest.approx(math.sqrt(2 * c / math.pi), rel=0.02)


def test_moment_bound_stable_under_refinement():
    vals = []
    for n in (128, 256, 512):
        g = make_grid(0, 1, n)
        b = sample_bundle(g, 1, 20000, 3)
        X = euler_solve(make_preset("linear", sigma=0.5), 1.0, g, b.increments_W)
        vals.append(np.mean((1 + np.abs(X.states[:, :, 0]).max(axis=1)) ** 4) / 2**4)
    # the discrete running max creeps up at rate sqrt(h); the moment itself stays bounded
    assert vals == sorted(vals)
    assert max(vals) / min(vals) < 1.15


def test_grid_convergence_guard():
    p = make_preset("linear")
    ests = []
    for n in (512, 1024):
        g = make_grid(0, 1, n)
        b = sample_bundle(g, 1, 20000, 17)
        r = coupled_sweep([(p, CouplingFunction.indicator(0.25, 0.5))], b, 1.0)
        d = r.terminal_distance[0]
        ests.append((math.sqrt(np.mean(d**2)), d.std() / math.sqrt(d.size)))
    assert abs(ests[0][0] - ests[1][0]) <= 3 * max(ests[0][1], ests[1][1])


@settings(max_examples=15)
@given(st.floats(0.0, 0.5), st.integers(1, 4))
def test_window_distance_zero_before_anchor(a_frac, k):
    g = make_grid(0, 1, 16)
    a = round(a_frac * 16) / 16
    c = min(1.0, a + k / 16)
    b = sample_bundle(g, 1, 50, 2)
    X, Xp = coupled_solve(make_preset("cir"), 1.0, g, b, CouplingFunction.indicator(a, c))
    ka = g.index_of(a)
    assert np.array_equal(X.states[:, :ka + 1], Xp.states[:, :ka + 1])
