"""Finite Wiener chaos variables with exact coupled moments.

A :class:`ChaosVariable` is a finite sum of tensor Hermite terms

    coefficient * prod_j He_{k_j}(g_j) / sqrt(k_j!)

where ``g_j = int h_j dW`` and the kernels ``h_j`` are normalized indicators
of grid-aligned intervals (disjoint per Brownian component), so the ``g_j``
are i.i.d. standard normal and the terms form an orthonormal family. A term
of total degree ``n`` lives in the n-th chaos, and ``E|I_n(f_n)|^2`` is the
sum of the squared coefficients of the order-n terms.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial, sqrt
from typing import Sequence

import numpy as np
from numpy.polynomial import hermite_e

from .wiener import BrownianBundle, CouplingFunction, couple

__all__ = [
    "Kernel",
    "ChaosVariable",
    "ChaosSpectrum",
    "MultiplierReport",
    "D12Profile",
    "evaluate",
    "coupled_second_moment_exact",
    "malliavin_norm_exact",
    "lemma_multiplier_bounds",
    "d12_ratio_profile",
    "multiplier",
    "MAX_ORDER",
]

MAX_ORDER = 6


@dataclass(frozen=True)
class Kernel:
    """Normalized indicator of (start, end] on Brownian component ``component``."""

    start: float
    end: float
    component: int = 0

    def __post_init__(self):
        if not self.end > self.start:
            raise ValueError(f"kernel needs start < end, got ({self.start}, {self.end})")

    @property
    def length(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class ChaosSpectrum:
    """Chaos energies a_n = E|I_n(f_n)|^2; ``a[i]`` belongs to order n = i + 1."""

    a: tuple[float, ...]

    def __post_init__(self):
        if any(x < 0 for x in self.a):
            raise ValueError("chaos energies must be nonnegative")

    @classmethod
    def from_orders(cls, orders: dict[int, float]) -> "ChaosSpectrum":
        if not orders:
            return cls(())
        if min(orders) < 1:
            raise ValueError("orders start at n = 1")
        a = [0.0] * max(orders)
        for n, v in orders.items():
            a[n - 1] = float(v)
        return cls(tuple(a))

    @property
    def orders(self) -> np.ndarray:
        return np.arange(1, len(self.a) + 1)

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.a, dtype=float)

    @property
    def variance(self) -> float:
        return float(self.values.sum())


@dataclass(frozen=True)
class ChaosVariable:
    dim: int
    kernels: tuple[Kernel, ...]
    terms: tuple[tuple[float, tuple[int, ...]], ...]

    def __post_init__(self):
        by_comp: dict[int, list[Kernel]] = {}
        for k in self.kernels:
            if not 0 <= k.component < self.dim:
                raise ValueError(f"kernel component {k.component} outside 0..{self.dim - 1}")
            by_comp.setdefault(k.component, []).append(k)
        for ks in by_comp.values():
            ks = sorted(ks, key=lambda k: k.start)
            for k1, k2 in zip(ks, ks[1:]):
                if k2.start < k1.end:
                    raise ValueError("kernels on one component must be disjoint (orthonormality)")
        for coef, degrees in self.terms:
            if len(degrees) != len(self.kernels) or any(d < 0 for d in degrees):
                raise ValueError("each term needs one nonnegative degree per kernel")
            if sum(degrees) > MAX_ORDER:
                raise ValueError(f"chaos order {sum(degrees)} exceeds MAX_ORDER={MAX_ORDER}")

    # -- constructors -----------------------------------------------------
    @classmethod
    def constant(cls, value: float, dim: int = 1) -> "ChaosVariable":
        return cls(dim, (), ((float(value), ()),))

    @classmethod
    def hermite(cls, n: int, start: float = 0.0, end: float = 1.0, component: int = 0,
                dim: int = 1) -> "ChaosVariable":
        """len^(n/2) He_n(W_(start,end] / sqrt(len)); n = 1 gives the increment itself."""
        k = Kernel(start, end, component)
        coef = sqrt(factorial(n)) * k.length ** (n / 2)
        return cls(dim, (k,), ((coef, (n,)),))

    @classmethod
    def brownian(cls, T: float, component: int = 0, dim: int = 1) -> "ChaosVariable":
        return cls.hermite(1, 0.0, T, component, dim)

    # -- exact quantities -------------------------------------------------
    def _combined(self) -> dict[tuple[int, ...], float]:
        acc: dict[tuple[int, ...], float] = {}
        for coef, degrees in self.terms:
            acc[tuple(degrees)] = acc.get(tuple(degrees), 0.0) + coef
        return acc

    @property
    def mean(self) -> float:
        return self._combined().get(tuple([0] * len(self.kernels)), 0.0)

    @property
    def max_order(self) -> int:
        return max((sum(d) for _, d in self.terms), default=0)

    def spectrum(self) -> ChaosSpectrum:
        orders: dict[int, float] = {}
        for degrees, coef in self._combined().items():
            n = sum(degrees)
            if n > 0:
                orders[n] = orders.get(n, 0.0) + coef * coef
        return ChaosSpectrum.from_orders(orders)

    def check_grid(self, grid) -> None:
        for k in self.kernels:
            for t in (k.start, k.end):
                if not grid.is_node(t):
                    raise ValueError(f"kernel endpoint {t} is not aligned with the grid (h={grid.h:g})")

    def gaussians(self, increments: np.ndarray, grid) -> np.ndarray:
        """g_j = int h_j dW for every path, shape (n_paths, n_kernels)."""
        self.check_grid(grid)
        out = np.empty((increments.shape[0], len(self.kernels)))
        for j, k in enumerate(self.kernels):
            i0, i1 = grid.index_of(k.start), grid.index_of(k.end)
            out[:, j] = increments[:, i0:i1, k.component].sum(axis=1) / sqrt(k.length)
        return out

    def from_gaussians(self, g: np.ndarray) -> np.ndarray:
        total = np.zeros(g.shape[0])
        for coef, degrees in self.terms:
            term = np.full(g.shape[0], coef)
            for j, d in enumerate(degrees):
                if d:
                    c = np.zeros(d + 1)
                    c[d] = 1.0 / sqrt(factorial(d))
                    term = term * hermite_e.hermeval(g[:, j], c)
            total += term
        return total


def evaluate(xi: ChaosVariable, bundle: BrownianBundle, phi: CouplingFunction) -> np.ndarray:
    """Samples of xi^phi: xi evaluated on the coupled driver W^phi."""
    if bundle.dim != xi.dim:
        raise ValueError(f"bundle dim {bundle.dim} != chaos dim {xi.dim}")
    xi.check_grid(bundle.grid)
    return xi.from_gaussians(xi.gaussians(couple(bundle, phi), bundle.grid))


def multiplier(n, r):
    """1 - (1 - r)^(n/2), computed without cancellation for small r."""
    n = np.asarray(n, dtype=float)
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        return -np.expm1(0.5 * n * np.log1p(-r))


def coupled_second_moment_exact(spectrum: ChaosSpectrum, r: float) -> float:
    """E|xi - xi^r|^2 = 2 sum_n [1 - (1 - r^2)^(n/2)] a_n."""
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"r must lie in [0,1], got {r}")
    if not spectrum.a:
        return 0.0
    return float(2.0 * np.sum(multiplier(spectrum.orders, r * r) * spectrum.values))


def malliavin_norm_exact(spectrum: ChaosSpectrum) -> float:
    """||D xi||_{L2(Omega x [0,T])} = sqrt(sum_n n a_n)."""
    if not spectrum.a:
        return 0.0
    return float(np.sqrt(np.sum(spectrum.orders * spectrum.values)))


@dataclass
class MultiplierReport:
    c1_ok: bool
    c2_ok: bool
    c1: float
    c2: float
    bound_margin: float
    per_order_margin: float
    c2_margin: float


def lemma_multiplier_bounds(a: ChaosSpectrum, r_grid: Sequence[float], tol: float = 1e-12) -> MultiplierReport:
    """Check both directions of the chaos-energy characterization of D_{1,2}.

    With c2 = sum n a_n, checks sum [1 - (1-r)^(n/2)] a_n <= c2 r on ``r_grid``
    together with the per-order bounds 1 - (1-r)^(n/2) <= n r / 2 (n >= 2)
    and 1 - sqrt(1-r) <= r (n = 1). Conversely, with c1 the supremum of
    LHS(r)/r over the grid and the r -> 0 limit, checks sum n a_n <= 2 c1.
    """
    r = np.asarray(r_grid, dtype=float)
    if np.any(r < 0) or np.any(r > 1):
        raise ValueError("r_grid must lie in [0,1]")
    n = a.orders
    vals = a.values
    c2 = float(np.sum(n * vals))
    m = multiplier(n[:, None], r[None, :])                     # (orders, r)
    lhs = (m * vals[:, None]).sum(axis=0)
    bound_margin = float(np.min(c2 * r - lhs)) if len(n) else 0.0

    per_n = np.where(n[:, None] >= 2, 0.5 * n[:, None] * r[None, :], r[None, :]) - m
    per_order_margin = float(per_n.min()) if per_n.size else 0.0

    pos = r > 0
    ratios = lhs[pos] / r[pos] if np.any(pos) else np.array([])
    c1 = float(max(ratios.max(initial=0.0), 0.5 * c2))
    c2_margin = 2.0 * c1 - c2
    return MultiplierReport(
        c1_ok=bound_margin >= -tol and per_order_margin >= -tol,
        c2_ok=c2_margin >= -tol,
        c1=c1,
        c2=c2,
        bound_margin=bound_margin,
        per_order_margin=per_order_margin,
        c2_margin=c2_margin,
    )


@dataclass
class D12Profile:
    r: np.ndarray
    mc: np.ndarray
    mc_std_error: np.ndarray
    exact: np.ndarray
    malliavin_norm: float

    @property
    def sup_exact(self) -> float:
        return float(self.exact.max(initial=0.0))

    @property
    def agrees(self) -> bool:
        return bool(np.all(np.abs(self.mc - self.exact) <= 3 * self.mc_std_error + 1e-12))

    @property
    def lower_bracket_ok(self) -> bool:
        return 0.5 * self.malliavin_norm <= self.sup_exact + 1e-12

    @property
    def upper_bracket_ok(self) -> bool:
        # sqrt(2) relaxation: for xi = W_T the profile reaches sqrt(2 T) at r = 1
        return self.sup_exact <= np.sqrt(2.0) * self.malliavin_norm + 1e-12


def d12_ratio_profile(xi: ChaosVariable, bundle: BrownianBundle, r_grid: Sequence[float]) -> D12Profile:
    """Monte Carlo and exact values of ||xi - xi^r||_{L2} / r over ``r_grid``."""
    r_grid = np.asarray(r_grid, dtype=float)
    if np.any(r_grid <= 0) or np.any(r_grid > 1):
        raise ValueError("r_grid must lie in (0,1]")
    spec = xi.spectrum()
    base = evaluate(xi, bundle, CouplingFunction.constant(0.0))
    mc, se, exact = [], [], []
    for r in r_grid:
        d2 = (base - evaluate(xi, bundle, CouplingFunction.constant(r))) ** 2
        m = d2.mean()
        s = d2.std(ddof=1) / np.sqrt(len(d2))
        val = np.sqrt(m)
        mc.append(val / r)
        se.append((s / (2 * val) if val > 0 else 0.0) / r)
        exact.append(np.sqrt(coupled_second_moment_exact(spec, r)) / r)
    return D12Profile(r_grid, np.array(mc), np.array(se), np.array(exact), malliavin_norm_exact(spec))
