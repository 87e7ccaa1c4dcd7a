"""Least-squares Monte Carlo for Markovian BSDEs

    Y_s = g(X_T) + int_s^T f(u, X_u, Y_u, Z_u) du - int_s^T Z_u dW_u

and the coupling/variation distances of the solution pair.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Callable

import numpy as np

from .estimators import LpEstimate, lp_norm
from .sde import PathEnsemble
from .wiener import TimeGrid

__all__ = [
    "BsdeModel",
    "BsdeSolution",
    "lsmc_solve",
    "bsde_coupling_distance",
    "bsde_variation",
    "zero_generator",
    "linear_generator",
    "closed_form_linear",
]

RIDGE = 1e-8
COND_WARN = 1e10


def zero_generator(s, x, y, z):
    return np.zeros_like(y)


def linear_generator(lam: float) -> Callable:
    """f(s, x, y, z) = -lam * y."""

    def f(s, x, y, z):
        return -lam * y

    return f


@dataclass(frozen=True)
class BsdeModel:
    """Markovian generator f(s, x, y, z) and terminal function g(x).

    ``f`` receives x (n, d), y (n,), z (n, N) and returns (n,); ``g`` maps
    (n, d) to (n,). ``alpha``, ``g_holder`` and ``f_holder_x`` describe the
    Hoelder regularity in x that drives the coupling bounds.
    """

    generator: Callable
    terminal: Callable
    L_Y: float = 0.0
    L_Z: float = 0.0
    delta: float = 0.0
    alpha: float = 1.0
    g_holder: float = 1.0
    f_holder_x: float = 0.0
    name: str = "bsde"

    def __post_init__(self):
        if self.delta > 0:
            raise ValueError("generators with quadratic growth in z (delta > 0) are not supported")
        if self.L_Y < 0 or self.L_Z < 0:
            raise ValueError("Lipschitz constants must be nonnegative")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0,1]")

    def lipschitz_spot_check(self, dim_state: int = 1, dim_noise: int = 1, n: int = 1000, seed: int = 0,
                             T: float = 1.0) -> float:
        """Largest violation of |f(y1,z1) - f(y2,z2)| <= L_Y|y1-y2| + L_Z|z1-z2| on random tuples."""
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((n, dim_state)) * 3
        y1, y2 = rng.standard_normal((2, n)) * 3
        z1, z2 = rng.standard_normal((2, n, dim_noise)) * 3
        s = float(rng.uniform(0, T))
        lhs = np.abs(np.asarray(self.generator(s, x, y1, z1)) - np.asarray(self.generator(s, x, y2, z2)))
        rhs = self.L_Y * np.abs(y1 - y2) + self.L_Z * np.linalg.norm(z1 - z2, axis=1)
        return float(np.max(lhs - rhs))


def _exponents(d: int, degree: int) -> list[tuple[int, ...]]:
    out = [(0,) * d]
    for deg in range(1, degree + 1):
        for combo in combinations_with_replacement(range(d), deg):
            e = [0] * d
            for i in combo:
                e[i] += 1
            out.append(tuple(e))
    return out


@dataclass
class _NodeFit:
    center: np.ndarray
    scale: np.ndarray
    exponents: list
    coef_y: np.ndarray            # (n_basis,)
    coef_z: np.ndarray            # (n_basis, N)

    def basis(self, x: np.ndarray) -> np.ndarray:
        u = (x - self.center) / self.scale
        return np.stack([np.prod(u**np.array(e), axis=1) for e in self.exponents], axis=1)


@dataclass
class BsdeSolution:
    """Nodewise Y (n_paths, n_steps + 1) and Z (n_paths, n_steps, N)."""

    model: BsdeModel
    grid: TimeGrid
    Y: np.ndarray
    Z: np.ndarray
    degree: int
    fits: list = field(repr=False, default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    provenance: tuple = ()

    def __post_init__(self):
        if not (np.all(np.isfinite(self.Y)) and np.all(np.isfinite(self.Z))):
            raise FloatingPointError("non-finite BSDE solution")

    def evaluate(self, X: PathEnsemble) -> "BsdeSolution":
        """Apply the fitted functions (Y_k, Z_k) = (u_k(X_k), v_k(X_k)) to another forward ensemble."""
        if X.grid != self.grid:
            raise ValueError("forward ensemble lives on a different grid")
        states = X.states
        n, K = states.shape[0], self.grid.n_steps
        Y = np.empty((n, K + 1))
        Z = np.empty((n, K, self.Z.shape[2]))
        Y[:, K] = self.model.terminal(states[:, K])
        for k, fit in enumerate(self.fits):
            B = fit.basis(states[:, k])
            Z[:, k] = B @ fit.coef_z
            ey = B @ fit.coef_y
            Y[:, k] = _picard(self.model, self.grid, k, states[:, k], ey, Z[:, k])
        return BsdeSolution(self.model, self.grid, Y, Z, self.degree, self.fits,
                            {"evaluated_from": self.provenance}, X.provenance)


def _picard(model: BsdeModel, grid: TimeGrid, k: int, x, ey, z):
    s, h = grid.nodes[k], grid.h
    y = ey + h * np.asarray(model.generator(s, x, ey, z))
    return ey + h * np.asarray(model.generator(s, x, y, z))


def _ridge_fit(B: np.ndarray, targets: np.ndarray, penalty: float) -> tuple[np.ndarray, float]:
    G = B.T @ B
    cond = float(np.linalg.cond(G))
    # the intercept (first column) is left unpenalized so constants are reproduced exactly
    P = penalty * np.eye(G.shape[0])
    P[0, 0] = 0.0
    coef = np.linalg.solve(G + P, B.T @ targets)
    return coef, cond


def lsmc_solve(model: BsdeModel, X: PathEnsemble, dW: np.ndarray, degree: int = 3) -> BsdeSolution:
    """Backward regression scheme.

    Z_k = E((Y_{k+1} - E(Y_{k+1} | X_k)) dW_k | X_k) / h and Y_k = E(Y_{k+1} | X_k) + h f(u_k, X_k, Y_k, Z_k),
    with the implicit y handled by one Picard step from the explicit guess.
    Conditional expectations are ridge-regularized least squares (intercept
    unpenalized) on polynomials of total degree ``degree`` in the standardized state; a
    state without spread at node k (e.g. a deterministic start) gets the
    constant basis only.
    """
    if degree < 1:
        raise ValueError("basis degree must be >= 1")
    grid = X.grid
    h = grid.h
    if model.L_Y * h >= 1:
        raise ValueError(f"L_Y * h = {model.L_Y * h:g} must be < 1 for the Picard step")
    dW = np.asarray(dW, dtype=float)
    if dW.ndim == 2:
        dW = dW[:, :, None]
    n, K = X.n_paths, grid.n_steps
    if dW.shape[:2] != (n, K):
        raise ValueError(f"increments {dW.shape} do not match the ensemble ({n}, {K})")
    N = dW.shape[2]
    d = X.states.shape[2]
    exps_full = _exponents(d, degree)
    penalty = RIDGE * n

    Y = np.empty((n, K + 1))
    Z = np.empty((n, K, N))
    Y[:, K] = model.terminal(X.states[:, K])
    fits: list[_NodeFit] = [None] * K
    worst = 0.0
    for k in range(K - 1, -1, -1):
        x = X.states[:, k]
        center = x.mean(axis=0)
        spread = x.std(axis=0)
        if np.all(spread == 0):
            fit = _NodeFit(center, np.ones(d), [(0,) * d], None, None)
        else:
            fit = _NodeFit(center, np.where(spread > 0, spread, 1.0), exps_full, None, None)
        B = fit.basis(x)
        fit.coef_y, cond = _ridge_fit(B, Y[:, k + 1], penalty)
        ey = B @ fit.coef_y
        # centering by the fitted E(Y_{k+1} | X_k) leaves the Z regression unbiased and cuts its variance
        fit.coef_z, _ = _ridge_fit(B, (Y[:, k + 1] - ey)[:, None] * dW[:, k] / h, penalty)
        worst = max(worst, cond)
        fits[k] = fit
        Z[:, k] = B @ fit.coef_z
        Y[:, k] = _picard(model, grid, k, x, ey, Z[:, k])
    if worst > COND_WARN:
        warnings.warn(f"ill-conditioned regression, condition number {worst:.3g}", RuntimeWarning)
    return BsdeSolution(model, grid, Y, Z, degree, fits, {"max_condition": worst}, X.provenance)


def _check_pair(a: BsdeSolution, b: BsdeSolution):
    if a.grid != b.grid or a.Y.shape != b.Y.shape or a.Z.shape != b.Z.shape:
        raise ValueError("solutions live on different grids or ensembles")
    if a.provenance[1:2] != b.provenance[1:2]:
        raise ValueError("solutions come from different seeds")


def bsde_coupling_distance(sol: BsdeSolution, sol_phi: BsdeSolution, p: float) -> tuple[LpEstimate, LpEstimate]:
    """||sup_k |Y^phi_k - Y_k| ||_p and ||(int |Z^phi - Z|^2 ds)^(1/2)||_p."""
    _check_pair(sol, sol_phi)
    dy = np.abs(sol_phi.Y - sol.Y).max(axis=1)
    dz = np.sqrt((np.sum((sol_phi.Z - sol.Z) ** 2, axis=2) * sol.grid.h).sum(axis=1))
    return lp_norm(dy, p, "Y_distance"), lp_norm(dz, p, "Z_distance")


def bsde_variation(sol: BsdeSolution, a: float, c: float, p: float) -> tuple[LpEstimate, LpEstimate]:
    """||sup_{s in [a,c]} |Y_s - Y_a| ||_p and ||(int_a^c |Z_s|^2 ds)^(1/2)||_p."""
    grid = sol.grid
    if not c > a:
        raise ValueError("need a < c")
    ka, kc = grid.index_of(a), grid.index_of(c)
    dy = np.abs(sol.Y[:, ka:kc + 1] - sol.Y[:, ka:ka + 1]).max(axis=1)
    dz = np.sqrt((np.sum(sol.Z[:, ka:kc] ** 2, axis=2) * grid.h).sum(axis=1))
    return (lp_norm(dy, p, "Y_variation", a=a, c=c), lp_norm(dz, p, "Z_variation", a=a, c=c))


def closed_form_linear(grid: TimeGrid, W: np.ndarray, lam: float) -> np.ndarray:
    """Y_s = exp(-lam (T - s)) W_s for f = -lam y, g(x) = x, X = W."""
    return np.exp(-lam * (grid.T - grid.nodes))[None, :] * W

