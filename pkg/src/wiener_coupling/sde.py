"""Euler-Maruyama solving of forward SDEs and of their coupled versions.

The coupled process X^phi solves the same equation as X, driven by W^phi,
with every driver functional (initial condition, potential processes in
random coefficients) evaluated on W^phi instead of W. Both solves share the
same bundle, so distances like sup_s |X_s - X^phi_s| are estimated under
common random numbers.

Coefficient callbacks are vectorized over paths::

    drift(s, x, aux)     -> (n_paths, d)
    diffusion(s, x, aux) -> (n_paths, d, N)

where ``x`` has shape (n_paths, d), ``s`` is the left node of the current
step and ``aux`` is a dict holding the driver level ``"W"`` (n_paths, N),
the potential ``"U"`` when the model has one, and ``"running_max"`` /
``"running_integral"`` of the state when ``path_features`` is set.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .wiener import BrownianBundle, CouplingFunction, TimeGrid, couple_increments

__all__ = [
    "SdeModel",
    "PathEnsemble",
    "SweepResult",
    "euler_solve",
    "coupled_solve",
    "coupled_sweep",
    "lamperti_cir",
    "potential_indicator",
    "brownian_model",
]


@dataclass(frozen=True)
class SdeModel:
    name: str
    dim_state: int
    dim_noise: int
    drift: Callable
    diffusion: Callable
    L_b: float = 0.0
    L_sigma: float = 0.0
    K_b: float = 0.0
    K_sigma: float = 0.0
    theta: float = 1.0
    potential: Callable | None = None
    path_features: bool = False
    x0: float | None = None
    absorb_after: float = math.inf     # zero is absorbing for steps starting at s >= absorb_after
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise ValueError(f"theta must lie in (0,1], got {self.theta}")
        if self.theta < 1.0 and (self.dim_state != 1 or self.dim_noise != 1):
            raise ValueError("Hoelder models are scalar (d = N = 1)")
        if self.absorb_after < math.inf and self.dim_state != 1:
            raise ValueError("absorption at zero needs a scalar state")

    def aux(self, s: float, w: np.ndarray, x: np.ndarray, feats: dict | None) -> dict:
        aux = {"W": w}
        if self.potential is not None:
            aux["U"] = self.potential(s, w)
        if feats:
            aux.update(feats)
        return aux

    def check_growth(self, n: int = 1000, seed: int = 0, T: float = 1.0) -> tuple[float, float]:
        """Worst ratios |b| / (K_b (1+|x|)) and |sigma|_HS / (K_sigma (1+|x|)) on random inputs."""
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((n, self.dim_state)) * rng.choice([0.1, 1.0, 10.0, 100.0], (n, 1))
        w = rng.standard_normal((n, self.dim_noise))
        s = float(rng.uniform(0, T))
        feats = {"running_max": np.abs(x) * 1.5, "running_integral": x * s} if self.path_features else None
        aux = self.aux(s, w, x, feats)
        size = 1.0 + np.linalg.norm(x, axis=1)
        if self.path_features:
            size = np.maximum(size, 1.0 + np.abs(feats["running_max"]).max(axis=1))
        b = np.linalg.norm(np.atleast_2d(self.drift(s, x, aux)).reshape(n, -1), axis=1)
        sig = np.linalg.norm(np.asarray(self.diffusion(s, x, aux)).reshape(n, -1), axis=1)
        rb = np.max(b / size) / self.K_b if self.K_b > 0 else float(np.max(b))
        rs = np.max(sig / size) / self.K_sigma if self.K_sigma > 0 else float(np.max(sig))
        return float(rb), float(rs)


@dataclass
class PathEnsemble:
    grid: TimeGrid
    states: np.ndarray                       # (n_paths, n_steps + 1, d)
    provenance: tuple = ()
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.states.ndim == 2:
            self.states = self.states[:, :, None]
        if self.states.shape[1] != self.grid.n_steps + 1:
            raise ValueError("states do not match the grid")
        if not np.all(np.isfinite(self.states)):
            raise FloatingPointError("path ensemble has non-finite entries")

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def terminal(self) -> np.ndarray:
        return self.states[:, -1]

    @property
    def scalar(self) -> np.ndarray:
        """States of a scalar model as (n_paths, n_steps + 1)."""
        if self.states.shape[2] != 1:
            raise ValueError("ensemble is not scalar")
        return self.states[:, :, 0]


class _Stepper:
    """Euler state of one solve, advanced chunk by chunk."""

    def __init__(self, model: SdeModel, x0: np.ndarray, w0: np.ndarray):
        self.model = model
        self.x = np.array(x0, dtype=float)
        self.w = np.array(w0, dtype=float)
        self.feats = None
        if model.path_features:
            self.feats = {"running_max": np.abs(self.x).copy(), "running_integral": np.zeros_like(self.x)}

    def aux(self, s: float) -> dict:
        return self.model.aux(s, self.w, self.x, self.feats)

    def step(self, s: float, h: float, dw: np.ndarray, k: int, offset: int = 0, aux: dict | None = None) -> None:
        m = self.model
        n = self.x.shape[0]
        if aux is None:
            aux = self.aux(s)
        sig = np.asarray(m.diffusion(s, self.x, aux))
        b = np.asarray(m.drift(s, self.x, aux)).reshape(self.x.shape)
        if self.feats is not None:
            self.feats["running_integral"] = self.feats["running_integral"] + self.x * h
        if m.dim_state == 1 and m.dim_noise == 1:
            noise = sig.reshape(n, 1) * dw
        else:
            noise = np.einsum("nij,nj->ni", sig.reshape(n, m.dim_state, m.dim_noise), dw)
        x_new = self.x + b * h + noise
        if s >= m.absorb_after:
            # a step reaching or crossing zero is stopped there
            x_new = np.where(x_new * self.x > 0, x_new, 0.0)
        self.x = x_new
        self.w = self.w + dw
        if self.feats is not None:
            self.feats["running_max"] = np.maximum(self.feats["running_max"], np.abs(self.x))
        if not np.isfinite(self.x.sum()):
            bad = np.where(~np.all(np.isfinite(self.x), axis=1))[0][0]
            raise FloatingPointError(f"non-finite Euler state at path {bad + offset}, step {k}")


def _initial(xi, n: int, d: int, w0: np.ndarray) -> np.ndarray:
    if callable(xi):
        x0 = np.asarray(xi(w0), dtype=float)
    else:
        x0 = np.asarray(xi, dtype=float)
    if x0.ndim == 0:
        x0 = np.full((n, d), float(x0))
    elif x0.ndim == 1:
        x0 = x0[:, None] if (x0.shape[0] == n and d == 1) else np.broadcast_to(x0, (n, d))
    return np.array(x0.reshape(n, d), dtype=float)


def euler_solve(model: SdeModel, xi, grid: TimeGrid, driver: np.ndarray, aux_paths: np.ndarray | None = None,
                w0: np.ndarray | None = None, provenance: tuple = ()) -> PathEnsemble:
    """X_{k+1} = X_k + b(u_k, X_k, aux_k) h + sigma(u_k, X_k, aux_k) dW_k.

    ``driver`` holds increments (n_paths, n_steps, N). ``aux_paths``, when
    given, replaces the model potential by precomputed values
    (n_paths, n_steps + 1, m) read at the left node of each step.
    """
    driver = np.asarray(driver, dtype=float)
    if driver.ndim == 2:
        driver = driver[:, :, None]
    n = driver.shape[0]
    if driver.shape[1:] != (grid.n_steps, model.dim_noise):
        raise ValueError(f"driver shape {driver.shape} does not match grid/noise {(grid.n_steps, model.dim_noise)}")
    w0 = np.zeros((n, model.dim_noise)) if w0 is None else w0
    st = _Stepper(model, _initial(xi, n, model.dim_state, w0), w0)
    if aux_paths is not None:
        aux_paths = np.asarray(aux_paths)
        if aux_paths.ndim == 2:
            aux_paths = aux_paths[:, :, None]
    states = np.empty((n, grid.n_steps + 1, model.dim_state))
    states[:, 0] = st.x
    nodes, h = grid.nodes, grid.h
    for k in range(grid.n_steps):
        aux = None
        if aux_paths is not None:
            aux = {"W": st.w, "U": aux_paths[:, k]}
            if st.feats:
                aux.update(st.feats)
        st.step(nodes[k], h, driver[:, k], k, aux=aux)
        states[:, k + 1] = st.x
    return PathEnsemble(grid, states, provenance)


def _coupled_initial_level(bundle: BrownianBundle, phi: CouplingFunction, paths: slice):
    w0, wp0 = bundle.initial_levels(paths)
    alpha = phi.on_initial(bundle.grid.t0)
    return w0, alpha * w0 + np.sqrt(max(0.0, 1.0 - alpha * alpha)) * wp0


def coupled_solve(model: SdeModel, xi_sampler, grid: TimeGrid, bundle: BrownianBundle,
                  phi: CouplingFunction) -> tuple[PathEnsemble, PathEnsemble]:
    """Solve X against W and X^phi against W^phi on the same bundle.

    ``xi_sampler`` is a constant (deterministic initial value) or a callable
    mapping the Brownian level at ``grid.t0`` to initial states; X^phi uses
    the coupled level. ``X_phi.diagnostics`` carries per-path ``Lambda``
    (drift mismatch after the coupling window) and ``Delta`` (sup distance
    on [t0, c]).
    """
    if grid != bundle.grid:
        raise ValueError("grid and bundle grid differ")
    res = coupled_sweep([(model, phi)], bundle, xi_sampler, keep_paths=True)
    X = PathEnsemble(grid, res.paths_X[0], (model.name, bundle.seed, "identity"))
    Xp = PathEnsemble(grid, res.paths_Xphi[0], (model.name, bundle.seed, phi.label),
                      {"Lambda": res.Lambda[0], "Delta": res.Delta[0]})
    return X, Xp


@dataclass
class SweepResult:
    """Per-case, per-path statistics of coupled solves."""

    cases: list
    sup_all: np.ndarray          # (n_cases, n_paths) max over nodes of |X - X^phi|
    sup_window: np.ndarray       # same, restricted to nodes in [a, c] of the coupling support
    terminal_X: np.ndarray       # (n_cases, n_paths, d)
    terminal_Xphi: np.ndarray
    Lambda: np.ndarray
    Delta: np.ndarray
    nodes: dict = field(default_factory=dict)   # node index -> (X (cases,paths,d), X^phi)
    paths_X: list | None = None
    paths_Xphi: list | None = None

    @property
    def terminal_distance(self) -> np.ndarray:
        return np.linalg.norm(self.terminal_X - self.terminal_Xphi, axis=2)


def _sweep_chunk(cases, bundle: BrownianBundle, xi, paths: slice, chunk_steps: int,
                 record_nodes: Sequence[int], keep_paths: bool):
    grid = bundle.grid
    nodes, h = grid.nodes, grid.h
    n = paths.stop - paths.start
    n_cases = len(cases)
    phi_vals = [phi.on_grid(grid) for _, phi in cases]
    windows = []
    for _, phi in cases:
        a, c = phi.support_start(grid.t0), phi.support_end(grid.T)
        ka = int(np.floor((a - grid.t0) / h + 1e-9))
        kc = int(np.ceil((c - grid.t0) / h - 1e-9))
        windows.append((ka, max(kc, ka)))

    # one uncoupled stepper per distinct model
    models = []
    for m, _ in cases:
        if all(m is not mm for mm in models):
            models.append(m)
    w0, _ = bundle.initial_levels(paths)
    base = {id(m): _Stepper(m, _initial(xi, n, m.dim_state, w0), w0) for m in models}
    coupled = []
    for m, phi in cases:
        w0c = _coupled_initial_level(bundle, phi, paths)[1]
        coupled.append(_Stepper(m, _initial(xi, n, m.dim_state, w0c), w0c))

    sup_all = np.zeros((n_cases, n))
    sup_win = np.zeros((n_cases, n))
    lam = np.zeros((n_cases, n))
    delta = np.zeros((n_cases, n))
    rec = {k: (np.empty((n_cases, n, cases[0][0].dim_state)), np.empty((n_cases, n, cases[0][0].dim_state)))
           for k in record_nodes}
    kept_X = [np.empty((n, grid.n_steps + 1, m.dim_state)) for m, _ in cases] if keep_paths else None
    kept_P = [np.empty((n, grid.n_steps + 1, m.dim_state)) for m, _ in cases] if keep_paths else None

    def observe(k):
        for i, (m, phi) in enumerate(cases):
            x, xp = base[id(m)].x, coupled[i].x
            d = np.linalg.norm(x - xp, axis=1) if x.shape[1] > 1 else np.abs(x[:, 0] - xp[:, 0])
            np.maximum(sup_all[i], d, out=sup_all[i])
            ka, kc = windows[i]
            if ka <= k <= kc:
                np.maximum(sup_win[i], d, out=sup_win[i])
            if k <= kc:
                np.maximum(delta[i], d, out=delta[i])
            if k in rec:
                rec[k][0][i] = x
                rec[k][1][i] = xp
            if keep_paths:
                kept_X[i][:, k] = x
                kept_P[i][:, k] = xp

    observe(0)
    for k0 in range(0, grid.n_steps, chunk_steps):
        k1 = min(k0 + chunk_steps, grid.n_steps)
        steps = slice(k0, k1)
        dW = bundle.dW(paths, steps)
        need_wp = [np.any(v[k0:k1]) for v in phi_vals]
        dWp = bundle.dWp(paths, steps) if any(need_wp) else None
        drivers = [couple_increments(dW, dWp, v[k0:k1]) if nw else dW for v, nw in zip(phi_vals, need_wp)]
        for k in range(k0, k1):
            s = nodes[k]
            for i, (m, phi) in enumerate(cases):
                if m.potential is not None and nodes[k] >= nodes[windows[i][1]]:
                    st = coupled[i]
                    aux_unc = m.aux(s, base[id(m)].w, st.x, st.feats)
                    aux_cpl = st.aux(s)
                    diff = np.asarray(m.drift(s, st.x, aux_unc)) - np.asarray(m.drift(s, st.x, aux_cpl))
                    lam[i] += h * np.linalg.norm(np.reshape(diff, (n, -1)), axis=1)
            for m in models:
                base[id(m)].step(s, h, dW[:, k - k0], k, paths.start)
            for i in range(n_cases):
                coupled[i].step(s, h, drivers[i][:, k - k0], k, paths.start)
            observe(k + 1)
    tx = np.stack([base[id(m)].x for m, _ in cases])
    tp = np.stack([st.x for st in coupled])
    return sup_all, sup_win, tx, tp, lam, delta, rec, kept_X, kept_P


def coupled_sweep(cases: Sequence[tuple[SdeModel, CouplingFunction]], bundle: BrownianBundle, xi,
                  record_nodes: Sequence[int] = (), chunk_paths: int = 16384, chunk_steps: int = 256,
                  threads: int = 1, keep_paths: bool = False) -> SweepResult:
    """Stream coupled Euler solves over the bundle and keep per-path statistics.

    Each case is a (model, phi) pair; cases sharing a model object share
    the uncoupled solve. Path chunks are processed independently and
    concatenated in path order, so the result does not depend on
    ``threads`` or the chunk sizes.
    """
    cases = list(cases)
    chunks = list(bundle.chunks(chunk_paths))

    def work(p):
        return _sweep_chunk(cases, bundle, xi, p, chunk_steps, tuple(record_nodes), keep_paths)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, chunks))
    else:
        parts = [work(p) for p in chunks]

    def cat(i, axis=1):
        return np.concatenate([pt[i] for pt in parts], axis=axis)

    nodes = {k: (np.concatenate([pt[6][k][0] for pt in parts], axis=1),
                 np.concatenate([pt[6][k][1] for pt in parts], axis=1)) for k in record_nodes}
    res = SweepResult(cases, cat(0), cat(1), cat(2), cat(3), cat(4), cat(5), nodes)
    if keep_paths:
        res.paths_X = [np.concatenate([pt[7][i] for pt in parts]) for i in range(len(cases))]
        res.paths_Xphi = [np.concatenate([pt[8][i] for pt in parts]) for i in range(len(cases))]
    return res


def lamperti_cir(paths: PathEnsemble) -> PathEnsemble:
    """Y = sqrt(max(X, 0)) nodewise; negative Euler excursions are clamped to 0."""
    return PathEnsemble(paths.grid, np.sqrt(np.maximum(paths.states, 0.0)),
                        paths.provenance + ("lamperti",), dict(paths.diagnostics))


def potential_indicator(level: float, a: float) -> Callable:
    """U_s = 1{W_s > level} 1{s > a}, vectorized in (s, W).

    Works both as a model potential (scalar s, levels per path) and on whole
    paths (``nodes[None, :]`` against levels of shape (n_paths, n_nodes)).
    """
    def U(s, w):
        return ((np.asarray(w) > level) & (np.asarray(s) > a)).astype(float)

    U.level = level
    U.a = a
    return U


def brownian_model(dim: int = 1) -> SdeModel:
    """b = 0, sigma = identity: X = xi + W."""
    eye = np.eye(dim)
    return SdeModel(
        "brownian", dim, dim,
        drift=lambda s, x, aux: np.zeros_like(x),
        diffusion=lambda s, x, aux: np.broadcast_to(eye, (x.shape[0], dim, dim)),
        K_sigma=1.0,
    )
