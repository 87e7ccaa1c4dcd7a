"""Time grids, coupling functions and the coupled Brownian driver.

A :class:`BrownianBundle` does not hold random numbers; it is a recipe
``(grid, dim, n_paths, seed)`` from which increments of ``W`` and of the
independent copy ``W'`` are produced on demand, for any range of paths and
time steps. The generator is counter based (Philox keyed by seed, stream and
path block) so that a given (path, step, component) always receives the same
Gaussian, whatever the chunking or number of workers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np
from scipy.special import ndtri

__all__ = [
    "TimeGrid",
    "make_grid",
    "CouplingFunction",
    "BrownianBundle",
    "sample_bundle",
    "couple",
    "couple_increments",
    "coupling_l2_mass",
    "BLOCK_PATHS",
]

# Paths per RNG block; fixed so that path i never depends on n_paths.
BLOCK_PATHS = 1024

STREAM_W = 0
STREAM_WP = 1
STREAM_W0 = 2
STREAM_WP0 = 3

_ALIGN_TOL = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    T: float
    n_steps: int

    def __post_init__(self):
        if not (self.t0 >= 0):
            raise ValueError(f"t0 must be >= 0, got {self.t0}")
        if not (self.T > self.t0):
            raise ValueError(f"T must exceed t0, got t0={self.t0}, T={self.T}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")

    @property
    def h(self) -> float:
        return (self.T - self.t0) / self.n_steps

    @cached_property
    def nodes(self) -> np.ndarray:
        k = np.arange(self.n_steps + 1)
        nodes = self.t0 + k * self.h
        nodes[-1] = self.T
        return nodes

    def index_of(self, t: float) -> int:
        """Index of the grid node equal to ``t``; raises if ``t`` is off-grid."""
        x = (t - self.t0) / self.h
        k = int(round(x))
        if abs(x - k) > _ALIGN_TOL * max(1.0, abs(x)) or not 0 <= k <= self.n_steps:
            raise ValueError(f"time {t} is not a node of {self}")
        return k

    def is_node(self, t: float) -> bool:
        try:
            self.index_of(t)
        except ValueError:
            return False
        return True

    def refine(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.t0, self.T, self.n_steps * factor)


def make_grid(t0: float, T: float, n_steps: int) -> TimeGrid:
    return TimeGrid(float(t0), float(T), int(n_steps))


@dataclass(frozen=True)
class CouplingFunction:
    """A map phi: [0, T] -> [0, 1] used to mix W with the copy W'.

    Three kinds are supported:

    * ``constant(r)``: phi = r everywhere,
    * ``indicator(a, c)``: phi = 1 on (a, c], 0 elsewhere,
    * ``piecewise(breakpoints, values)``: ``values[i]`` on
      ``[breakpoints[i], breakpoints[i+1])``, 0 outside.

    On a grid step (u_k, u_{k+1}] the coupling uses the value phi(u_k+),
    the right limit at the left node, which is the predictable choice for
    left-continuous step functions like the indicator of (a, c].
    """

    kind: str
    params: tuple = field(default=())

    def __post_init__(self):
        if self.kind == "constant":
            (r,) = self.params
            if not 0.0 <= r <= 1.0:
                raise ValueError(f"constant coupling must lie in [0,1], got {r}")
        elif self.kind == "indicator":
            a, c = self.params
            if not 0.0 <= a < c:
                raise ValueError(f"indicator needs 0 <= a < c, got ({a}, {c})")
        elif self.kind == "piecewise":
            bps, vals = self.params
            bps = np.asarray(bps, dtype=float)
            vals = np.asarray(vals, dtype=float)
            if bps.ndim != 1 or len(bps) != len(vals) + 1 or len(vals) == 0:
                raise ValueError("piecewise coupling needs len(breakpoints) == len(values) + 1")
            if np.any(np.diff(bps) <= 0):
                raise ValueError("breakpoints must be strictly increasing")
            if np.any(vals < 0) or np.any(vals > 1):
                raise ValueError("piecewise values must lie in [0,1]")
        else:
            raise ValueError(f"unknown coupling kind {self.kind!r}")

    @classmethod
    def constant(cls, r: float) -> "CouplingFunction":
        return cls("constant", (float(r),))

    @classmethod
    def indicator(cls, a: float, c: float) -> "CouplingFunction":
        return cls("indicator", (float(a), float(c)))

    @classmethod
    def piecewise(cls, breakpoints: Sequence[float], values: Sequence[float]) -> "CouplingFunction":
        return cls("piecewise", (tuple(float(b) for b in breakpoints), tuple(float(v) for v in values)))

    @property
    def label(self) -> str:
        if self.kind == "constant":
            return f"r={self.params[0]:g}"
        if self.kind == "indicator":
            return f"({self.params[0]:g},{self.params[1]:g}]"
        bps, vals = self.params
        return "pw[" + ",".join(f"{b:g}" for b in bps) + "|" + ",".join(f"{v:g}" for v in vals) + "]"

    @property
    def is_identity(self) -> bool:
        if self.kind == "constant":
            return self.params[0] == 0.0
        if self.kind == "piecewise":
            return all(v == 0.0 for v in self.params[1])
        return False

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "constant":
            return np.full_like(u, self.params[0])
        if self.kind == "indicator":
            a, c = self.params
            return ((u > a) & (u <= c)).astype(float)
        bps, vals = (np.asarray(x, dtype=float) for x in self.params)
        idx = np.searchsorted(bps, u, side="right") - 1
        inside = (idx >= 0) & (idx < len(vals))
        return np.where(inside, vals[np.clip(idx, 0, len(vals) - 1)], 0.0)

    def support_end(self, T: float) -> float:
        """Smallest c with phi = 0 on (c, T]."""
        if self.kind == "constant":
            return T if self.params[0] > 0 else 0.0
        if self.kind == "indicator":
            return min(self.params[1], T)
        bps, vals = self.params
        nz = [i for i, v in enumerate(vals) if v > 0]
        return min(bps[nz[-1] + 1], T) if nz else 0.0

    def support_start(self, t0: float = 0.0) -> float:
        """Largest a with phi = 0 on (t0, a]."""
        if self.kind == "constant":
            return t0
        if self.kind == "indicator":
            return max(self.params[0], t0)
        bps, vals = self.params
        nz = [i for i, v in enumerate(vals) if v > 0]
        return max(bps[nz[0]], t0) if nz else t0

    def _breaks(self) -> list[float]:
        if self.kind == "indicator":
            return list(self.params)
        if self.kind == "piecewise":
            return list(self.params[0])
        return []

    def on_grid(self, grid: TimeGrid) -> np.ndarray:
        """Per-step coupling values phi(u_k+), k = 0..n_steps-1."""
        for b in self._breaks():
            if grid.t0 < b < grid.T and not grid.is_node(b):
                raise ValueError(
                    f"coupling breakpoint {b} is not a grid node (h={grid.h:g}); "
                    "off-grid breakpoints would bias the coupled increments"
                )
        mid = 0.5 * (grid.nodes[:-1] + grid.nodes[1:])
        return self(mid)

    def on_initial(self, t0: float) -> float:
        """Mean of sqrt(1 - phi^2) over [0, t0] (used for the initial Brownian level)."""
        if t0 <= 0:
            return 1.0
        if self.kind == "constant":
            return float(np.sqrt(1.0 - self.params[0] ** 2))
        if self.kind == "indicator":
            a, c = self.params
            return 1.0 - max(0.0, min(c, t0) - a) / t0
        bps, vals = self.params
        acc = t0
        for lo, hi, v in zip(bps[:-1], bps[1:], vals):
            overlap = max(0.0, min(hi, t0) - max(lo, 0.0))
            acc -= overlap * (1.0 - np.sqrt(1.0 - v * v))
        return acc / t0


def coupling_l2_mass(phi: CouplingFunction, t0: float, T: float) -> float:
    """Exact value of (int_{t0}^T phi(u)^2 du)^(1/2)."""
    if phi.kind == "constant":
        return phi.params[0] * np.sqrt(T - t0)
    if phi.kind == "indicator":
        a, c = phi.params
        return float(np.sqrt(max(0.0, min(c, T) - max(a, t0))))
    bps, vals = phi.params
    total = 0.0
    for lo, hi, v in zip(bps[:-1], bps[1:], vals):
        total += v * v * max(0.0, min(hi, T) - max(lo, t0))
    return float(np.sqrt(total))


def _normals(seed: int, stream: int, block: int, start: int, count: int) -> np.ndarray:
    """``count`` standard normals from position ``start`` of one keyed stream."""
    bg = np.random.Philox(key=np.array([seed % 2**64, (stream << 40) | block], dtype=np.uint64))
    skip, rem = divmod(start, 4)
    if skip:
        bg.advance(skip)
    raw = bg.random_raw(rem + count)[rem:]
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


@dataclass(frozen=True)
class BrownianBundle:
    """Recipe for a reproducible ensemble of (W, W') increments.

    Increment ``k`` of path ``i`` and component ``j`` sits at position
    ``(k * BLOCK_PATHS + i % BLOCK_PATHS) * dim + j`` of the Philox stream
    keyed by ``(seed, stream, i // BLOCK_PATHS)``.
    """

    grid: TimeGrid
    dim: int
    n_paths: int
    seed: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")

    def _stream(self, stream: int, paths: slice, steps: slice, scale: float) -> np.ndarray:
        p0, p1, _ = paths.indices(self.n_paths)
        n_steps = self.grid.n_steps if stream in (STREAM_W, STREAM_WP) else 1
        k0, k1, _ = steps.indices(n_steps)
        N = self.dim
        out = np.empty((p1 - p0, k1 - k0, N))
        if p1 <= p0 or k1 <= k0:
            return out
        for b in range(p0 // BLOCK_PATHS, (p1 - 1) // BLOCK_PATHS + 1):
            z = _normals(self.seed, stream, b, k0 * BLOCK_PATHS * N, (k1 - k0) * BLOCK_PATHS * N)
            z = z.reshape(k1 - k0, BLOCK_PATHS, N)
            lo = max(p0, b * BLOCK_PATHS)
            hi = min(p1, (b + 1) * BLOCK_PATHS)
            out[lo - p0:hi - p0] = z[:, lo - b * BLOCK_PATHS:hi - b * BLOCK_PATHS].transpose(1, 0, 2)
        out *= scale
        return out

    def dW(self, paths: slice = slice(None), steps: slice = slice(None)) -> np.ndarray:
        """Increments of W, shape (paths, steps, dim)."""
        return self._stream(STREAM_W, paths, steps, np.sqrt(self.grid.h))

    def dWp(self, paths: slice = slice(None), steps: slice = slice(None)) -> np.ndarray:
        """Increments of the independent copy W'."""
        return self._stream(STREAM_WP, paths, steps, np.sqrt(self.grid.h))

    def initial_levels(self, paths: slice = slice(None)) -> tuple[np.ndarray, np.ndarray]:
        """(W_{t0}, independent Gaussian) per path, each of shape (paths, dim)."""
        s = np.sqrt(self.grid.t0)
        return (self._stream(STREAM_W0, paths, slice(0, 1), s)[:, 0],
                self._stream(STREAM_WP0, paths, slice(0, 1), s)[:, 0])

    @cached_property
    def increments_W(self) -> np.ndarray:
        out = self.dW()
        out.flags.writeable = False
        return out

    @cached_property
    def increments_Wp(self) -> np.ndarray:
        out = self.dWp()
        out.flags.writeable = False
        return out

    def chunks(self, chunk_paths: int = 8 * BLOCK_PATHS) -> Iterator[slice]:
        for p0 in range(0, self.n_paths, chunk_paths):
            yield slice(p0, min(p0 + chunk_paths, self.n_paths))

    def with_paths(self, n_paths: int) -> "BrownianBundle":
        return BrownianBundle(self.grid, self.dim, n_paths, self.seed)


def sample_bundle(grid: TimeGrid, dim: int, n_paths: int, seed: int) -> BrownianBundle:
    return BrownianBundle(grid, int(dim), int(n_paths), int(seed))


def couple_increments(dW: np.ndarray, dWp: np.ndarray, phi_values: np.ndarray) -> np.ndarray:
    """sqrt(1 - phi_k^2) dW_k + phi_k dW'_k with phi broadcast along the step axis."""
    phi_values = np.asarray(phi_values, dtype=float)[None, :, None]
    out = np.sqrt(1.0 - phi_values**2) * dW + phi_values * dWp
    # exact pass-through where there is nothing to mix
    zero = phi_values[0, :, 0] == 0.0
    out[:, zero] = dW[:, zero]
    one = phi_values[0, :, 0] == 1.0
    out[:, one] = dWp[:, one]
    return out


def couple(bundle: BrownianBundle, phi: CouplingFunction) -> np.ndarray:
    """Increments of W^phi for the whole bundle (same shape as ``increments_W``)."""
    values = phi.on_grid(bundle.grid)
    if not np.any(values):
        return bundle.increments_W
    return couple_increments(bundle.increments_W, bundle.increments_Wp, values)
