"""Monte Carlo norm estimators, Besov functionals, BMO and rate fits."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import special, stats

from .sde import PathEnsemble
from .wiener import TimeGrid

__all__ = [
    "LpEstimate",
    "lp_norm",
    "lp_sup_distance",
    "BesovSpec",
    "besov_phi_alpha",
    "default_intervals",
    "K_eta",
    "mu_density",
    "mu_density_reference",
    "K_bracket",
    "mu_bracket",
    "interpolation_functional",
    "tanh_sinh",
    "bmo_s2_norm",
    "FeffermanReport",
    "fefferman_check",
    "RateFit",
    "rate_fit",
    "GrReport",
    "gr_inequality_check",
    "trapezoid_weights",
]


@dataclass
class LpEstimate:
    """Monte Carlo estimate of ||Y||_{L_p} = (E|Y|^p)^(1/p)."""

    p: float
    value: float
    std_error: float
    n_paths: int
    name: str = ""
    parameters: dict = field(default_factory=dict)
    seed: int | None = None

    def record(self) -> dict:
        rec = asdict(self)
        rec["parameters"] = dict(self.parameters)
        return rec

    def scaled(self, factor: float) -> "LpEstimate":
        return LpEstimate(self.p, self.value * factor, self.std_error * abs(factor), self.n_paths,
                          self.name, dict(self.parameters), self.seed)


def lp_norm(samples: np.ndarray, p: float, name: str = "", **parameters) -> LpEstimate:
    """(mean |Y|^p)^(1/p) with a delta-method standard error.

    The standard error of the mean of |Y|^p is the (leave-one-out jackknife)
    sample standard deviation over sqrt(n); it is mapped through
    m -> m^(1/p). For p < 1 this is the quasi-norm.
    """
    if p <= 0:
        raise ValueError(f"p must be positive, got {p}")
    y = np.abs(np.asarray(samples, dtype=float)).ravel()
    n = y.size
    if n == 0:
        raise ValueError("no samples")
    yp = y**p
    m = float(yp.mean())
    se_m = float(yp.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    value = m ** (1.0 / p)
    se = (1.0 / p) * m ** (1.0 / p - 1.0) * se_m if m > 0 else 0.0
    return LpEstimate(p, value, se, n, name, parameters)


def lp_sup_distance(X: PathEnsemble, Xp: PathEnsemble, p: float) -> LpEstimate:
    """||max_k |X_k - X^phi_k| ||_{L_p} over grid nodes (biased low against the continuous sup)."""
    if X.grid != Xp.grid or X.states.shape != Xp.states.shape:
        raise ValueError("ensembles live on different grids or shapes")
    if X.provenance[1:2] != Xp.provenance[1:2]:
        raise ValueError("ensembles come from different seeds")
    d = np.linalg.norm(X.states - Xp.states, axis=2).max(axis=1)
    return lp_norm(d, p, name="sup_distance")


# -- Besov seminorms ----------------------------------------------------------

@dataclass(frozen=True)
class BesovSpec:
    kind: str                          # "phi_alpha" or "interpolation"
    alpha: float = 2.0
    eta: float = 0.5
    q: float = 2.0
    intervals: tuple = ()
    r_grid: tuple = ()

    def __post_init__(self):
        if self.kind == "phi_alpha":
            if self.alpha < 2:
                raise ValueError("alpha must be >= 2")
        elif self.kind == "interpolation":
            if not 0 < self.eta < 1:
                raise ValueError("eta must lie in (0,1)")
            if self.q < 1:
                raise ValueError("q must be >= 1")
            if any(not 0 < r < 1 for r in self.r_grid):
                raise ValueError("r grid must lie in (0,1)")
        else:
            raise ValueError(f"unknown Besov kind {self.kind!r}")


def default_intervals(t0: float, T: float, kmin: int = 3, kmax: int = 9) -> tuple:
    """Anchors a in {t0, t0 + L/4, t0 + L/2} times dyadic lengths 2^-k L."""
    L = T - t0
    out = []
    for a in (t0, t0 + L / 4, t0 + L / 2):
        for k in range(kmin, kmax + 1):
            c = a + L * 2.0**-k
            if c <= T:
                out.append((a, c))
    return tuple(out)


def besov_phi_alpha(sampler: Callable[[float, float], LpEstimate], spec: BesovSpec, p: float) -> LpEstimate:
    """max over the interval grid of ||xi - xi^(a,c]||_p / (c - a)^(1/alpha).

    A lower estimate of the supremum over all intervals. The standard error
    is the one of the maximizing interval.
    """
    if spec.kind != "phi_alpha":
        raise ValueError("spec must be of kind phi_alpha")
    if not spec.intervals:
        raise ValueError("empty interval grid")
    best = None
    for a, c in spec.intervals:
        est = sampler(a, c)
        ratio = est.scaled((c - a) ** (-1.0 / spec.alpha))
        if best is None or ratio.value > best.value:
            best = ratio
            best.parameters = {"a": a, "c": c}
    best.name = f"phi_{spec.alpha:g}"
    best.p = p
    return best


# -- real interpolation functional -----------------------------------------------

def K_eta(r, eta: float):
    """(1 - sqrt(1 - r^2))^(-eta/2) on (0,1], 0 at r = 0."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        base = r * r / (1.0 + np.sqrt(1.0 - r * r))        # = 1 - sqrt(1 - r^2) without cancellation
        out = np.where(r > 0, base ** (-eta / 2.0), 0.0)
    return out


def mu_density(r):
    """d mu / dr = r / (sqrt(1 - r^2) (1 - sqrt(1 - r^2))) on (0,1)."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        root = np.sqrt(1.0 - r * r)
        out = np.where((r > 0) & (r < 1), (1.0 + root) / (r * root), 0.0)
    return out


def mu_density_reference(r):
    """1 / (r sqrt(1 - r)) on (0,1)."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where((r > 0) & (r < 1), 1.0 / (r * np.sqrt(1.0 - r)), 0.0)


def K_bracket(eta: float) -> float:
    """Constant c with K_eta(r) r^eta in [1/c, c]; equals 2^(eta/2) since K_eta(r) r^eta = (1 + sqrt(1-r^2))^(eta/2)."""
    return 2.0 ** (eta / 2.0)


def mu_bracket() -> float:
    """Constant c with mu_density / mu_density_reference in [1/c, c].

    The ratio equals (1 + sqrt(1 - r^2)) / sqrt(1 + r), which decreases from 2
    at r = 0 to 1/sqrt(2) at r = 1.
    """
    return 2.0


def tanh_sinh(f: Callable[[np.ndarray], np.ndarray], a: float, b: float, level: int = 7,
              tmax: float = 4.0) -> float:
    """Double-exponential quadrature of f over (a, b); f is never evaluated at the endpoints."""
    hstep = 2.0**-level
    t = np.arange(-tmax, tmax + hstep / 2, hstep)
    u = 0.5 * np.pi * np.sinh(t)
    w01 = 0.25 * np.pi * np.cosh(t) / np.cosh(u) ** 2
    # measure nodes from the nearer endpoint so they do not collapse onto it
    x = np.where(u < 0, a + (b - a) * special.expit(2 * u), b - (b - a) * special.expit(-2 * u))
    keep = (x > a) & (x < b)
    vals = np.zeros_like(x)
    vals[keep] = f(x[keep])
    return float((b - a) * hstep * np.sum(w01[keep] * vals[keep]))


def _profile_callable(profile):
    if callable(profile):
        return profile
    r, F = (np.asarray(v, dtype=float) for v in profile[:2])
    order = np.argsort(r)
    r, F = r[order], F[order]
    if r[0] > 0:
        r, F = np.concatenate([[0.0], r]), np.concatenate([[0.0], F])
    return lambda x: np.interp(x, r, F)


def interpolation_functional(profile, eta: float, q: float, level: int = 8) -> float:
    """|| K_eta(r) F(r) ||_{L_q([0,1], mu)}.

    ``profile`` is a callable F(r) or a pair (r_grid, F values), the latter
    interpolated linearly with F(0) = 0. With r = sin(v) the measure becomes
    d mu = sin v / (1 - cos v) dv on (0, pi/2), which removes the
    1/sqrt(1-r) endpoint singularity; the remaining algebraic singularity at
    v = 0 is integrable for F(r) = O(r) when q(1 - eta) > 0 and is handled
    by the double-exponential rule. q = inf gives sup_r K_eta(r) F(r).
    """
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    if not 0 < eta < 1:
        raise ValueError(f"eta must lie in (0,1), got {eta}")
    F = _profile_callable(profile)
    if math.isinf(q):
        r = np.concatenate([np.geomspace(1e-8, 1.0, 4000)])
        return float(np.max(K_eta(r, eta) * np.abs(F(r))))

    def integrand(v):
        r = np.sin(v)
        one_minus_cos = 2.0 * np.sin(0.5 * v) ** 2
        weight = np.sin(v) / one_minus_cos
        kernel = one_minus_cos ** (-eta / 2.0)
        return (kernel * np.abs(F(r))) ** q * weight

    return tanh_sinh(integrand, 0.0, 0.5 * np.pi, level=level) ** (1.0 / q)


# -- BMO(S2) and Fefferman ------------------------------------------------------

def _future_square_integrals(C: np.ndarray, h: float) -> np.ndarray:
    """int_{u_k}^T C_u^2 du per path and node; C at node k+1 stands for (u_k, u_{k+1}]."""
    sq = C[:, 1:] ** 2 * h
    tail = np.cumsum(sq[:, ::-1], axis=1)[:, ::-1]
    return np.concatenate([tail, np.zeros((C.shape[0], 1))], axis=1)


def _piecewise_poly_fit(x: np.ndarray, y: np.ndarray, degree: int, n_bins: int) -> np.ndarray:
    """Fitted values of a least-squares piecewise polynomial in x over quantile bins."""
    if np.ptp(x) == 0:
        return np.full_like(y, y.mean())
    edges = np.quantile(x, np.linspace(0, 1, n_bins + 1))
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, n_bins - 1)
    out = np.empty_like(y)
    for b in range(n_bins):
        m = idx == b
        if not np.any(m):
            continue
        xb, yb = x[m], y[m]
        center, scale = xb.mean(), xb.std() or 1.0
        deg = min(degree, max(0, len(np.unique(xb)) - 1))
        V = np.vander((xb - center) / scale, deg + 1)
        coef, *_ = np.linalg.lstsq(V, yb, rcond=None)
        out[m] = V @ coef
    return out


def bmo_s2_norm(C: np.ndarray, grid: TimeGrid, state: np.ndarray | None = None,
                degree: int = 2, n_bins: int = 4, deterministic_tol: float = 0.0) -> LpEstimate:
    """sup_s || E(int_s^T C_u^2 du | F_s) ||_{L_inf}^(1/2).

    ``C`` holds nodewise values (n_paths, n_steps + 1); node k + 1 represents
    the process on (u_k, u_{k+1}]. Without ``state`` the process must be
    deterministic (identical rows) and the value is exact for the step
    function. Otherwise the conditional expectation at node k is regressed on
    ``state[:, k]`` (piecewise polynomial over quantile bins) and the
    essential supremum is replaced by the maximum fitted value over paths,
    which under-estimates it.
    """
    C = np.asarray(C, dtype=float)
    if C.ndim == 1:
        C = C[None, :]
    if C.shape[1] != grid.n_steps + 1:
        raise ValueError("C does not match the grid")
    future = _future_square_integrals(C, grid.h)
    if state is None:
        if np.ptp(C, axis=0).max() > deterministic_tol:
            raise ValueError("random process C needs a Markov state for the conditional expectation")
        value = math.sqrt(float(future[0].max()))
        return LpEstimate(math.inf, value, 0.0, C.shape[0], "bmo_s2")
    state = np.asarray(state, dtype=float)
    if state.shape != C.shape:
        raise ValueError("state must have the same shape as C")
    best = 0.0
    for k in range(grid.n_steps):
        fitted = _piecewise_poly_fit(state[:, k], future[:, k], degree, n_bins)
        best = max(best, float(fitted.max()))
    return LpEstimate(math.inf, math.sqrt(max(best, 0.0)), 0.0, C.shape[0], "bmo_s2")


@dataclass
class FeffermanReport:
    lhs: LpEstimate
    rhs: float
    rhs_std_error: float
    bmo: float
    margin: float
    holds: bool


def fefferman_check(A: np.ndarray, C: np.ndarray, grid: TimeGrid, p: float,
                    state: np.ndarray | None = None, n_sigma: float = 3.0) -> FeffermanReport:
    """|| int |A C| ds ||_p <= sqrt(2p) || (int A^2 ds)^(1/2) ||_p ||C||_BMO(S2), with MC slack."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if A.shape[1] != grid.n_steps + 1 or C.shape[1] != grid.n_steps + 1:
        raise ValueError("processes do not match the grid")
    n = max(A.shape[0], C.shape[0])
    A = np.broadcast_to(A, (n, A.shape[1]))
    Cb = np.broadcast_to(C, (n, C.shape[1]))
    h = grid.h
    lhs = lp_norm((np.abs(A[:, 1:] * Cb[:, 1:]) * h).sum(axis=1), p, "fefferman_lhs")
    sq = lp_norm(np.sqrt((A[:, 1:] ** 2 * h).sum(axis=1)), p, "fefferman_square")
    st = None if state is None else np.broadcast_to(state, (n, C.shape[1]))
    bmo = bmo_s2_norm(Cb if st is not None else C, grid, st).value
    rhs = math.sqrt(2 * p) * sq.value * bmo
    rhs_se = math.sqrt(2 * p) * sq.std_error * bmo
    slack = n_sigma * math.hypot(lhs.std_error, rhs_se)
    margin = rhs + slack - lhs.value
    return FeffermanReport(lhs, rhs, rhs_se, bmo, margin, margin >= 0)


# -- rate fits ---------------------------------------------------------------------

@dataclass
class RateFit:
    points: list                  # (h, estimate, std_error), h strictly decreasing
    slope: float
    slope_ci: tuple[float, float]
    intercept: float
    dropped: list = field(default_factory=list)

    def record(self) -> dict:
        return {"points": [list(map(float, p)) for p in self.points], "slope": self.slope,
                "slope_ci": list(self.slope_ci), "intercept": self.intercept,
                "dropped": [list(map(float, p)) for p in self.dropped]}


def _wls(x, y, w):
    W = np.sum(w)
    xm, ym = np.sum(w * x) / W, np.sum(w * y) / W
    sxx = np.sum(w * (x - xm) ** 2)
    slope = np.sum(w * (x - xm) * (y - ym)) / sxx
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    dof = len(x) - 2
    s2 = np.sum(w * resid**2) / dof if dof > 0 else 0.0
    se = math.sqrt(s2 / sxx) if dof > 0 else 0.0
    return slope, intercept, se, resid, dof


def rate_fit(points: Iterable[Sequence[float]], drop_coarsest: bool = True) -> RateFit:
    """Weighted least squares of log e on log h with a 95% t-interval for the slope.

    Points are (h, e) or (h, e, std_error); weights are 1/Var(log e) when
    standard errors are given. With more than three points, the coarsest one
    is dropped (and recorded) when its standardized residual exceeds 2.
    """
    pts = [tuple(map(float, p)) + ((0.0,) if len(p) == 2 else ()) for p in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    if any(p[1] <= 0 for p in pts):
        raise ValueError("rate fit needs positive estimates")
    if any(p[0] <= 0 for p in pts):
        raise ValueError("scales must be positive")
    pts.sort(key=lambda p: -p[0])
    if any(p1[0] <= p2[0] for p1, p2 in zip(pts, pts[1:])):
        raise ValueError("scales must be distinct")

    def fit(ps):
        x = np.log([p[0] for p in ps])
        y = np.log([p[1] for p in ps])
        rel = np.array([p[2] / p[1] for p in ps])
        w = 1.0 / rel**2 if np.all(rel > 0) else np.ones(len(ps))
        return (*_wls(x, y, w), rel)

    slope, intercept, se, resid, dof, rel = fit(pts)
    dropped = []
    if drop_coarsest and len(pts) > 3:
        sigma = rel[0] if rel[0] > 0 else (math.sqrt(np.sum(resid**2) / dof) if dof > 0 else 0.0)
        if sigma > 0 and abs(resid[0]) > 2 * sigma:
            dropped = [pts[0]]
            pts = pts[1:]
            slope, intercept, se, resid, dof, rel = fit(pts)
    tq = stats.t.ppf(0.975, dof) if dof > 0 else math.inf
    half = tq * se if se > 0 else 0.0
    return RateFit(pts, float(slope), (float(slope - half), float(slope + half)), float(intercept), dropped)


# -- Gyongy-Rasonyi type inequalities ------------------------------------------------

def trapezoid_weights(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    w = np.zeros_like(u)
    d = np.diff(u)
    w[:-1] += d / 2
    w[1:] += d / 2
    return w


@dataclass
class GrReport:
    part1_margin: float | None
    part2_margin: float | None

    @property
    def ok(self) -> bool:
        return all(m is None or m >= -1e-12 for m in (self.part1_margin, self.part2_margin))


def gr_inequality_check(u: np.ndarray, D: np.ndarray, p: float, q: float, rho: float,
                        K: float | None = None, part: int | None = None) -> GrReport:
    """Check both integral inequalities on a sampled function D over nodes u (c = u[0], s = u[-1]).

    Part 1 (1 <= rho <= q <= p):
        (int |D|^rho)^(p/q) <= (s-c)^(p/q - 1) int (|D| + |D|^p).
    Part 2 (1 < p < q, q - p + 1 <= rho <= q, K > 0):
        (int |D|^rho)^(p/q) <= K^-alpha (D*)^p + K^beta int (|D| + |D|^p),
        alpha = q / (q - p), 1/alpha + 1/beta = 1, D* = max |D|.
    Integrals use the trapezoidal rule on the samples. ``part`` selects one
    part; by default every part whose parameter constraints hold is checked
    and a parameter set admissible for neither is rejected.
    """
    u = np.asarray(u, dtype=float)
    D = np.abs(np.asarray(D, dtype=float))
    if u.ndim != 1 or u.shape != D.shape or len(u) < 2 or np.any(np.diff(u) <= 0):
        raise ValueError("need increasing nodes and matching samples")
    ok1 = 1 <= rho <= q <= p
    ok2 = 1 < p < q and q - p + 1 <= rho <= q and K is not None and K > 0
    if part == 1 and not ok1:
        raise ValueError("part 1 needs 1 <= rho <= q <= p")
    if part == 2 and not ok2:
        raise ValueError("part 2 needs 1 < p < q, q - p + 1 <= rho <= q and K > 0")
    if part is None and not (ok1 or ok2):
        raise ValueError("parameters admissible for neither part")
    w = trapezoid_weights(u)
    length = u[-1] - u[0]
    lhs = float(np.sum(w * D**rho)) ** (p / q)
    base = float(np.sum(w * (D + D**p)))
    m1 = m2 = None
    if ok1 and part in (None, 1):
        m1 = length ** (p / q - 1) * base - lhs
    if ok2 and part in (None, 2):
        alpha = q / (q - p)
        beta = alpha / (alpha - 1)
        with np.errstate(over="ignore"):
            # alpha blows up as q -> p; an infinite bound is a valid (trivial) one
            peak = float(D.max()) ** p
            rhs = (np.power(K, -alpha) * peak if peak > 0 else 0.0) + np.power(K, beta) * base
        m2 = float(rhs) - lhs
    return GrReport(m1, m2)
