"""Named SDE presets and the Hoelder counterexample coefficient.

Every preset is built from a flat numeric parameter map; unknown keys are
rejected. Parameters per preset (defaults in brackets):

``linear``               b = mu x, sigma = sig x                      mu [0.1], sigma [0.2], x0 [1]
``cir``                  b = A - B x, sigma = sig sqrt|x|            A [1], B [1], sigma [0.5], x0 [1]
``holder_power``         b = mu x, sigma = sig |x|^theta             theta [0.6], mu [0], sigma [1], x0 [1]
``holder_sharpness``     b = 0, sigma = 1 on [0,c], |x|^theta after  theta [0.5], c [0.25], x0 [0]
``ciesielski``           b = 0, sigma = 1 + sum_l 1_{I_l}(s) S_{n_l}(x)   theta [0.5], levels [3], x0 [0]
``controlled_indicator`` b = mu U x, sigma = sig (1 + kappa U) x,
                         U_s = 1{W_s > K} 1{s > a}                   K [0], a [0], mu [0.1], sigma [0.2],
                                                                     kappa [0.5], x0 [1]

Zero is absorbing for ``holder_power`` and, after c, for
``holder_sharpness`` (b(0) = sigma(0) = 0); their Euler steps stop at zero
instead of crossing it.

Time-piecewise coefficients are evaluated at the left node u_k of a step
as the right limit at u_k, so the step (u_k, u_{k+1}] sees the value of the
interval it lies in.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .sde import SdeModel, potential_indicator

__all__ = [
    "PRESETS",
    "make_preset",
    "CounterexampleSpec",
    "default_counterexample",
    "sawtooth_integral",
    "ciesielski_S",
    "counterexample_sigma",
]


def _linear(mu=0.1, sigma=0.2, x0=1.0):
    return SdeModel(
        "linear", 1, 1,
        drift=lambda s, x, aux: mu * x,
        diffusion=lambda s, x, aux: sigma * x,
        L_b=abs(mu), L_sigma=abs(sigma), K_b=abs(mu), K_sigma=abs(sigma), theta=1.0,
        x0=x0, params=dict(mu=mu, sigma=sigma, x0=x0),
    )


def _cir(A=1.0, B=1.0, sigma=0.5, x0=1.0):
    return SdeModel(
        "cir", 1, 1,
        drift=lambda s, x, aux: A - B * x,
        diffusion=lambda s, x, aux: sigma * np.sqrt(np.abs(x)),
        L_b=abs(B), L_sigma=sigma, K_b=max(abs(A), abs(B)), K_sigma=sigma, theta=0.5,
        x0=x0, params=dict(A=A, B=B, sigma=sigma, x0=x0),
    )


def _holder_power(theta=0.6, mu=0.0, sigma=1.0, x0=1.0):
    return SdeModel(
        "holder_power", 1, 1,
        drift=lambda s, x, aux: mu * x,
        diffusion=lambda s, x, aux: sigma * np.abs(x) ** theta,
        L_b=abs(mu), L_sigma=sigma, K_b=abs(mu), K_sigma=sigma, theta=theta, absorb_after=0.0,
        x0=x0, params=dict(theta=theta, mu=mu, sigma=sigma, x0=x0),
    )


def _holder_sharpness(theta=0.5, c=0.25, x0=0.0):
    def diffusion(s, x, aux):
        if s < c:
            return np.ones_like(x)
        return np.abs(x) ** theta

    return SdeModel(
        "holder_sharpness", 1, 1,
        drift=lambda s, x, aux: np.zeros_like(x),
        diffusion=diffusion,
        L_b=0.0, L_sigma=1.0, K_b=0.0, K_sigma=1.0, theta=theta, absorb_after=c,
        x0=x0, params=dict(theta=theta, c=c, x0=x0),
    )


def _controlled_indicator(K=0.0, a=0.0, mu=0.1, sigma=0.2, kappa=0.5, x0=1.0):
    U = potential_indicator(K, a)
    return SdeModel(
        "controlled_indicator", 1, 1,
        drift=lambda s, x, aux: mu * aux["U"] * x,
        diffusion=lambda s, x, aux: sigma * (1.0 + kappa * aux["U"]) * x,
        L_b=abs(mu), L_sigma=abs(sigma) * (1 + abs(kappa)), K_b=abs(mu),
        K_sigma=abs(sigma) * (1 + abs(kappa)), theta=1.0, potential=U,
        x0=x0, params=dict(K=K, a=a, mu=mu, sigma=sigma, kappa=kappa, x0=x0),
    )


# -- counterexample ---------------------------------------------------------

def sawtooth_integral(y, n: int):
    """int_0^y r_n, with r_n = +1 on ((2i-2)/2^(n+1), (2i-1)/2^(n+1)], -1 on the next half period.

    The integral is the triangle wave of period 2^-n and height 2^-(n+1).
    """
    y = np.abs(np.asarray(y, dtype=float))
    half = 2.0 ** -(n + 1)
    period = 2.0 * half
    return half - np.abs(np.mod(y, period) - half)


def ciesielski_S(x, n: int, theta: float):
    """S_n(x) = 2^((n+1)(1-theta)) int_0^|x| r_n(y) dy."""
    return 2.0 ** ((n + 1) * (1.0 - theta)) * sawtooth_integral(x, n)


@dataclass(frozen=True)
class CounterexampleSpec:
    theta: float
    breakpoints: tuple[float, ...]     # t_0 = 0 < t_1 < ... < t_L
    frequencies: tuple[int, ...]       # n_1 < ... < n_L

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0,1)")
        if len(self.breakpoints) != len(self.frequencies) + 1:
            raise ValueError("need one frequency per level")
        if self.breakpoints[0] != 0.0 or np.any(np.diff(self.breakpoints) <= 0) or self.breakpoints[-1] >= 1.0:
            raise ValueError("breakpoints must increase from 0 and stay below 1")
        if np.any(np.diff(self.frequencies) <= 0) or self.frequencies[0] < 0:
            raise ValueError("frequencies must be strictly increasing and >= 0")

    @property
    def levels(self) -> int:
        return len(self.frequencies)

    def interval(self, level: int) -> tuple[float, float]:
        """I_level = (t_{level-1}, t_level], level counted from 1."""
        return self.breakpoints[level - 1], self.breakpoints[level]

    def blowup_index(self, level: int) -> float:
        lo, hi = self.interval(level)
        n = self.frequencies[level - 1]
        return 2.0 ** (2 * (n + 1) * (1 - self.theta)) * (hi - lo) ** 2 / 8.0

    def level_of(self, s, right_limit: bool = False):
        """Level index l with s in I_l (0 when s lies beyond the last level)."""
        bps = np.asarray(self.breakpoints)
        side = "right" if right_limit else "left"
        idx = np.searchsorted(bps, s, side=side)
        return np.where(idx <= self.levels, idx, 0)


def default_counterexample(theta: float = 0.5, levels: int = 3) -> CounterexampleSpec:
    """t_l = 1 - 2^-l and n_l minimal with blow-up index >= l, strictly increasing in l."""
    bps = [1.0 - 2.0 ** -l for l in range(levels + 1)]
    freqs: list[int] = []
    prev_index = -np.inf
    for l in range(1, levels + 1):
        width = bps[l] - bps[l - 1]
        n = freqs[-1] + 1 if freqs else 0
        while True:
            index = 2.0 ** (2 * (n + 1) * (1 - theta)) * width**2 / 8.0
            if index >= l and index > prev_index:
                break
            n += 1
        freqs.append(n)
        prev_index = index
    return CounterexampleSpec(theta, tuple(bps), tuple(freqs))


def counterexample_sigma(spec: CounterexampleSpec, s, x, right_limit: bool = False):
    """sigma(s, x) = 1 + sum_l 1_{I_l}(s) S_{n_l}(x); equals 1 at s = 1 and beyond the last level."""
    s = np.asarray(s, dtype=float)
    x = np.asarray(x, dtype=float)
    level = np.broadcast_to(spec.level_of(s, right_limit), np.broadcast(s, x).shape)
    out = np.ones(np.broadcast(s, x).shape)
    xb = np.broadcast_to(x, out.shape)
    for l in range(1, spec.levels + 1):
        mask = level == l
        if np.any(mask):
            out[mask] += ciesielski_S(xb[mask], spec.frequencies[l - 1], spec.theta)
    return out


def _ciesielski(theta=0.5, levels=3, x0=0.0):
    spec = default_counterexample(theta, int(levels))

    def diffusion(s, x, aux):
        return counterexample_sigma(spec, s, x, right_limit=True)

    return SdeModel(
        "ciesielski", 1, 1,
        drift=lambda s, x, aux: np.zeros_like(x),
        diffusion=diffusion,
        L_b=0.0, L_sigma=1.0, K_b=0.0, K_sigma=2.0, theta=theta,
        x0=x0, params=dict(theta=theta, levels=int(levels), x0=x0, spec=spec),
    )


PRESETS: dict[str, Callable[..., SdeModel]] = {
    "linear": _linear,
    "cir": _cir,
    "holder_power": _holder_power,
    "holder_sharpness": _holder_sharpness,
    "ciesielski": _ciesielski,
    "controlled_indicator": _controlled_indicator,
}


def make_preset(name: str, **params) -> SdeModel:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; known: {sorted(PRESETS)}") from None
    allowed = factory.__code__.co_varnames[:factory.__code__.co_argcount]
    unknown = set(params) - set(allowed)
    if unknown:
        raise ValueError(f"preset {name!r} got unknown parameters {sorted(unknown)}; allowed: {list(allowed)}")
    return factory(**{k: float(v) if k != "levels" else int(v) for k, v in params.items()})
