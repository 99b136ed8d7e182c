"""Closed-form solitons on the line and the action thresholds built from them."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad


@dataclass(frozen=True)
class ProblemParams:
    lam: float
    p: float

    def __post_init__(self):
        if not self.p > 2:
            raise ValueError(f"p must exceed 2, got {self.p}")
        if not math.isfinite(self.lam):
            raise ValueError("lambda must be finite")

    @property
    def kappa(self) -> float:
        return 0.5 - 1.0 / self.p

    @property
    def q(self) -> float:
        """Exponent linking the reduced quotient to the action, J = kappa * R**q."""
        return self.p / (self.p - 2.0)


def _check(lam: float, p: float) -> None:
    if not p > 2:
        raise ValueError(f"p must exceed 2, got {p}")
    if not lam > 0:
        raise ValueError(f"solitons need lambda > 0, got {lam}")


def _sech(y):
    a = np.abs(y)
    e = np.exp(-a)
    return 2.0 * e / (1.0 + e * e)


@dataclass(frozen=True)
class SolitonOracle:
    lam: float
    p: float

    def __post_init__(self):
        _check(self.lam, self.p)

    @property
    def amplitude(self) -> float:
        return (self.p * self.lam / 2.0) ** (1.0 / (self.p - 2.0))

    @property
    def decay_rate(self) -> float:
        return math.sqrt(self.lam)

    @property
    def width_exponent(self) -> float:
        return 2.0 / (self.p - 2.0)

    def __call__(self, x):
        y = (self.p - 2.0) * math.sqrt(self.lam) * np.asarray(x, dtype=float) / 2.0
        return self.amplitude * _sech(y) ** self.width_exponent


def soliton(lam: float, p: float) -> SolitonOracle:
    """Positive even solution of u'' + |u|^{p-2}u = lam*u on the real line."""
    return SolitonOracle(lam, p)


def _lp_tail_bound(lam: float, p: float, X: float) -> float:
    # sech(y) <= 2 e^{-y}, so phi^p <= A^p 2^{2p/(p-2)} exp(-p sqrt(lam) x)
    phi = SolitonOracle(lam, p)
    c = phi.amplitude**p * 2.0 ** (2.0 * p / (p - 2.0))
    r = p * math.sqrt(lam)
    return c * math.exp(-r * X) / r


def soliton_lp_p(lam: float, p: float) -> float:
    """||phi||_p^p on the whole line by adaptive quadrature of the closed form."""
    _check(lam, p)
    phi = SolitonOracle(lam, p)
    X = 40.0 / ((p - 2.0) * math.sqrt(lam))
    # split [0, X] so the adaptive rule resolves the core
    scale = 1.0 / ((p - 2.0) * math.sqrt(lam))
    pts = [0.0] + [k * scale for k in (1, 2, 4, 8, 16, 32) if k * scale < X] + [X]
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        val, _ = quad(lambda x: float(phi(x)) ** p, a, b, epsabs=0.0, epsrel=1e-13, limit=200)
        total += val
    tail = _lp_tail_bound(lam, p, X)
    assert tail <= 1e-14 * total, "quadrature window too short"
    return 2.0 * total


def s_level(lam: float, p: float) -> float:
    """Action of the soliton, kappa * ||phi||_p^p."""
    return (0.5 - 1.0 / p) * soliton_lp_p(lam, p)


def half_s_level(lam: float, p: float) -> float:
    return 0.5 * s_level(lam, p)


def scaling_exponent(p: float) -> float:
    return (p + 2.0) / (2.0 * (p - 2.0))


@dataclass(frozen=True)
class Thresholds:
    lam: float
    p: float
    s: float
    half_s: float
    double_s: float

    def s_plus_inf(self, inf_n: float) -> float:
        return self.s + inf_n

    def as_dict(self) -> dict:
        return {"lambda": self.lam, "p": self.p, "s": self.s, "half_s": self.half_s, "double_s": self.double_s}


def thresholds(lam: float, p: float) -> Thresholds:
    s = s_level(lam, p)
    return Thresholds(lam, p, s, s / 2.0, 2.0 * s)


def s_plus_inf(lam: float, p: float) -> Callable[[float], float]:
    s = s_level(lam, p)
    return lambda inf_n: s + inf_n


def omega_dirichlet_half_line(L: float) -> float:
    """Bottom of the spectrum of -d^2/dx^2 on [0, L], free at 0 and Dirichlet at L."""
    return (math.pi / (2.0 * L)) ** 2
