"""Closed-form flow of the one-dimensional counterexample.

For the program  min x^2/2  s.t.  x <= 1, x = 0  the flow started at
x(0) = 1/2, lam(0) = (alpha + rho)/2, nu(0) = -(alpha + 1)/2 stays on a
plateau of length alpha (the clamped constraint term holds x constant
while lam drains linearly), then decays exponentially.  The squared
distance to the origin integrates to a cubic in alpha, while any global
exponential envelope only allows quadratic growth of that integral -- so
no single (M, xi) pair can cover every alpha.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .problem import PrimalDualPoint

_SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class CounterexampleParams:
    """Plateau length alpha > 0 and penalty weight rho > 0."""

    alpha: float
    rho: float

    def __post_init__(self):
        if not (self.alpha > 0):
            raise ValueError("alpha must be positive")
        if not (self.rho > 0):
            raise ValueError("rho must be positive")


def initial_point(params: CounterexampleParams) -> PrimalDualPoint:
    """The initial condition whose solution is known in closed form."""
    a, r = params.alpha, params.rho
    return PrimalDualPoint(np.array([0.5]), np.array([(a + r) / 2.0]),
                           np.array([-(a + 1.0) / 2.0]))


def closed_form_arrays(params: CounterexampleParams, t) -> np.ndarray:
    """States of the closed-form solution at times t, shape (len(t), 3)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    a, r = params.alpha, params.rho
    out = np.empty((t.size, 3))
    plateau = t <= a
    tp = t[plateau]
    out[plateau, 0] = 0.5
    out[plateau, 1] = 0.5 * (a + r - tp)
    out[plateau, 2] = 0.5 * (tp - a - 1.0)
    tau = t[~plateau] - a
    damp = np.exp(-tau / 2.0) * (_SQRT3 / 3.0)
    out[~plateau, 0] = damp * np.sin(_SQRT3 * tau / 2.0 + math.pi / 3.0)
    out[~plateau, 1] = 0.5 * r * np.exp(-tau / r)
    out[~plateau, 2] = damp * np.sin(_SQRT3 * tau / 2.0 - math.pi / 3.0)
    return out


def closed_form(params: CounterexampleParams, t: float) -> PrimalDualPoint:
    """Closed-form state at a single time t >= 0."""
    row = closed_form_arrays(params, float(t))[0]
    return PrimalDualPoint(row[0:1], row[1:2], row[2:3])


def h_alpha(params: CounterexampleParams, t):
    """Squared distance to the equilibrium along the closed-form solution."""
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    a, r = params.alpha, params.rho
    out = np.empty(t.size)
    plateau = t <= a
    tp = t[plateau]
    out[plateau] = 0.25 * (1.0 + (a + r - tp) ** 2 + (tp - a - 1.0) ** 2)
    tau = t[~plateau] - a
    out[~plateau] = (0.25 * r ** 2 * np.exp(-2.0 * tau / r)
                     + np.exp(-tau) * (2.0 + np.cos(_SQRT3 * tau)) / 6.0)
    return float(out[0]) if scalar else out


def h_alpha_integral(params: CounterexampleParams) -> float:
    """Integral of the squared distance over all time; cubic in alpha."""
    a, r = params.alpha, params.rho
    return (a ** 3 / 6.0 + (r + 1.0) * a ** 2 / 4.0
            + (2.0 + r ** 2) * a / 4.0 + (3.0 + r ** 3) / 8.0)


def envelope_integral_bound(params: CounterexampleParams,
                            hypothetical_M: float,
                            hypothetical_xi: float) -> float:
    """Upper bound on the distance integral implied by a global envelope.

    If |z(t)| <= M exp(-xi t) |z(0)| held for every start, the squared
    distance would integrate to at most (M^2 / 2 xi) |z(0)|^2, which
    grows only quadratically in alpha.
    """
    a, r = params.alpha, params.rho
    h0 = 0.25 * (1.0 + (a + r) ** 2 + (a + 1.0) ** 2)
    return hypothetical_M ** 2 / (2.0 * hypothetical_xi) * h0


@dataclass(frozen=True)
class NonExponentialReport:
    """Actual-versus-envelope integral ratios over a grid of alphas."""

    rho: float
    hypothetical_M: float
    hypothetical_xi: float
    rows: tuple[tuple[float, float, float, float], ...]  # (alpha, integral, bound, ratio)
    crossover_alpha: float | None

    def ratios(self) -> np.ndarray:
        return np.array([row[3] for row in self.rows])


def demonstrate_nonexponential(alphas, rho: float, hypothetical_M: float,
                               hypothetical_xi: float) -> NonExponentialReport:
    """Tabulate how the cubic integral outgrows any fixed envelope bound.

    For each alpha the actual integral and the envelope-implied bound are
    evaluated in closed form; the ratio must exceed one for all large
    alpha, with the crossover located by scanning the grid.
    """
    alphas = [float(a) for a in alphas]
    if any(b <= a for a, b in zip(alphas, alphas[1:])):
        raise ValueError("alphas must be strictly increasing")
    if hypothetical_M <= 0 or hypothetical_xi <= 0:
        raise ValueError("envelope constants must be positive")
    rows = []
    crossover = None
    for a in alphas:
        params = CounterexampleParams(alpha=a, rho=rho)
        integral = h_alpha_integral(params)
        bound = envelope_integral_bound(params, hypothetical_M, hypothetical_xi)
        ratio = integral / bound
        if crossover is None and ratio > 1.0:
            crossover = a
        rows.append((a, integral, bound, ratio))
    return NonExponentialReport(
        rho=rho, hypothetical_M=hypothetical_M, hypothetical_xi=hypothetical_xi,
        rows=tuple(rows), crossover_alpha=crossover)
