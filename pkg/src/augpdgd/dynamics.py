"""Augmented Lagrangian and the primal-dual gradient vector field.

The augmented Lagrangian replaces the usual multiplier term for the
inequalities by a smooth penalty built from clamped shifted constraints,

    L(x, lam, nu) = f(x) + Theta(x, lam) + nu . (A x - b),
    Theta(x, lam) = sum_i ( [rho g_i(x) + lam_i]_+^2 - lam_i^2 ) / (2 rho),

and the flow descends in x while ascending in (lam, nu).  The right-hand
side is continuous everywhere (the clamp is total) and vanishes exactly
at KKT points.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .problem import ConvexProgram, PrimalDualPoint, _check_point_dims


@dataclass(frozen=True)
class DynamicsParams:
    """Penalty weight rho > 0 and dual-rate scale eta > 0."""

    rho: float
    eta: float = 1.0

    def __post_init__(self):
        if not (self.rho > 0):
            raise ValueError("rho must be positive")
        if not (self.eta > 0):
            raise ValueError("eta must be positive")


def plus_part(s):
    """Positive part, elementwise: max(s, 0)."""
    return np.maximum(s, 0.0)


def theta_rho(prog: ConvexProgram, params: DynamicsParams,
              x: np.ndarray, lam: np.ndarray) -> float:
    """Smooth inequality penalty; convex in x, concave in lam."""
    if prog.m_I == 0:
        return 0.0
    gvals, _ = prog.eval_inequalities(np.asarray(x, dtype=float))
    lam = np.asarray(lam, dtype=float)
    shifted = plus_part(params.rho * gvals + lam)
    return float(np.sum(shifted ** 2 - lam ** 2) / (2.0 * params.rho))


def augmented_lagrangian(prog: ConvexProgram, params: DynamicsParams,
                         z: PrimalDualPoint) -> float:
    _check_point_dims(prog, z)
    fval, _ = prog.objective(z.x)
    value = fval + theta_rho(prog, params, z.x, z.lam)
    if prog.m_E:
        value += float(z.nu @ (prog.eq_matrix @ z.x - prog.eq_rhs))
    return value


def vector_field(prog: ConvexProgram, params: DynamicsParams,
                 z: PrimalDualPoint) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Right-hand side of the flow, split into (xdot, lamdot, nudot).

    Primal descent, dual ascent on the augmented Lagrangian; the dual
    rates are additionally scaled by eta when it differs from one.
    """
    _check_point_dims(prog, z)
    rho = params.rho
    gvals, jac = prog.eval_inequalities(z.x)
    _, grad_f = prog.objective(z.x)
    clamped = plus_part(rho * gvals + z.lam)
    xdot = -grad_f
    if prog.m_I:
        xdot -= jac.T @ clamped
    if prog.m_E:
        xdot -= prog.eq_matrix.T @ z.nu
        nudot = prog.eq_matrix @ z.x - prog.eq_rhs
    else:
        nudot = np.zeros(0)
    lamdot = (clamped - z.lam) / rho
    if params.eta != 1.0:
        lamdot = params.eta * lamdot
        nudot = params.eta * nudot
    return xdot, lamdot, nudot


def make_field(prog: ConvexProgram, params: DynamicsParams
               ) -> Callable[[np.ndarray], np.ndarray]:
    """Autonomous field on stacked states y = (x, lam, nu)."""
    n, m_i, m_e = prog.n, prog.m_I, prog.m_E
    rho, eta = params.rho, params.eta
    A = prog.eq_matrix
    AT = A.T
    b = prog.eq_rhs

    def field(y: np.ndarray) -> np.ndarray:
        x = y[:n]
        lam = y[n:n + m_i]
        nu = y[n + m_i:]
        gvals, jac = prog.eval_inequalities(x)
        _, grad_f = prog.objective(x)
        clamped = np.maximum(rho * gvals + lam, 0.0)
        ydot = np.empty_like(y)
        xdot = -grad_f
        if m_i:
            xdot -= jac.T @ clamped
        if m_e:
            xdot -= AT @ nu
            ydot[n + m_i:] = eta * (A @ x - b)
        ydot[:n] = xdot
        ydot[n:n + m_i] = (eta / rho) * (clamped - lam)
        return ydot

    return field


def apply_eta_scaling(prog: ConvexProgram, params: DynamicsParams
                      ) -> tuple[ConvexProgram, DynamicsParams]:
    """Equivalent unit-rate problem absorbing the dual-rate scale.

    Scales g, A, b by sqrt(eta) and rho by 1/eta.  Trajectories of the
    returned system, with duals divided by sqrt(eta) at time zero, match
    the eta-scaled dynamics of the original problem with duals divided
    by sqrt(eta) for all time.
    """
    eta = params.eta
    if eta == 1.0:
        return prog, params
    root = float(np.sqrt(eta))

    def scale_constraint(gi):
        def scaled(x):
            val, grad = gi(x)
            return root * val, root * np.asarray(grad, dtype=float)
        return scaled

    bounds = None
    if prog.ineq_bounds is not None:
        def scale_bound(fn):
            return lambda d: tuple(root * c for c in fn(d))
        bounds = tuple(scale_bound(fn) for fn in prog.ineq_bounds)

    batch = None
    if prog.ineq_batch is not None:
        base = prog.ineq_batch

        def batch(x):
            vals, jac = base(x)
            return root * vals, root * jac

    scaled_prog = ConvexProgram(
        n=prog.n, m_I=prog.m_I, m_E=prog.m_E,
        objective=prog.objective,
        inequalities=tuple(scale_constraint(gi) for gi in prog.inequalities),
        eq_matrix=root * prog.eq_matrix,
        eq_rhs=root * prog.eq_rhs,
        mu=prog.mu, ell=prog.ell,
        ineq_bounds=bounds,
        ineq_batch=batch,
        name=prog.name + f"@eta{eta:g}" if prog.name else "",
        extras=dict(prog.extras),
    )
    return scaled_prog, DynamicsParams(rho=params.rho / eta, eta=1.0)
