"""Convex programs with inequality and affine equality constraints.

A problem is

    minimize f(x)   subject to   g(x) <= 0,  A x = b,

with f strongly convex and smooth and each g_i convex and smooth.
This module defines the problem container, KKT residuals, active-set
detection, constraint-qualification checks, reference-solution solvers,
built-in instances, and a JSON interchange format.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    AssumptionViolationError,
    DimensionError,
    GenerationError,
)

Evaluator = Callable[[np.ndarray], tuple[float, np.ndarray]]
BoundFn = Callable[[float], tuple[float, float]]

#: Default tolerance for declaring a constraint active; reference points are
#: solved to ~1e-8, so a decade of slack avoids misclassification.
DEFAULT_ACTIVE_TOL = 1e-7

#: Scale-relative threshold on the constraint-qualification eigenvalue.
LICQ_RANK_TOL = 1e-10


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ConvexProgram:
    """Immutable description of one convex program.

    ``objective`` maps x to (f(x), grad f(x)); each entry of
    ``inequalities`` maps x to (g_i(x), grad g_i(x)).  ``mu`` and ``ell``
    are the strong-convexity modulus and gradient Lipschitz constant of
    the objective.  ``ineq_bounds``, when given, holds one function per
    inequality mapping a radius d to (gradient norm bound, gradient
    Lipschitz constant) valid on the ball of radius d around the optimum;
    both must be non-decreasing in d.

    ``ineq_batch`` is an optional fast path evaluating all inequality
    values and gradients at once; it must agree with ``inequalities``.
    """

    n: int
    m_I: int
    m_E: int
    objective: Evaluator
    inequalities: tuple[Evaluator, ...]
    eq_matrix: np.ndarray
    eq_rhs: np.ndarray
    mu: float
    ell: float
    ineq_bounds: Optional[tuple[BoundFn, ...]] = None
    ineq_batch: Optional[Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]] = None
    name: str = ""
    extras: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.n <= 0:
            raise DimensionError("primal dimension must be positive")
        if self.m_I < 0 or self.m_E < 0:
            raise DimensionError("constraint counts must be nonnegative")
        if len(self.inequalities) != self.m_I:
            raise DimensionError("inequality evaluator count does not match m_I")
        if not (self.mu > 0.0):
            raise ValueError("mu must be positive")
        if self.mu > self.ell:
            raise ValueError("mu must not exceed ell")
        A = _readonly(np.atleast_2d(self.eq_matrix) if self.m_E else
                      np.zeros((0, self.n)))
        b = _readonly(np.atleast_1d(self.eq_rhs) if self.m_E else np.zeros(0))
        if A.shape != (self.m_E, self.n):
            raise DimensionError(
                f"equality matrix has shape {A.shape}, expected {(self.m_E, self.n)}")
        if b.shape != (self.m_E,):
            raise DimensionError("equality rhs length does not match m_E")
        object.__setattr__(self, "eq_matrix", A)
        object.__setattr__(self, "eq_rhs", b)
        object.__setattr__(self, "inequalities", tuple(self.inequalities))
        if self.ineq_bounds is not None:
            bounds = tuple(self.ineq_bounds)
            if len(bounds) != self.m_I:
                raise DimensionError("ineq_bounds count does not match m_I")
            object.__setattr__(self, "ineq_bounds", bounds)
            self._check_bounds_monotone(bounds)
        self._probe_evaluators()

    def _probe_evaluators(self):
        x = np.zeros(self.n)
        fval, grad = self.objective(x)
        if np.shape(grad) != (self.n,):
            raise DimensionError("objective gradient has wrong dimension")
        float(fval)
        for i, gi in enumerate(self.inequalities):
            val, grad = gi(x)
            if np.shape(grad) != (self.n,):
                raise DimensionError(f"gradient of inequality {i} has wrong dimension")
            float(val)
        if self.ineq_batch is not None:
            vals, jac = self.ineq_batch(x)
            if np.shape(vals) != (self.m_I,) or np.shape(jac) != (self.m_I, self.n):
                raise DimensionError("batch inequality evaluator has wrong shape")

    def _check_bounds_monotone(self, bounds):
        grid = (0.5, 1.0, 2.0, 5.0, 20.0)
        for i, fn in enumerate(bounds):
            prev = None
            for d in grid:
                L, M = fn(d)
                if L < 0 or M < 0:
                    raise ValueError(f"ineq_bounds[{i}] returned a negative constant")
                if prev is not None and (L < prev[0] - 1e-12 or M < prev[1] - 1e-12):
                    raise ValueError(f"ineq_bounds[{i}] is decreasing in d")
                prev = (L, M)

    def eval_inequalities(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """All inequality values and the stacked Jacobian at x."""
        if self.m_I == 0:
            return np.zeros(0), np.zeros((0, self.n))
        if self.ineq_batch is not None:
            vals, jac = self.ineq_batch(np.asarray(x, dtype=float))
            return np.asarray(vals, dtype=float), np.asarray(jac, dtype=float)
        vals = np.empty(self.m_I)
        jac = np.empty((self.m_I, self.n))
        for i, gi in enumerate(self.inequalities):
            vals[i], jac[i] = gi(x)
        return vals, jac


@dataclass(frozen=True)
class PrimalDualPoint:
    """One primal-dual state (x, lambda, nu) of the flow."""

    x: np.ndarray
    lam: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _readonly(np.atleast_1d(self.x)))
        object.__setattr__(self, "lam", _readonly(np.atleast_1d(self.lam) if np.size(self.lam) else np.zeros(0)))
        object.__setattr__(self, "nu", _readonly(np.atleast_1d(self.nu) if np.size(self.nu) else np.zeros(0)))

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.x.size, self.lam.size, self.nu.size)

    def stack(self) -> np.ndarray:
        return np.concatenate([self.x, self.lam, self.nu])

    @staticmethod
    def unstack(y: np.ndarray, dims: tuple[int, int, int]) -> "PrimalDualPoint":
        n, m_i, m_e = dims
        y = np.asarray(y, dtype=float)
        if y.shape != (n + m_i + m_e,):
            raise DimensionError("stacked state has wrong length")
        return PrimalDualPoint(y[:n], y[n:n + m_i], y[n + m_i:])

    @staticmethod
    def zeros(prog: ConvexProgram) -> "PrimalDualPoint":
        return PrimalDualPoint(np.zeros(prog.n), np.zeros(prog.m_I), np.zeros(prog.m_E))

    def distance_to(self, other: "PrimalDualPoint") -> float:
        return float(np.linalg.norm(self.stack() - other.stack()))


@dataclass(frozen=True)
class KKTReport:
    """Residuals of the KKT system at one primal-dual point.

    ``active_set`` holds 0-based indices of inequalities within
    ``tol_active`` of their boundary.
    """

    stationarity: float
    primal_ineq: float
    primal_eq: float
    complementarity: float
    dual_nonneg: float
    active_set: tuple[int, ...]

    @property
    def max_residual(self) -> float:
        return max(self.stationarity, self.primal_ineq, self.primal_eq,
                   self.complementarity, self.dual_nonneg)

    def is_kkt(self, tol: float) -> bool:
        return self.max_residual <= tol


def _check_point_dims(prog: ConvexProgram, z: PrimalDualPoint):
    if z.dims != (prog.n, prog.m_I, prog.m_E):
        raise DimensionError(
            f"point dims {z.dims} do not match problem dims "
            f"{(prog.n, prog.m_I, prog.m_E)}")


def kkt_residual(prog: ConvexProgram, z: PrimalDualPoint,
                 tol_active: float = DEFAULT_ACTIVE_TOL) -> KKTReport:
    """Stationarity, feasibility, complementarity and dual-sign residuals.

    A point is a KKT point (equivalently, an equilibrium of the flow)
    exactly when every residual is zero; callers declare success when
    ``max_residual`` falls below their own tolerance.
    """
    _check_point_dims(prog, z)
    gvals, jac = prog.eval_inequalities(z.x)
    _, grad_f = prog.objective(z.x)
    stat = grad_f.copy()
    if prog.m_I:
        stat += jac.T @ z.lam
    if prog.m_E:
        stat += prog.eq_matrix.T @ z.nu
    eq_gap = prog.eq_matrix @ z.x - prog.eq_rhs if prog.m_E else np.zeros(0)
    return KKTReport(
        stationarity=float(np.linalg.norm(stat)),
        primal_ineq=float(np.max(np.maximum(gvals, 0.0), initial=0.0)),
        primal_eq=float(np.linalg.norm(eq_gap)),
        complementarity=float(np.max(np.abs(z.lam * gvals), initial=0.0)),
        dual_nonneg=float(np.max(np.maximum(-z.lam, 0.0), initial=0.0)),
        active_set=tuple(i for i in range(prog.m_I) if gvals[i] >= -tol_active),
    )


def detect_active_set(prog: ConvexProgram, x_star: np.ndarray,
                      tol_active: float = DEFAULT_ACTIVE_TOL) -> tuple[int, ...]:
    """Indices i with g_i(x_star) >= -tol_active (0-based)."""
    gvals, _ = prog.eval_inequalities(np.asarray(x_star, dtype=float))
    return tuple(i for i in range(prog.m_I) if gvals[i] >= -tol_active)


def check_licq(prog: ConvexProgram, x_star: np.ndarray,
               active: Sequence[int]) -> tuple[float, bool]:
    """Smallest eigenvalue of the active-gradient Gram matrix.

    Stacks the gradients of the active inequalities on top of the
    equality rows and returns (kappa, holds) where kappa is the smallest
    eigenvalue of the stacked matrix times its transpose.  Requires at
    least one active or equality constraint.
    """
    active = tuple(active)
    if len(active) + prog.m_E == 0:
        raise AssumptionViolationError(
            "constraint qualification needs at least one active inequality "
            "or equality constraint")
    x_star = np.asarray(x_star, dtype=float)
    rows = []
    for i in active:
        _, grad = prog.inequalities[i](x_star)
        rows.append(np.asarray(grad, dtype=float))
    if prog.m_E:
        rows.extend(prog.eq_matrix)
    V = np.vstack(rows)
    gram = V @ V.T
    kappa = float(np.linalg.eigvalsh(gram)[0])
    scale = float(np.linalg.norm(V, 2)) ** 2
    return kappa, kappa > LICQ_RANK_TOL * max(scale, 1e-300)


def solve_reference_kkt(prog: ConvexProgram, z0: PrimalDualPoint,
                        tol: float = 1e-8, max_time: float = 2000.0,
                        rho: float = 1.0) -> PrimalDualPoint:
    """Reference KKT point obtained by integrating the flow to rest.

    Runs the augmented primal-dual gradient flow from ``z0`` (which must
    have nonnegative multipliers) until the KKT residual drops below
    ``tol``.  Asymptotic stability of the flow guarantees termination for
    feasible problems; ``max_time`` bounds the integration horizon and a
    timeout carries the best iterate found.
    """
    from .dynamics import DynamicsParams, make_field
    from .integrate import integrate_until_converged

    _check_point_dims(prog, z0)
    if np.any(z0.lam < 0):
        raise ValueError("initial multipliers must be nonnegative")
    field_fn = make_field(prog, DynamicsParams(rho=rho))
    _, z_star = integrate_until_converged(
        field_fn, prog, z0, residual_tol=tol, max_time=max_time)
    return z_star


def sample_near_reference(rng: np.random.Generator, z_star: PrimalDualPoint,
                          radius: float, vary_nu: bool = True,
                          max_tries: int = 100) -> PrimalDualPoint:
    """Random point at a given distance from a reference, multipliers >= 0.

    Draws a Gaussian direction and scales it along its ray with the
    inequality multipliers clamped at zero; the scale placing the clamped
    offset exactly on the target sphere is found by bisection.
    Directions whose reachable distance is capped by clamping are
    resampled.  With ``vary_nu`` false the equality multipliers stay at
    their reference values and the sphere lives in the (x, lam) block.
    """
    n, m_i, m_e = z_star.dims
    if radius == 0.0:
        return z_star
    k = n + m_i + (m_e if vary_nu else 0)

    def clamped_offset(direction, s):
        dx = s * direction[:n]
        lam = np.maximum(z_star.lam + s * direction[n:n + m_i], 0.0)
        dnu = s * direction[n + m_i:] if vary_nu else np.zeros(0)
        return np.concatenate([dx, lam - z_star.lam, dnu])

    for _ in range(max_tries):
        direction = rng.standard_normal(k)
        norm = np.linalg.norm(direction)
        if norm < 1e-12:
            continue
        direction /= norm
        hi = radius
        for _ in range(200):
            if np.linalg.norm(clamped_offset(direction, hi)) >= radius:
                break
            hi *= 2.0
        else:
            continue  # clamping caps the reachable distance; resample
        lo = 0.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if np.linalg.norm(clamped_offset(direction, mid)) >= radius:
                hi = mid
            else:
                lo = mid
        offset = clamped_offset(direction, hi)
        if abs(np.linalg.norm(offset) - radius) > 1e-6 * radius:
            continue
        nu = z_star.nu + offset[n + m_i:] if vary_nu else z_star.nu
        return PrimalDualPoint(z_star.x + offset[:n],
                               z_star.lam + offset[n:n + m_i], nu)
    raise GenerationError("could not sample a nonnegative point on the sphere")


def qp_active_set_oracle(H, q, F, v, A, b, tol: float = 1e-9):
    """Exact QP solution by enumerating active sets.

    Solves  min 0.5 x'Hx + q'x  s.t.  Fx <= v, Ax = b  by trying every
    subset of inequalities as equalities and keeping the KKT-consistent
    solution.  Exponential in the number of inequalities; intended as an
    independent reference for small instances.

    Returns (x, lam, nu).
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    n = H.shape[0]
    q = np.asarray(q, dtype=float).reshape(n)
    F = np.asarray(F, dtype=float).reshape(-1, n) if np.size(F) else np.zeros((0, n))
    v = np.asarray(v, dtype=float).reshape(F.shape[0])
    A = np.asarray(A, dtype=float).reshape(-1, n) if np.size(A) else np.zeros((0, n))
    b = np.asarray(b, dtype=float).reshape(A.shape[0])
    m_i, m_e = F.shape[0], A.shape[0]

    best = None
    best_violation = np.inf
    for subset in itertools.chain.from_iterable(
            itertools.combinations(range(m_i), k) for k in range(m_i + 1)):
        S = list(subset)
        Fs = F[S]
        k = len(S)
        kkt = np.zeros((n + k + m_e, n + k + m_e))
        kkt[:n, :n] = H
        kkt[:n, n:n + k] = Fs.T
        kkt[:n, n + k:] = A.T
        kkt[n:n + k, :n] = Fs
        kkt[n + k:, :n] = A
        rhs = np.concatenate([-q, v[S], b])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            continue
        x = sol[:n]
        lam_s = sol[n:n + k]
        nu = sol[n + k:]
        viol = 0.0
        if k:
            viol = max(viol, float(np.max(-lam_s, initial=0.0)))
        if m_i:
            viol = max(viol, float(np.max(F @ x - v, initial=0.0)))
        if viol < best_violation:
            lam = np.zeros(m_i)
            lam[S] = lam_s
            best = (x, lam, nu)
            best_violation = viol
        if viol <= tol:
            break
    if best is None or best_violation > max(tol, 1e-7):
        raise GenerationError("active-set enumeration found no KKT-consistent solution")
    return best


# ---------------------------------------------------------------------------
# Built-in instances
# ---------------------------------------------------------------------------

def _quadratic_objective(H: np.ndarray, q: np.ndarray) -> Evaluator:
    def objective(x):
        Hx = H @ x
        return 0.5 * float(x @ Hx) + float(q @ x), Hx + q
    return objective

def _affine_constraint(row: np.ndarray, offset: float) -> Evaluator:
    def constraint(x):
        return float(row @ x) - offset, row
    return constraint


def make_counterexample() -> ConvexProgram:
    """One-dimensional program whose flow admits a closed-form solution.

    minimize x^2/2  subject to  x <= 1  and  x = 0.  The unique KKT point
    is the origin in all three coordinates; the inequality is inactive
    there and its gradient is parallel to the equality row.
    """
    H = np.array([[1.0]])
    q = np.zeros(1)
    F = np.array([[1.0]])
    v = np.array([1.0])
    A = np.array([[1.0]])
    b = np.zeros(1)
    return ConvexProgram(
        n=1, m_I=1, m_E=1,
        objective=_quadratic_objective(H, q),
        inequalities=(_affine_constraint(F[0], v[0]),),
        eq_matrix=A, eq_rhs=b,
        mu=1.0, ell=1.0,
        ineq_bounds=(lambda d: (1.0, 0.0),),
        name="counterexample",
        extras={"H": H, "q": q, "F": F, "v": v,
                "z_star": PrimalDualPoint(np.zeros(1), np.zeros(1), np.zeros(1))},
    )


def _unit_ball_constraint() -> tuple[Evaluator, BoundFn]:
    def constraint(x):
        return float(x @ x) - 1.0, 2.0 * x
    # any feasible optimum has norm <= 1, so 2(1+d) bounds the gradient
    # on the radius-d ball around it; the gradient is 2-Lipschitz.
    return constraint, lambda d: (2.0 * (1.0 + d), 2.0)


def make_soc_ball() -> ConvexProgram:
    """Two-dimensional program with an active quadratic-ball constraint.

    minimize x1^2 - 4 x1 + 2 x2^2  subject to  |x|^2 <= 1,  -x1 <= 2,
    and  x1 + x2 = 1/2.  The ball constraint is active at the optimum
    with a strictly positive multiplier, the affine inequality is
    inactive, and the constraint gradients satisfy LICQ.
    """
    H = np.diag([2.0, 4.0])
    q = np.array([-4.0, 0.0])
    ball, ball_bounds = _unit_ball_constraint()
    affine_row = np.array([-1.0, 0.0])
    A = np.array([[1.0, 1.0]])
    b = np.array([0.5])
    return ConvexProgram(
        n=2, m_I=2, m_E=1,
        objective=_quadratic_objective(H, q),
        inequalities=(ball, _affine_constraint(affine_row, 2.0)),
        eq_matrix=A, eq_rhs=b,
        mu=2.0, ell=4.0,
        ineq_bounds=(ball_bounds, lambda d: (1.0, 0.0)),
        name="soc",
        extras={"H": H, "q": q},
    )


def make_random_qp(seed: int, n: int, m_I: int, m_E: int,
                   mu: float, ell: float,
                   max_attempts: int = 60) -> ConvexProgram:
    """Seeded strongly convex QP with a strictly feasible interior.

    The Hessian spectrum lies in [mu, ell] with both endpoints attained
    (for n >= 2).  Affine inequalities F x <= v are generated around a
    witness point kept strictly feasible; A has full row rank and
    b = A @ witness.  Instances are regenerated until the optimum is
    regular: LICQ holds, active multipliers are bounded away from zero,
    and inactive constraints have a clear margin.  Deterministic per seed.
    """
    if not (0 < mu <= ell):
        raise ValueError("need 0 < mu <= ell")
    if m_E >= n:
        raise ValueError("need m_E < n")
    rng = np.random.default_rng(seed)

    for _ in range(max_attempts):
        basis = np.linalg.qr(rng.standard_normal((n, n)))[0]
        if n == 1:
            eigs = np.array([mu])
        else:
            eigs = np.concatenate([[mu, ell], rng.uniform(mu, ell, n - 2)])
        H = basis @ np.diag(eigs) @ basis.T
        H = 0.5 * (H + H.T)
        q = rng.standard_normal(n)
        witness = rng.standard_normal(n)

        if m_E:
            A = rng.standard_normal((m_E, n))
            sv = np.linalg.svd(A, compute_uv=False)
            if sv[-1] < 0.3 * sv[0]:
                continue
            b = A @ witness
        else:
            A, b = np.zeros((0, n)), np.zeros(0)

        if m_I:
            F = rng.standard_normal((m_I, n))
            F /= np.linalg.norm(F, axis=1, keepdims=True)
            F *= rng.uniform(0.7, 1.5, (m_I, 1))
            v = F @ witness + rng.uniform(0.1, 1.0, m_I)
        else:
            F, v = np.zeros((0, n)), np.zeros(0)

        try:
            x_star, lam_star, _ = qp_active_set_oracle(H, q, F, v, A, b)
        except GenerationError:
            continue
        gvals = F @ x_star - v if m_I else np.zeros(0)
        active = [i for i in range(m_I) if gvals[i] >= -1e-9]
        inactive = [i for i in range(m_I) if i not in active]
        if any(gvals[i] > -1e-4 for i in inactive):
            continue
        if any(lam_star[i] < 1e-3 for i in active):
            continue
        if active or m_E:
            rows = np.vstack([F[active], A]) if active else A
            gram = rows @ rows.T
            kappa = np.linalg.eigvalsh(gram)[0]
            if kappa <= 1e-6 * max(np.linalg.norm(rows, 2) ** 2, 1.0):
                continue

        row_norms = np.linalg.norm(F, axis=1) if m_I else np.zeros(0)
        bounds = tuple(
            (lambda norm: (lambda d: (float(norm), 0.0)))(row_norms[i])
            for i in range(m_I))

        def batch(x, F=F, v=v):
            return F @ x - v, F

        return ConvexProgram(
            n=n, m_I=m_I, m_E=m_E,
            objective=_quadratic_objective(H, q),
            inequalities=tuple(_affine_constraint(F[i], v[i]) for i in range(m_I)),
            eq_matrix=A, eq_rhs=b,
            mu=mu, ell=ell,
            ineq_bounds=bounds if m_I else (),
            ineq_batch=batch if m_I else None,
            name=f"qp-seed{seed}",
            extras={"H": H, "q": q, "F": F, "v": v, "witness": witness},
        )
    raise GenerationError(
        f"no regular QP instance found in {max_attempts} attempts (seed {seed})")


#: Named problem factories usable from the CLI and the JSON loader.
BUILTIN_PROBLEMS: dict[str, Callable[..., ConvexProgram]] = {
    "counterexample": make_counterexample,
    "soc": make_soc_ball,
    "qp": lambda seed=0: make_random_qp(seed=seed, n=4, m_I=3, m_E=1,
                                        mu=1.0, ell=4.0),
}

#: Named nonlinear constraint factories for the JSON schema.
BUILTIN_CONSTRAINTS: dict[str, Callable[[int], tuple[Evaluator, BoundFn]]] = {
    "soc": lambda n: _unit_ball_constraint(),
}


# ---------------------------------------------------------------------------
# JSON interchange
# ---------------------------------------------------------------------------

def format_float(x: float) -> str:
    """17-significant-digit decimal form; round-trips IEEE doubles."""
    x = float(x)
    if not np.isfinite(x):
        raise ValueError("cannot serialize non-finite value")
    return format(x, ".17g")


def dump_json_17g(obj, fp=None, indent: int = 2):
    """json.dump with floats rendered at 17 significant digits."""
    def render(o, level):
        pad = " " * (indent * level)
        pad_in = " " * (indent * (level + 1))
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = (f'{pad_in}{json.dumps(str(k))}: {render(val, level + 1)}'
                     for k, val in o.items())
            return "{\n" + ",\n".join(items) + "\n" + pad + "}"
        if isinstance(o, (list, tuple, np.ndarray)):
            seq = list(o)
            if not seq:
                return "[]"
            items = (f"{pad_in}{render(val, level + 1)}" for val in seq)
            return "[\n" + ",\n".join(items) + "\n" + pad + "]"
        if isinstance(o, bool) or o is None:
            return json.dumps(o)
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            return format_float(o)
        return json.dumps(o)

    text = render(obj, 0) + "\n"
    if fp is None:
        return text
    fp.write(text)
    return None


def program_to_json_dict(prog: ConvexProgram) -> dict:
    """Serialize a program with quadratic objective and affine/builtin constraints."""
    extras = prog.extras
    if "H" not in extras or "q" not in extras:
        raise ValueError("only programs with explicit quadratic data are serializable")
    d = {
        "n": prog.n, "m_I": prog.m_I, "m_E": prog.m_E,
        "quadratic": {"H": np.asarray(extras["H"]).tolist(),
                      "q": np.asarray(extras["q"]).tolist()},
    }
    if "F" in extras and np.size(extras["F"]):
        d["ineq_affine"] = {"F": np.asarray(extras["F"]).tolist(),
                            "v": np.asarray(extras["v"]).tolist()}
    if extras.get("ineq_builtin"):
        d["ineq_builtin"] = list(extras["ineq_builtin"])
    d["A"] = prog.eq_matrix.tolist()
    d["b"] = prog.eq_rhs.tolist()
    d["mu"] = prog.mu
    d["ell"] = prog.ell
    return d


def program_from_json_dict(d: dict, name: str = "") -> ConvexProgram:
    """Build a program from the JSON schema (see program_to_json_dict)."""
    n = int(d["n"])
    quad = d["quadratic"]
    H = np.asarray(quad["H"], dtype=float).reshape(n, n)
    q = np.asarray(quad["q"], dtype=float).reshape(n)

    inequalities: list[Evaluator] = []
    bounds: list[BoundFn] = []
    builtin_names = list(d.get("ineq_builtin", []))
    for bname in builtin_names:
        if bname not in BUILTIN_CONSTRAINTS:
            raise ValueError(f"unknown builtin constraint {bname!r}")
        g, bnd = BUILTIN_CONSTRAINTS[bname](n)
        inequalities.append(g)
        bounds.append(bnd)
    if "ineq_affine" in d:
        F = np.asarray(d["ineq_affine"]["F"], dtype=float).reshape(-1, n)
        v = np.asarray(d["ineq_affine"]["v"], dtype=float).reshape(F.shape[0])
    else:
        F, v = np.zeros((0, n)), np.zeros(0)
    for i in range(F.shape[0]):
        inequalities.append(_affine_constraint(F[i], v[i]))
        bounds.append((lambda norm: (lambda dd: (float(norm), 0.0)))(
            np.linalg.norm(F[i])))

    m_e = int(d["m_E"])
    A = np.asarray(d.get("A", []), dtype=float).reshape(m_e, n) if m_e else np.zeros((0, n))
    b = np.asarray(d.get("b", []), dtype=float).reshape(m_e) if m_e else np.zeros(0)
    m_i = len(inequalities)
    if m_i != int(d["m_I"]):
        raise ValueError("m_I does not match the listed constraints")
    extras = {"H": H, "q": q, "F": F, "v": v}
    if builtin_names:
        extras["ineq_builtin"] = builtin_names
    return ConvexProgram(
        n=n, m_I=m_i, m_E=m_e,
        objective=_quadratic_objective(H, q),
        inequalities=tuple(inequalities),
        eq_matrix=A, eq_rhs=b,
        mu=float(d["mu"]), ell=float(d["ell"]),
        ineq_bounds=tuple(bounds),
        name=name or d.get("name", ""),
        extras=extras,
    )


def load_problem(path) -> ConvexProgram:
    with open(path) as fp:
        return program_from_json_dict(json.load(fp), name=str(path))


def save_problem(prog: ConvexProgram, path):
    with open(path, "w") as fp:
        dump_json_17g(program_to_json_dict(prog), fp)
