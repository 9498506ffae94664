"""Exponential-stability certificates for the augmented primal-dual flow.

Given a problem, a reference KKT point and an initial distance d0, this
module assembles every constant entering the certified decay rate:

  * kappa: smallest eigenvalue of the active-gradient Gram matrix,
  * delta_min: inactivity margin  1 - [1 + rho * max_inactive g_i / d0]_+^2,
  * L_g, M_g: aggregated constraint-gradient bounds on the d0-ball,
  * M_theta: Lipschitz constant of the penalty gradient,
    rho L_g^2 + (rho L_g d0 + d0 + |lam*|) M_g,

then finds the largest decay rate beta satisfying both admissibility
conditions

  (a)  beta <= kappa delta_min / (46 rho (L_g^2 + |A|^2)),
  (b)  kappa mu / (4 beta) - 4 beta^2
         >= |A|^2 + L_g^2 + kappa/4
            + (ell + M_theta)(mu + M_theta + 1/rho) + 1/(2 rho^2),

builds the quadratic Lyapunov matrix P_c with cross terms c J^T, c A^T
for c = 4 beta / kappa, and certifies the envelope

    |z(t) - z*| <= M_beta exp(-beta t) |z(0) - z*|,
    M_beta = sqrt(|P_c| |P_c^{-1}|).

The certified envelope and the decay inequality dV/dt <= -2 beta V are
verified numerically along trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    ActiveSetClassificationError,
    AssumptionViolationError,
    CertificateInvalidError,
)
from .problem import (
    ConvexProgram,
    PrimalDualPoint,
    check_licq,
    detect_active_set,
    solve_reference_kkt,
    DEFAULT_ACTIVE_TOL,
)

#: Default slack in the decay check, relative to the initial Lyapunov
#: value; absorbs finite-difference and integration error.
DECAY_TOL_FACTOR = 1e-6

#: Relative slack allowed in the envelope check.
ENVELOPE_SLACK = 1e-8


@dataclass(frozen=True)
class RateConstants:
    """Scalar inputs to the decay-rate conditions."""

    kappa: float
    delta_min: float
    rho: float
    L_g: float
    A_norm: float
    mu: float
    ell: float
    M_theta: float


@dataclass(frozen=True)
class Certificate:
    """Certified decay rate and envelope factor for one initial distance."""

    d0: float
    kappa: float
    delta_min: float
    L_g: float
    M_g: float
    M_theta: float
    A_norm: float
    beta: float
    c: float
    M_beta: float
    pc_min_eig: float
    heuristic: bool
    rho: float
    mu: float
    ell: float
    lambda_star_norm: float
    active_set: tuple[int, ...]
    bound_10a: float
    pc: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if not (self.beta > 0):
            raise CertificateInvalidError("certified rate must be positive")
        if not condition_10a(self.beta, self.kappa, self.delta_min,
                             self.rho, self.L_g, self.A_norm):
            raise CertificateInvalidError("rate violates the margin condition")
        if not condition_10b(self.beta, self.kappa, self.mu, self.ell,
                             self.M_theta, self.rho, self.L_g, self.A_norm):
            raise CertificateInvalidError("rate violates the curvature condition")
        if not (self.pc_min_eig > 0):
            raise CertificateInvalidError("Lyapunov matrix is not positive definite")
        if self.M_beta < 1.0:
            raise CertificateInvalidError("envelope factor below one")
        if abs(self.c - 4.0 * self.beta / self.kappa) > 1e-15 * max(self.c, 1.0):
            raise CertificateInvalidError("cross-term weight must equal 4 beta / kappa")

    def to_json_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "pc"}
        d["active_set"] = list(self.active_set)
        return d


def compute_d0(z0: PrimalDualPoint, z_star: PrimalDualPoint) -> float:
    """Euclidean distance between stacked primal-dual points."""
    if z0.dims != z_star.dims:
        raise ValueError("points have different dimensions")
    return float(np.linalg.norm(z0.stack() - z_star.stack()))


def compute_delta_min(prog: ConvexProgram, x_star: np.ndarray,
                      inactive: Sequence[int], rho: float, d0: float) -> float:
    """Inactivity margin in (0, 1]; equals 1 when no constraint is inactive.

    Requires every listed constraint to be strictly negative at the
    reference point.  d0 = 0 is treated as the limit value 1.
    """
    inactive = tuple(inactive)
    if not inactive:
        return 1.0
    gvals, _ = prog.eval_inequalities(np.asarray(x_star, dtype=float))
    worst = max(float(gvals[i]) for i in inactive)
    if worst >= 0:
        raise ActiveSetClassificationError(
            f"constraint marked inactive has value {worst:g} >= 0 at the optimum")
    if d0 == 0.0:
        return 1.0
    clamped = max(1.0 + rho * worst / d0, 0.0)
    return 1.0 - clamped ** 2


def compute_M_theta(rho: float, L_g: float, M_g: float, d0: float,
                    lambda_star_norm: float) -> float:
    """Lipschitz constant of the penalty gradient on the d0-ball."""
    if min(rho, L_g, M_g, d0, lambda_star_norm) < 0 or rho == 0:
        raise ValueError("constants must be nonnegative with rho > 0")
    return rho * L_g ** 2 + (rho * L_g * d0 + d0 + lambda_star_norm) * M_g


def condition_10a(beta: float, kappa: float, delta_min: float, rho: float,
                  L_g: float, A_norm: float) -> bool:
    return beta <= kappa * delta_min / (46.0 * rho * (L_g ** 2 + A_norm ** 2))


def condition_10b(beta: float, kappa: float, mu: float, ell: float,
                  M_theta: float, rho: float, L_g: float, A_norm: float) -> bool:
    lhs = kappa * mu / (4.0 * beta) - 4.0 * beta ** 2
    rhs = (A_norm ** 2 + L_g ** 2 + kappa / 4.0
           + (ell + M_theta) * (mu + M_theta + 1.0 / rho)
           + 1.0 / (2.0 * rho ** 2))
    return lhs >= rhs


def solve_beta(tc: RateConstants) -> float:
    """Largest rate satisfying both admissibility conditions.

    The margin condition caps beta directly; the curvature condition has
    a strictly decreasing left-hand side diverging at zero, so its
    boundary has a unique root found by bisection (relative width 1e-12).
    """
    if not (0 < tc.delta_min <= 1.0):
        raise ValueError("delta_min must lie in (0, 1]")
    bound_a = tc.kappa * tc.delta_min / (46.0 * tc.rho
                                         * (tc.L_g ** 2 + tc.A_norm ** 2))
    if condition_10b(bound_a, tc.kappa, tc.mu, tc.ell, tc.M_theta,
                     tc.rho, tc.L_g, tc.A_norm):
        return bound_a
    lo, hi = 1e-16, bound_a
    while (hi - lo) > 1e-12 * hi:
        mid = 0.5 * (lo + hi)
        if condition_10b(mid, tc.kappa, tc.mu, tc.ell, tc.M_theta,
                         tc.rho, tc.L_g, tc.A_norm):
            lo = mid
        else:
            hi = mid
    return lo


def build_pc(J: np.ndarray, A: np.ndarray, c: float
             ) -> tuple[np.ndarray, float, float]:
    """Quadratic Lyapunov matrix with cross terms c J^T and c A^T.

    Returns (P, smallest eigenvalue, envelope factor).  Raises when the
    matrix fails to be positive definite, which cannot happen at a
    certified rate.
    """
    if c < 0:
        raise ValueError("c must be nonnegative")
    J = np.asarray(J, dtype=float)
    A = np.asarray(A, dtype=float)
    if J.ndim != 2 or A.ndim != 2:
        raise ValueError("J and A must be matrices")
    n = J.shape[1] if J.size else A.shape[1]
    m_i, m_e = J.shape[0], A.shape[0]
    dim = n + m_i + m_e
    P = np.eye(dim)
    if m_i:
        P[:n, n:n + m_i] = c * J.T
        P[n:n + m_i, :n] = c * J
    if m_e:
        P[:n, n + m_i:] = c * A.T
        P[n + m_i:, :n] = c * A
    eigs = np.linalg.eigvalsh(P)
    min_eig = float(eigs[0])
    if min_eig <= 0:
        raise CertificateInvalidError(
            f"Lyapunov matrix not positive definite (min eigenvalue {min_eig:g})")
    m_beta = float(np.sqrt(eigs[-1] / min_eig))
    return P, min_eig, m_beta


def lyapunov_value(pc: np.ndarray, z: PrimalDualPoint,
                   z_star: PrimalDualPoint) -> float:
    diff = z.stack() - z_star.stack()
    return 0.5 * float(diff @ pc @ diff)


def estimate_constraint_bounds(prog: ConvexProgram, x_star: np.ndarray,
                               d: float, n_pairs: int = 1000,
                               seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Sampled gradient-norm and gradient-Lipschitz bounds on the d-ball.

    Draws point pairs uniformly in the ball around the reference point,
    takes the empirical maxima, and inflates by 10%.  Heuristic only:
    certificates built from these values are flagged accordingly.
    """
    rng = np.random.default_rng(seed)
    x_star = np.asarray(x_star, dtype=float)
    n = x_star.size
    L = np.zeros(prog.m_I)
    M = np.zeros(prog.m_I)
    for _ in range(n_pairs):
        pts = []
        for _ in range(2):
            u = rng.standard_normal(n)
            u *= d * rng.uniform() ** (1.0 / n) / max(np.linalg.norm(u), 1e-300)
            pts.append(x_star + u)
        _, jac_a = prog.eval_inequalities(pts[0])
        _, jac_b = prog.eval_inequalities(pts[1])
        gap = float(np.linalg.norm(pts[0] - pts[1]))
        L = np.maximum(L, np.linalg.norm(jac_a, axis=1))
        if gap > 1e-12:
            M = np.maximum(M, np.linalg.norm(jac_a - jac_b, axis=1) / gap)
    return 1.1 * L, 1.1 * M


def compute_certificate(prog: ConvexProgram, *, rho: float,
                        z0: Optional[PrimalDualPoint] = None,
                        d0: Optional[float] = None,
                        z_star: Optional[PrimalDualPoint] = None,
                        tol_active: float = DEFAULT_ACTIVE_TOL,
                        kkt_tol: float = 1e-9,
                        max_solve_time: float = 2000.0,
                        bounds_seed: int = 0
                        ) -> tuple[Certificate, PrimalDualPoint]:
    """Full certification pipeline for one problem and initial distance.

    Solves for the reference point when not supplied (starting from
    ``z0`` or the origin), derives the initial distance from ``z0`` when
    ``d0`` is not given explicitly, and assembles the certificate.
    """
    if z_star is None:
        start = z0 if z0 is not None else PrimalDualPoint.zeros(prog)
        z_star = solve_reference_kkt(prog, start, tol=kkt_tol,
                                     max_time=max_solve_time, rho=rho)
    if d0 is None:
        if z0 is None:
            raise ValueError("need either d0 or z0 to fix the initial distance")
        d0 = compute_d0(z0, z_star)

    active = detect_active_set(prog, z_star.x, tol_active)
    kappa, holds = check_licq(prog, z_star.x, active)
    if not holds:
        raise AssumptionViolationError(
            f"constraint qualification fails at the reference point "
            f"(kappa = {kappa:g})")

    heuristic = False
    if prog.m_I == 0:
        L_parts = np.zeros(0)
        M_parts = np.zeros(0)
    elif prog.ineq_bounds is not None:
        pairs = [fn(d0) for fn in prog.ineq_bounds]
        L_parts = np.array([p[0] for p in pairs])
        M_parts = np.array([p[1] for p in pairs])
    else:
        L_parts, M_parts = estimate_constraint_bounds(
            prog, z_star.x, d0, seed=bounds_seed)
        heuristic = True
    L_g = float(np.sqrt(np.sum(L_parts ** 2)))
    M_g = float(np.sqrt(np.sum(M_parts ** 2)))

    inactive = tuple(i for i in range(prog.m_I) if i not in active)
    delta_min = compute_delta_min(prog, z_star.x, inactive, rho, d0)
    lam_norm = float(np.linalg.norm(z_star.lam))
    M_theta = compute_M_theta(rho, L_g, M_g, d0, lam_norm)
    A_norm = float(np.linalg.norm(prog.eq_matrix, 2)) if prog.m_E else 0.0

    tc = RateConstants(kappa=kappa, delta_min=delta_min, rho=rho,
                          L_g=L_g, A_norm=A_norm, mu=prog.mu, ell=prog.ell,
                          M_theta=M_theta)
    beta = solve_beta(tc)
    c = 4.0 * beta / kappa
    _, jac_full = prog.eval_inequalities(z_star.x)
    pc, min_eig, m_beta = build_pc(jac_full, prog.eq_matrix, c)
    bound_a = kappa * delta_min / (46.0 * rho * (L_g ** 2 + A_norm ** 2))

    cert = Certificate(
        d0=float(d0), kappa=kappa, delta_min=delta_min, L_g=L_g, M_g=M_g,
        M_theta=M_theta, A_norm=A_norm, beta=beta, c=c, M_beta=m_beta,
        pc_min_eig=min_eig, heuristic=heuristic, rho=rho, mu=prog.mu,
        ell=prog.ell, lambda_star_norm=lam_norm, active_set=active,
        bound_10a=bound_a, pc=pc)
    return cert, z_star


@dataclass
class EnvelopeReport:
    """Outcome of checking one trajectory against a certificate."""

    max_ratio: float
    envelope_ok: bool
    worst_time: float
    decay_max: float
    tol_decay: float
    decay_ok: bool
    v0: float
    times: np.ndarray = field(repr=False, default=None)
    ratios: np.ndarray = field(repr=False, default=None)
    lyapunov: np.ndarray = field(repr=False, default=None)

    @property
    def passed(self) -> bool:
        return self.envelope_ok and self.decay_ok

    def to_json_dict(self) -> dict:
        return {"max_ratio": self.max_ratio, "envelope_ok": self.envelope_ok,
                "worst_time": self.worst_time, "decay_max": self.decay_max,
                "tol_decay": self.tol_decay, "decay_ok": self.decay_ok,
                "v0": self.v0, "passed": self.passed}


def verify_envelope(traj, cert: Certificate, z_star: PrimalDualPoint,
                    tol_decay: Optional[float] = None) -> EnvelopeReport:
    """Check the certified envelope and the Lyapunov decay inequality.

    The envelope check compares every sampled distance against
    M_beta * exp(-beta t) * d0 with relative slack 1e-8.  The decay
    check applies centred finite differences to the Lyapunov values at
    interior samples; its default tolerance is 1e-6 times the initial
    Lyapunov value (the inequality is exact in continuous time only).
    """
    if cert.pc is None:
        raise ValueError("certificate carries no Lyapunov matrix")
    dist = traj.attach_reference(z_star)
    envelope = cert.M_beta * np.exp(-cert.beta * traj.times) * cert.d0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(envelope > 0, dist / envelope, np.inf)
    ratios = np.where((envelope == 0) & (dist == 0), 0.0, ratios)
    worst = int(np.argmax(ratios))
    max_ratio = float(ratios[worst])
    envelope_ok = max_ratio <= 1.0 + ENVELOPE_SLACK

    v = traj.attach_lyapunov(cert.pc, z_star)
    v0 = float(v[0])
    if tol_decay is None:
        tol_decay = DECAY_TOL_FACTOR * v0
    if len(traj) >= 3:
        dv = (v[2:] - v[:-2]) / (traj.times[2:] - traj.times[:-2])
        decay_max = float(np.max(dv + 2.0 * cert.beta * v[1:-1]))
    else:
        decay_max = 0.0
    decay_ok = decay_max <= tol_decay
    return EnvelopeReport(
        max_ratio=max_ratio, envelope_ok=envelope_ok,
        worst_time=float(traj.times[worst]), decay_max=decay_max,
        tol_decay=float(tol_decay), decay_ok=decay_ok, v0=v0,
        times=traj.times, ratios=ratios, lyapunov=v)
