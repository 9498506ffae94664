import numpy as np
import pytest

import augpdgd as ag


def central_diff(fun, x, h_scale=1e-6):
    """Componentwise central finite differences of a scalar function."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        h = h_scale * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        grad[i] = (fun(xp) - fun(xm)) / (2.0 * h)
    return grad


def kink_free_point(prog, params, rng, margin=1e-3, max_tries=200):
    """Random state keeping every clamp argument away from its kink."""
    for _ in range(max_tries):
        x = rng.standard_normal(prog.n)
        lam = np.abs(rng.standard_normal(prog.m_I)) + 0.1
        nu = rng.standard_normal(prog.m_E)
        gvals, _ = prog.eval_inequalities(x)
        if prog.m_I == 0 or np.min(np.abs(params.rho * gvals + lam)) >= margin:
            return ag.PrimalDualPoint(x, lam, nu)
    raise RuntimeError("no kink-free sample found")


def lagrangian_gradients_match(prog, params, z, rel_tol=1e-5):
    """Field components versus finite differences of the Lagrangian."""
    xdot, lamdot, nudot = ag.vector_field(prog, params, z)

    fd_x = central_diff(
        lambda x: ag.augmented_lagrangian(prog, params,
                                          ag.PrimalDualPoint(x, z.lam, z.nu)),
        z.x)
    fd_lam = central_diff(
        lambda lam: ag.augmented_lagrangian(prog, params,
                                            ag.PrimalDualPoint(z.x, lam, z.nu)),
        z.lam) if prog.m_I else np.zeros(0)
    fd_nu = central_diff(
        lambda nu: ag.augmented_lagrangian(prog, params,
                                           ag.PrimalDualPoint(z.x, z.lam, nu)),
        z.nu) if prog.m_E else np.zeros(0)

    scale = 1.0 + max(np.max(np.abs(fd_x), initial=0.0),
                      np.max(np.abs(fd_lam), initial=0.0),
                      np.max(np.abs(fd_nu), initial=0.0))
    err = max(np.max(np.abs(xdot + fd_x), initial=0.0),
              np.max(np.abs(lamdot - fd_lam), initial=0.0),
              np.max(np.abs(nudot - fd_nu), initial=0.0))
    return err / scale < rel_tol


def oracle_point(prog):
    """Exact KKT point of a program with explicit quadratic/affine data."""
    ex = prog.extras
    x, lam, nu = ag.qp_active_set_oracle(ex["H"], ex["q"], ex["F"], ex["v"],
                                         prog.eq_matrix, prog.eq_rhs)
    return ag.PrimalDualPoint(x, lam, nu)


@pytest.fixture(scope="session")
def counterexample_prog():
    return ag.make_counterexample()


@pytest.fixture(scope="session")
def soc_prog():
    return ag.make_soc_ball()
