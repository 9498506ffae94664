import json

import numpy as np
import numpy.testing as npt
import pytest

import augpdgd as ag
from augpdgd.errors import AssumptionViolationError, DimensionError
from augpdgd.problem import (
    dump_json_17g,
    format_float,
    program_from_json_dict,
    program_to_json_dict,
    sample_near_reference,
)

from conftest import central_diff, oracle_point


class TestKKTResidual:
    def test_counterexample_origin_is_kkt(self, counterexample_prog):
        z = ag.PrimalDualPoint([0.0], [0.0], [0.0])
        rep = ag.kkt_residual(counterexample_prog, z)
        assert rep.max_residual == 0.0
        assert rep.active_set == ()

    def test_counterexample_off_kkt_values(self, counterexample_prog):
        z = ag.PrimalDualPoint([0.5], [1.0], [-1.0])
        rep = ag.kkt_residual(counterexample_prog, z)
        # grad f + lam grad g + A'nu = 0.5 + 1 - 1
        npt.assert_allclose(rep.stationarity, 0.5)
        npt.assert_allclose(rep.primal_eq, 0.5)
        npt.assert_allclose(rep.complementarity, 0.5)
        assert rep.primal_ineq == 0.0
        assert rep.dual_nonneg == 0.0

    def test_no_inequalities_gives_zero_ineq_residuals(self):
        prog = ag.make_random_qp(seed=3, n=3, m_I=0, m_E=1, mu=1.0, ell=2.0)
        z = ag.PrimalDualPoint(np.ones(3), np.zeros(0), np.zeros(1))
        rep = ag.kkt_residual(prog, z)
        assert rep.primal_ineq == 0.0
        assert rep.complementarity == 0.0

    def test_dimension_mismatch_rejected(self, counterexample_prog):
        z = ag.PrimalDualPoint([0.0, 0.0], [0.0], [0.0])
        with pytest.raises(DimensionError):
            ag.kkt_residual(counterexample_prog, z)


class TestActiveSet:
    def test_counterexample_inactive_at_origin(self, counterexample_prog):
        assert ag.detect_active_set(counterexample_prog, [0.0], 1e-8) == ()

    def test_boundary_is_active(self):
        prog = ag.make_counterexample()
        assert ag.detect_active_set(prog, [1.0]) == (0,)

    def test_two_constraints_one_active(self):
        # g1 = x - 1, g2 = -x at x = 0: only the second is tight
        d = {"n": 1, "m_I": 2, "m_E": 0,
             "quadratic": {"H": [[1.0]], "q": [0.0]},
             "ineq_affine": {"F": [[1.0], [-1.0]], "v": [1.0, 0.0]},
             "mu": 1.0, "ell": 1.0}
        prog = program_from_json_dict(d)
        assert ag.detect_active_set(prog, [0.0]) == (1,)


class TestLicq:
    def test_counterexample_kappa_one(self, counterexample_prog):
        kappa, holds = ag.check_licq(counterexample_prog, [0.0], ())
        npt.assert_allclose(kappa, 1.0)
        assert holds

    def test_parallel_rows_fail(self, counterexample_prog):
        # active inequality gradient equals the equality row
        kappa, holds = ag.check_licq(counterexample_prog, [1.0], (0,))
        assert abs(kappa) < 1e-12
        assert not holds

    def test_identity_rows(self):
        prog = ag.make_random_qp(seed=1, n=2, m_I=0, m_E=0, mu=1.0, ell=2.0)
        d = {"n": 2, "m_I": 0, "m_E": 2,
             "quadratic": {"H": np.eye(2).tolist(), "q": [0.0, 0.0]},
             "A": np.eye(2).tolist(), "b": [0.0, 0.0],
             "mu": 1.0, "ell": 1.0}
        prog = program_from_json_dict(d)
        kappa, holds = ag.check_licq(prog, [0.0, 0.0], ())
        npt.assert_allclose(kappa, 1.0)
        assert holds

    def test_empty_active_and_equalities_is_error(self):
        d = {"n": 2, "m_I": 0, "m_E": 0,
             "quadratic": {"H": np.eye(2).tolist(), "q": [0.0, 0.0]},
             "mu": 1.0, "ell": 1.0}
        prog = program_from_json_dict(d)
        with pytest.raises(AssumptionViolationError):
            ag.check_licq(prog, [0.0, 0.0], ())

    def test_kappa_equals_min_singular_value_squared(self):
        rng = np.random.default_rng(11)
        prog = ag.make_random_qp(seed=8, n=5, m_I=3, m_E=2, mu=1.0, ell=3.0)
        x = rng.standard_normal(5)
        active = (0, 2)
        kappa, _ = ag.check_licq(prog, x, active)
        rows = np.vstack([prog.extras["F"][list(active)], prog.eq_matrix])
        sv = np.linalg.svd(rows, compute_uv=False)
        npt.assert_allclose(kappa, sv[-1] ** 2, atol=1e-10)


class TestReferenceSolve:
    def test_counterexample_converges_to_origin(self, counterexample_prog):
        z0 = ag.PrimalDualPoint([0.5], [1.0], [-1.0])
        z = ag.solve_reference_kkt(counterexample_prog, z0, tol=1e-6)
        assert np.linalg.norm(z.stack()) < 1e-5
        assert ag.kkt_residual(counterexample_prog, z).max_residual <= 1e-6

    def test_matches_enumeration_oracle(self):
        prog = ag.make_random_qp(seed=21, n=4, m_I=2, m_E=1, mu=1.0, ell=3.0)
        zs = oracle_point(prog)
        z = ag.solve_reference_kkt(prog, ag.PrimalDualPoint.zeros(prog),
                                   tol=1e-7)
        assert np.linalg.norm(z.x - zs.x) <= 1e-5

    def test_fixed_point_returns_immediately(self, counterexample_prog):
        z_star = ag.PrimalDualPoint([0.0], [0.0], [0.0])
        z = ag.solve_reference_kkt(counterexample_prog, z_star, tol=1e-8)
        assert z.distance_to(z_star) == 0.0

    def test_negative_multiplier_rejected(self, counterexample_prog):
        with pytest.raises(ValueError):
            ag.solve_reference_kkt(counterexample_prog,
                                   ag.PrimalDualPoint([0.0], [-1.0], [0.0]))


class TestCounterexampleProgram:
    def test_objective_quadratic(self, counterexample_prog):
        val, grad = counterexample_prog.objective(np.array([2.0]))
        npt.assert_allclose(val, 2.0)
        npt.assert_allclose(grad, [2.0])

    def test_constraint_value(self, counterexample_prog):
        val, grad = counterexample_prog.inequalities[0](np.array([0.0]))
        npt.assert_allclose(val, -1.0)
        npt.assert_allclose(grad, [1.0])

    def test_metadata(self, counterexample_prog):
        assert (counterexample_prog.n, counterexample_prog.m_I,
                counterexample_prog.m_E) == (1, 1, 1)
        assert counterexample_prog.mu == counterexample_prog.ell == 1.0
        npt.assert_allclose(counterexample_prog.ineq_bounds[0](7.0), (1.0, 0.0))


class TestRandomQp:
    def test_deterministic_per_seed(self):
        a = ag.make_random_qp(seed=5, n=4, m_I=3, m_E=1, mu=0.5, ell=2.0)
        b = ag.make_random_qp(seed=5, n=4, m_I=3, m_E=1, mu=0.5, ell=2.0)
        npt.assert_array_equal(a.extras["H"], b.extras["H"])
        npt.assert_array_equal(a.extras["F"], b.extras["F"])
        npt.assert_array_equal(a.eq_matrix, b.eq_matrix)

    def test_spectrum_inside_mu_ell(self):
        prog = ag.make_random_qp(seed=9, n=6, m_I=2, m_E=1, mu=0.7, ell=3.5)
        eigs = np.linalg.eigvalsh(prog.extras["H"])
        assert eigs[0] >= 0.7 - 1e-12
        assert eigs[-1] <= 3.5 + 1e-12
        npt.assert_allclose(eigs[0], 0.7, atol=1e-9)
        npt.assert_allclose(eigs[-1], 3.5, atol=1e-9)

    def test_witness_strictly_feasible(self):
        prog = ag.make_random_qp(seed=12, n=5, m_I=4, m_E=2, mu=1.0, ell=4.0)
        w = prog.extras["witness"]
        gvals, _ = prog.eval_inequalities(w)
        assert np.max(gvals) < 0.0
        npt.assert_allclose(prog.eq_matrix @ w, prog.eq_rhs, atol=1e-12)

    def test_invalid_dimensions_rejected(self):
        with pytest.raises(ValueError):
            ag.make_random_qp(seed=0, n=3, m_I=1, m_E=3, mu=1.0, ell=2.0)
        with pytest.raises(ValueError):
            ag.make_random_qp(seed=0, n=3, m_I=1, m_E=1, mu=2.0, ell=1.0)


class TestGradientConsistency:
    @pytest.mark.parametrize("maker", [
        ag.make_counterexample,
        ag.make_soc_ball,
        lambda: ag.make_random_qp(seed=4, n=5, m_I=3, m_E=2, mu=1.0, ell=4.0),
    ])
    def test_objective_and_constraints_match_fd(self, maker):
        prog = maker()
        rng = np.random.default_rng(77)
        for _ in range(100):
            x = rng.standard_normal(prog.n)
            _, grad = prog.objective(x)
            fd = central_diff(lambda y: prog.objective(y)[0], x)
            scale = 1.0 + np.max(np.abs(fd))
            assert np.max(np.abs(grad - fd)) / scale < 1e-5
            for gi in prog.inequalities:
                _, ggrad = gi(x)
                gfd = central_diff(lambda y: gi(y)[0], x)
                gscale = 1.0 + np.max(np.abs(gfd))
                assert np.max(np.abs(ggrad - gfd)) / gscale < 1e-5


class TestSphereSampling:
    def test_radius_and_sign(self):
        prog = ag.make_random_qp(seed=14, n=4, m_I=3, m_E=1, mu=1.0, ell=4.0)
        zs = oracle_point(prog)
        rng = np.random.default_rng(3)
        for radius in (0.5, 3.0, 200.0):
            z0 = sample_near_reference(rng, zs, radius)
            npt.assert_allclose(z0.distance_to(zs), radius, rtol=1e-6)
            assert np.min(z0.lam) >= 0.0

    def test_zero_radius_returns_reference(self):
        prog = ag.make_counterexample()
        zs = prog.extras["z_star"]
        rng = np.random.default_rng(0)
        assert sample_near_reference(rng, zs, 0.0) is zs


class TestJsonInterchange:
    def test_round_trip_preserves_evaluations(self, tmp_path):
        prog = ag.make_random_qp(seed=6, n=4, m_I=3, m_E=1, mu=1.0, ell=3.0)
        path = tmp_path / "qp.json"
        ag.save_problem(prog, path)
        loaded = ag.load_problem(path)
        rng = np.random.default_rng(1)
        for _ in range(10):
            x = rng.standard_normal(4)
            npt.assert_allclose(loaded.objective(x)[0], prog.objective(x)[0],
                                rtol=0, atol=1e-15)
            ga, _ = prog.eval_inequalities(x)
            gb, _ = loaded.eval_inequalities(x)
            npt.assert_allclose(gb, ga, rtol=0, atol=1e-15)
        npt.assert_array_equal(loaded.eq_matrix, prog.eq_matrix)

    def test_builtin_constraint_loading(self):
        d = {"n": 2, "m_I": 1, "m_E": 1,
             "quadratic": {"H": [[2.0, 0.0], [0.0, 2.0]], "q": [0.0, 0.0]},
             "ineq_builtin": ["soc"],
             "A": [[1.0, 0.0]], "b": [0.0],
             "mu": 2.0, "ell": 2.0}
        prog = program_from_json_dict(d)
        val, grad = prog.inequalities[0](np.array([0.6, 0.8]))
        npt.assert_allclose(val, 0.0, atol=1e-15)
        npt.assert_allclose(grad, [1.2, 1.6])

    def test_seventeen_digit_floats(self):
        assert format_float(0.1) == "0.10000000000000001"
        text = dump_json_17g({"x": 1.0 / 3.0})
        assert json.loads(text)["x"] == 1.0 / 3.0

    def test_mismatched_constraint_count_rejected(self):
        d = {"n": 1, "m_I": 2, "m_E": 0,
             "quadratic": {"H": [[1.0]], "q": [0.0]},
             "ineq_affine": {"F": [[1.0]], "v": [1.0]},
             "mu": 1.0, "ell": 1.0}
        with pytest.raises(ValueError):
            program_from_json_dict(d)

    def test_serialization_reports_schema(self):
        prog = ag.make_random_qp(seed=2, n=3, m_I=2, m_E=1, mu=1.0, ell=2.0)
        d = program_to_json_dict(prog)
        assert set(d) >= {"n", "m_I", "m_E", "quadratic", "ineq_affine",
                          "A", "b", "mu", "ell"}


class TestOracle:
    def test_unconstrained_minimum(self):
        H = np.diag([2.0, 4.0])
        q = np.array([-2.0, -4.0])
        x, lam, nu = ag.qp_active_set_oracle(H, q, np.zeros((0, 2)), [],
                                             np.zeros((0, 2)), [])
        npt.assert_allclose(x, [1.0, 1.0])
        assert lam.size == 0 and nu.size == 0

    def test_active_inequality(self):
        # min (x-2)^2 s.t. x <= 1: optimum at the bound with multiplier 2
        x, lam, nu = ag.qp_active_set_oracle([[2.0]], [-4.0], [[1.0]], [1.0],
                                             np.zeros((0, 1)), [])
        npt.assert_allclose(x, [1.0])
        npt.assert_allclose(lam, [2.0])

    def test_oracle_is_kkt_point(self):
        prog = ag.make_random_qp(seed=33, n=6, m_I=4, m_E=2, mu=1.0, ell=4.0)
        zs = oracle_point(prog)
        assert ag.kkt_residual(prog, zs).max_residual < 1e-9
