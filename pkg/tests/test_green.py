import math

import numpy as np
import pytest

from dichotomy import (DichotomyCertificate, EvolutionFamily, GridFunction,
                       InvalidPairError, NormFamily, SingularBundleError,
                       dichotomy_solution_bounds, green_solve, lp_norm,
                       mild_residual, solution_bound_constants,
                       uniform_grid, unstable_pullback, y1_norm)
from conftest import saddle_cert, stable_cert, unstable_cert


@pytest.fixture
def stable_setup(scalar_stable, norms1):
    grid = uniform_grid(-12.0, 12.0, 0.002)
    cert = stable_cert(grid, scalar_stable, norms1)
    y = GridFunction.indicator(grid, norms1, 0.0, 1.0, [1.0])
    return cert, y


class TestGreenSolve:
    def test_scalar_stable_indicator(self, stable_setup):
        cert, y = stable_setup
        sol = green_solve(cert, y)
        assert sol.x.value_at(1.0)[0] == pytest.approx(
            1.0 - math.exp(-1.0), abs=1e-3)
        assert sol.x.value_at(2.0)[0] == pytest.approx(
            (1.0 - math.exp(-1.0)) * math.exp(-1.0), abs=1e-3)

    def test_zero_forcing(self, stable_setup):
        cert, y = stable_setup
        z = GridFunction.zeros(y.grid, y.family)
        sol = green_solve(cert, z)
        assert np.abs(sol.x.values).max() == 0.0

    def test_scalar_unstable_branch(self, scalar_unstable, norms1):
        grid = uniform_grid(-12.0, 12.0, 0.002)
        cert = unstable_cert(grid, scalar_unstable, norms1)
        y = GridFunction.indicator(grid, norms1, 0.0, 1.0, [1.0])
        sol = green_solve(cert, y)
        assert sol.x.value_at(0.0)[0] == pytest.approx(
            -(1.0 - math.exp(-1.0)), abs=1e-3)
        assert np.abs(sol.x1.values).max() == 0.0

    def test_mild_residual_at_solver_level(self, stable_setup, scalar_stable):
        cert, y = stable_setup
        sol = green_solve(cert, y)
        assert mild_residual(sol.x, y, scalar_stable) <= 1e-12

    def test_splitting_identity(self, saddle, norms2):
        grid = uniform_grid(-12.0, 12.0, 0.005)
        cert = saddle_cert(grid, saddle, norms2)
        y = GridFunction.indicator(grid, norms2, 0.0, 1.0, [1.0, 1.0])
        sol = green_solve(cert, y)
        p = np.diag([1.0, 0.0])
        q = np.diag([0.0, 1.0])
        px = sol.x.values @ p.T
        qx = sol.x.values @ q.T
        assert np.abs(px - sol.x1.values).max() <= 1e-10
        assert np.abs(qx + sol.x2.values).max() <= 1e-10

    def test_linearity(self, stable_setup):
        cert, y = stable_setup
        rng = np.random.default_rng(1)
        bump = np.exp(-((y.grid - 2.0) ** 2))[:, None]
        y2 = GridFunction(y.grid, bump, y.family)
        left = green_solve(cert, y + y2).x.values
        right = green_solve(cert, y).x.values + green_solve(cert, y2).x.values
        assert np.abs(left - right).max() <= 1e-10

    def test_truncation_warning(self, scalar_stable, norms1):
        grid = uniform_grid(-4.0, 4.0, 0.01)
        cert = stable_cert(grid, scalar_stable, norms1)
        y = GridFunction.from_callable(grid, norms1, lambda t: 1.0)
        with pytest.warns(RuntimeWarning):
            sol = green_solve(cert, y)
        assert sol.truncation_fraction > 1e-8

    def test_bound_compliance_on_probes(self, saddle, norms2):
        grid = uniform_grid(-12.0, 12.0, 0.01)
        cert = saddle_cert(grid, saddle, norms2)
        b_inf, b_p = dichotomy_solution_bounds(cert, 2, 2)
        rng = np.random.default_rng(3)
        for _ in range(5):
            center = rng.uniform(-1.5, 1.5)
            width = rng.uniform(0.5, 1.5)
            direction = rng.standard_normal(2)
            arg = (grid - center) / width
            prof = np.where(np.abs(arg) < 1, np.cos(0.5 * np.pi * arg) ** 2, 0.0)
            y = GridFunction(grid, prof[:, None] * direction, norms2)
            sol = green_solve(cert, y)
            yq = lp_norm(y, 2)
            assert lp_norm(sol.x, math.inf) <= b_inf * yq * (1 + 1e-3)
            assert lp_norm(sol.x, 2) <= b_p * yq * (1 + 1e-3)


class TestBoundConstants:
    def test_sup_constant(self):
        b_inf, _ = solution_bound_constants(1.0, 1.0, 1.0, math.inf, 2)
        assert b_inf == pytest.approx(3.163953413738653, rel=1e-12)

    def test_young_constant_r_equals_one(self):
        _, b_p = solution_bound_constants(1.0, 1.0, 1.0, 2, 2)
        assert b_p == pytest.approx(2.0, rel=1e-12)

    def test_r_one_for_any_equal_pair(self):
        for p in (1, 2, 5, math.inf):
            _, b_p = solution_bound_constants(1.0, 1.0, 1.0, p, p)
            assert b_p == pytest.approx(2.0, rel=1e-12)

    def test_invalid_pair_rejected(self):
        with pytest.raises(InvalidPairError):
            solution_bound_constants(1.0, 1.0, 1.0, 1, 2)

    def test_r_infinite_falls_back_to_sup_bound(self):
        b_inf, b_p = solution_bound_constants(1.0, 1.0, 1.0, math.inf, 1)
        assert b_p == b_inf


class TestCertificate:
    def test_validate_exact_certificate(self, saddle, norms2):
        grid = uniform_grid(-6.0, 6.0, 0.05)
        cert = saddle_cert(grid, saddle, norms2)
        diag = cert.validate()
        assert diag.ok
        assert diag.idempotency <= 1e-14
        assert diag.invariance_residual <= 1e-13
        assert diag.stable_bound_margin <= 1e-9
        assert diag.unstable_bound_margin <= 1e-9

    def test_validate_wrong_rate_fails(self, saddle, norms2):
        grid = uniform_grid(-6.0, 6.0, 0.05)
        cert = DichotomyCertificate.constant_projection(
            np.diag([1.0, 0.0]), 2.0, 1.0, 1.0, grid, saddle, norms2)
        diag = cert.validate()
        assert diag.stable_bound_margin > 0.0
        assert not diag.ok

    def test_unstable_vacuous_for_full_rank(self, scalar_stable, norms1):
        grid = uniform_grid(-3.0, 3.0, 0.1)
        cert = stable_cert(grid, scalar_stable, norms1)
        diag = cert.validate()
        assert diag.ok and diag.unstable_vacuous

    def test_pullback_inverts_restriction(self, saddle, norms2):
        grid = uniform_grid(-2.0, 2.0, 0.1)
        cert = saddle_cert(grid, saddle, norms2)
        basis = cert.unstable_basis(0)
        w = basis[:, 0] * 3.0
        v = unstable_pullback(saddle, basis, 1.0, 0.0, w)
        assert np.allclose(saddle.propagator(1.0, 0.0) @ v, w)

    def test_pullback_rank_deficiency_raises(self, norms2):
        # a family that annihilates the unstable direction over the step
        fam = EvolutionFamily(
            2, "closed-form",
            matrix_fn=lambda t, tau: np.diag([1.0, 1e-14 ** (t - tau)]))
        basis = np.array([[0.0], [1.0]])
        with pytest.raises(SingularBundleError):
            unstable_pullback(fam, basis, 1.0, 0.0, np.array([0.0, 1.0]))


def test_proof_side_norm_convention(saddle, norms2):
    # the stable bound measures the image in the norm at the later time and
    # the argument at the earlier one; for the saddle with constant norms the
    # sharp constant is exactly 1 at every pair
    grid = uniform_grid(-4.0, 4.0, 0.5)
    cert = saddle_cert(grid, saddle, norms2)
    p = cert.projections[0]
    for dt in (0.5, 1.0, 2.0):
        prop = saddle.propagator(dt, 0.0)
        assert np.linalg.norm(prop @ p, 2) == pytest.approx(
            math.exp(-dt), rel=1e-12)
