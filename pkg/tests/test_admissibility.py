import math

import numpy as np
import pytest

from dichotomy import (AdmissibilityConfig, EvolutionFamily, GridFunction,
                       InvalidInputError, NormFamily, WindowOverflowError,
                       assemble_h, check_admissibility, estimate_g_norm,
                       green_solve, kernel_check, solve_bounded, uniform_grid)
from conftest import saddle_cert, stable_cert


class TestAssembly:
    def test_single_cell_scalar(self, scalar_stable):
        system = assemble_h(scalar_stable, uniform_grid(0.0, 1.0, 1.0))
        row = system.matrix.toarray()
        assert np.allclose(row, [[-math.exp(-1.0), 1.0]], atol=1e-15)
        rhs = system.rhs_matrix.toarray()
        assert np.allclose(rhs, [[0.5 * math.exp(-1.0), 0.5]], atol=1e-15)

    def test_identity_propagator_rows(self):
        fam = EvolutionFamily.scalar(0.0)
        grid = uniform_grid(0.0, 1.0, 0.25)
        system = assemble_h(fam, grid)
        x = np.arange(len(grid), dtype=float)[:, None]
        rows = system.apply(x)
        assert np.allclose(rows, 1.0)          # x_{i+1} - x_i
        y = np.ones((len(grid), 1))
        assert np.allclose(system.rhs(y), 0.25)  # (h/2)(y_i + y_{i+1})

    def test_homogeneous_solution_annihilated(self, saddle):
        grid = uniform_grid(-2.0, 2.0, 0.05)
        system = assemble_h(saddle, grid)
        x = np.stack([saddle.propagator(t, grid[0]) @ np.array([1.0, 0.5])
                      for t in grid])
        assert np.abs(system.apply(x)).max() <= 1e-12

    def test_too_few_nodes(self, scalar_stable):
        with pytest.raises(InvalidInputError):
            assemble_h(scalar_stable, np.array([0.0]))

    def test_shape_counts(self, saddle):
        grid = uniform_grid(0.0, 1.0, 0.25)
        system = assemble_h(saddle, grid)
        n_cells = len(grid) - 1
        assert system.matrix.shape == (2 * n_cells, 2 * (n_cells + 1))


class TestSolveBounded:
    def test_scalar_indicator_oracle(self, scalar_stable, norms1):
        grid = uniform_grid(-15.0, 15.0, 0.002)
        y = GridFunction.indicator(grid, norms1, 0.0, 1.0, [1.0])
        x, info = solve_bounded(scalar_stable, y, 2, 2)
        assert x.value_at(1.0)[0] == pytest.approx(1.0 - math.exp(-1.0),
                                                   abs=1e-3)
        assert info["residual"] <= 1e-12

    def test_zero_forcing_both_modes(self, scalar_stable, norms1):
        grid = uniform_grid(-5.0, 5.0, 0.05)
        y = GridFunction.zeros(grid, norms1)
        for mode in ("projected", "least-norm"):
            x, _ = solve_bounded(scalar_stable, y, 2, 2, boundary=mode)
            assert np.abs(x.values).max() <= 1e-12

    def test_saddle_unstable_component(self, saddle, norms2):
        grid = uniform_grid(-15.0, 15.0, 0.002)
        y = GridFunction.indicator(grid, norms2, 0.0, 1.0, [1.0, 1.0])
        x, _ = solve_bounded(saddle, y, 2, 2)
        assert x.value_at(0.0)[1] == pytest.approx(-(1.0 - math.exp(-1.0)),
                                                   abs=1e-3)

    def test_scaling_linearity(self, scalar_stable, norms1):
        grid = uniform_grid(-6.0, 6.0, 0.02)
        y = GridFunction.from_callable(grid, norms1,
                                       lambda t: math.exp(-t * t))
        x1, _ = solve_bounded(scalar_stable, y, 2, 2)
        x2, _ = solve_bounded(scalar_stable, 3.5 * y, 2, 2)
        assert np.abs(x2.values - 3.5 * x1.values).max() <= \
            1e-10 * np.abs(x1.values).max() * 3.5

    def test_mode_agreement(self, scalar_stable, norms1):
        # window must exceed the decay-margin rule (support radius + 10)
        grid = uniform_grid(-16.0, 16.0, 0.01)
        y = GridFunction.from_callable(grid, norms1,
                                       lambda t: math.exp(-(t - 0.5) ** 2))
        xp, _ = solve_bounded(scalar_stable, y, 2, 2, boundary="projected")
        xl, _ = solve_bounded(scalar_stable, y, 2, 2, boundary="least-norm")
        assert np.abs(xp.values - xl.values).max() <= 1e-6

    def test_agreement_with_green(self, saddle, norms2):
        grid = uniform_grid(-12.0, 12.0, 0.01)
        cert = saddle_cert(grid, saddle, norms2)
        y = GridFunction.indicator(grid, norms2, -1.0, 2.0, [0.3, -0.7])
        x, _ = solve_bounded(saddle, y, 2, 2)
        sol = green_solve(cert, y)
        disc = (x - sol.x).node_norms()
        assert disc.max() <= max(1e-3, 10 * 0.01 ** 2)


class TestKernelCheck:
    def test_neutral_family_constant_witness(self, norms1):
        fam = EvolutionFamily.scalar(0.0)
        rep = kernel_check(fam, norms1, 0.05, [5.0, 10.0, 20.0])
        assert rep.verdict == "nontrivial"
        assert rep.witness is not None
        assert np.allclose(rep.witness.values, rep.witness.values[0])
        assert rep.witness_residual <= 1e-10
        diffs = np.diff(rep.sigma_mins)
        assert np.all(diffs < 0)

    def test_stable_family_bounded_below(self, scalar_stable, norms1):
        rep = kernel_check(scalar_stable, norms1, 0.05, [5.0, 10.0, 20.0])
        assert rep.verdict == "trivial"
        assert rep.sigma_mins[-1] >= 0.8 * rep.sigma_mins[0]

    def test_rotation_bounded_witness(self, rotation, norms2):
        rep = kernel_check(rotation, norms2, 0.05, [5.0, 10.0, 20.0])
        assert rep.verdict == "nontrivial"
        norms = rep.witness.node_norms()
        assert norms.max() == pytest.approx(norms.min(), rel=1e-9)

    def test_needs_two_windows(self, scalar_stable, norms1):
        with pytest.raises(InvalidInputError):
            kernel_check(scalar_stable, norms1, 0.05, [5.0])


class TestGNorm:
    def test_scalar_stable_sup_pair(self, scalar_stable, norms1):
        est = estimate_g_norm(scalar_stable, norms1, math.inf, math.inf,
                              10.0, 0.02, seed=2)
        # constant forcing gives the analytic worst case x == 1
        assert est.value >= 1.0 - 1e-3
        assert est.value <= 1.1

    def test_saddle_sandwich(self, saddle, norms2):
        est = estimate_g_norm(saddle, norms2, math.inf, math.inf, 10.0, 0.02,
                              seed=2)
        b_inf = 2.0 / (1.0 - math.exp(-1.0))
        assert 1.0 - 1e-3 <= est.value <= b_inf

    def test_power_iteration_stabilizes(self, scalar_stable, norms1):
        est = estimate_g_norm(scalar_stable, norms1, 2, 2, 10.0, 0.02, seed=0)
        assert est.stabilized
        assert est.power_value == pytest.approx(1.0, abs=0.05)


class TestCheckAdmissibility:
    CFG = AdmissibilityConfig(window=10.0, h=0.02, sweep_windows=(5.0, 10.0),
                              seed=1)

    def test_scalar_stable_admissible(self, scalar_stable, norms1):
        rep = check_admissibility(scalar_stable, norms1, 2, 2, self.CFG)
        assert rep.verdict == "admissible"
        assert rep.residual <= 1e-6
        assert min(rep.kernel_sigma_min) > rep.kernel_floor

    def test_neutral_not_admissible(self, norms1):
        rep = check_admissibility(EvolutionFamily.scalar(0.0), norms1, 2, 2,
                                  self.CFG)
        assert rep.verdict == "not-admissible"
        assert rep.witness is not None

    def test_rotation_not_admissible(self, rotation, norms2):
        rep = check_admissibility(rotation, norms2, 2, 2, self.CFG)
        assert rep.verdict == "not-admissible"

    def test_excluded_pair_flagged(self, scalar_stable, norms1):
        rep = check_admissibility(scalar_stable, norms1, math.inf, 1,
                                  self.CFG)
        assert not rep.reconstruction_available
        assert any("excluded" in n for n in rep.notes)

    def test_window_overflow_guard(self, norms1):
        fam = EvolutionFamily.scalar(50.0)
        cfg = AdmissibilityConfig(window=20.0, h=0.05,
                                  sweep_windows=(10.0, 20.0))
        with pytest.raises(WindowOverflowError):
            check_admissibility(fam, norms1, 2, 2, cfg)

    def test_monotone_diagnostics(self, norms1, scalar_stable):
        neutral = kernel_check(EvolutionFamily.scalar(0.0), norms1, 0.05,
                               [5.0, 10.0, 20.0])
        assert all(b <= a * 1.10 for a, b in
                   zip(neutral.sigma_mins, neutral.sigma_mins[1:]))
        stable = kernel_check(scalar_stable, norms1, 0.05, [5.0, 10.0, 20.0])
        assert min(stable.sigma_mins) >= 0.8 * stable.sigma_mins[0]
