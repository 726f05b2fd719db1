import math

import numpy as np
import pytest

from dichotomy import (EvolutionFamily, InvalidInputError, NormFamily,
                       OrderError, cocycle_residual, estimate_growth_bound,
                       uniform_grid)


def test_scalar_propagator_value(scalar_stable):
    assert scalar_stable.propagator(1.0, 0.0)[0, 0] == pytest.approx(
        0.36787944117144233, rel=1e-14)


def test_identity_at_equal_times(saddle, rotation):
    for fam in (saddle, rotation):
        assert np.allclose(fam.propagator(0.3, 0.3), np.eye(fam.dim))
    integ = EvolutionFamily.from_generator(
        lambda t: np.array([[0.0, 1.0], [-1.0, 0.0]]), 2)
    assert np.linalg.norm(integ.propagator(0.3, 0.3) - np.eye(2)) <= 1e-10


def test_diagonal_propagator_value(saddle):
    prop = saddle.propagator(0.5, 0.0)
    assert prop[0, 0] == pytest.approx(0.6065306597126334, rel=1e-14)
    assert prop[1, 1] == pytest.approx(1.6487212707001282, rel=1e-14)
    assert prop[0, 1] == 0.0


def test_backward_propagation_rejected(scalar_stable):
    with pytest.raises(OrderError):
        scalar_stable.propagator(0.0, 1.0)


class TestCocycle:
    def test_closed_form_exact(self, scalar_stable):
        assert cocycle_residual(scalar_stable, -1.3, 0.4, 2.7) <= 1e-14

    def test_degenerate_midpoint(self, rotation):
        assert cocycle_residual(rotation, 0.5, 0.5, 2.0) == pytest.approx(0.0, abs=1e-15)

    def test_ordering_enforced(self, scalar_stable):
        with pytest.raises(OrderError):
            cocycle_residual(scalar_stable, 0.0, 2.0, 1.0)

    def test_integrated_smooth_system_residual(self):
        fam = EvolutionFamily.from_generator(
            lambda t: np.array([[-1.0, math.sin(t)], [0.0, -2.0]]), 2,
            h_int=1e-3)
        res = cocycle_residual(fam, -2.0, 0.5, 2.0)
        assert res <= 1e-8

    def test_rk4_order_four(self):
        # halving the internal step shrinks the defect against a fine
        # reference by roughly 2^4
        a_fn = lambda t: np.array([[-1.0, math.sin(t)], [0.0, -2.0]])
        ref = EvolutionFamily.from_generator(a_fn, 2, h_int=2e-4).propagator(1.5, 0.0)
        errs = []
        for h_int in (4e-2, 2e-2):
            fam = EvolutionFamily.from_generator(a_fn, 2, h_int=h_int)
            errs.append(np.linalg.norm(fam.propagator(1.5, 0.0) - ref, 2))
        ratio = errs[0] / errs[1]
        assert 10.0 <= ratio <= 22.0

    def test_grid_refinement_consistency(self):
        fam = EvolutionFamily.from_generator(
            lambda t: np.array([[math.cos(t)]]), 1, h_int=1e-3)
        grid = uniform_grid(0.0, 2.0, 0.25)
        steps = fam.one_step_propagators(grid)
        composed = np.eye(1)
        for s in steps:
            composed = s @ composed
        direct = fam.propagator(2.0, 0.0)
        assert np.linalg.norm(composed - direct) <= 1e-10


class TestGrowthBound:
    def test_scalar_stable(self, scalar_stable, norms1):
        k, c = estimate_growth_bound(scalar_stable,
                                     uniform_grid(-5, 5, 0.1), norms1)
        assert c == pytest.approx(-1.0, abs=1e-9)
        assert k == pytest.approx(1.0, abs=1e-9)

    def test_identity_family(self, norms1):
        fam = EvolutionFamily.scalar(0.0)
        k, c = estimate_growth_bound(fam, uniform_grid(-3, 3, 0.1), norms1)
        assert k == pytest.approx(1.0, abs=1e-12)
        assert c == pytest.approx(0.0, abs=1e-12)

    def test_saddle_dominated_by_expansion(self, saddle, norms2):
        k, c = estimate_growth_bound(saddle, uniform_grid(-4, 4, 0.1), norms2)
        assert c == pytest.approx(1.0, abs=1e-9)
        assert k == pytest.approx(1.0, abs=1e-6)

    def test_bound_covers_all_samples(self, norms2):
        fam = EvolutionFamily.from_generator(
            lambda t: np.array([[-1.0, math.sin(3 * t)], [0.0, 0.5]]), 2,
            h_int=1e-3)
        grid = uniform_grid(-4, 4, 0.2)
        k, c = estimate_growth_bound(fam, grid, NormFamily.constant(2))
        steps = fam.one_step_propagators(grid)
        cum = np.eye(2)
        t0 = grid[0]
        for i, s in enumerate(steps):
            cum = s @ cum
            bound = k * math.exp(c * (grid[i + 1] - t0))
            assert np.linalg.norm(cum, 2) <= bound * (1 + 1e-9)

    def test_empty_grid_rejected(self, scalar_stable, norms1):
        with pytest.raises(InvalidInputError):
            estimate_growth_bound(scalar_stable, np.array([0.0]), norms1)


def test_certified_decay_within_rate(scalar_stable, norms1):
    # with the stable certificate the propagator decays at the certified rate
    grid = uniform_grid(-3, 3, 0.5)
    for i, tau in enumerate(grid[:-1]):
        for t in grid[i + 1:]:
            val = scalar_stable.propagator(t, tau)[0, 0]
            assert val <= 1.0 * math.exp(-1.0 * (t - tau)) * (1 + 1e-12)
