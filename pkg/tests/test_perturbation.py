import math

import numpy as np
import pytest
from scipy.integrate import quad

from dichotomy import (AdmissibilityConfig, EvolutionFamily, NormFamily,
                       PerturbationSpec, ReconstructionConfig,
                       assemble_perturbed, assemble_h, perturbed_family,
                       perturbed_growth_bound, perturbed_propagator,
                       phi_lq_norm, robustness_experiment,
                       smallness_condition, uniform_grid)
from dichotomy.perturbation import gronwall_integral_margin

PHI = lambda t: math.exp(-abs(t))


@pytest.fixture
def spec(norms1):
    return PerturbationSpec.scaled_coupling(0.1, norms1, PHI)


def u_scalar_exact(t, tau, m):
    integral = quad(lambda s: math.exp(-abs(s)), tau, t)[0]
    return math.exp(-(t - tau) + m * integral)


class TestPerturbedPropagator:
    def test_zero_perturbation_is_base(self, scalar_stable, norms1):
        spec0 = PerturbationSpec.scaled_coupling(0.0, norms1, PHI)
        u = perturbed_propagator(scalar_stable, spec0, 1.5, -0.5)
        assert u[0, 0] == pytest.approx(math.exp(-2.0), rel=1e-10)

    def test_identity_at_equal_times(self, scalar_stable, spec):
        assert perturbed_propagator(scalar_stable, spec, 0.7, 0.7) == \
            pytest.approx(np.eye(1))

    def test_scalar_closed_form_oracle(self, scalar_stable, spec):
        for (t, tau) in ((1.0, 0.0), (2.0, -1.0), (0.5, -2.0)):
            u = perturbed_propagator(scalar_stable, spec, t, tau)
            assert u[0, 0] == pytest.approx(u_scalar_exact(t, tau, 0.1),
                                            rel=1e-8)

    def test_picard_agrees_with_generator(self, scalar_stable, spec):
        u_gen = perturbed_propagator(scalar_stable, spec, 1.5, -0.5,
                                     method="generator")
        u_pic = perturbed_propagator(scalar_stable, spec, 1.5, -0.5,
                                     method="picard", mesh_step=0.005)
        assert abs(u_gen[0, 0] - u_pic[0, 0]) <= 1e-6

    def test_matrix_coupling(self, saddle, norms2):
        spec = PerturbationSpec.scaled_coupling(
            0.1, norms2, PHI, coupling=lambda t: np.eye(2)[::-1].copy())
        u_gen = perturbed_propagator(saddle, spec, 1.0, 0.0)
        u_pic = perturbed_propagator(saddle, spec, 1.0, 0.0, method="picard",
                                     mesh_step=0.005)
        assert np.abs(u_gen - u_pic).max() <= 1e-6


class TestEnvelope:
    def test_within_envelope(self, spec):
        assert spec.envelope_violation(np.linspace(-5, 5, 31)) <= 0.0

    def test_violation_detected(self, norms1):
        bad = PerturbationSpec(
            magnitude=0.1, envelope_c=1.0, envelope_eps=0.0, phi=PHI,
            unit_operator=lambda t: 2.0 * PHI(t) * np.eye(1), dim=1)
        assert bad.envelope_violation([0.0]) > 0.0


class TestSmallness:
    def test_example_values(self, spec):
        rep = smallness_condition(spec, 2, 1.0)
        assert rep.lhs == pytest.approx(0.1, abs=1e-3)
        assert rep.satisfied

    def test_zero_magnitude(self, norms1):
        spec0 = PerturbationSpec.scaled_coupling(0.0, norms1, PHI)
        rep = smallness_condition(spec0, 2, 5.0)
        assert rep.lhs == 0.0 and rep.satisfied

    def test_large_magnitude_fails_linearly(self, norms1):
        big = PerturbationSpec.scaled_coupling(20.0, norms1, PHI)
        rep = smallness_condition(big, 2, 1.0)
        small = smallness_condition(big.with_magnitude(0.1), 2, 1.0)
        # lhs is linear in the magnitude
        assert rep.lhs == pytest.approx(200.0 * small.lhs, rel=1e-12)
        assert rep.lhs == pytest.approx(20.0, abs=0.2)
        assert not rep.satisfied

    def test_phi_l2_norm_analytic(self):
        norm, tail_ok = phi_lq_norm(PHI, 2, 10.0, 0.01)
        assert norm == pytest.approx(1.0, abs=1e-4)
        assert tail_ok


class TestGrowthBound:
    def test_example_values(self, spec):
        prefactor, exponent = perturbed_growth_bound(spec, 1.0, 1.0, 2)
        assert prefactor == pytest.approx(math.exp(0.1), abs=1e-4)
        assert exponent == pytest.approx(1.1, abs=1e-4)

    def test_zero_perturbation_unchanged(self, norms1):
        spec0 = PerturbationSpec.scaled_coupling(0.0, norms1, PHI)
        prefactor, exponent = perturbed_growth_bound(spec0, 1.3, -0.7, 2)
        assert prefactor == 1.3 and exponent == -0.7

    def test_sampled_u_respects_bound(self, scalar_stable, spec):
        prefactor, exponent = perturbed_growth_bound(spec, 1.0, -1.0, 2)
        fam = perturbed_family(scalar_stable, spec)
        for tau in (-2.0, 0.0, 1.0):
            for dt in (0.5, 1.0, 2.0, 4.0):
                u = fam.propagator(tau + dt, tau)[0, 0]
                assert u <= prefactor * math.exp(exponent * dt) * (1 + 1e-9)

    def test_gronwall_integral_bound(self, spec):
        pairs = [(-3.0, -1.0), (0.0, 2.5), (-1.0, 4.0)]
        assert gronwall_integral_margin(spec, 2, 8.0, 0.01, pairs) <= 0.0


def test_discrete_h_equals_l_plus_p(scalar_stable, norms1, spec):
    grid = uniform_grid(-5.0, 5.0, 0.05)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((len(grid), 1))
    y = rng.standard_normal((len(grid), 1))
    pert = assemble_perturbed(scalar_stable, spec, grid)
    base = assemble_h(scalar_stable, grid)
    bx = np.stack([spec.operator(t) @ xi for t, xi in zip(grid, x)])
    lhs = pert.apply(x) - pert.rhs(y)
    rhs = base.apply(x) - base.rhs(y + bx)
    assert np.abs(lhs - rhs).max() <= 1e-10


def test_perturbed_family_requires_generator(norms1, spec):
    bare = EvolutionFamily(1, "closed-form",
                           matrix_fn=lambda t, tau: np.eye(1))
    from dichotomy import InvalidInputError
    with pytest.raises(InvalidInputError):
        perturbed_family(bare, spec)


class TestSweep:
    @pytest.fixture(scope="class")
    def sweep(self):
        fam = EvolutionFamily.scalar(-1.0)
        norms = NormFamily.constant(1)
        spec = PerturbationSpec.scaled_coupling(1.0, norms, PHI)
        adm = AdmissibilityConfig(window=8.0, h=0.02,
                                  sweep_windows=(4.0, 8.0), seed=1)
        rec = ReconstructionConfig(window=8.0, h=0.02, projection_step=0.5,
                                   projection_margin=2.0, admissibility=adm)
        return robustness_experiment(fam, norms, spec,
                                     [0.0, 0.05, 0.1, 0.2], 2, 2,
                                     adm_config=adm, rec_config=rec)

    def test_all_small_magnitudes_certified(self, sweep):
        assert all(r.satisfied for r in sweep.rows)
        assert sweep.all_small_certified

    def test_zero_row_reproduces_base_rates(self, sweep):
        base = sweep.rows[0]
        assert base.magnitude == 0.0
        assert base.alpha_hat == pytest.approx(1.0, abs=1e-9)
        assert base.d_hat == pytest.approx(1.0, abs=1e-6)

    def test_rates_drift_within_perturbation_size(self, sweep):
        for row in sweep.rows:
            assert row.alpha_hat <= 1.0 + 1e-9
            assert row.alpha_hat >= 1.0 - 0.2 * row.magnitude / 0.2 - 1e-9

    def test_lhs_linear_in_magnitude(self, sweep):
        base = sweep.rows[1]
        for row in sweep.rows[2:]:
            expected = base.lhs * row.magnitude / base.magnitude
            assert row.lhs == pytest.approx(expected, rel=1e-9)

    def test_csv_columns(self, sweep, tmp_path):
        path = tmp_path / "sweep.csv"
        sweep.write_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "M,lhs,verdict,alpha_hat,beta_hat,D_hat"
