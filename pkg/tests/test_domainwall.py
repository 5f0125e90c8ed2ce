import numpy as np
import pytest

import moirelax as mx
from moirelax.domainwall import wall_energy_parts


def sg_exact(t):
    return (4.0 * np.arctan(np.exp(t)) - np.pi) / np.pi


class TestSolveKink:
    def test_quartic_matches_tanh(self):
        sol = mx.solve_kink(mx.quartic_potential())
        assert np.max(np.abs(sol.psi - np.tanh(sol.t / 2.0))) < 1e-6
        assert sol.kappa == pytest.approx(2.0, abs=1e-4)

    def test_sine_gordon_matches_analytic(self):
        sol = mx.solve_kink(mx.sine_gordon_potential())
        assert np.max(np.abs(sol.psi - sg_exact(sol.t))) < 1e-6
        assert sol.kappa == pytest.approx(4.0 / np.pi, abs=1e-4)

    def test_structure(self, walls):
        sol = mx.solve_wall(walls[1])
        n = len(sol.t)
        assert sol.psi[n // 2] == 0.0
        assert np.allclose(sol.psi, -sol.psi[::-1], atol=1e-12)
        assert np.all(np.diff(sol.psi) > 0)
        # exponential approach to the wells, amplitude set by the fitted tail
        T = sol.t[-1]
        bound = max(2.0, 2.0 * sol.kappa) * np.exp(-T)
        assert abs(sol.psi[-1] - 1.0) < bound
        assert abs(sol.psi[0] + 1.0) < bound
        assert sol.residual_sup < 1e-6

    def test_first_integral_conserved(self, walls):
        sol = mx.solve_wall(walls[1])
        h = sol.t[1] - sol.t[0]
        dpsi = np.gradient(sol.psi, h)
        dpsi[2:-2] = (sol.psi[:-4] - 8 * sol.psi[1:-3]
                      + 8 * sol.psi[3:-1] - sol.psi[4:]) / (12 * h)
        inner = slice(8, len(sol.t) - 8)
        invariant = 0.5 * dpsi[inner] ** 2 - sol.potential.u(sol.psi[inner])
        assert np.max(np.abs(invariant)) < 1e-8

    def test_rejects_non_double_well(self):
        bad = mx.WallPotential(u=lambda p: -np.ones_like(np.asarray(p, float)),
                               du=lambda p: np.zeros_like(np.asarray(p, float)),
                               k_min=1.0, phi_min=0.0, c=2.0)
        with pytest.raises(mx.KinkSolverError):
            mx.solve_kink(bad)


class TestAsymptotics:
    def test_quartic_kappa(self):
        sol = mx.solve_kink(mx.quartic_potential())
        kappa, defect = mx.asymptotic_check(sol)
        assert kappa == pytest.approx(2.0, abs=1e-4)
        assert np.isfinite(defect)

    def test_sine_gordon_kappa(self):
        sol = mx.solve_kink(mx.sine_gordon_potential())
        kappa, _ = mx.asymptotic_check(sol)
        assert kappa == pytest.approx(4.0 / np.pi, abs=1e-4)

    def test_defect_stable_under_longer_domain(self, walls):
        # the second-order tail bound must not grow when the window end moves out
        sol = mx.solve_wall(walls[1], half_domain=14.0, n=5601)
        defects = []
        for end in (10.0, 11.0, 12.0, 13.0):
            _, d = mx.asymptotic_check(sol, window=(end / 2.0, end - 1.0))
            defects.append(d)
        assert all(np.isfinite(d) for d in defects)
        assert max(defects) <= 1.5 * min(defects) + 0.05

    def test_underflow_window_rejected(self):
        sol = mx.solve_kink(mx.quartic_potential())
        with pytest.raises(mx.KinkSolverError):
            mx.asymptotic_check(sol, window=(sol.t[-1] - 1e-9, sol.t[-1]))


class TestWidths:
    def test_endpoint_formulas(self, walls, moduli):
        l_perp, l_par = mx.width_endpoints(walls[1])
        k2 = 2.0 * walls[1].potential.k_min
        nb = np.linalg.norm(walls[1].delta_b)
        assert l_perp == pytest.approx(np.sqrt(moduli.mu / k2) * nb, rel=1e-12)
        assert l_par == pytest.approx(
            np.sqrt((moduli.lam + 2 * moduli.mu) / k2) * nb, rel=1e-12)

    def test_tensile_to_shear_ratio(self, walls, moduli):
        l_perp, l_par = mx.width_endpoints(walls[1])
        assert l_par / l_perp == pytest.approx(
            np.sqrt((moduli.lam + 2 * moduli.mu) / moduli.mu), rel=1e-12)
        assert l_par / l_perp == pytest.approx(1.674, abs=2e-3)

    def test_angle_dependence(self, walls, moduli):
        angles = np.linspace(0.0, np.pi / 2, 31)
        widths = [mx.characteristic_width(walls[1].with_normal_angle(a))
                  for a in angles]
        l_perp, l_par = mx.width_endpoints(walls[1])
        # monotone from tensile down to shear, within the endpoint bounds
        assert np.all(np.diff(widths) < 0)
        assert widths[0] == pytest.approx(l_par, rel=1e-12)
        assert widths[-1] == pytest.approx(l_perp, rel=1e-12)
        ratio_theory = np.sqrt(
            1.0 + (moduli.lam + moduli.mu) / moduli.mu * np.cos(angles) ** 2)
        assert np.allclose(np.array(widths) / l_perp, ratio_theory, rtol=1e-12)

    def test_mixed_angle_ratio_value(self, walls):
        w = mx.characteristic_width(walls[1].with_normal_angle(np.pi / 3))
        l_perp, _ = mx.width_endpoints(walls[1])
        assert w / l_perp == pytest.approx(1.204, abs=2e-3)


class TestWallEnergy:
    def test_equipartition(self, walls):
        spec = walls[1].with_normal_angle(np.pi / 2)
        sol = mx.solve_wall(spec)
        elastic, misfit = wall_energy_parts(spec, sol)
        assert abs(elastic - misfit) / misfit < 1e-4

    def test_scales_with_width_times_curvature(self, walls, basis, model):
        spec = walls[1]
        sol = mx.solve_wall(spec)
        e1 = mx.wall_energy_per_length(spec, sol)
        # quadrupled moduli double the width at fixed curvature: energy doubles
        big = mx.ElasticModuli(4 * spec.moduli.lam, 4 * spec.moduli.mu)
        spec2 = mx.WallSpec(triplet=spec.triplet, phi_rot=spec.phi_rot,
                            theta0=spec.theta0, b_sp=spec.b_sp,
                            delta_b=spec.delta_b, moduli=big,
                            potential=spec.potential)
        e2 = mx.wall_energy_per_length(spec2, mx.solve_wall(spec2))
        assert e2 / e1 == pytest.approx(2.0, rel=1e-6)

    def test_vanishes_with_vanishing_moduli(self, walls):
        spec = walls[1]
        tiny = mx.ElasticModuli(spec.moduli.lam * 1e-8, spec.moduli.mu * 1e-8)
        spec0 = mx.WallSpec(triplet=spec.triplet, phi_rot=spec.phi_rot,
                            theta0=spec.theta0, b_sp=spec.b_sp,
                            delta_b=spec.delta_b, moduli=tiny,
                            potential=spec.potential)
        sol = mx.solve_wall(spec0)
        ref = mx.wall_energy_per_length(spec, mx.solve_wall(spec))
        assert mx.wall_energy_per_length(spec0, sol) < 1e-3 * ref


def test_kink_fwhm_quartic_closed_form():
    # tanh(t/2) passes +/-1/2 at 2 atanh(1/2): width = 4 atanh(1/2) = 2 ln 3
    width = mx.fwhm_of_kink(mx.solve_kink(mx.quartic_potential()))
    assert width == pytest.approx(2.0 * np.log(3.0), abs=1e-10)
