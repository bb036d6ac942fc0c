"""Hamiltonian flow, periodic shooting and the Lagrange certificate."""

import numpy as np
import pytest

import horloop as hl
from horloop.extremals import (ExtremalState, GeodesicReport, extremal_flow,
                               extremal_to_loop, hamiltonian,
                               lagrange_residual, periodicity_residual,
                               shoot_closed)
from horloop.models import contact_t3, flat_torus, heisenberg, make_model
from horloop.paths import Control, integrate


def vec(*xs):
    return np.array(xs, dtype=float)


class TestHamiltonian:
    def test_zero_covector(self, all_models):
        for model in all_models:
            s = ExtremalState(np.zeros(model.dim), np.zeros(model.dim))
            assert hamiltonian(model, s) == 0.0

    def test_flat(self):
        s = ExtremalState(vec(0.7, -0.1), vec(3.0, 4.0))
        assert hamiltonian(flat_torus(2), s) == pytest.approx(12.5)

    def test_heisenberg_origin(self, rng):
        # frame columns at the origin span the horizontal plane only
        for _ in range(10):
            lam = rng.standard_normal(3)
            s = ExtremalState(np.zeros(3), lam)
            expect = 0.5 * (lam[0] ** 2 + lam[1] ** 2)
            assert hamiltonian(heisenberg(1), s) == pytest.approx(expect)


class TestFlow:
    def test_zero_covector_is_stationary(self):
        model = heisenberg(1)
        _, xs, lams = extremal_flow(model, ExtremalState(vec(0.1, 0.2, 0.3),
                                                         np.zeros(3)), 1.0, steps=32)
        np.testing.assert_allclose(xs, np.tile(vec(0.1, 0.2, 0.3), (33, 1)))
        np.testing.assert_allclose(lams, np.zeros((33, 3)))

    def test_flat_straight_line(self):
        model = flat_torus(2)
        s0 = ExtremalState(vec(0.0, 0.0), vec(1.0, -2.0))
        ts, xs, lams = extremal_flow(model, s0, 1.0, steps=64)
        np.testing.assert_allclose(xs, np.outer(ts, s0.lam), atol=1e-12)
        np.testing.assert_allclose(lams, np.tile(s0.lam, (65, 1)), atol=1e-12)

    def test_hamiltonian_conserved(self, all_models, rng):
        for model in all_models:
            for _ in range(8):
                s0 = ExtremalState(0.2 * rng.standard_normal(model.dim),
                                   rng.standard_normal(model.dim))
                h0 = hamiltonian(model, s0)
                _, xs, lams = extremal_flow(model, s0, 1.0, steps=256)
                h1 = hamiltonian(model, ExtremalState(xs[-1], lams[-1]))
                assert abs(h1 - h0) < 1e-8, model.name

    def test_extracted_control_reintegrates(self):
        # projected curve is horizontal with u_i = <lam, X_i(x)>
        model = heisenberg(1)
        s0 = ExtremalState(vec(0.1, 0.0, 0.0), vec(0.3, 1.1, 0.7))
        n = 4096
        _, xs, _ = extremal_flow(model, s0, 1.0, steps=n)
        u, x0, _ = extremal_to_loop(model, s0, 1.0, n, steps_per_interval=2)
        path = integrate(model, Control(u.values), x0, substeps=1)
        assert np.linalg.norm(path.endpoint - xs[-1]) < 1e-7


class TestPeriodicityResidual:
    def test_flat_lattice_closure(self):
        model = flat_torus(2)
        s0 = ExtremalState(vec(0.2, 0.3), vec(2 * np.pi, 0.0))
        r = periodicity_residual(model, s0, 1.0, steps=64)
        np.testing.assert_allclose(r, np.zeros(4), atol=1e-10)

    def test_zero_covector_closes(self):
        model = contact_t3()
        r = periodicity_residual(model, ExtremalState(vec(0, 0, 0), np.zeros(3)), 1.0)
        np.testing.assert_allclose(r, np.zeros(6), atol=1e-15)

    def test_generic_start_open(self, rng):
        model = contact_t3()
        s0 = ExtremalState(vec(0.1, -0.2, 0.4), vec(0.9, 0.4, 0.8))
        assert np.linalg.norm(periodicity_residual(model, s0, 1.0)) > 1e-3


class TestShooting:
    def test_flat_torus_unit_cell(self):
        model = flat_torus(2)
        guess = ExtremalState(vec(0.1, 0.2), vec(2 * np.pi * 1.05, 0.1))
        s, T, rep = shoot_closed(model, guess, 1.0, steps=256)
        assert T == pytest.approx(2 * np.pi, abs=1e-9)
        assert rep.energy == pytest.approx(2 * np.pi ** 2, abs=1e-6)
        np.testing.assert_allclose(rep.multiplier, [2 * np.pi, 0.0], atol=1e-8)
        r = periodicity_residual(model, s, T, steps=256)
        assert np.linalg.norm(r) < 1e-8
        assert rep.speed_variation / np.sqrt(2 * rep.energy) < 1e-6

    def test_round_s2_great_circle(self):
        model = make_model("round_s2")
        guess = ExtremalState(vec(1.05, 0.0), vec(0.1, 0.95))
        s, T, rep = shoot_closed(model, guess, 2 * np.pi, steps=1024)
        # orbit energy at H = 1/2 is T^2 / 2
        assert 0.5 * T * T == pytest.approx(2 * np.pi ** 2, abs=1e-4)
        r = periodicity_residual(model, s, T, steps=1024)
        assert np.linalg.norm(r) < 1e-8

    def test_contact_t3_vertical_circle(self):
        model = contact_t3()
        guess = ExtremalState(vec(0.0, 0.0, 0.1), vec(0.03, 0.02, 2 * np.pi * 1.02))
        s, T, rep = shoot_closed(model, guess, 1.0, steps=256)
        assert rep.energy == pytest.approx(2 * np.pi ** 2, abs=1e-3)
        assert np.linalg.norm(periodicity_residual(model, s, T, steps=256)) < 1e-8
        assert rep.speed_variation / np.sqrt(2 * rep.energy) < 1e-6
        # cross-validation: the discrete certificate accepts the orbit
        assert rep.lagrange_residual_control < 1e-6
        assert rep.lagrange_residual_base < 1e-6
        assert rep.is_geodesic()

    def test_degenerate_guess_rejected(self):
        model = flat_torus(2)
        with pytest.raises(hl.DegenerateSolutionError):
            shoot_closed(model, ExtremalState(vec(0, 0), np.zeros(2)), 1.0)

    def test_divergence_reports_history(self):
        model = make_model("round_s2")
        with pytest.raises((hl.ShootingFailureError, hl.ChartDomainError)):
            # absurd period guess far outside the basin
            shoot_closed(model, ExtremalState(vec(1.0, 0.0), vec(0.0, 1.0)),
                         50.0, steps=64, max_iter=4)


class TestLagrangeResidual:
    def test_flat_lattice_loop_certified(self):
        model = flat_torus(2)
        u = Control(np.tile([2 * np.pi, 0.0], (32, 1)))
        rep = lagrange_residual(model, u, vec(0.0, 0.0), lam=vec(2 * np.pi, 0.0))
        assert rep.lagrange_residual_control < 1e-9
        assert rep.lagrange_residual_base < 1e-9
        assert rep.is_geodesic()

    def test_constant_loop_rejected(self):
        model = flat_torus(2)
        rep = lagrange_residual(model, Control(np.zeros((8, 2))), vec(0.1, 0.2))
        assert rep.constant_curve
        assert not rep.is_geodesic()
        assert rep.lagrange_residual_control == 0.0

    def test_open_loop_raises(self):
        model = flat_torus(2)
        u = Control(np.tile([1.0, 0.0], (8, 1)))
        with pytest.raises(hl.ConstraintViolationError):
            lagrange_residual(model, u, vec(0.0, 0.0))

    def test_multiplier_recovered_by_least_squares(self):
        model = flat_torus(2)
        u = Control(np.tile([0.0, 2 * np.pi], (16, 1)))
        rep = lagrange_residual(model, u, vec(0.3, 0.4))
        np.testing.assert_allclose(rep.multiplier, [0.0, 2 * np.pi], atol=1e-9)

    def test_report_speed_variation(self):
        model = flat_torus(2)
        vals = np.tile([2 * np.pi, 0.0], (16, 1))
        vals[3] *= 1.01
        # re-close: bump one interval, compensate on another
        vals[4] = 2 * [2 * np.pi][0] * np.array([1.0, 0.0]) - vals[3]
        u = Control(vals)
        rep = lagrange_residual(model, u, vec(0.0, 0.0))
        assert rep.speed_variation > 1e-3
