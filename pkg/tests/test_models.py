"""Frames, exact endpoint formulas, the group law and lattice reduction."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import horloop as hl
from horloop.models import (Point, chart_to_quat, contact_t3, flat_torus,
                            frame_at, group_translate, heisenberg,
                            heisenberg_bracket_matrix,
                            heisenberg_endpoint_exact, make_model, quat_to_chart,
                            reduce_mod_lattice)


def vec(*xs):
    return np.array(xs, dtype=float)


class TestFrames:
    def test_heisenberg_frame_at_origin(self):
        F = frame_at(heisenberg(1), vec(0, 0, 0))
        np.testing.assert_allclose(F[:, 0], [1, 0, 0])
        np.testing.assert_allclose(F[:, 1], [0, 1, 0])
        A = heisenberg_bracket_matrix(1)
        np.testing.assert_allclose(A, [[0, 1], [-1, 0]])

    def test_flat_torus_identity_frame(self, rng):
        m = flat_torus(2)
        for _ in range(5):
            x = rng.uniform(-5, 5, size=2)
            np.testing.assert_allclose(frame_at(m, x), np.eye(2))

    def test_contact_t3_frame_annihilates_contact_form(self, rng):
        # direct substitution into omega = cos(z) dx - sin(z) dy
        m = contact_t3()
        for _ in range(20):
            x = rng.uniform(-7, 7, size=3)
            F = frame_at(m, x)
            omega = vec(np.cos(x[2]), -np.sin(x[2]), 0.0)
            np.testing.assert_allclose(omega @ F, [0.0, 0.0], atol=1e-14)
        F0 = frame_at(m, vec(0, 0, 0.37))
        np.testing.assert_allclose(F0[:, 0], [0, 0, 1])
        np.testing.assert_allclose(F0[:, 1], [np.sin(0.37), np.cos(0.37), 0])

    def test_frame_jacobians_match_finite_differences(self, all_models, rng):
        step = 1e-5
        for model in all_models:
            for _ in range(100):
                x = rng.uniform(-0.8, 0.8, size=model.dim)
                J = model.frame_jacobian_eval(x)
                scale = max(1.0, np.abs(J).max())
                for c in range(model.dim):
                    dx = np.zeros(model.dim)
                    dx[c] = step
                    fd = (model.frame_eval(x + dx) - model.frame_eval(x - dx)) / (2 * step)
                    err = np.abs(J[:, :, c].T - fd).max() / scale
                    assert err < 1e-6, f"{model.name} column {c}: {err}"

    def test_riemannian_mode_frames_invertible(self, rng):
        for model in (flat_torus(2), hl.make_model("round_s2")):
            assert model.rank == model.dim
            for _ in range(20):
                x = rng.uniform(-2, 2, size=model.dim)
                assert abs(np.linalg.det(frame_at(model, x))) > 1e-12

    def test_chart_domain_guard(self):
        m = hl.make_model("round_s2")
        with pytest.raises(hl.ChartDomainError):
            frame_at(m, vec(1e3, 0))


class TestHeisenbergEndpoint:
    def test_zero_control(self):
        u = hl.Control(np.zeros((16, 2)))
        np.testing.assert_allclose(heisenberg_endpoint_exact(1, u), np.zeros(3))

    def test_constant_control_no_vertical_drift(self, rng):
        # skew-symmetry kills the vertical displacement of constant controls
        for a in (1, 2):
            for _ in range(10):
                c = rng.standard_normal(2 * a)
                u = hl.Control(np.tile(c, (32, 1)))
                end = heisenberg_endpoint_exact(a, u)
                np.testing.assert_allclose(end[:-1], c, atol=1e-12)
                assert abs(end[-1]) < 1e-12

    @staticmethod
    def _simpson_endpoint(values, total_nodes=100_000):
        """Quadrature oracle: Simpson panels within each control interval.

        The integrand <u, A int u> jumps with the step control, so the
        panels are aligned with the grid; around 1e5 nodes overall.
        """
        n, l = values.shape
        per = max(2 * int(np.ceil(total_nodes / (2 * n))), 2)   # even panel count
        knots = np.vstack([np.zeros(l), np.cumsum(values, axis=0) / n])
        A = heisenberg_bracket_matrix(l // 2)
        z = 0.0
        h = 1.0 / (n * per)
        w = np.ones(per + 1)
        w[1:-1:2], w[2:-1:2] = 4.0, 2.0
        for j in range(n):
            s = np.linspace(0.0, 1.0 / n, per + 1)
            W_t = knots[j][None, :] + values[j][None, :] * s[:, None]
            integrand = (values[j] @ A) @ W_t.T
            z += h / 3.0 * (w @ integrand)
        return np.concatenate([knots[-1], [z]])

    def test_circle_control_vertical_area(self):
        n = 64
        t = (np.arange(n) + 0.5) / n
        r = 1.3
        vals = r * np.stack([np.cos(2 * np.pi * t), np.sin(2 * np.pi * t)], axis=1)
        exact = heisenberg_endpoint_exact(1, hl.Control(vals))
        simpson = self._simpson_endpoint(vals)
        np.testing.assert_allclose(exact, simpson, atol=1e-10)
        # continuum limit of the same family is (0, 0, -r^2 / 2 pi)
        n = 4096
        t = (np.arange(n) + 0.5) / n
        vals = r * np.stack([np.cos(2 * np.pi * t), np.sin(2 * np.pi * t)], axis=1)
        fine = heisenberg_endpoint_exact(1, hl.Control(vals))
        np.testing.assert_allclose(fine, [0, 0, -r ** 2 / (2 * np.pi)], atol=1e-6)

    def test_matches_simpson_on_random_controls(self, rng):
        for a in (1, 2):
            for _ in range(5):
                vals = rng.standard_normal((32, 2 * a))
                exact = heisenberg_endpoint_exact(a, hl.Control(vals))
                simpson = self._simpson_endpoint(vals)
                np.testing.assert_allclose(exact, simpson, atol=1e-10)

    def test_rank_mismatch(self):
        with pytest.raises(hl.RankMismatchError):
            heisenberg_endpoint_exact(2, hl.Control(np.zeros((8, 2))))


class TestGroupTranslate:
    def test_identity_element(self, rng):
        for a in (1, 2):
            m = 2 * a + 1
            x = rng.standard_normal(m)
            np.testing.assert_allclose(group_translate(a, x, np.zeros(m)), x)
            np.testing.assert_allclose(group_translate(a, np.zeros(m), x), x)

    def test_against_ode_composition(self):
        # flow (1,0) for unit time, then (0,1): endpoints must compose by L
        model = heisenberg(1)
        u1 = hl.Control(np.tile([1.0, 0.0], (16, 1)))
        u2 = hl.Control(np.tile([0.0, 1.0], (16, 1)))
        p1 = hl.integrate(model, u1, np.zeros(3))
        p2 = hl.integrate(model, u2, p1.endpoint)
        composed = group_translate(1, p1.endpoint,
                                   heisenberg_endpoint_exact(1, u2))
        np.testing.assert_allclose(p2.endpoint, composed, atol=1e-12)
        np.testing.assert_allclose(
            group_translate(1, vec(1, 0, 0), vec(0, 1, 0)), [1, 1, -1])

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 2),
           st.lists(st.floats(-5, 5), min_size=15, max_size=15))
    def test_associative(self, a, xs):
        m = 2 * a + 1
        x, y, z = (np.array(xs[:m]), np.array(xs[5:5 + m]), np.array(xs[10:10 + m]))
        lhs = group_translate(a, x, group_translate(a, y, z))
        rhs = group_translate(a, group_translate(a, x, y), z)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


class TestLattice:
    def test_example_reduction(self):
        m = flat_torus(2)
        p = reduce_mod_lattice(m, vec(2 * np.pi + 1.0, -0.5))
        np.testing.assert_allclose(p.coords, [1.0, 2 * np.pi - 0.5])
        np.testing.assert_array_equal(p.klass, [1, -1])

    def test_inside_fundamental_domain(self):
        m = flat_torus(2)
        p = reduce_mod_lattice(m, vec(1.0, 2.0))
        np.testing.assert_array_equal(p.klass, [0, 0])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=2))
    def test_idempotent(self, xs):
        m = flat_torus(2)
        p = reduce_mod_lattice(m, np.array(xs))
        q = reduce_mod_lattice(m, p.coords)
        np.testing.assert_array_equal(q.klass, [0, 0])
        np.testing.assert_allclose(q.coords, p.coords, atol=1e-9)

    def test_requires_lattice(self):
        with pytest.raises(hl.UnsupportedOperationError):
            reduce_mod_lattice(heisenberg(1), vec(0, 0, 0))


class TestExactOracles:
    """Closed-form endpoint oracles for the curved built-ins."""

    def test_contact_t3_oracle_vs_integrator(self, rng):
        m = contact_t3()
        for _ in range(10):
            vals = rng.standard_normal((32, 2)) * 2.0
            x0 = rng.uniform(-2, 2, size=3)
            path = hl.integrate(m, hl.Control(vals), x0, substeps=8)
            np.testing.assert_allclose(path.endpoint, m.oracle(vals, x0), atol=1e-9)

    def test_contact_s3_oracle_vs_integrator(self, rng):
        m = make_model("contact_s3")
        for _ in range(10):
            vals = rng.standard_normal((32, 2)) * 1.5
            x0 = 0.2 * rng.standard_normal(3)
            path = hl.integrate(m, hl.Control(vals), x0, substeps=8)
            np.testing.assert_allclose(path.endpoint, m.oracle(vals, x0), atol=1e-8)

    def test_s3_chart_round_trip(self, rng):
        for _ in range(20):
            p = rng.standard_normal(3)
            np.testing.assert_allclose(quat_to_chart(chart_to_quat(p)), p, atol=1e-12)

    def test_point_klass_pairing(self):
        p = Point(coords=vec(1.0, 2.0))
        assert p.klass is None
