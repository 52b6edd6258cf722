import math

import numpy as np
from django.test import SimpleTestCase

from motor_models.exceptions import NonConvergent
from motor_models.magnetics import (
    IDENTITY, K, TABLE_I, MagModel, current_from_flux, energy, flux_from_current_exact,
    flux_from_current_first_order, g_matrix_of_current, hessian, inductance_matrix,
    rotation, saliency_matrix, table_i_model,
)

from .helpers import I_N, isotropic_model, random_currents, random_fluxes


def _close(testcase, a, b, rtol, atol=0.0):
    np.testing.assert_allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=rtol, atol=atol)


class RotationTests(SimpleTestCase):
    def test_zero_is_identity(self):
        self.assertEqual(tuple(float(v) for v in rotation(0.0)), tuple(IDENTITY))

    def test_quarter_turn_is_k(self):
        _close(self, rotation(math.pi / 2).as_array(), K.as_array(), rtol=0, atol=1e-15)

    def test_derivative_is_k_times_rotation(self):
        mu, h = 0.3, 1e-5
        fd = (rotation(mu + h).as_array() - rotation(mu - h).as_array()) / (2 * h)
        _close(self, fd, K.matmul(rotation(mu)).as_array(), rtol=0, atol=1e-8)

    def test_orthogonal_with_unit_determinant(self):
        r = rotation(1.234)
        self.assertAlmostEqual(float(r.det()), 1.0, places=14)
        _close(self, r.matmul(r.T).as_array(), np.eye(2), rtol=0, atol=1e-15)


class EnergyTests(SimpleTestCase):
    def setUp(self):
        self.m = table_i_model()
        self.rng = np.random.default_rng(1)

    def test_origin(self):
        self.assertEqual(energy((0.0, 0.0), self.m), 0.0)
        self.assertEqual(tuple(current_from_flux((0.0, 0.0), self.m)), (0.0, 0.0))

    def test_linear_part(self):
        m = MagModel(L_d=7.9e-3, L_q=8.2e-3, lam=0.155)
        self.assertAlmostEqual(energy((0.1, 0.0), m), 0.63291139, places=7)
        i = current_from_flux((0.02, -0.03), m)
        self.assertAlmostEqual(i.i_d, 0.02 / 7.9e-3, places=12)
        self.assertAlmostEqual(i.i_q, -0.03 / 8.2e-3, places=12)

    def test_d_axis_mirror_symmetry(self):
        pd, pq = random_fluxes(self.rng, 100)
        _close(self, energy((pd, -pq), self.m), energy((pd, pq), self.m), rtol=1e-14)
        i_pos = current_from_flux((pd, pq), self.m)
        i_neg = current_from_flux((pd, -pq), self.m)
        _close(self, i_neg.i_d, i_pos.i_d, rtol=1e-14)
        _close(self, i_neg.i_q, -i_pos.i_q, rtol=1e-14)

    def test_gradient_matches_finite_differences(self):
        pd, pq = random_fluxes(self.rng, 100)
        i = current_from_flux((pd, pq), self.m)
        for k in range(100):
            h = 1e-6 * max(1.0, math.hypot(pd[k], pq[k]))
            fd_d = (energy((pd[k] + h, pq[k]), self.m) - energy((pd[k] - h, pq[k]), self.m)) / (2 * h)
            fd_q = (energy((pd[k], pq[k] + h), self.m) - energy((pd[k], pq[k] - h), self.m)) / (2 * h)
            self.assertLessEqual(abs(fd_d - i.i_d[k]), 1e-6 * max(1.0, abs(i.i_d[k])))
            self.assertLessEqual(abs(fd_q - i.i_q[k]), 1e-6 * max(1.0, abs(i.i_q[k])))


class HessianTests(SimpleTestCase):
    def setUp(self):
        self.m = table_i_model()
        self.rng = np.random.default_rng(2)

    def test_origin(self):
        h = hessian((0.0, 0.0), self.m)
        _close(self, h.as_array(), np.diag([1 / 7.9e-3, 1 / 8.2e-3]), rtol=1e-15)

    def test_off_diagonals_identical(self):
        pd, pq = random_fluxes(self.rng, 50)
        h = hessian((pd, pq), self.m)
        self.assertTrue(np.array_equal(h.m12, h.m21))

    def test_matches_finite_differences_of_current(self):
        pd, pq = random_fluxes(self.rng, 50)
        eps = 1e-7
        for k in range(50):
            h = hessian((pd[k], pq[k]), self.m).as_array()
            plus_d = np.array(current_from_flux((pd[k] + eps, pq[k]), self.m))
            minus_d = np.array(current_from_flux((pd[k] - eps, pq[k]), self.m))
            plus_q = np.array(current_from_flux((pd[k], pq[k] + eps), self.m))
            minus_q = np.array(current_from_flux((pd[k], pq[k] - eps), self.m))
            fd = np.column_stack([(plus_d - minus_d) / (2 * eps), (plus_q - minus_q) / (2 * eps)])
            scale = np.abs(h).max()
            self.assertLessEqual(np.abs(fd - h).max(), 1e-6 * scale)
            self.assertLessEqual(abs(fd[0, 1] - fd[1, 0]), 1e-6 * scale)


class InverseTests(SimpleTestCase):
    def setUp(self):
        self.m = table_i_model()
        self.rng = np.random.default_rng(3)

    def test_zero_current(self):
        self.assertEqual(tuple(flux_from_current_exact((0.0, 0.0), self.m)), (0.0, 0.0))
        self.assertEqual(tuple(flux_from_current_first_order((0.0, 0.0), self.m)), (0.0, 0.0))

    def test_linear_case(self):
        m = self.m.unsaturated()
        phi = flux_from_current_exact((3.0, -4.0), m)
        _close(self, phi, (3.0 * m.L_d, -4.0 * m.L_q), rtol=1e-14)
        phi1 = flux_from_current_first_order((3.0, -4.0), m)
        self.assertEqual(tuple(phi1), (3.0 * m.L_d, -4.0 * m.L_q))

    def test_exact_roundtrip(self):
        i_d, i_q = random_currents(self.rng, 200)
        phi = flux_from_current_exact((i_d, i_q), self.m)
        back = current_from_flux(phi, self.m)
        err = np.hypot(back.i_d - i_d, back.i_q - i_q)
        bound = 1e-9 * np.maximum(1.0, np.hypot(i_d, i_q))
        self.assertTrue(np.all(err <= bound))

    def test_scalar_input_returns_floats(self):
        phi = flux_from_current_exact((3.0, 2.0), self.m)
        self.assertIsInstance(phi.phi_d, float)
        self.assertIsInstance(phi.phi_q, float)

    def test_first_order_inverse_error_is_quadratic(self):
        i = (3.0, 4.0)
        errors = []
        for s in (0.5, 0.25, 0.125):
            m = self.m.scaled(s)
            back = current_from_flux(flux_from_current_first_order(i, m), m)
            errors.append(math.hypot(back.i_d - i[0], back.i_q - i[1]))
        for a, b in zip(errors, errors[1:]):
            self.assertGreaterEqual(a / b, 3.0)
            self.assertLessEqual(a / b, 5.0)

    def test_iteration_limit(self):
        with self.assertRaises(NonConvergent):
            flux_from_current_exact((3.0, 4.0), self.m, max_iter=0)


class InductanceTests(SimpleTestCase):
    def setUp(self):
        self.m = table_i_model()
        self.rng = np.random.default_rng(4)

    def test_g_at_origin(self):
        g = g_matrix_of_current((0.0, 0.0), self.m)
        self.assertAlmostEqual(g.m11, 126.58, places=2)
        self.assertAlmostEqual(g.m22, 121.95, places=2)
        self.assertEqual(g.m12, 0.0)

    def test_g_is_first_order_hessian(self):
        i = (3.0, 4.0)
        gaps = []
        for s in (0.5, 0.25, 0.125):
            m = self.m.scaled(s)
            exact = hessian(flux_from_current_exact(i, m), m).as_array()
            gaps.append(np.abs(g_matrix_of_current(i, m).as_array() - exact).max())
        for a, b in zip(gaps, gaps[1:]):
            self.assertGreaterEqual(a / b, 3.0)
            self.assertLessEqual(a / b, 5.0)

    def test_inductance_inverts_g(self):
        i_d, i_q = random_currents(self.rng, 50)
        for k in range(50):
            i = (i_d[k], i_q[k])
            g = g_matrix_of_current(i, self.m)
            ell = inductance_matrix(i, self.m)
            self.assertEqual(ell.m12, ell.m21)
            _close(self, ell.matmul(g).as_array(), np.eye(2), rtol=0, atol=1e-12)

    def test_inductance_at_origin(self):
        ell = inductance_matrix((0.0, 0.0), self.m)
        _close(self, ell.as_array(), np.diag([7.9e-3, 8.2e-3]), rtol=1e-14)


class SaliencyTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(5)

    def test_unsaturated_closed_form(self):
        m = table_i_model().unsaturated()
        # with 1/L_d in the (1, 1) slot the anisotropy factor is (L_q - L_d) / (L_d + L_q)
        k = (m.L_q - m.L_d) / (m.L_d + m.L_q)
        gain = (m.L_d + m.L_q) / (2 * m.L_d * m.L_q)
        i_d, i_q = random_currents(self.rng, 100)
        mus = self.rng.uniform(-math.pi, math.pi, 100)
        for mu, a, b in zip(mus, i_d, i_q):
            s = saliency_matrix(mu, (a, b), m).as_array()
            expected = gain * np.array([
                [1 + k * math.cos(2 * mu), k * math.sin(2 * mu)],
                [k * math.sin(2 * mu), 1 - k * math.cos(2 * mu)],
            ])
            _close(self, s, expected, rtol=0, atol=1e-12 * gain)

    def test_unsaturated_period_is_pi(self):
        m = table_i_model().unsaturated()
        mus = np.linspace(-3.0, 3.0, 25)
        a = saliency_matrix(mus, (2.0, 1.0), m).as_array()
        b = saliency_matrix(mus + math.pi, (2.0, 1.0), m).as_array()
        _close(self, a, b, rtol=0, atol=1e-12 * 130)

    def test_isotropic_model_has_no_saliency(self):
        m = isotropic_model()
        mus = np.linspace(-math.pi, math.pi, 50)
        s = saliency_matrix(mus, (3.0, -2.0), m)
        for entry, value in zip(s, (1 / m.L_d, 0.0, 0.0, 1 / m.L_d)):
            _close(self, entry, np.full(50, value), rtol=0, atol=1e-12 / m.L_d)

    def test_zero_angle_is_plain_hessian(self):
        m = table_i_model()
        s = saliency_matrix(0.0, (3.0, 2.0), m).as_array()
        h = hessian(flux_from_current_exact((3.0, 2.0), m), m).as_array()
        _close(self, s, h, rtol=1e-14)

    def test_saturated_saliency_depends_on_mu_not_only_2mu(self):
        m = table_i_model()
        a = saliency_matrix(0.4, (3.0, 2.0), m).as_array()
        b = saliency_matrix(0.4 + math.pi, (3.0, 2.0), m).as_array()
        self.assertGreater(np.abs(a - b).max(), 1e-3 * np.abs(a).max())


class NormalizationTests(SimpleTestCase):
    def test_table_i_denormalization(self):
        m = table_i_model()
        expected = 0.0551 / (TABLE_I['L_d'] ** 2 * I_N)
        self.assertAlmostEqual(m.alpha30, expected, places=9)
        self.assertAlmostEqual(m.alpha30, 170.1, delta=0.1)

    def test_roundtrip(self):
        m = table_i_model()
        printed = (TABLE_I['a30'], TABLE_I['a12'], TABLE_I['a40'], TABLE_I['a22'], TABLE_I['a04'])
        _close(self, m.normalized(I_N), printed, rtol=1e-12)

    def test_invalid_inductance(self):
        with self.assertRaises(ValueError):
            MagModel(L_d=0.0, L_q=8e-3, lam=0.1)
