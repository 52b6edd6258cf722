import math

import numpy as np
from django.test import SimpleTestCase

from motor_models.dynamics import (
    SQUARE_F2_MEAN, ConstantController, DriveProfiles, InjectionSpec, MotorParams,
    MotorStateDq, MotorStateGd, PiecewiseLinear, VfController, Waveform, controller_step,
    dq_derivatives, dq_to_ab, dq_vector_field, electromagnetic_torque, f_eval, f_primitive,
    gd_currents, gd_derivatives, gd_to_ab, long_test_profiles, magnetic_energy_balance,
    rated_electrical_speed, speed_reversal_profiles, vf_control,
)
from motor_models.exceptions import OutOfProfileDomain
from motor_models.magnetics import current_from_flux, table_i_model
from motor_models.simulate import rk4_step

from .helpers import table_i_params


class WaveformTests(SimpleTestCase):
    def setUp(self):
        # midpoint rule on a fine grid, exact for piecewise-linear F up to the corners
        n = 2 ** 20
        self.sigma = (np.arange(n) + 0.5) * (2 * math.pi / n)

    def test_square_values(self):
        self.assertEqual(f_eval(math.pi / 2), 1.0)
        self.assertEqual(f_eval(3 * math.pi / 2), -1.0)
        self.assertEqual(f_eval(0.0), 1.0)
        self.assertEqual(f_eval(math.pi), -1.0)
        self.assertEqual(f_eval(2 * math.pi + 0.1), 1.0)

    def test_sinusoid_values(self):
        self.assertEqual(f_eval(0.0, Waveform.SINUSOID), 1.0)
        self.assertAlmostEqual(f_primitive(math.pi / 2, Waveform.SINUSOID), 1.0)

    def test_zero_means(self):
        for waveform in Waveform:
            self.assertLess(abs(np.mean(f_eval(self.sigma, waveform))), 1e-12)
            self.assertLess(abs(np.mean(f_primitive(self.sigma, waveform))), 1e-12)

    def test_triangle_peak(self):
        self.assertAlmostEqual(float(f_primitive(math.pi)), math.pi / 2, places=15)
        self.assertAlmostEqual(float(f_primitive(0.0)), -math.pi / 2, places=15)
        self.assertLessEqual(np.abs(f_primitive(self.sigma)).max(), math.pi / 2)

    def test_primitive_derivative(self):
        h = 1e-6
        for sigma in (0.3, 1.7, 3.5, 5.9):
            fd = (f_primitive(sigma + h) - f_primitive(sigma - h)) / (2 * h)
            self.assertAlmostEqual(float(fd), f_eval(sigma), places=6)

    def test_square_f2_mean(self):
        mean_f2 = np.mean(f_primitive(self.sigma) ** 2)
        self.assertLess(abs(mean_f2 - SQUARE_F2_MEAN) / SQUARE_F2_MEAN, 1e-10)


class ProfileTests(SimpleTestCase):
    def test_interpolation(self):
        p = PiecewiseLinear([0.0, 1.0, 3.0], [0.0, 10.0, -10.0])
        self.assertEqual(p(0.5), 5.0)
        self.assertEqual(p(2.0), 0.0)
        self.assertEqual(p(3.0), -10.0)

    def test_out_of_domain(self):
        p = PiecewiseLinear([0.0, 1.0], [1.0, 2.0])
        with self.assertRaises(OutOfProfileDomain):
            p(1.5)
        with self.assertRaises(OutOfProfileDomain):
            p(-0.1)

    def test_breakpoints_must_increase(self):
        with self.assertRaises(ValueError):
            PiecewiseLinear([0.0, 0.0], [1.0, 2.0])

    def test_drive_profile_domain(self):
        profiles = DriveProfiles.constant(2.0, omega_c=10.0, u_rd=(1.0, 2.0), tau_L=0.5)
        self.assertEqual(profiles.end, 2.0)
        self.assertEqual(profiles.u_rd(1.0), (1.0, 2.0))

    def test_long_test_envelope(self):
        profiles = long_test_profiles()
        w_rated = rated_electrical_speed()
        self.assertEqual(profiles.end, 4.0)
        speeds = [profiles.omega_c(t) for t in np.linspace(0.0, 4.0, 401)]
        self.assertLessEqual(max(abs(w) for w in speeds), 0.02 * w_rated + 1e-9)
        self.assertLess(min(speeds), 0.0)
        self.assertAlmostEqual(profiles.tau_L(2.0), 1.5 * 6.06)
        self.assertEqual(profiles.tau_L(4.0), 0.0)

    def test_speed_reversal_crosses_zero_under_load(self):
        profiles = speed_reversal_profiles()
        self.assertAlmostEqual(profiles.omega_c(2.25), 0.0, places=12)
        self.assertAlmostEqual(profiles.tau_L(2.25), 1.5 * 6.06)
        self.assertGreater(profiles.u_rd(2.25)[1], 0.0)


class ParamsTests(SimpleTestCase):
    def test_invariants(self):
        mag = table_i_model()
        with self.assertRaises(ValueError):
            MotorParams(mag=mag, R=0.0, n=5)
        with self.assertRaises(ValueError):
            MotorParams(mag=mag, R=2.1, n=0)
        with self.assertRaises(ValueError):
            MotorParams(mag=mag, R=2.1, n=5, J=-1.0)

    def test_injection_invariants(self):
        with self.assertRaises(ValueError):
            InjectionSpec((15.0, 0.0), 0.0)
        self.assertFalse(InjectionSpec((0.0, 0.0)).active)


class DqDynamicsTests(SimpleTestCase):
    def setUp(self):
        self.p = table_i_params()
        self.rng = np.random.default_rng(11)

    def test_zero_state(self):
        d = dq_derivatives(MotorStateDq(), (0.0, 0.0), 0.0, self.p)
        self.assertTrue(np.array_equal(d, np.zeros(4)))

    def test_sign_symmetry(self):
        for _ in range(20):
            phi = self.rng.uniform(-0.1, 0.1, 2)
            omega, theta = self.rng.uniform(-300, 300), self.rng.uniform(-3, 3)
            u = self.rng.uniform(-50, 50, 2)
            tau = self.rng.uniform(-5, 5)
            d = dq_derivatives(MotorStateDq(tuple(phi), omega, theta), tuple(u), tau, self.p)
            mirrored = dq_derivatives(
                MotorStateDq((phi[0], -phi[1]), -omega, -theta), (u[0], -u[1]), -tau, self.p,
            )
            expected = np.array([d[0], -d[1], -d[2], -d[3]])
            np.testing.assert_allclose(mirrored, expected, rtol=1e-12, atol=1e-12 * np.abs(d).max())

    def test_torque_expression(self):
        i = (1.0, 3.0)
        self.assertAlmostEqual(electromagnetic_torque(i, (0.155, 0.0), 5), 5 * 1.5 * 3.0 * 0.155)

    def test_energy_decays_without_input(self):
        p = table_i_params(saturated=False)
        x = np.array([0.05, -0.03, 200.0, 0.0])
        E0 = magnetic_energy_balance(MotorStateDq.from_array(x), p)
        previous = E0
        dt = 1e-5
        for k in range(5000):
            x = rk4_step(lambda t, y: dq_vector_field(y, (0.0, 0.0), 0.0, p), x, k * dt, dt)
            E = magnetic_energy_balance(MotorStateDq.from_array(x), p)
            self.assertLessEqual(E, previous * (1 + 1e-9))
            previous = E
        self.assertLessEqual(previous, 1e-3 * E0)


class GdDynamicsTests(SimpleTestCase):
    def setUp(self):
        self.p = table_i_params()

    def test_zero_state(self):
        d = gd_derivatives(MotorStateGd(), (0.0, 0.0), 0.0, 0.0, self.p)
        self.assertTrue(np.array_equal(d, np.zeros(5)))

    def test_aligned_frames_match_dq(self):
        s_dq = MotorStateDq((0.03, 0.02), 150.0, 0.7)
        s_gd = MotorStateGd((0.03, 0.02), 150.0, 0.7, 0.7)
        d_dq = dq_derivatives(s_dq, (10.0, 20.0), 1.0, self.p)
        d_gd = gd_derivatives(s_gd, (10.0, 20.0), 150.0, 1.0, self.p)
        np.testing.assert_allclose(d_gd[:4], d_dq, rtol=1e-14, atol=1e-12)
        self.assertEqual(d_gd[4], 150.0)

    def test_frames_agree_along_trajectories(self):
        p = self.p
        dt, steps = 1e-5, 10000
        omega_c = 60.0
        theta0, theta_c0 = 0.3, -0.2
        mu0 = theta0 - theta_c0
        phi_dq = np.array([0.02, 0.01])
        c, s = math.cos(mu0), math.sin(mu0)
        phi_gd = np.array([c * phi_dq[0] - s * phi_dq[1], s * phi_dq[0] + c * phi_dq[1]])

        def u_ab(t):
            return (20.0 * math.cos(omega_c * t), 20.0 * math.sin(omega_c * t))

        def f_dq(t, x):
            u = dq_to_ab(u_ab(t), -x[3])
            return dq_vector_field(x, u, 0.5, p)

        def f_gd(t, x):
            u = gd_to_ab(u_ab(t), -x[4])
            return gd_derivatives(MotorStateGd.from_array(x), u, omega_c, 0.5, p)

        x_dq = np.array([phi_dq[0], phi_dq[1], 0.0, theta0])
        x_gd = np.array([phi_gd[0], phi_gd[1], 0.0, theta0, theta_c0])
        for k in range(steps):
            x_dq = rk4_step(f_dq, x_dq, k * dt, dt)
            x_gd = rk4_step(f_gd, x_gd, k * dt, dt)
        i_ab_dq = dq_to_ab(current_from_flux((x_dq[0], x_dq[1]), p.mag), x_dq[3])
        i_ab_gd = gd_to_ab(gd_currents((x_gd[0], x_gd[1]), x_gd[3] - x_gd[4], p.mag), x_gd[4])
        np.testing.assert_allclose(i_ab_gd, i_ab_dq, rtol=0, atol=1e-8)


class ControlTests(SimpleTestCase):
    def setUp(self):
        self.mag = table_i_model()

    def test_zero_profiles(self):
        omega_c, u = vf_control(0.5, DriveProfiles.zero(1.0), InjectionSpec((0.0, 0.0)), self.mag)
        self.assertEqual((omega_c, u), (0.0, (0.0, 0.0)))

    def test_feed_forward_and_injection(self):
        profiles = DriveProfiles.constant(1.0, omega_c=100.0)
        inj = InjectionSpec((15.0, 0.0), 2 * math.pi * 500)
        # f = +1 in the first half period
        omega_c, u = vf_control(0.0001, profiles, inj, self.mag)
        self.assertEqual(omega_c, 100.0)
        self.assertAlmostEqual(u[0], 15.0)
        self.assertAlmostEqual(u[1], 15.5)

    def test_injection_toggles(self):
        inj = InjectionSpec((15.0, 0.0), 2 * math.pi * 500)
        profiles = DriveProfiles.zero(1.0)
        _, first = vf_control(0.25 * inj.period, profiles, inj, self.mag)
        _, second = vf_control(0.75 * inj.period, profiles, inj, self.mag)
        self.assertEqual(first, (15.0, 0.0))
        self.assertEqual(second, (-15.0, 0.0))

    def test_out_of_domain(self):
        with self.assertRaises(OutOfProfileDomain):
            vf_control(2.0, DriveProfiles.zero(1.0), None, self.mag)

    def test_vf_ignores_currents(self):
        ctrl = VfController(DriveProfiles.constant(1.0, omega_c=40.0, u_rd=(2.0, 3.0)), self.mag)
        a = controller_step(ctrl, (0.0, 0.0), 0.1, np.zeros(0), 0.5)
        b = controller_step(ctrl, (5.0, -7.0), 0.1, np.zeros(0), 0.5)
        self.assertEqual(a[:2], b[:2])
        self.assertEqual(len(a[2]), 0)

    def test_constant_controller(self):
        ctrl = ConstantController(omega_c=12.0, u_gd=(1.0, -1.0), eta_rate=(0.5,))
        omega_c, u, d_eta = controller_step(ctrl, (9.0, 9.0), 3.0, np.zeros(1), 7.0)
        self.assertEqual((omega_c, u), (12.0, (1.0, -1.0)))
        self.assertEqual(list(d_eta), [0.5])
