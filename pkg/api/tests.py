import math

from django.test import TestCase
from rest_framework.test import APIClient

from experiments.models import SimulationRun
from motor_models.estimator import synthesize_i_tilde

from .views import get_motor


class HealthTests(TestCase):
    def test_health(self):
        response = APIClient().get('/api/health/')
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.json()['status'], 'healthy')


class RunListTests(TestCase):
    def test_lists_persisted_runs(self):
        SimulationRun.objects.create(scenario='speed_reversal', runtime=2.5, max_error_deg=1.2)
        data = APIClient().get('/api/runs/').json()
        self.assertEqual(data['count'], 1)
        self.assertEqual(data['results'][0]['scenario'], 'speed_reversal')
        self.assertEqual(data['results'][0]['observability_points'], 0)


class ObservabilityEndpointTests(TestCase):
    def setUp(self):
        self.client = APIClient()

    def test_standstill_is_not_observable(self):
        response = self.client.post('/api/observability/', {'omega_bar': 0.0, 'i_bar': [0.0, 3.0]}, format='json')
        self.assertEqual(response.status_code, 200)
        data = response.json()
        self.assertEqual(data['rank'], 4)
        self.assertFalse(data['observable'])
        self.assertEqual(len(data['unobservable_basis']), 1)
        self.assertEqual(set(data['unobservable_basis'][0]), {'y_d', 'y_q', 'omega', 'theta', 'tau_L'})

    def test_low_speed_is_observable(self):
        response = self.client.post('/api/observability/', {'omega_bar': 15.7, 'i_bar': [0.0, 3.0]}, format='json')
        data = response.json()
        self.assertEqual(data['rank'], 5)
        self.assertEqual(data['unobservable_basis'], [])
        self.assertLessEqual(data['fd_error'], 1e-6)

    def test_invalid_input(self):
        response = self.client.post('/api/observability/', {'omega_bar': 1.0, 'i_bar': [1.0]}, format='json')
        self.assertEqual(response.status_code, 400)
        response = self.client.post('/api/observability/', {'i_bar': [1.0, 2.0]}, format='json')
        self.assertEqual(response.status_code, 400)


class EstimateEndpointTests(TestCase):
    def setUp(self):
        self.client = APIClient()
        self.omega = 2 * math.pi * 500

    def test_recovers_angle(self):
        i_bar = (3.0, 2.0)
        i_tilde = synthesize_i_tilde(0.7, i_bar, (15.0, 0.0), self.omega, get_motor().mag)
        payload = {'i_bar': list(i_bar), 'i_tilde': [float(v) for v in i_tilde], 'theta_c': 0.2}
        response = self.client.post('/api/estimate/', payload, format='json')
        self.assertEqual(response.status_code, 200)
        data = response.json()
        self.assertAlmostEqual(data['theta_hat'], 0.9, delta=1e-4)
        self.assertFalse(data['ambiguous'])

    def test_recovers_angle_with_drive_response(self):
        p = get_motor()
        i_bar = (2.0, 6.0)
        i_tilde = synthesize_i_tilde(-0.4, i_bar, (15.0, 0.0), self.omega, p.mag, p, omega_c=31.4)
        payload = {
            'i_bar': list(i_bar), 'i_tilde': [float(v) for v in i_tilde],
            'hf_correction': True, 'omega_c': 31.4,
        }
        response = self.client.post('/api/estimate/', payload, format='json')
        self.assertEqual(response.status_code, 200)
        self.assertAlmostEqual(response.json()['theta_hat'], -0.4, delta=1e-4)

    def test_zero_injection_is_unprocessable(self):
        payload = {'i_bar': [1.0, 0.0], 'i_tilde': [0.1, 0.0], 'u_tilde': [0.0, 0.0]}
        response = self.client.post('/api/estimate/', payload, format='json')
        self.assertEqual(response.status_code, 422)
        self.assertIn('error', response.json())

    def test_missing_currents(self):
        response = self.client.post('/api/estimate/', {'i_bar': [1.0, 0.0]}, format='json')
        self.assertEqual(response.status_code, 400)
