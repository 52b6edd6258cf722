import math

import numpy as np
from django.test import SimpleTestCase

from motor_models.demod import (
    DemodConfig, SlidingDemodulator, sliding_correlate, sliding_mean, warmup_mask,
)
from motor_models.dynamics import f_primitive
from motor_models.exceptions import SeriesTooShort

OMEGA = 2 * math.pi * 500
DT = (2 * math.pi / OMEGA) / 64


class DemodTestCase(SimpleTestCase):
    def setUp(self):
        self.cfg = DemodConfig(OMEGA, DT)
        self.t = np.arange(1280) * DT
        self.F = f_primitive(OMEGA * self.t)
        self.rng = np.random.default_rng(21)


class DemodConfigTests(SimpleTestCase):
    def test_window_length(self):
        self.assertEqual(DemodConfig(OMEGA, DT).N, 64)

    def test_window_too_short(self):
        with self.assertRaises(ValueError):
            DemodConfig(OMEGA, (2 * math.pi / OMEGA) / 8)

    def test_step_must_divide_period(self):
        with self.assertRaises(ValueError):
            DemodConfig(OMEGA, DT * 1.01)

    def test_weights_sum_to_one(self):
        w = DemodConfig(OMEGA, DT).weights()
        self.assertEqual(len(w), 65)
        self.assertAlmostEqual(w.sum(), 1.0, places=15)


class SlidingMeanTests(DemodTestCase):
    def test_constant(self):
        out = sliding_mean(np.full((1280, 2), 2.5), self.cfg)
        self.assertTrue(np.all(np.isnan(out[:64])))
        np.testing.assert_allclose(out[64:], 2.5, rtol=1e-14)

    def test_ripple_is_removed(self):
        a = 0.8
        out = sliding_mean(1.5 + a * self.F, self.cfg)
        self.assertLess(np.abs(out[64:] - 1.5).max(), 1e-3 * a)

    def test_ramp_lags_half_period(self):
        r = 40.0
        out = sliding_mean(r * self.t, self.cfg)
        T = 2 * math.pi / OMEGA
        np.testing.assert_allclose(out[64:], r * (self.t[64:] - T / 2), rtol=1e-12, atol=1e-12)

    def test_too_short(self):
        with self.assertRaises(SeriesTooShort):
            sliding_mean(np.zeros(10), self.cfg)

    def test_one_period_without_closing_sample_is_too_short(self):
        with self.assertRaises(SeriesTooShort):
            sliding_correlate(np.zeros((self.cfg.N, 2)), self.cfg)
        out = sliding_mean(np.ones(self.cfg.N + 1), self.cfg)
        self.assertAlmostEqual(out[-1], 1.0, places=12)

    def test_warmup_mask(self):
        mask = warmup_mask(200, self.cfg)
        self.assertFalse(mask[:64].any())
        self.assertTrue(mask[64:].all())


class SlidingCorrelateTests(DemodTestCase):
    def test_envelope_of_pure_ripple(self):
        out = sliding_correlate(-0.7 * self.F, self.cfg)
        np.testing.assert_allclose(out[64:], -0.7, rtol=1e-3)

    def test_constant_has_no_envelope(self):
        out = sliding_correlate(np.full(1280, 3.0), self.cfg)
        self.assertLess(np.abs(out[64:]).max(), 1e-3 * 3.0)

    def test_band_limited_envelopes(self):
        t = np.arange(20000) * DT
        slow = OMEGA / 50
        i_bar = 3.0 + 0.2 * np.sin(slow * t)
        i_tilde = 1.0 + 0.3 * np.cos(slow * t)
        signal = i_bar + i_tilde * f_primitive(OMEGA * t)
        T = 2 * math.pi / OMEGA
        bar = sliding_mean(signal, self.cfg)[64:]
        tilde = sliding_correlate(signal, self.cfg, t=t)[64:]
        lagged = t[64:] - T / 2
        true_bar = 3.0 + 0.2 * np.sin(slow * lagged)
        true_tilde = 1.0 + 0.3 * np.cos(slow * lagged)
        self.assertLess(np.abs(bar - true_bar).max() / np.abs(true_bar).max(), 0.01)
        self.assertLess(np.abs(tilde - true_tilde).max() / np.abs(true_tilde).max(), 0.01)

    def test_linearity(self):
        x = self.rng.normal(size=(1280, 2))
        y = self.rng.normal(size=(1280, 2))
        for op in (sliding_mean, sliding_correlate):
            combined = op(2.0 * x - 0.5 * y, self.cfg)[64:]
            separate = 2.0 * op(x, self.cfg)[64:] - 0.5 * op(y, self.cfg)[64:]
            np.testing.assert_allclose(combined, separate, rtol=0, atol=1e-12)

    def test_model_class_is_exact(self):
        signal = np.column_stack([0.4 + 1.1 * self.F, -2.0 - 0.3 * self.F])
        bar = sliding_mean(signal, self.cfg)[64:]
        tilde = sliding_correlate(signal, self.cfg)[64:]
        np.testing.assert_allclose(bar, np.tile([0.4, -2.0], (len(bar), 1)), rtol=1e-3)
        np.testing.assert_allclose(tilde, np.tile([1.1, -0.3], (len(tilde), 1)), rtol=1e-3)


class StreamingTests(DemodTestCase):
    def test_matches_batch(self):
        signal = np.column_stack([1.0 + 0.5 * self.F, np.sin(50 * self.t)])
        bar = sliding_mean(signal, self.cfg)
        tilde = sliding_correlate(signal, self.cfg, t=self.t)
        demod = SlidingDemodulator(self.cfg)
        for k in range(300):
            out = demod.push(self.t[k], signal[k])
            if k < 64:
                self.assertIsNone(out)
            else:
                np.testing.assert_allclose(out[0], bar[k], rtol=1e-12, atol=1e-14)
                np.testing.assert_allclose(out[1], tilde[k], rtol=1e-12, atol=1e-14)

    def test_reset(self):
        demod = SlidingDemodulator(self.cfg)
        for k in range(70):
            demod.push(self.t[k], (1.0, 1.0))
        self.assertTrue(demod.ready)
        demod.reset()
        self.assertFalse(demod.ready)
