import io
import json
import math
import tempfile
from pathlib import Path
from unittest import mock

import numpy as np
import pandas as pd
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, override_settings, tag

from motor_models.exceptions import NonFinite
from motor_models.magnetics import TABLE_I
from motor_models.simulate import Trajectory, run_closed_loop
from motor_models.tests.helpers import vf_scenario

from .config import ParseError, ValidationError, load_config, parse_config
from .models import SimulationRun
from .presets import run_preset
from .reporting import COLUMN_NAMES, CSV_COLUMNS, RunReport, emit_csv, persist_report, write_manifest

SCENARIO = """
[motor]
R = 2.1
n = 5
J = 1e-3
lam = 0.155
L_d = 7.9e-3
L_q = 8.2e-3
I_n = 5.19

[saturation]
a30 = 0.0551
a12 = 0.0545
a40 = 0.0170
a22 = 0.0249
a04 = 0.0067

[injection]
amplitude_gamma = 15
frequency_hz = 500

[profiles]
omega_c = 0:31.4, 0.05:31.4
u_rd_gamma = 0:4.2, 0.05:4.2

[estimator]
saturation_model = yes

[run]
name = short_vf
t_end = 0.05
seed = 4
noise_std = 0.01
"""


class ConfigTests(SimpleTestCase):
    def test_table_i_block_is_denormalized(self):
        loaded = parse_config(SCENARIO)
        mag = loaded.scenario.params.mag
        self.assertAlmostEqual(mag.alpha30, 0.0551 / (7.9e-3 ** 2 * 5.19), places=9)
        self.assertAlmostEqual(mag.alpha30, 170.1, delta=0.1)
        printed = (0.0551, 0.0545, 0.0170, 0.0249, 0.0067)
        np.testing.assert_allclose(mag.normalized(5.19), printed, rtol=1e-12)

    def test_defaults(self):
        loaded = parse_config(SCENARIO)
        cfg = loaded.scenario
        self.assertEqual(cfg.name, 'short_vf')
        self.assertEqual(cfg.seed, 4)
        self.assertAlmostEqual(cfg.dt, 1.0 / (500 * 64))
        self.assertEqual(cfg.samples_per_period, 64)
        self.assertEqual(loaded.estimator.grid_size, 720)
        self.assertIs(loaded.estimator.mag, cfg.params.mag)
        self.assertEqual(cfg.initial.omega, 31.4)

    @override_settings(HFISIM_INERTIA=2e-3)
    def test_omitted_motor_constants_use_defaults(self):
        text = SCENARIO.replace('J = 1e-3\n', '').replace('I_n = 5.19\n', '')
        params = parse_config(text).scenario.params
        self.assertEqual(params.J, 2e-3)
        printed = (0.0551, 0.0545, 0.0170, 0.0249, 0.0067)
        np.testing.assert_allclose(params.mag.normalized(TABLE_I['I_n']), printed, rtol=1e-12)

    def test_missing_resistance(self):
        text = SCENARIO.replace('R = 2.1\n', '')
        with self.assertRaises(ValidationError) as ctx:
            parse_config(text)
        self.assertEqual(ctx.exception.field, 'R')

    def test_step_too_large_for_injection(self):
        text = SCENARIO.replace('t_end = 0.05', 't_end = 0.05\ndt = 1e-4')
        with self.assertRaises(ValidationError) as ctx:
            parse_config(text)
        self.assertEqual(ctx.exception.field, 'dt')

    def test_bad_number_reports_line(self):
        text = SCENARIO.replace('lam = 0.155', 'lam = 0.15.5')
        with self.assertRaises(ParseError) as ctx:
            parse_config(text)
        self.assertEqual(ctx.exception.field, 'lam')
        self.assertEqual(ctx.exception.line, text.splitlines().index('lam = 0.15.5') + 1)

    def test_bad_breakpoint(self):
        text = SCENARIO.replace('omega_c = 0:31.4, 0.05:31.4', 'omega_c = 0:31.4, 0.05')
        with self.assertRaises(ParseError) as ctx:
            parse_config(text)
        self.assertEqual(ctx.exception.field, 'omega_c')

    def test_profiles_must_cover_horizon(self):
        text = SCENARIO.replace('t_end = 0.05', 't_end = 0.5')
        with self.assertRaises(ValidationError) as ctx:
            parse_config(text)
        self.assertEqual(ctx.exception.field, 't_end')

    def test_missing_section_header(self):
        with self.assertRaises(ParseError):
            parse_config('R = 2.1\n')

    def test_unsaturated_estimator(self):
        loaded = parse_config(SCENARIO.replace('saturation_model = yes', 'saturation_model = no'))
        self.assertEqual(loaded.estimator.mag.alphas, (0.0,) * 5)
        self.assertNotEqual(loaded.scenario.params.mag.alpha30, 0.0)

    def test_drive_response_correction(self):
        loaded = parse_config(SCENARIO)
        self.assertIs(loaded.estimator.params, loaded.scenario.params)
        off = parse_config(SCENARIO.replace('saturation_model = yes', 'hf_correction = no'))
        self.assertIsNone(off.estimator.params)

    def test_bad_boolean_reports_field(self):
        with self.assertRaises(ParseError) as ctx:
            parse_config(SCENARIO.replace('saturation_model = yes', 'hf_correction = maybe'))
        self.assertEqual(ctx.exception.field, 'hf_correction')

    def test_shipped_scenario(self):
        loaded = load_config(Path(settings.BASE_DIR) / 'scenarios' / 'table_i_vf.ini')
        self.assertEqual(loaded.scenario.name, 'table_i_vf')
        self.assertAlmostEqual(loaded.scenario.profiles.tau_L(0.8), 6.06)
        self.assertEqual(loaded.settle_time, 0.05)

    def test_load_from_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'scenario.ini'
            path.write_text(SCENARIO.replace('name = short_vf\n', ''), encoding='utf-8')
            loaded = load_config(path)
        self.assertEqual(loaded.scenario.name, 'scenario')


class CsvTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)

    def test_empty_trajectory_gives_header_only(self):
        path = emit_csv(Trajectory.empty(), self.dir / 'empty.csv')
        self.assertEqual(path.read_text(), ','.join(COLUMN_NAMES) + '\n')

    def test_rows_and_roundtrip(self):
        cfg, ctrl = vf_scenario(t_end=0.01)
        traj = run_closed_loop(cfg, ctrl)
        path = emit_csv(traj, self.dir / 'run.csv')
        raw = path.read_bytes()
        self.assertNotIn(b'\r\n', raw)
        self.assertEqual(raw.count(b'\n'), len(traj) + 1)

        frame = pd.read_csv(path)
        self.assertEqual(list(frame.columns), COLUMN_NAMES)
        for column, series in (('t', traj.t), ('phi_gamma', traj.x[:, 0]), ('i_delta', traj.i_gd[:, 1]),
                               ('u_gamma', traj.u_gd[:, 0]), ('theta_c', traj.theta_c)):
            np.testing.assert_allclose(frame[column].to_numpy(), series, rtol=1e-8)
        self.assertTrue(frame['theta_hat'].isna().all())

    def test_manifest(self):
        path = emit_csv(Trajectory.empty(), self.dir / 'empty.csv')
        manifest = json.loads(write_manifest(path, CSV_COLUMNS, scenario='x').read_text())
        self.assertEqual(manifest['file'], 'empty.csv')
        self.assertEqual([c['name'] for c in manifest['columns']], COLUMN_NAMES)
        self.assertEqual(manifest['scenario'], 'x')


class RunReportTests(TestCase):
    def test_persist(self):
        report = RunReport(scenario='unit', runtime=1.25, max_error_deg=2.0, mean_error_deg=0.5)
        run = persist_report(report)
        self.assertEqual(SimulationRun.objects.count(), 1)
        self.assertTrue(run.has_estimates)
        self.assertIn('max 2.00 deg', '\n'.join(report.summary_lines()))


class RunCommandTests(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)
        self.config = self.dir / 'short.ini'
        self.config.write_text(SCENARIO, encoding='utf-8')

    def _run(self, *args):
        out = io.StringIO()
        call_command('run', *args, '--out', str(self.dir / 'out'), stdout=out)
        return out.getvalue()

    def test_config_run(self):
        output = self._run(str(self.config))
        self.assertIn('Finished short_vf', output)
        frame = pd.read_csv(self.dir / 'out' / 'short_vf.csv')
        self.assertEqual(len(frame), 1601)
        self.assertTrue((self.dir / 'out' / 'short_vf_no_saturation.csv').is_file())
        self.assertTrue((self.dir / 'out' / 'short_vf.manifest.json').is_file())
        run = SimulationRun.objects.get()
        self.assertEqual(run.source, 'config')
        self.assertEqual(run.seed, 4)
        self.assertIsNotNone(run.max_error_deg)

    def test_deterministic_for_fixed_seed(self):
        self._run(str(self.config), '--seed', '7', '--no-save')
        first = (self.dir / 'out' / 'short_vf.csv').read_bytes()
        self._run(str(self.config), '--seed', '7', '--no-save')
        self.assertEqual((self.dir / 'out' / 'short_vf.csv').read_bytes(), first)
        self.assertEqual(SimulationRun.objects.count(), 0)

    def test_unknown_target(self):
        with self.assertRaises(CommandError) as ctx:
            self._run('no_such_preset')
        self.assertEqual(ctx.exception.returncode, 2)

    def test_invalid_config(self):
        self.config.write_text(SCENARIO.replace('R = 2.1\n', ''), encoding='utf-8')
        with self.assertRaises(CommandError) as ctx:
            self._run(str(self.config))
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn('R', str(ctx.exception))

    def test_numerical_failure(self):
        with mock.patch('experiments.management.commands.run.run_config', side_effect=NonFinite('blow-up')):
            with self.assertRaises(CommandError) as ctx:
                self._run(str(self.config))
        self.assertEqual(ctx.exception.returncode, 3)


class ViewTests(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        csv_path = emit_csv(Trajectory.empty(), Path(self.tmp.name) / 'empty.csv')
        self.run = SimulationRun.objects.create(scenario='long_test', runtime=3.0, csv_path=str(csv_path))

    def test_reports(self):
        response = self.client.get('/experiments/reports/')
        self.assertEqual(response.status_code, 200)
        data = response.json()
        self.assertEqual(data['count'], 1)
        self.assertEqual(data['runs'][0]['scenario'], 'long_test')

    def test_export(self):
        response = self.client.get('/experiments/export/', {'run': str(self.run.id)})
        self.assertEqual(response.status_code, 200)
        self.assertEqual(b''.join(response.streaming_content).decode(), ','.join(COLUMN_NAMES) + '\n')

    def test_export_unknown_run(self):
        response = self.client.get('/experiments/export/', {'run': 'not-a-uuid'})
        self.assertEqual(response.status_code, 404)
        self.assertEqual(self.client.get('/experiments/export/').status_code, 400)


@tag('slow')
class PresetTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_long_test(self):
        report = run_preset('long_test', out_dir=self.tmp.name, n_jobs=1)
        self.assertLessEqual(report.max_error_deg, 5.0)
        self.assertGreater(report.max_error_deg_no_saturation, report.max_error_deg)
        self.assertGreater(report.max_error_deg_no_saturation, 15.0)

        frame = pd.read_csv(Path(self.tmp.name) / 'long_test_no_saturation.csv')
        loaded = frame[(frame['t'] > 1.3) & (frame['t'] < 2.7)]
        self.assertGreater(loaded['err_deg'].abs().max(), 15.0)

    def test_speed_reversal(self):
        report = run_preset('speed_reversal', out_dir=self.tmp.name, n_jobs=1)
        self.assertLessEqual(report.max_error_deg, 5.0)
        frame = pd.read_csv(Path(self.tmp.name) / 'speed_reversal.csv')
        crossing = frame[(frame['t'] > 2.1) & (frame['t'] < 2.4)]
        self.assertLessEqual(crossing['err_deg'].abs().max(), 5.0)

    def test_averaging_sweep(self):
        report = run_preset('averaging_sweep', out_dir=self.tmp.name, n_jobs=1)
        for ratio in report.averaging['ratios']:
            self.assertTrue(0.15 <= ratio['e_mech'] <= 0.40)
            self.assertTrue(0.15 <= ratio['e_flux'] <= 0.40)
            self.assertTrue(0.4 <= ratio['e_flux_raw'] <= 0.6)

    @override_settings(HFISIM_SWEEP_JOBS=1)
    def test_observability_sweep(self):
        report = run_preset('observability_sweep', out_dir=self.tmp.name)
        self.assertEqual(len(report.observability), 25)
        for row in report.observability:
            expected = 4 if row['omega_bar'] == 0.0 else 5
            self.assertEqual(row['rank'], expected)
        frame = pd.read_csv(Path(self.tmp.name) / 'observability_sweep.csv')
        self.assertEqual(len(frame), 25)
        self.assertTrue(math.isclose(frame['tau_L'].max(), 1.5 * TABLE_I['rated_torque'], rel_tol=1e-6))
