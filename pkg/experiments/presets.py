"""
Preset experiments

Desk-scale long test and speed reversal with the V/f + injection drive,
the averaging scaling sweep and the observability rank sweep.
"""

import logging
import time
from dataclasses import replace
from pathlib import Path

from django.conf import settings

from motor_models.dynamics import (
    TWO_PI, InjectionSpec, MotorParams, VfController, long_test_profiles,
    rated_electrical_speed, speed_reversal_profiles,
)
from motor_models.estimator import EstimatorConfig, estimate_trajectory
from motor_models.magnetics import TABLE_I
from motor_models.observability import rank_table
from motor_models.simulate import ScenarioConfig, profile_start, run_closed_loop, verify_averaging

from .config import load_config
from .reporting import CSV_COLUMNS, RunReport, emit_csv, emit_table, error_stats, write_manifest

logger = logging.getLogger('hfisim')

INJECTION_AMPLITUDE = (15.0, 0.0)
INJECTION_HZ = 500.0
SETTLE_TIME = 0.05
PRESET_DURATION = 4.0
AVERAGING_SLICE = 1.0
AVERAGING_HZ = (250.0, 500.0, 1000.0)
OBSERVABILITY_SPEEDS = (0.0, 1e-3, 1e-2, 5e-2, 2e-1)
OBSERVABILITY_TORQUES = (0.3, 0.6, 0.9, 1.2, 1.5)

PRESETS = ('long_test', 'speed_reversal', 'averaging_sweep', 'observability_sweep')


def default_motor():
    return MotorParams.table_i(J=settings.HFISIM_INERTIA)


def _scenario(name, profiles, t_end, seed, hz, params=None):
    p = params or default_motor()
    inj = InjectionSpec(INJECTION_AMPLITUDE, TWO_PI * hz)
    return ScenarioConfig(
        params=p, profiles=profiles, inj=inj, t_end=t_end,
        dt=ScenarioConfig.default_dt(inj), initial=profile_start(profiles, p, inj),
        seed=seed, name=name,
    )


def run_scenario(cfg, estimator_cfg, out_dir, settle_time=SETTLE_TIME, stride=None, source='preset'):
    """
    Simulate a V/f scenario and estimate the position twice: with the given
    estimator model and with the saturation terms of that model set to zero.
    """
    started = time.perf_counter()
    traj = run_closed_loop(cfg, VfController(cfg.profiles, cfg.params.mag))

    # estimate_trajectory assigns new arrays, so the shallow copy keeps both sets
    unsaturated = replace(traj)
    estimate_trajectory(traj, cfg.inj, estimator_cfg, stride=stride, settle_time=settle_time)
    estimate_trajectory(
        unsaturated, cfg.inj, replace(estimator_cfg, mag=estimator_cfg.mag.unsaturated()),
        stride=stride, settle_time=settle_time,
    )

    out_dir = Path(out_dir)
    csv_path = emit_csv(traj, out_dir / f'{cfg.name}.csv')
    write_manifest(csv_path, CSV_COLUMNS, scenario=cfg.name, estimator='saturation model')
    alt_path = emit_csv(unsaturated, out_dir / f'{cfg.name}_no_saturation.csv')
    write_manifest(alt_path, CSV_COLUMNS, scenario=cfg.name, estimator='saturation terms removed')

    max_err, mean_err = error_stats(traj)
    max_alt, mean_alt = error_stats(unsaturated)
    return RunReport(
        scenario=cfg.name,
        runtime=time.perf_counter() - started,
        seed=cfg.seed,
        source=source,
        omega_inj=cfg.inj.omega_inj,
        max_error_deg=max_err,
        mean_error_deg=mean_err,
        max_error_deg_no_saturation=max_alt,
        mean_error_deg_no_saturation=mean_alt,
        csv_path=str(csv_path),
    )


def _estimator(params, saturation_estimator):
    mag = params.mag if saturation_estimator else params.mag.unsaturated()
    return EstimatorConfig(mag=mag, params=params)


def long_test(out_dir, seed=0, hz=INJECTION_HZ, saturation_estimator=True, **_):
    p = default_motor()
    cfg = _scenario('long_test', long_test_profiles(p), PRESET_DURATION, seed, hz, p)
    return run_scenario(cfg, _estimator(p, saturation_estimator), out_dir)


def speed_reversal(out_dir, seed=0, hz=INJECTION_HZ, saturation_estimator=True, **_):
    p = default_motor()
    cfg = _scenario('speed_reversal', speed_reversal_profiles(p), PRESET_DURATION, seed, hz, p)
    return run_scenario(cfg, _estimator(p, saturation_estimator), out_dir)


def averaging_sweep(out_dir, seed=0, n_jobs=1, **_):
    """Full vs averaged runs over the first second of the long test at three frequencies"""
    started = time.perf_counter()
    p = default_motor()
    profiles = long_test_profiles(p)
    inj = InjectionSpec(INJECTION_AMPLITUDE, TWO_PI * INJECTION_HZ)
    cfg = ScenarioConfig(
        params=p, profiles=profiles, inj=inj, t_end=AVERAGING_SLICE,
        dt=ScenarioConfig.default_dt(inj), initial=profile_start(profiles, p, inj.silenced()),
        seed=seed, name='averaging_sweep',
    )
    table = verify_averaging(
        cfg, VfController(profiles, p.mag), [TWO_PI * hz for hz in AVERAGING_HZ], n_jobs=n_jobs,
    )
    records = table.as_records()
    csv_path = emit_table(records, Path(out_dir) / 'averaging_sweep.csv', list(records[0]))
    write_manifest(csv_path, [
        ('omega_inj', 'rad/s', 'injection pulsation'),
        ('e_mech', 'rad', 'sup |theta| error plus 1e-3 s times sup |omega| error'),
        ('e_flux', 'Wb', 'sup flux error after removing the first-order ripple'),
        ('e_flux_raw', 'Wb', 'sup flux error including the ripple'),
    ], scenario='averaging_sweep')
    return RunReport(
        scenario='averaging_sweep',
        runtime=time.perf_counter() - started,
        seed=seed,
        averaging={'rows': records, 'ratios': table.ratios()},
        csv_path=str(csv_path),
    )


def observability_sweep(out_dir, seed=0, n_jobs=1, **_):
    """Rank of the linearized system over speed and load, i_d = 0"""
    started = time.perf_counter()
    p = default_motor()
    w_rated = rated_electrical_speed(p.n)
    tau_rated = TABLE_I['rated_torque']
    rows = rank_table(
        [s * w_rated for s in OBSERVABILITY_SPEEDS],
        [s * tau_rated for s in OBSERVABILITY_TORQUES],
        p, n_jobs=n_jobs,
    )
    flat = [
        {**{k: v for k, v in row.items() if k != 'kernel'},
         'kernel': ' '.join(f'{x:.6g}' for z in row['kernel'] for x in z)}
        for row in rows
    ]
    csv_path = emit_table(flat, Path(out_dir) / 'observability_sweep.csv', list(flat[0]))
    write_manifest(csv_path, [
        ('omega_bar', 'rad/s', 'electrical speed of the operating point'),
        ('tau_L', 'N m', 'load torque'),
        ('i_q', 'A', 'q-axis current, i_d = 0'),
        ('rank', '', 'numerical rank of the observability matrix'),
        ('sigma_ratio', '', 'smallest over largest balanced singular value'),
        ('phi_norm', 'Wb', 'norm of the Phi vector'),
        ('kernel', '', 'unobservable directions in (y_d, y_q, omega, theta, tau_L)'),
    ], scenario='observability_sweep')
    return RunReport(
        scenario='observability_sweep',
        runtime=time.perf_counter() - started,
        seed=seed,
        observability=rows,
        csv_path=str(csv_path),
    )


_RUNNERS = {
    'long_test': long_test,
    'speed_reversal': speed_reversal,
    'averaging_sweep': averaging_sweep,
    'observability_sweep': observability_sweep,
}


def run_preset(name, out_dir=None, seed=None, omega_inj_hz=None, saturation_estimator=True, n_jobs=None):
    """
    Run a named preset, write its CSV and manifest files and return the report.

    omega_inj_hz and saturation_estimator apply to the estimation presets only.
    """
    if name not in _RUNNERS:
        raise KeyError(f'unknown preset {name!r}; choose from {", ".join(PRESETS)}')
    out_dir = Path(out_dir or settings.HFISIM_OUTPUT_DIR)
    seed = settings.HFISIM_DEFAULT_SEED if seed is None else seed
    logger.info(f'Running preset {name} into {out_dir}')
    return _RUNNERS[name](
        out_dir,
        seed=seed,
        hz=omega_inj_hz or INJECTION_HZ,
        saturation_estimator=saturation_estimator,
        n_jobs=n_jobs or settings.HFISIM_SWEEP_JOBS,
    )


def run_config(path, out_dir=None, seed=None, omega_inj_hz=None, saturation_estimator=True):
    """Run the scenario described by a config file; same outputs as the estimation presets"""
    loaded = load_config(path)
    cfg = loaded.scenario
    estimator_cfg = loaded.estimator
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if omega_inj_hz:
        cfg = cfg.with_omega_inj(TWO_PI * omega_inj_hz)
        cfg = replace(cfg, initial=profile_start(cfg.profiles, cfg.params, cfg.inj))
    if not saturation_estimator:
        estimator_cfg = replace(estimator_cfg, mag=estimator_cfg.mag.unsaturated())
    out_dir = Path(out_dir or settings.HFISIM_OUTPUT_DIR)
    return run_scenario(
        cfg, estimator_cfg, out_dir, settle_time=loaded.settle_time, stride=loaded.stride,
        source='config',
    )
