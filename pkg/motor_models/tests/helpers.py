"""
Shared fixtures for the motor model test suites
"""

import numpy as np

from motor_models.dynamics import (
    DriveProfiles, InjectionSpec, MotorParams, MotorStateGd, PiecewiseLinear, VfController,
)
from motor_models.magnetics import TABLE_I, MagModel, table_i_model
from motor_models.simulate import ScenarioConfig, ripple_consistent_start

I_N = TABLE_I['I_n']


def table_i_params(J=1e-3, saturated=True):
    mag = table_i_model() if saturated else table_i_model().unsaturated()
    return MotorParams.table_i(J=J, mag=mag)


def isotropic_model():
    return MagModel(L_d=8e-3, L_q=8e-3, lam=0.155)


def random_currents(rng, count, max_norm=1.5 * I_N, min_norm=0.0):
    radius = rng.uniform(min_norm, max_norm, size=count)
    angle = rng.uniform(-np.pi, np.pi, size=count)
    return radius * np.cos(angle), radius * np.sin(angle)


def random_fluxes(rng, count, max_norm=1.5 * TABLE_I['lam']):
    return random_currents(rng, count, max_norm=max_norm)


def vf_scenario(t_end=0.2, omega_c=31.4, u_rd=(0.0, 0.0), tau_L=0.0, u_tilde=(15.0, 0.0),
                hz=500.0, saturated=True, noise_std=0.0, seed=0, ripple_start=True):
    """Constant-speed V/f run of the Table I motor with square-wave injection"""
    p = table_i_params(saturated=saturated)
    profiles = DriveProfiles.constant(t_end, omega_c=omega_c, u_rd=u_rd, tau_L=tau_L)
    inj = InjectionSpec(u_tilde, 2 * np.pi * hz)
    initial = MotorStateGd((0.0, 0.0), omega_c, 0.0, 0.0)
    if ripple_start:
        initial = ripple_consistent_start(initial, inj)
    cfg = ScenarioConfig(
        params=p, profiles=profiles, inj=inj, t_end=t_end,
        dt=ScenarioConfig.default_dt(inj), initial=initial, noise_std=noise_std, seed=seed,
    )
    return cfg, VfController(profiles, p.mag)


def ramped_load_scenario(tau_final=3.0, t_end=0.3, omega_c=31.4, saturated=True, ramp_end=0.15):
    """V/f run whose load and resistive-drop compensation ramp up together from 0.05 s"""
    p = table_i_params(saturated=saturated)
    lam, R, n = p.mag.lam, p.R, p.n
    i_q = 1.1 * tau_final / (1.5 * n * lam)
    ramp = ([0.0, 0.05, ramp_end, t_end], [0.0, 0.0, 1.0, 1.0])
    profiles = DriveProfiles(
        omega_c=PiecewiseLinear.constant(omega_c, t_end),
        u_rd_gamma=PiecewiseLinear.constant(2.0 * R, t_end),
        u_rd_delta=PiecewiseLinear(ramp[0], [R * i_q * v for v in ramp[1]]),
        tau_L=PiecewiseLinear(ramp[0], [tau_final * v for v in ramp[1]]),
    )
    inj = InjectionSpec((15.0, 0.0), 2 * np.pi * 500)
    initial = ripple_consistent_start(MotorStateGd((0.0, 0.0), omega_c, 0.0, 0.0), inj)
    cfg = ScenarioConfig(
        params=p, profiles=profiles, inj=inj, t_end=t_end,
        dt=ScenarioConfig.default_dt(inj), initial=initial,
    )
    return cfg, VfController(profiles, p.mag)
