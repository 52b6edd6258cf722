"""
hfisim motor models package
Saturated PMSM model, HF-injection simulation and position estimation
"""

from .dynamics import (
    DriveProfiles, InjectionSpec, MotorParams, MotorStateGd, PiecewiseLinear,
    VfController, Waveform,
)
from .estimator import EstimatorConfig, estimate, estimate_trajectory
from .exceptions import MotorModelError
from .magnetics import MagModel, table_i_model
from .simulate import ScenarioConfig, Trajectory, run_averaged, run_closed_loop, verify_averaging

__all__ = [
    'DriveProfiles', 'InjectionSpec', 'MotorParams', 'MotorStateGd', 'PiecewiseLinear',
    'VfController', 'Waveform', 'EstimatorConfig', 'estimate', 'estimate_trajectory',
    'MotorModelError', 'MagModel', 'table_i_model', 'ScenarioConfig', 'Trajectory',
    'run_averaged', 'run_closed_loop', 'verify_averaging',
]
