"""
Analysis API views

Read-only JSON endpoints over the default motor: run history, the
observability of an operating point and single position estimates.
"""

import logging
import math
from functools import lru_cache

from django.conf import settings
from django.utils import timezone
from rest_framework import status
from rest_framework.decorators import api_view, permission_classes
from rest_framework.permissions import AllowAny
from rest_framework.response import Response

from experiments.models import SimulationRun
from motor_models.dynamics import TWO_PI, MotorParams
from motor_models.estimator import EstimatorConfig, estimate
from motor_models.exceptions import MotorModelError
from motor_models.observability import (
    MEASUREMENT_LABELS, linearize, observability_rank, permanent_trajectory, phi_vector,
    singular_values,
)

logger = logging.getLogger('hfisim')


@lru_cache(maxsize=1)
def get_motor():
    """Table I motor with the configured inertia"""
    return MotorParams.table_i(J=settings.HFISIM_INERTIA)


def _vector(data, key, default=None):
    """Read a two-component numeric field; None when missing and no default"""
    value = data.get(key, default)
    if value is None:
        return None
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ValueError(f'{key} must be a list of two numbers')
    out = (float(value[0]), float(value[1]))
    if not all(math.isfinite(v) for v in out):
        raise ValueError(f'{key} must be finite')
    return out


def _number(data, key, default=None):
    value = data.get(key, default)
    if value is None:
        raise ValueError(f'{key} is required')
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f'{key} must be finite')
    return value


@api_view(['GET'])
@permission_classes([AllowAny])
def health_check(request):
    """API health check endpoint"""
    try:
        db_healthy = SimulationRun.objects.count() >= 0
    except Exception as e:
        logger.error(f"Health check error: {str(e)}")
        db_healthy = False

    health_data = {
        'status': 'healthy' if db_healthy else 'degraded',
        'timestamp': timezone.now().isoformat(),
        'version': settings.VERSION,
        'components': {
            'database': 'connected' if db_healthy else 'error',
        },
    }
    status_code = status.HTTP_200_OK if db_healthy else status.HTTP_503_SERVICE_UNAVAILABLE
    return Response(health_data, status=status_code)


@api_view(['GET'])
@permission_classes([AllowAny])
def run_list(request):
    """Persisted runs with their error statistics"""
    runs = SimulationRun.objects.all()[:50]
    data = [
        {
            'id': str(run.id),
            'scenario': run.scenario,
            'created_at': run.created_at.isoformat(),
            'max_error_deg': run.max_error_deg,
            'max_error_deg_no_saturation': run.max_error_deg_no_saturation,
            'averaging': run.averaging,
            'observability_points': len(run.observability) if run.observability else 0,
            'runtime': round(run.runtime, 3),
        }
        for run in runs
    ]
    return Response({'count': len(data), 'results': data}, status=status.HTTP_200_OK)


@api_view(['POST'])
@permission_classes([AllowAny])
def observability_point(request):
    """
    Rank and unobservable directions at a permanent trajectory of the default motor.

    Body: {"omega_bar": rad/s, "i_bar": [i_d, i_q]}
    """
    try:
        omega_bar = _number(request.data, 'omega_bar')
        i_bar = _vector(request.data, 'i_bar')
        if i_bar is None:
            raise ValueError('i_bar is required')
    except (TypeError, ValueError) as e:
        return Response({'error': str(e)}, status=status.HTTP_400_BAD_REQUEST)

    p = get_motor()
    try:
        traj = permanent_trajectory(omega_bar, i_bar, p)
        sys = linearize(traj, p)
        rank, basis = observability_rank(sys)
        sigma = singular_values(sys)
        phi = phi_vector(traj.phi_bar_dq, p.mag)
    except MotorModelError as e:
        logger.warning(f"Observability analysis failed: {e}")
        return Response({'error': str(e)}, status=status.HTTP_422_UNPROCESSABLE_ENTITY)

    return Response({
        'trajectory': traj.as_dict(),
        'rank': rank,
        'observable': rank == 5,
        'singular_values': [float(s) for s in sigma],
        'unobservable_basis': [dict(zip(MEASUREMENT_LABELS, map(float, z))) for z in basis],
        'phi': [float(v) for v in phi],
        'fd_error': sys.fd_error,
    }, status=status.HTTP_200_OK)


@api_view(['POST'])
@permission_classes([AllowAny])
def estimate_point(request):
    """
    Single position estimate from demodulated currents.

    Body: {"i_bar": [..], "i_tilde": [..], "u_tilde": [..] (default [15, 0]),
           "frequency_hz": 500, "theta_c": 0, "prev": optional,
           "saturation_model": true, "hf_correction": false, "omega_c": 0}

    hf_correction adds the resistive and mechanical response of the default
    motor to the forward model; omega_c (rad/s) is the frame speed it uses.
    """
    data = request.data
    try:
        i_bar = _vector(data, 'i_bar')
        i_tilde = _vector(data, 'i_tilde')
        if i_bar is None or i_tilde is None:
            raise ValueError('i_bar and i_tilde are required')
        u_tilde = _vector(data, 'u_tilde', [15.0, 0.0])
        hz = _number(data, 'frequency_hz', 500.0)
        if not hz > 0:
            raise ValueError('frequency_hz must be positive')
        theta_c = _number(data, 'theta_c', 0.0)
        prev = None if data.get('prev') is None else _number(data, 'prev')
        omega_c = _number(data, 'omega_c', 0.0)
    except (TypeError, ValueError) as e:
        return Response({'error': str(e)}, status=status.HTTP_400_BAD_REQUEST)

    p = get_motor()
    mag = p.mag if data.get('saturation_model', True) else p.mag.unsaturated()
    cfg = EstimatorConfig(mag=mag, params=p if data.get('hf_correction', False) else None)
    try:
        est = estimate(i_tilde, i_bar, u_tilde, TWO_PI * hz, theta_c, prev=prev, cfg=cfg, omega_c=omega_c)
    except MotorModelError as e:
        return Response({'error': str(e)}, status=status.HTTP_422_UNPROCESSABLE_ENTITY)

    return Response({
        'theta_hat': est.theta_hat,
        'mu': est.mu,
        'residual': est.residual,
        'ambiguous': est.ambiguous,
        'runner_up_theta': est.runner_up_theta,
        'runner_up_residual': est.runner_up_residual,
    }, status=status.HTTP_200_OK)
