"""
Rotor position estimation

Nonlinear least squares on the saliency matrix: find mu = theta - theta_c
such that the modelled ripple envelope matches the demodulated i_tilde.
The leading model is S(mu, i_bar) u_tilde / omega_inj; with the motor
constants supplied, the high-frequency response of the linearized drive
(resistive drop, frame rotation and the speed ripple fed back through the
back-EMF) is added up to (A / omega_inj)^4. Global grid search followed by
golden-section refinement.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .demod import DemodConfig, sliding_correlate, sliding_mean
from .dynamics import MotorParams, Waveform, gd_linearization
from .exceptions import NoInjection
from .magnetics import MagModel, saliency_matrix

logger = logging.getLogger('hfisim')

INV_PHI = (math.sqrt(5) - 1) / 2
INV_PHI_SQUARE = (3 - math.sqrt(5)) / 2
AMBIGUITY_RATIO = 0.1

POLICY_NEAREST_ZERO = 'nearest_zero'
POLICY_GLOBAL = 'global'

# <F1^2>/<F^2> and <F2^2>/<F^2>, F1 and F2 the zero-mean primitives of F
RIPPLE_MOMENTS = {
    Waveform.SQUARE: (math.pi ** 2 / 10.0, 17.0 * math.pi ** 4 / 1680.0),
    Waveform.SINUSOID: (1.0, 1.0),
}


def wrap_angle(x):
    """Wrap to (-pi, pi]"""
    return math.pi - np.mod(math.pi - np.asarray(x, dtype=float), 2.0 * math.pi)


@dataclass(frozen=True)
class EstimatorConfig:
    """
    Args:
        mag: magnetic model used by the estimator, may differ from the plant's
        grid_size: uniform grid points over (-pi, pi]
        tol: golden-section bracket width (rad)
        continuity_window: an ambiguous estimate only follows prev when a
            candidate lies within this distance of it (rad)
        initial_guess: 'nearest_zero' resolves an ambiguity without prev toward
            mu = 0; 'global' always keeps the lowest residual
        params: motor constants (R, n, J) enabling the high-frequency
            response correction; None keeps the leading model
    """
    mag: MagModel
    grid_size: int = 720
    tol: float = 1e-5
    continuity_window: float = math.pi / 2
    initial_guess: str = POLICY_NEAREST_ZERO
    params: Optional[MotorParams] = None

    def __post_init__(self):
        if self.grid_size < 90:
            raise ValueError('grid_size must be at least 90')
        if not self.tol > 0:
            raise ValueError('tol must be positive')
        if self.initial_guess not in (POLICY_NEAREST_ZERO, POLICY_GLOBAL):
            raise ValueError(f'unknown initial_guess policy {self.initial_guess!r}')

    def grid(self):
        step = 2.0 * math.pi / self.grid_size
        return -math.pi + step * np.arange(1, self.grid_size + 1)


@dataclass(frozen=True)
class PositionEstimate:
    theta_hat: float
    mu: float
    residual: float
    runner_up_mu: Optional[float]
    runner_up_residual: Optional[float]
    ambiguous: bool

    @property
    def runner_up_theta(self):
        if self.runner_up_mu is None:
            return None
        return self.theta_hat - self.mu + self.runner_up_mu


def synthesize_i_tilde(mu, i_bar, u_tilde, omega_inj, mag, params=None, omega_c=0.0,
                       waveform=Waveform.SQUARE):
    """
    Forward model of the ripple envelope.

    Without params this is S(mu, i_bar) u_tilde / omega_inj. With params the
    state ripple's F-component (I - m1 X + m2 X^2) b / omega_inj, X = A^2 /
    omega_inj^2 and b = (u_tilde, 0, 0), is read through C; m1 and m2 are
    the ripple moments of the waveform.
    """
    if params is None:
        s = saliency_matrix(mu, i_bar, mag)
        return s.apply(u_tilde[0] / omega_inj, u_tilde[1] / omega_inj)
    A, C = gd_linearization(mu, i_bar, mag, params, omega_c)
    m1, m2 = RIPPLE_MOMENTS[Waveform(waveform)]
    b = np.zeros(A.shape[:-1])
    b[..., 0] = u_tilde[0] / omega_inj
    b[..., 1] = u_tilde[1] / omega_inj
    X = (A @ A) / (omega_inj * omega_inj)
    Xb = np.einsum('...ij,...j->...i', X, b)
    XXb = np.einsum('...ij,...j->...i', X, Xb)
    x = b - m1 * Xb + m2 * XXb
    i_tilde = np.einsum('...ij,...j->...i', C, x)
    return i_tilde[..., 0], i_tilde[..., 1]


def residual(mu, i_tilde, i_bar, u_tilde, omega_inj, mag, params=None, omega_c=0.0,
             waveform=Waveform.SQUARE):
    """||i_tilde - synthesize_i_tilde(mu, ...)||^2 in A^2; mu may be an array"""
    p_g, p_dl = synthesize_i_tilde(mu, i_bar, u_tilde, omega_inj, mag, params, omega_c, waveform)
    e_g = i_tilde[0] - p_g
    e_dl = i_tilde[1] - p_dl
    r = e_g * e_g + e_dl * e_dl
    return float(r) if np.ndim(r) == 0 else r


def golden_section(f, a, b, tol):
    """Minimize a unimodal f on [a, b]; returns (x, f(x)) at the final bracket midpoint"""
    a, b = min(a, b), max(a, b)
    h = b - a
    if h > tol:
        n = int(math.ceil(math.log(tol / h) / math.log(INV_PHI)))
        c = a + INV_PHI_SQUARE * h
        d = a + INV_PHI * h
        yc = f(c)
        yd = f(d)
        for _ in range(n - 1):
            if yc < yd:
                b, d, yd = d, c, yc
                h = INV_PHI * h
                c = a + INV_PHI_SQUARE * h
                yc = f(c)
            else:
                a, c, yc = c, d, yd
                h = INV_PHI * h
                d = a + INV_PHI * h
                yd = f(d)
        if yc < yd:
            b = d
        else:
            a = c
    x = 0.5 * (a + b)
    return x, f(x)


def _grid_minima(r):
    """Indices of circular local minima sorted by residual"""
    left = np.roll(r, 1)
    right = np.roll(r, -1)
    idx = np.flatnonzero((r <= left) & (r < right))
    if len(idx) == 0:
        idx = np.array([int(np.argmin(r))])
    return idx[np.argsort(r[idx], kind='stable')]


def _circular_distance(a, b):
    return abs(float(wrap_angle(a - b)))


def estimate(i_tilde, i_bar, u_tilde, omega_inj, theta_c, prev=None, cfg=None, mag=None,
             omega_c=0.0, waveform=Waveform.SQUARE):
    """
    Estimate the rotor angle theta_hat = theta_c + argmin residual.

    The best two grid minima are refined by golden section inside one grid
    step on either side. When the runner-up residual is within 10% of the
    best the estimate is flagged ambiguous and the candidate nearest prev
    (or nearest mu = 0 without prev) is kept. omega_c and waveform only
    matter when cfg.params enables the high-frequency response correction.

    Raises:
        NoInjection: u_tilde is zero
    """
    if cfg is None:
        if mag is None:
            raise ValueError('estimate needs an EstimatorConfig or a MagModel')
        cfg = EstimatorConfig(mag=mag)
    if math.hypot(u_tilde[0], u_tilde[1]) == 0.0:
        raise NoInjection('position estimation needs a non-zero injection amplitude')

    m = cfg.mag
    grid = cfg.grid()
    model = (cfg.params, omega_c, waveform)
    r_grid = residual(grid, i_tilde, i_bar, u_tilde, omega_inj, m, *model)
    h = 2.0 * math.pi / cfg.grid_size

    def objective(mu):
        return residual(mu, i_tilde, i_bar, u_tilde, omega_inj, m, *model)

    candidates = []
    for k in _grid_minima(r_grid)[:2]:
        mu_k, r_k = golden_section(objective, grid[k] - h, grid[k] + h, cfg.tol)
        candidates.append((r_k, float(wrap_angle(mu_k))))
    candidates.sort()

    best_r, best_mu = candidates[0]
    runner_r, runner_mu = candidates[1] if len(candidates) > 1 else (None, None)

    ambiguous = False
    if runner_r is not None:
        scale = max(best_r, 1e-12 * (i_tilde[0] ** 2 + i_tilde[1] ** 2))
        ambiguous = runner_r - best_r <= AMBIGUITY_RATIO * scale

    if ambiguous:
        if prev is not None:
            target = float(wrap_angle(prev - theta_c))
            d_best = _circular_distance(best_mu, target)
            d_runner = _circular_distance(runner_mu, target)
            if d_runner < d_best and d_runner <= cfg.continuity_window:
                best_r, best_mu, runner_r, runner_mu = runner_r, runner_mu, best_r, best_mu
        elif cfg.initial_guess == POLICY_NEAREST_ZERO:
            if abs(runner_mu) < abs(best_mu):
                best_r, best_mu, runner_r, runner_mu = runner_r, runner_mu, best_r, best_mu

    return PositionEstimate(
        theta_hat=theta_c + best_mu,
        mu=best_mu,
        residual=best_r,
        runner_up_mu=runner_mu,
        runner_up_residual=runner_r,
        ambiguous=ambiguous,
    )


def estimate_trajectory(traj, inj, cfg, stride=None, settle_time=0.0):
    """
    Demodulate the recorded currents and estimate the position along a run.

    One estimate is made every `stride` samples (default one injection
    period) and mu_hat is held until the next, so theta_hat = theta_c + mu_hat
    follows theta_c sample by sample. The frame speed passed to each
    estimate is the mean over its demodulation window. Fills i_bar_gd,
    i_tilde_gd, theta_hat, err (wrapped, rad) and valid on the trajectory
    and returns it.
    """
    dt = traj.t[1] - traj.t[0]
    dcfg = DemodConfig(inj.omega_inj, dt, inj.waveform)
    N = dcfg.N
    stride = stride or N
    K = len(traj)

    i_bar = sliding_mean(traj.i_gd, dcfg)
    i_tilde = sliding_correlate(traj.i_gd, dcfg, t=traj.t)
    mu_hat = np.full(K, np.nan)

    prev_mu = None
    ambiguous = 0
    count = 0
    for k in range(N, K, stride):
        prev = None if prev_mu is None else traj.theta_c[k] + prev_mu
        # frame speed averaged over the demodulation window
        omega_c = (traj.theta_c[k] - traj.theta_c[k - N]) / (traj.t[k] - traj.t[k - N])
        est = estimate(
            i_tilde[k], i_bar[k], inj.u_tilde, inj.omega_inj, traj.theta_c[k], prev=prev, cfg=cfg,
            omega_c=omega_c, waveform=inj.waveform,
        )
        mu_hat[k:k + stride] = est.mu
        prev_mu = est.mu
        ambiguous += est.ambiguous
        count += 1

    theta_hat = traj.theta_c + mu_hat
    traj.i_bar_gd = i_bar
    traj.i_tilde_gd = i_tilde
    traj.theta_hat = theta_hat
    traj.err = wrap_angle(theta_hat - traj.theta)
    traj.valid = np.isfinite(mu_hat) & (traj.t >= settle_time)
    logger.info(f'Estimated position at {count} instants, {ambiguous} flagged ambiguous')
    return traj
