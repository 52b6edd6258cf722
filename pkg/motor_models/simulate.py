"""
Fixed-step closed-loop simulation

RK4 integration of the gamma-delta closed loop, the injection-free averaged
companion system, and the numerical check of the averaging decomposition.
"""

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from .dynamics import (
    DriveProfiles, InjectionSpec, MotorParams, MotorStateGd, Waveform,
    f_eval, f_primitive, gd_currents, gd_linearization, gd_vector_field,
)
from .exceptions import NonFinite
from .magnetics import current_from_flux, flux_from_current_exact

logger = logging.getLogger('hfisim')

STEPS_PER_PERIOD = 64
# injection pulsation over the fastest slow mode below which averaging is only approximate
AVERAGING_SEPARATION = 20.0


def rk4_step(f, x, t, dt):
    """
    Classical fourth-order Runge-Kutta step of dx/dt = f(t, x).

    Raises:
        NonFinite: any component of the new state is inf or nan
    """
    if not dt > 0:
        raise ValueError('dt must be positive')
    half = 0.5 * dt
    k1 = f(t, x)
    k2 = f(t + half, x + half * k1)
    k3 = f(t + half, x + half * k2)
    k4 = f(t + dt, x + dt * k3)
    x_new = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x_new)):
        raise NonFinite(f'non-finite state after step at t={t:.6g} s')
    return x_new


@dataclass(frozen=True)
class ScenarioConfig:
    params: MotorParams
    profiles: DriveProfiles
    inj: InjectionSpec
    t_end: float
    dt: float
    initial: MotorStateGd = field(default_factory=MotorStateGd)
    noise_std: float = 0.0
    seed: int = 0
    name: str = 'scenario'

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError('dt must be positive')
        if not self.t_end > 0:
            raise ValueError('t_end must be positive')
        if self.inj.active and self.dt > self.inj.period / STEPS_PER_PERIOD * (1.0 + 1e-9):
            raise ValueError(
                f'dt={self.dt:.3e} s exceeds T/{STEPS_PER_PERIOD} for the active injection'
            )
        if self.noise_std < 0:
            raise ValueError('noise_std must be non-negative')
        if self.t_end > self.profiles.end + 1e-9 * max(1.0, self.t_end):
            raise ValueError(
                f't_end={self.t_end} s runs past the profile domain ending at {self.profiles.end} s'
            )

    @staticmethod
    def default_dt(inj):
        return inj.period / STEPS_PER_PERIOD

    @property
    def n_samples(self):
        return int(math.floor(self.t_end / self.dt + 1e-9)) + 1

    @property
    def samples_per_period(self):
        return int(round(self.inj.period / self.dt))

    def with_omega_inj(self, omega_inj):
        """Same scenario at another injection frequency, dt locked to T/64"""
        inj = replace(self.inj, omega_inj=omega_inj)
        return replace(self, inj=inj, dt=self.default_dt(inj))


@dataclass
class Trajectory:
    """
    Uniformly sampled closed-loop run.

    x columns are [phi_gamma, phi_delta, omega, theta, theta_c]. The estimation
    series stay None until estimate_trajectory fills them.
    """
    t: np.ndarray
    x: np.ndarray
    i_gd: np.ndarray
    u_gd: np.ndarray
    eta: Optional[np.ndarray] = None
    i_bar_gd: Optional[np.ndarray] = None
    i_tilde_gd: Optional[np.ndarray] = None
    theta_hat: Optional[np.ndarray] = None
    err: Optional[np.ndarray] = None
    valid: Optional[np.ndarray] = None

    @classmethod
    def empty(cls):
        return cls(t=np.zeros(0), x=np.zeros((0, 5)), i_gd=np.zeros((0, 2)), u_gd=np.zeros((0, 2)))

    def __len__(self):
        return len(self.t)

    @property
    def phi_gd(self):
        return self.x[:, 0:2]

    @property
    def omega(self):
        return self.x[:, 2]

    @property
    def theta(self):
        return self.x[:, 3]

    @property
    def theta_c(self):
        return self.x[:, 4]

    @property
    def has_estimates(self):
        return self.theta_hat is not None

    def state(self, k):
        return MotorStateGd.from_array(self.x[k])


def ripple_consistent_start(state, inj, t0=0.0):
    """Offset the initial flux by the first-order ripple (u_tilde/omega_inj) F(omega_inj t0)"""
    r_g, r_dl = inj.flux_ripple(t0)
    return MotorStateGd(
        (state.phi_gd[0] + float(r_g), state.phi_gd[1] + float(r_dl)),
        state.omega, state.theta, state.theta_c,
    )


def profile_start(profiles, p, inj, t0=0.0):
    """
    Initial state at the profiles' operating point: current u_rd(t0)/R aligned
    with the controller frame, speed omega_c(t0), plus the ripple offset.
    """
    u_g, u_dl = profiles.u_rd(t0)
    phi = flux_from_current_exact((u_g / p.R, u_dl / p.R), p.mag)
    state = MotorStateGd((float(phi[0]), float(phi[1])), profiles.omega_c(t0), 0.0, 0.0)
    return ripple_consistent_start(state, inj, t0)


def _integrate(cfg, ctrl, inj):
    p = cfg.params
    tau_L = cfg.profiles.tau_L
    frozen = inj.active and inj.waveform == Waveform.SQUARE
    continuous = inj.active and not frozen
    uses_currents = ctrl.uses_currents
    mag = p.mag
    n_eta = ctrl.eta_dim
    held = [0.0]

    def field_(t, X):
        if uses_currents:
            i_gd = gd_currents((X[0], X[1]), X[3] - X[4], mag)
        else:
            i_gd = None
        omega_c, u, d_eta = ctrl.step(i_gd, X[4], X[5:], t)
        u_g, u_dl = u
        if frozen:
            u_g += inj.u_tilde[0] * held[0]
            u_dl += inj.u_tilde[1] * held[0]
        elif continuous:
            f_t = f_eval(inj.omega_inj * t, inj.waveform)
            u_g += inj.u_tilde[0] * f_t
            u_dl += inj.u_tilde[1] * f_t
        dx = gd_vector_field(X, (u_g, u_dl), omega_c, tau_L(t), p)
        if n_eta:
            return np.concatenate([dx, d_eta])
        return dx

    K = cfg.n_samples
    dt = cfg.dt
    t = np.arange(K) * dt
    X = np.concatenate([cfg.initial.as_array(), ctrl.initial_eta()])
    xs = np.empty((K, 5))
    us = np.empty((K, 2))
    etas = np.empty((K, n_eta))

    for k in range(K):
        t_k = t[k]
        if frozen:
            # mid-step sample; the square-wave corners sit on step boundaries
            held[0] = f_eval(inj.omega_inj * (t_k + 0.5 * dt))
        xs[k] = X[:5]
        etas[k] = X[5:]
        omega_c, u, _ = ctrl.step(
            gd_currents((X[0], X[1]), X[3] - X[4], mag) if uses_currents else None, X[4], X[5:], t_k
        )
        f_k = held[0] if frozen else (f_eval(inj.omega_inj * t_k, inj.waveform) if continuous else 0.0)
        us[k] = (u[0] + inj.u_tilde[0] * f_k, u[1] + inj.u_tilde[1] * f_k)
        if k + 1 < K:
            X = rk4_step(field_, X, t_k, dt)

    mu = xs[:, 3] - xs[:, 4]
    i_g, i_dl = gd_currents_batch(xs[:, 0], xs[:, 1], mu, mag)
    i_gd = np.column_stack([i_g, i_dl])
    return Trajectory(t=t, x=xs, i_gd=i_gd, u_gd=us, eta=etas if n_eta else None)


def gd_currents_batch(phi_g, phi_dl, mu, m):
    """Vectorized gd_currents over sample arrays"""
    c = np.cos(mu)
    s = np.sin(mu)
    i_d, i_q = current_from_flux((c * phi_g + s * phi_dl, -s * phi_g + c * phi_dl), m)
    return c * i_d - s * i_q, s * i_d + c * i_q


def _add_noise(traj, cfg):
    if cfg.noise_std > 0 and len(traj):
        rng = np.random.default_rng(cfg.seed)
        traj.i_gd = traj.i_gd + rng.normal(0.0, cfg.noise_std, size=traj.i_gd.shape)
    return traj


def run_closed_loop(cfg, ctrl):
    """
    Integrate the gamma-delta closed loop with injection.

    The controller and the plant see noiseless currents; measurement noise,
    when configured, is added to the recorded currents only.
    """
    started = time.perf_counter()
    logger.info(f'Running {cfg.name}: {cfg.n_samples} samples, dt={cfg.dt:.3e} s')
    traj = _add_noise(_integrate(cfg, ctrl, cfg.inj), cfg)
    logger.info(f'Finished {cfg.name} in {time.perf_counter() - started:.2f} s')
    return traj


def run_averaged(cfg, ctrl):
    """Same closed loop with the injection amplitude forced to zero"""
    started = time.perf_counter()
    logger.info(f'Running averaged {cfg.name}: {cfg.n_samples} samples')
    traj = _add_noise(_integrate(cfg, ctrl, cfg.inj.silenced()), cfg)
    logger.info(f'Finished averaged {cfg.name} in {time.perf_counter() - started:.2f} s')
    return traj


def flux_ripple_peak_to_peak(traj, samples_per_period, component=0, periods=4):
    """Mean per-period peak-to-peak flux over the last few injection periods"""
    phi = traj.phi_gd[:, component]
    n = samples_per_period
    if len(phi) < periods * n + 1:
        periods = max(1, (len(phi) - 1) // n)
    spans = []
    for j in range(periods):
        stop = len(phi) - j * n
        window = phi[stop - n - 1:stop]
        spans.append(window.max() - window.min())
    return float(np.mean(spans))


@dataclass
class AveragingRow:
    omega_inj: float
    e_mech: float
    e_flux: float
    e_flux_raw: float

    def as_dict(self):
        return {
            'omega_inj': self.omega_inj,
            'e_mech': self.e_mech,
            'e_flux': self.e_flux,
            'e_flux_raw': self.e_flux_raw,
        }


@dataclass
class AveragingTable:
    rows: list

    def ratios(self):
        """Error ratios between consecutive frequencies"""
        out = []
        for a, b in zip(self.rows, self.rows[1:]):
            out.append({
                'omega_ratio': b.omega_inj / a.omega_inj,
                'e_mech': b.e_mech / a.e_mech,
                'e_flux': b.e_flux / a.e_flux,
                'e_flux_raw': b.e_flux_raw / a.e_flux_raw,
            })
        return out

    def as_records(self):
        return [r.as_dict() for r in self.rows]


def averaging_errors(full, avg, inj, t_scale=1e-3, keep_fraction=0.8):
    """Sup-norm errors between full and averaged runs over the final part of the horizon"""
    start = int(math.floor(len(full) * (1.0 - keep_fraction)))
    sl = slice(start, None)
    e_theta = np.max(np.abs(full.theta[sl] - avg.theta[sl]))
    e_omega = np.max(np.abs(full.omega[sl] - avg.omega[sl]))
    diff = full.phi_gd[sl] - avg.phi_gd[sl]
    F = f_primitive(inj.omega_inj * full.t[sl], inj.waveform)
    ripple = np.outer(F, np.asarray(inj.u_tilde) / inj.omega_inj)
    return AveragingRow(
        omega_inj=inj.omega_inj,
        e_mech=float(e_theta + e_omega * t_scale),
        e_flux=float(np.max(np.hypot(*(diff - ripple).T))),
        e_flux_raw=float(np.max(np.hypot(*diff.T))),
    )


def slow_mode_bound(cfg):
    """
    Largest |eigenvalue| (rad/s) of the injection-free drive linearized at
    the scenario's initial state and frame speed.
    """
    s = cfg.initial
    mu = s.theta - s.theta_c
    mag = cfg.params.mag
    i_bar = gd_currents(s.phi_gd, mu, mag)
    A, _ = gd_linearization(mu, i_bar, mag, cfg.params, cfg.profiles.omega_c(0.0))
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def check_averaging_frequencies(cfg, omegas, separation=AVERAGING_SEPARATION):
    """
    Compare each injection pulsation with the fastest slow mode.

    Logs a warning for an omega below `separation` times the bound.

    Raises:
        ValueError: an omega does not exceed the bound at all
    """
    bound = slow_mode_bound(cfg)
    for w in omegas:
        if w <= bound:
            raise ValueError(
                f'omega_inj={w:.1f} rad/s does not exceed the fastest slow mode ({bound:.1f} rad/s)'
            )
        if w < separation * bound:
            logger.warning(
                f'omega_inj={w:.1f} rad/s is only {w / bound:.1f}x the fastest slow mode '
                f'({bound:.1f} rad/s), averaging errors may exceed their asymptotic order'
            )
    return bound


def _averaging_point(cfg, ctrl, omega_inj, t_scale, keep_fraction):
    cfg_w = cfg.with_omega_inj(omega_inj)
    avg = _integrate(cfg_w, ctrl, cfg_w.inj.silenced())
    full_cfg = replace(cfg_w, initial=ripple_consistent_start(cfg_w.initial, cfg_w.inj))
    full = _integrate(full_cfg, ctrl, full_cfg.inj)
    row = averaging_errors(full, avg, cfg_w.inj, t_scale, keep_fraction)
    logger.info(
        f'Averaging check at omega_inj={omega_inj:.1f} rad/s: '
        f'e_mech={row.e_mech:.3e}, e_flux={row.e_flux:.3e}, raw={row.e_flux_raw:.3e}'
    )
    return row


def verify_averaging(cfg, ctrl, omegas, t_scale=1e-3, keep_fraction=0.8, n_jobs=1):
    """
    Compare full and averaged runs over a set of injection frequencies.

    Each run uses dt = T/64 of its own frequency. The full system starts
    from the ripple-consistent state so that both runs share one averaged
    solution. Frequencies are first checked by check_averaging_frequencies.

    Returns:
        AveragingTable: one row per frequency, sorted by increasing omega
    """
    omegas = sorted(float(w) for w in omegas)
    if len(omegas) < 3:
        raise ValueError('verify_averaging needs at least three injection frequencies')
    if not cfg.inj.active:
        raise ValueError('verify_averaging needs an active injection')
    check_averaging_frequencies(cfg, omegas)
    rows = Parallel(n_jobs=n_jobs)(
        delayed(_averaging_point)(cfg, ctrl, w, t_scale, keep_fraction) for w in omegas
    )
    return AveragingTable(rows=list(rows))
