"""
Electromechanical PMSM dynamics in the dq and gamma-delta frames,
the sensorless controller interface, the V/f law and the injection waveform.
"""

import bisect
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .exceptions import OutOfProfileDomain
from .magnetics import (
    MagModel, TABLE_I, current_from_flux, energy, flux_from_current_exact, hessian, rotation,
    table_i_model,
)

logger = logging.getLogger('hfisim')

TWO_PI = 2.0 * math.pi
# Mean of F^2 over one period for the unit square wave (triangle primitive)
SQUARE_F2_MEAN = math.pi ** 2 / 12.0


class Waveform(str, Enum):
    SQUARE = 'square'
    SINUSOID = 'sinusoid'


def f_eval(sigma, waveform=Waveform.SQUARE):
    """2pi-periodic zero-mean injection waveform f"""
    if waveform == Waveform.SINUSOID:
        return np.cos(sigma)
    s = np.mod(sigma, TWO_PI)
    return np.where(s < math.pi, 1.0, -1.0) if np.ndim(s) else (1.0 if s < math.pi else -1.0)


def f_primitive(sigma, waveform=Waveform.SQUARE):
    """Zero-mean primitive F of f (a triangle wave for the square wave)"""
    if waveform == Waveform.SINUSOID:
        return np.sin(sigma)
    s = np.mod(sigma, TWO_PI)
    return np.where(s <= math.pi, s - 0.5 * math.pi, 1.5 * math.pi - s)


@dataclass(frozen=True)
class InjectionSpec:
    """High-frequency voltage u_tilde * f(omega_inj * t), in the gamma-delta frame"""
    u_tilde: tuple = (0.0, 0.0)
    omega_inj: float = TWO_PI * 500.0
    waveform: Waveform = Waveform.SQUARE

    def __post_init__(self):
        if not self.omega_inj > 0:
            raise ValueError('omega_inj must be positive')
        object.__setattr__(self, 'u_tilde', (float(self.u_tilde[0]), float(self.u_tilde[1])))
        object.__setattr__(self, 'waveform', Waveform(self.waveform))

    @property
    def period(self):
        return TWO_PI / self.omega_inj

    @property
    def amplitude(self):
        return math.hypot(*self.u_tilde)

    @property
    def active(self):
        return self.amplitude > 0.0

    def silenced(self):
        return InjectionSpec((0.0, 0.0), self.omega_inj, self.waveform)

    def voltage(self, t, f_value=None):
        """u_tilde * f(omega_inj t); f_value overrides the waveform sample"""
        if f_value is None:
            f_value = f_eval(self.omega_inj * t, self.waveform)
        return (self.u_tilde[0] * f_value, self.u_tilde[1] * f_value)

    def flux_ripple(self, t):
        """First-order flux ripple (u_tilde / omega_inj) F(omega_inj t)"""
        F = f_primitive(self.omega_inj * t, self.waveform)
        return (self.u_tilde[0] / self.omega_inj * F, self.u_tilde[1] / self.omega_inj * F)


class PiecewiseLinear:
    """Piecewise-linear time profile defined by strictly increasing breakpoints"""

    def __init__(self, times, values):
        times = [float(t) for t in times]
        values = [float(v) for v in values]
        if len(times) == 0 or len(times) != len(values):
            raise ValueError('profile needs matching, non-empty breakpoint lists')
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError('profile breakpoints must be strictly increasing')
        if not all(math.isfinite(v) for v in times + values):
            raise ValueError('profile breakpoints must be finite')
        self.times = times
        self.values = values
        self._slack = 1e-9 * max(1.0, abs(times[-1]))

    @classmethod
    def constant(cls, value, t_end):
        return cls([0.0, t_end], [value, value])

    @classmethod
    def from_pairs(cls, pairs):
        return cls([p[0] for p in pairs], [p[1] for p in pairs])

    @property
    def start(self):
        return self.times[0]

    @property
    def end(self):
        return self.times[-1]

    def __call__(self, t):
        times = self.times
        if t < times[0] - self._slack or t > times[-1] + self._slack:
            raise OutOfProfileDomain(
                f't={t} outside profile domain [{times[0]}, {times[-1]}]'
            )
        k = bisect.bisect_right(times, t)
        if k == 0:
            return self.values[0]
        if k == len(times):
            return self.values[-1]
        t0, t1 = times[k - 1], times[k]
        v0, v1 = self.values[k - 1], self.values[k]
        return v0 + (v1 - v0) * (t - t0) / (t1 - t0)

    def __repr__(self):
        return f'PiecewiseLinear({list(zip(self.times, self.values))})'


@dataclass(frozen=True)
class DriveProfiles:
    """Reference speed, resistive-drop compensation and load torque over time"""
    omega_c: PiecewiseLinear
    u_rd_gamma: PiecewiseLinear
    u_rd_delta: PiecewiseLinear
    tau_L: PiecewiseLinear

    @classmethod
    def zero(cls, t_end):
        z = PiecewiseLinear.constant(0.0, t_end)
        return cls(z, z, z, z)

    @classmethod
    def constant(cls, t_end, omega_c=0.0, u_rd=(0.0, 0.0), tau_L=0.0):
        return cls(
            PiecewiseLinear.constant(omega_c, t_end),
            PiecewiseLinear.constant(u_rd[0], t_end),
            PiecewiseLinear.constant(u_rd[1], t_end),
            PiecewiseLinear.constant(tau_L, t_end),
        )

    @property
    def start(self):
        return max(p.start for p in self._all())

    @property
    def end(self):
        return min(p.end for p in self._all())

    def _all(self):
        return (self.omega_c, self.u_rd_gamma, self.u_rd_delta, self.tau_L)

    def u_rd(self, t):
        return (self.u_rd_gamma(t), self.u_rd_delta(t))


@dataclass(frozen=True)
class MotorParams:
    """Full electromechanical parameter set"""
    mag: MagModel
    R: float
    n: int
    J: float = 1e-3

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError('R must be positive')
        if int(self.n) != self.n or self.n < 1:
            raise ValueError('n must be an integer >= 1')
        if not self.J > 0:
            raise ValueError('J must be positive')

    @classmethod
    def table_i(cls, J=1e-3, mag=None):
        return cls(mag=mag or table_i_model(), R=TABLE_I['R'], n=TABLE_I['n'], J=J)

    def with_mag(self, mag):
        return MotorParams(mag=mag, R=self.R, n=self.n, J=self.J)


def rated_electrical_speed(n=TABLE_I['n'], rpm=TABLE_I['rated_speed_rpm']):
    return TWO_PI * rpm / 60.0 * n


def _load_compensated(omega_pairs, torque_pairs, p):
    """Profiles whose delta-axis drop compensation follows the load with a 10% margin"""
    gain = p.R * 1.1 / (1.5 * p.n * p.mag.lam)
    tau = PiecewiseLinear.from_pairs(torque_pairs)
    end = tau.end
    return DriveProfiles(
        omega_c=PiecewiseLinear.from_pairs(omega_pairs),
        u_rd_gamma=PiecewiseLinear.constant(2.0 * p.R, end),
        u_rd_delta=PiecewiseLinear(tau.times, [gain * v for v in tau.values]),
        tau_L=tau,
    )


def long_test_profiles(p=None):
    """
    Desk-scale long test, 4 s: speed moves within 2% of rated (both signs),
    load steps 0 -> 150% -> 0 of rated torque with ramps.
    """
    p = p or MotorParams.table_i()
    w = 0.02 * rated_electrical_speed(p.n)
    tau = 1.5 * TABLE_I['rated_torque']
    omega_pairs = [
        (0.0, w / 2), (0.6, w / 2), (1.2, w), (2.0, w),
        (2.6, -w / 2), (3.4, -w / 2), (4.0, w / 2),
    ]
    torque_pairs = [(0.0, 0.0), (0.4, 0.0), (1.2, tau), (2.8, tau), (3.6, 0.0), (4.0, 0.0)]
    return _load_compensated(omega_pairs, torque_pairs, p)


def speed_reversal_profiles(p=None):
    """4 s: load ramps to 150% of rated, then speed ramps from -0.2% to +0.2% of rated"""
    p = p or MotorParams.table_i()
    w = 0.002 * rated_electrical_speed(p.n)
    tau = 1.5 * TABLE_I['rated_torque']
    omega_pairs = [(0.0, -w), (1.0, -w), (3.5, w), (4.0, w)]
    torque_pairs = [(0.0, 0.0), (0.5, tau), (4.0, tau)]
    return _load_compensated(omega_pairs, torque_pairs, p)


@dataclass
class MotorStateDq:
    phi: tuple = (0.0, 0.0)
    omega: float = 0.0
    theta: float = 0.0

    def as_array(self):
        return np.array([self.phi[0], self.phi[1], self.omega, self.theta], dtype=float)

    @classmethod
    def from_array(cls, x):
        return cls((float(x[0]), float(x[1])), float(x[2]), float(x[3]))


@dataclass
class MotorStateGd:
    phi_gd: tuple = (0.0, 0.0)
    omega: float = 0.0
    theta: float = 0.0
    theta_c: float = 0.0

    def as_array(self):
        return np.array(
            [self.phi_gd[0], self.phi_gd[1], self.omega, self.theta, self.theta_c], dtype=float
        )

    @classmethod
    def from_array(cls, x):
        return cls((float(x[0]), float(x[1])), float(x[2]), float(x[3]), float(x[4]))


def electromagnetic_torque(i, phi_total, n):
    """n (3/2) i^T K (phi + phi_m) in N.m; phi_total already includes the magnet"""
    return n * 1.5 * (i[1] * phi_total[0] - i[0] * phi_total[1])


def dq_vector_field(x, u_dq, tau_L, p):
    """Array form of the dq dynamics; x = [phi_d, phi_q, omega, theta]"""
    phi_d, phi_q, omega = x[0], x[1], x[2]
    m = p.mag
    i_d, i_q = current_from_flux((phi_d, phi_q), m)
    w_d = phi_d + m.lam
    gain = p.n * p.n / p.J
    return np.array([
        u_dq[0] - p.R * i_d + omega * phi_q,
        u_dq[1] - p.R * i_q - omega * w_d,
        gain * (1.5 * (i_q * w_d - i_d * phi_q) - tau_L / p.n),
        omega,
    ])


def dq_derivatives(s, u_dq, tau_L, p):
    """Time derivative of a MotorStateDq as [dphi_d, dphi_q, domega, dtheta]"""
    return dq_vector_field(s.as_array(), u_dq, tau_L, p)


def gd_currents(phi_gd, mu, m):
    """i_gd = M_mu I(M_mu^T phi_gd) with mu = theta - theta_c"""
    c = math.cos(mu)
    s = math.sin(mu)
    i_d, i_q = current_from_flux((c * phi_gd[0] + s * phi_gd[1], -s * phi_gd[0] + c * phi_gd[1]), m)
    return (c * i_d - s * i_q, s * i_d + c * i_q)


def gd_vector_field(x, u_gd, omega_c, tau_L, p):
    """Array form of the gamma-delta dynamics; x = [phi_g, phi_d, omega, theta, theta_c]"""
    phi_g, phi_dl, omega, theta, theta_c = x[0], x[1], x[2], x[3], x[4]
    m = p.mag
    mu = theta - theta_c
    c = math.cos(mu)
    s = math.sin(mu)
    i_d, i_q = current_from_flux((c * phi_g + s * phi_dl, -s * phi_g + c * phi_dl), m)
    i_g = c * i_d - s * i_q
    i_dl = s * i_d + c * i_q
    mag_g = m.lam * c
    mag_dl = m.lam * s
    gain = p.n * p.n / p.J
    return np.array([
        u_gd[0] - p.R * i_g + omega_c * phi_dl + omega * mag_dl,
        u_gd[1] - p.R * i_dl - omega_c * phi_g - omega * mag_g,
        gain * (1.5 * (i_dl * (phi_g + mag_g) - i_g * (phi_dl + mag_dl)) - tau_L / p.n),
        omega,
        omega_c,
    ])


def gd_derivatives(s, u_gd, omega_c, tau_L, p):
    """Time derivative of a MotorStateGd as [dphi_g, dphi_d, domega, dtheta, dtheta_c]"""
    return gd_vector_field(s.as_array(), u_gd, omega_c, tau_L, p)


def gd_linearization(mu, i_bar, mag, params, omega_c):
    """
    Linearized gamma-delta drive around the averaged point with current
    i_bar and angle mu, state (phi_gamma, phi_delta, omega, theta).

    omega_c stands in for the mean rotor speed. Returns (A, C): the state
    Jacobian, shape (..., 4, 4), and the current sensitivity [S, 0, di/dtheta],
    shape (..., 2, 4).
    """
    mu = np.asarray(mu, dtype=float)
    i_g, i_dl = float(i_bar[0]), float(i_bar[1])
    rot = rotation(mu)
    phi_dq = flux_from_current_exact(rot.T.apply(i_g, i_dl), mag)
    phi_g, phi_dl = rot.apply(*phi_dq)
    s = rot.matmul(hessian(phi_dq, mag)).matmul(rot.T)
    s11, s22 = s.m11, s.m22
    s12 = 0.5 * (s.m12 + s.m21)

    c = np.cos(mu)
    sn = np.sin(mu)
    lam = mag.lam
    R = params.R
    # di/dtheta at fixed flux: K i - S K phi
    di_g = -i_dl + s11 * phi_dl - s12 * phi_g
    di_dl = i_g + s12 * phi_dl - s22 * phi_g
    psi_g = phi_g + lam * c
    psi_dl = phi_dl + lam * sn
    k = 1.5 * params.n * params.n / params.J

    A = np.zeros(mu.shape + (4, 4))
    A[..., 0, 0] = -R * s11
    A[..., 0, 1] = -R * s12 + omega_c
    A[..., 0, 2] = lam * sn
    A[..., 0, 3] = -R * di_g + omega_c * lam * c
    A[..., 1, 0] = -R * s12 - omega_c
    A[..., 1, 1] = -R * s22
    A[..., 1, 2] = -lam * c
    A[..., 1, 3] = -R * di_dl + omega_c * lam * sn
    A[..., 2, 0] = k * (s12 * psi_g + i_dl - s11 * psi_dl)
    A[..., 2, 1] = k * (s22 * psi_g - s12 * psi_dl - i_g)
    A[..., 2, 3] = k * (di_dl * psi_g - di_g * psi_dl - lam * (i_dl * sn + i_g * c))
    A[..., 3, 2] = 1.0

    C = np.zeros(mu.shape + (2, 4))
    C[..., 0, 0] = s11
    C[..., 0, 1] = s12
    C[..., 0, 3] = di_g
    C[..., 1, 0] = s12
    C[..., 1, 1] = s22
    C[..., 1, 3] = di_dl
    return A, C


def magnetic_energy_balance(s, p):
    """
    E = H(phi) + (J/n^2) omega^2 / 3.

    Along the dq dynamics dE/dt = i^T u - R |i|^2 - (2/3) omega tau_L / n,
    so E cannot grow when u = 0 and tau_L = 0.
    """
    return float(energy(s.phi, p.mag)) + p.J / p.n ** 2 * s.omega ** 2 / 3.0


def rotate(vec, angle):
    c = math.cos(angle)
    s = math.sin(angle)
    return (c * vec[0] - s * vec[1], s * vec[0] + c * vec[1])


def dq_to_ab(vec_dq, theta):
    """x_ab = M_theta x_dq"""
    return rotate(vec_dq, theta)


def gd_to_ab(vec_gd, theta_c):
    """x_ab = M_theta_c x_gd"""
    return rotate(vec_gd, theta_c)


def vf_control(t, profiles, inj, mag, f_value=None):
    """
    V/f open-loop law with optional injection:
    u_gd = u_rd(t) + omega_c(t) K phi_m + u_tilde f(omega_inj t).

    Returns:
        tuple: (omega_c, (u_gamma, u_delta))
    """
    omega_c = profiles.omega_c(t)
    u_g, u_dl = profiles.u_rd(t)
    # back-EMF feed-forward omega_c K phi_m lies on the delta axis
    u_dl += omega_c * mag.lam
    if inj is not None and inj.active:
        h_g, h_dl = inj.voltage(t, f_value)
        u_g += h_g
        u_dl += h_dl
    return omega_c, (u_g, u_dl)


class SensorlessController(ABC):
    """
    Controller seen only through measured currents:
    omega_c = W_c(i, theta_c, eta, t), u_gd = U_gd(i, theta_c, eta, t),
    d eta/dt = a(i, theta_c, eta, t). Injection is added by the simulator.
    """
    eta_dim = 0
    # open-loop laws set this to False so the simulator skips the current solve
    uses_currents = True

    @abstractmethod
    def step(self, i_gd, theta_c, eta, t):
        """Return (omega_c, u_gd, d_eta_dt)"""

    def initial_eta(self):
        return np.zeros(self.eta_dim)


class VfController(SensorlessController):
    """Open-loop V/f law; ignores the measured currents"""
    uses_currents = False

    def __init__(self, profiles, mag):
        self.profiles = profiles
        self.mag = mag

    def step(self, i_gd, theta_c, eta, t):
        omega_c, u_gd = vf_control(t, self.profiles, None, self.mag)
        return omega_c, u_gd, np.zeros(0)


@dataclass
class ConstantController(SensorlessController):
    omega_c: float = 0.0
    u_gd: tuple = (0.0, 0.0)
    eta_rate: tuple = field(default_factory=tuple)
    uses_currents = False

    @property
    def eta_dim(self):
        return len(self.eta_rate)

    def step(self, i_gd, theta_c, eta, t):
        return self.omega_c, self.u_gd, np.array(self.eta_rate, dtype=float)


def controller_step(ctrl, i_gd, theta_c, eta, t):
    return ctrl.step(i_gd, theta_c, eta, t)
