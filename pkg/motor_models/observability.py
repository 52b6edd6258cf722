"""
First-order observability of the saturated PMSM

Permanent trajectories, the linearized system augmented with a constant load
torque, the Phi vector and the numerical rank of the observability matrix.

State ordering everywhere: (d_phi_d, d_phi_q, d_omega, d_theta, d_tau_L).
Output: y = d_i_dq + K i_bar d_theta (dq frame, constant rotation dropped).
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.optimize as so
from joblib import Parallel, delayed

from .dynamics import MotorParams
from .exceptions import NonConvergent, SingularJacobian
from .magnetics import K, current_from_flux, flux_from_current_exact, hessian

logger = logging.getLogger('hfisim')

STATE_LABELS = ('phi_d', 'phi_q', 'omega', 'theta', 'tau_L')
MEASUREMENT_LABELS = ('y_d', 'y_q', 'omega', 'theta', 'tau_L')
RANK_THRESHOLD = 1e-9
FD_TOLERANCE = 1e-6
TRAJECTORY_TOLERANCE = 1e-10
FD_STEPS = np.array([1e-6, 1e-6, 1e-4, 1e-6, 1e-4])

K_ARR = K.as_array()


@dataclass(frozen=True)
class PermanentTrajectory:
    omega_bar: float
    i_bar_dq: tuple
    phi_bar_dq: tuple
    u_bar_dq: tuple
    tau_bar_L: float

    def flux_with_magnet(self, lam):
        return np.array([self.phi_bar_dq[0] + lam, self.phi_bar_dq[1]])

    def as_dict(self):
        return {
            'omega_bar': self.omega_bar,
            'i_bar_dq': list(self.i_bar_dq),
            'phi_bar_dq': list(self.phi_bar_dq),
            'u_bar_dq': list(self.u_bar_dq),
            'tau_bar_L': self.tau_bar_L,
        }


def permanent_trajectory(omega_bar, i_bar_dq, p):
    """
    Operating point with constant dq flux, current, speed and load.

    u_bar = R i_bar + omega_bar K (phi_bar + phi_m),
    tau_bar_L = n (3/2) i_bar^T K (phi_bar + phi_m).

    Raises:
        NonConvergent: the algebraic equations are not met to 1e-10
    """
    m = p.mag
    i = np.array([float(i_bar_dq[0]), float(i_bar_dq[1])])
    phi = np.array(flux_from_current_exact(tuple(i), m), dtype=float)
    w = phi + np.array([m.lam, 0.0])
    u = p.R * i + omega_bar * (K_ARR @ w)
    tau = p.n * 1.5 * float(i @ K_ARR @ w)

    # re-substitute with the current recomputed from the flux
    i_phi = np.array(current_from_flux(tuple(phi), m), dtype=float)
    flux_res = u - p.R * i_phi - omega_bar * (K_ARR @ w)
    torque_res = 1.5 * float(i_phi @ K_ARR @ w) - tau / p.n
    worst = max(np.max(np.abs(flux_res)), abs(torque_res))
    if worst > TRAJECTORY_TOLERANCE * max(1.0, float(np.max(np.abs(u)))):
        raise NonConvergent(f'permanent trajectory residual {worst:.3e} at i_bar={tuple(i)}')

    return PermanentTrajectory(
        omega_bar=float(omega_bar),
        i_bar_dq=tuple(i),
        phi_bar_dq=tuple(phi),
        u_bar_dq=tuple(u),
        tau_bar_L=tau,
    )


def phi_vector(phi_bar, m):
    """
    Phi(phi_bar) = phi_m + phi_bar + K H^-1 K I(phi_bar), H the energy Hessian.

    Raises:
        SingularJacobian: H is singular at phi_bar
    """
    h = hessian(phi_bar, m)
    det = h.det()
    if abs(det) < 1e-12 * h.frobenius_sq():
        raise SingularJacobian(f'energy Hessian singular at phi={tuple(phi_bar)}')
    i = np.array(current_from_flux(phi_bar, m), dtype=float)
    h_inv = np.linalg.inv(h.as_array())
    return np.array([m.lam + phi_bar[0], phi_bar[1]]) + K_ARR @ h_inv @ K_ARR @ i


def _rotation_arr(angle):
    c = math.cos(angle)
    s = math.sin(angle)
    return np.array([[c, -s], [s, c]])


def _augmented_field(x, dv, traj, p):
    """Nonlinear dq dynamics with constant load, about the trajectory angle"""
    m = p.mag
    phi = x[0:2]
    omega, d_theta, tau = x[2], x[3], x[4]
    i = np.array(current_from_flux((phi[0], phi[1]), m))
    w = phi + np.array([m.lam, 0.0])
    u = _rotation_arr(-d_theta) @ (np.asarray(traj.u_bar_dq) + dv)
    d_phi = u - p.R * i - omega * (K_ARR @ w)
    d_omega = p.n ** 2 / p.J * (1.5 * float(i @ K_ARR @ w) - tau / p.n)
    return np.array([d_phi[0], d_phi[1], d_omega, omega - traj.omega_bar, 0.0])


def _augmented_output(x, p):
    i = np.array(current_from_flux((x[0], x[1]), p.mag))
    return _rotation_arr(x[3]) @ i


def _operating_state(traj):
    return np.array([traj.phi_bar_dq[0], traj.phi_bar_dq[1], traj.omega_bar, 0.0, traj.tau_bar_L])


def numerical_jacobians(traj, p, steps=FD_STEPS):
    """Central finite differences of the augmented nonlinear system: (A, B, C)"""
    x0 = _operating_state(traj)
    zero_dv = np.zeros(2)
    A = np.zeros((5, 5))
    C = np.zeros((2, 5))
    for j in range(5):
        e = np.zeros(5)
        e[j] = steps[j]
        A[:, j] = (_augmented_field(x0 + e, zero_dv, traj, p)
                   - _augmented_field(x0 - e, zero_dv, traj, p)) / (2.0 * steps[j])
        C[:, j] = (_augmented_output(x0 + e, p) - _augmented_output(x0 - e, p)) / (2.0 * steps[j])
    B = np.zeros((5, 2))
    for j in range(2):
        dv = np.zeros(2)
        dv[j] = 1e-4
        B[:, j] = (_augmented_field(x0, dv, traj, p) - _augmented_field(x0, -dv, traj, p)) / 2e-4
    return A, B, C


@dataclass
class LinearizedSystem:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    traj: PermanentTrajectory
    params: MotorParams
    fd_error: float = 0.0

    def output_injection(self):
        """
        Gain L that removes the current-dependent terms when the measured
        current perturbation is treated as a known signal.
        """
        p = self.params
        w = self.traj.flux_with_magnet(p.mag.lam)
        L = np.zeros((5, 2))
        L[0:2, :] = -p.R * np.eye(2)
        L[2, :] = p.n ** 2 / p.J * 1.5 * (K_ARR @ w)
        return L

    def printed_form(self):
        """
        A - L C. The flux rows reduce to -omega_bar K d_phi + omega_bar (phi_bar + phi_m) d_theta
        and the torque row to (n^2/J)(3/2) terms in i_bar only.
        """
        return self.A - self.output_injection() @ self.C

    def observability_matrix(self):
        return observability_matrix(self.A, self.C)

    def measurement_coordinates(self):
        """T mapping state perturbations to (y, d_omega, d_theta, d_tau_L)"""
        return measurement_coordinates(self.C)


def observability_matrix(A, C):
    """[C; CA; ...; CA^(n-1)]"""
    n = A.shape[0]
    blocks = [C]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


def measurement_coordinates(C):
    n = C.shape[1]
    return np.vstack([C, np.eye(n)[C.shape[0]:]])


def linearize(traj, p, validate=True):
    """
    Analytic linearization about a permanent trajectory.

    A is checked against central finite differences of the nonlinear
    augmented dynamics when validate is set; a mismatch above 1e-6
    relative is logged as a warning and kept in fd_error.
    """
    m = p.mag
    phi = np.asarray(traj.phi_bar_dq)
    i = np.asarray(traj.i_bar_dq)
    u = np.asarray(traj.u_bar_dq)
    w = phi + np.array([m.lam, 0.0])
    H = hessian(tuple(phi), m).as_array()
    gain = p.n ** 2 / p.J
    omega_bar = traj.omega_bar

    A = np.zeros((5, 5))
    A[0:2, 0:2] = -p.R * H - omega_bar * K_ARR
    A[0:2, 2] = -K_ARR @ w
    A[0:2, 3] = -K_ARR @ u
    A[2, 0:2] = gain * 1.5 * (H @ K_ARR @ w + K_ARR.T @ i)
    A[2, 4] = -p.n / p.J
    A[3, 2] = 1.0

    B = np.zeros((5, 2))
    B[0:2, :] = np.eye(2)

    C = np.zeros((2, 5))
    C[:, 0:2] = H
    C[:, 3] = K_ARR @ i

    system = LinearizedSystem(A=A, B=B, C=C, traj=traj, params=p)
    if validate:
        A_fd, B_fd, C_fd = numerical_jacobians(traj, p)
        errors = []
        for exact, approx in ((A, A_fd), (B, B_fd), (C, C_fd)):
            scale = max(1.0, float(np.max(np.abs(exact))))
            errors.append(float(np.max(np.abs(exact - approx))) / scale)
        system.fd_error = max(errors)
        if system.fd_error > FD_TOLERANCE:
            logger.warning(
                f'Linearization differs from finite differences by {system.fd_error:.2e} '
                f'at omega_bar={omega_bar}, i_bar={tuple(i)}'
            )
    return system


def _balance(O, sweeps=8):
    """Alternate row and column scaling to unit norms; returns (balanced, column scales)"""
    M = O.copy()
    col_scale = np.ones(M.shape[1])
    for _ in range(sweeps):
        rows = np.linalg.norm(M, axis=1)
        rows[rows == 0] = 1.0
        M = M / rows[:, None]
        cols = np.linalg.norm(M, axis=0)
        cols[cols == 0] = 1.0
        M = M / cols[None, :]
        col_scale = col_scale / cols
    return M, col_scale


def singular_values(sys):
    """Singular values of the balanced observability matrix"""
    balanced, _ = _balance(sys.observability_matrix())
    return np.linalg.svd(balanced, compute_uv=False)


def observability_rank(sys):
    """
    Numerical rank of the balanced observability matrix.

    Returns:
        tuple: (rank, basis) where basis lists unit vectors spanning the
        unobservable subspace, expressed in measurement coordinates
        (y_d, y_q, d_omega, d_theta, d_tau_L)
    """
    O = sys.observability_matrix()
    n = O.shape[1]
    balanced, col_scale = _balance(O)
    _, sigma, VT = np.linalg.svd(balanced)
    if sigma[0] == 0.0:
        return 0, [e for e in np.eye(n)]
    rank = int(np.sum(sigma > RANK_THRESHOLD * sigma[0]))
    T = sys.measurement_coordinates()
    basis = []
    for v in VT[rank:]:
        z = T @ (col_scale * v)
        norm = np.linalg.norm(z)
        if norm == 0.0:
            z = col_scale * v
            norm = np.linalg.norm(z)
        basis.append(z / norm)
    return rank, basis


def current_for_torque(tau, p, i_d=0.0, bracket=(-20.0, 20.0)):
    """
    q-axis current giving load torque tau at fixed i_d.

    Raises:
        NonConvergent: tau is not reached inside the bracket (A) or the
            root search did not converge
    """
    m = p.mag

    def excess(i_q):
        phi = flux_from_current_exact((i_d, i_q), m)
        return p.n * 1.5 * (i_q * (phi[0] + m.lam) - i_d * phi[1]) - tau

    lo, hi = bracket
    try:
        return float(so.brentq(excess, lo, hi, xtol=1e-12))
    except (ValueError, RuntimeError) as exc:
        raise NonConvergent(
            f'no q-axis current in [{lo}, {hi}] A gives {tau} N.m at i_d={i_d} A: {exc}'
        ) from None


def _rank_point(omega_bar, tau, p):
    i_q = current_for_torque(tau, p)
    traj = permanent_trajectory(omega_bar, (0.0, i_q), p)
    sys = linearize(traj, p, validate=False)
    rank, basis = observability_rank(sys)
    sigma = singular_values(sys)
    phi = phi_vector(traj.phi_bar_dq, p.mag)
    return {
        'omega_bar': omega_bar,
        'tau_L': traj.tau_bar_L,
        'i_q': i_q,
        'rank': rank,
        'sigma_ratio': float(sigma[-1] / sigma[0]),
        'phi_norm': float(np.linalg.norm(phi)),
        'kernel': [list(map(float, z)) for z in basis],
    }


def rank_table(omegas, torques, p, n_jobs=1):
    """Observability rank over a grid of speeds and load torques, i_d = 0"""
    points = [(w, tau) for w in omegas for tau in torques]
    rows = Parallel(n_jobs=n_jobs)(delayed(_rank_point)(w, tau, p) for w, tau in points)
    full = sum(r['rank'] == 5 for r in rows)
    logger.info(f'Observability sweep: {full}/{len(rows)} points of full rank')
    return list(rows)
