"""
Static magnetic model of the saturated PMSM

Energy function, flux <-> current maps, incremental inductance matrices and
the saliency matrix. Every function here is pure and broadcasts elementwise:
fields of FluxDq / CurrentDq / Mat2 may be floats or numpy arrays of a
common shape.
"""

import logging
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .exceptions import NonConvergent, SingularJacobian

logger = logging.getLogger('hfisim')

NEWTON_TOL = 1e-9
NEWTON_MAX_ITER = 50
NEWTON_MAX_HALVINGS = 20
MAX_CONDITION = 1e12


class FluxDq(NamedTuple):
    """Current-produced flux linkage in the dq frame (Wb), magnet flux excluded"""
    phi_d: float
    phi_q: float


class CurrentDq(NamedTuple):
    """Stator current in the dq frame (A)"""
    i_d: float
    i_q: float


class Mat2(NamedTuple):
    """Real 2x2 matrix [[m11, m12], [m21, m22]]"""
    m11: float
    m12: float
    m21: float
    m22: float

    @property
    def T(self):
        return Mat2(self.m11, self.m21, self.m12, self.m22)

    def det(self):
        return self.m11 * self.m22 - self.m12 * self.m21

    def matmul(self, other):
        return Mat2(
            self.m11 * other.m11 + self.m12 * other.m21,
            self.m11 * other.m12 + self.m12 * other.m22,
            self.m21 * other.m11 + self.m22 * other.m21,
            self.m21 * other.m12 + self.m22 * other.m22,
        )

    def apply(self, x, y):
        """Matrix-vector product, returned as a plain pair"""
        return (self.m11 * x + self.m12 * y, self.m21 * x + self.m22 * y)

    def inverse(self):
        det = self.det()
        return Mat2(self.m22 / det, -self.m12 / det, -self.m21 / det, self.m11 / det)

    def frobenius_sq(self):
        return self.m11 ** 2 + self.m12 ** 2 + self.m21 ** 2 + self.m22 ** 2

    def as_array(self):
        """numpy view with the matrix indices last: shape (..., 2, 2)"""
        top = np.stack(np.broadcast_arrays(self.m11, self.m12), axis=-1)
        bottom = np.stack(np.broadcast_arrays(self.m21, self.m22), axis=-1)
        return np.stack([top, bottom], axis=-2)


# Quarter-turn matrix, equal to rotation(pi/2).
K = Mat2(0.0, -1.0, 1.0, 0.0)
IDENTITY = Mat2(1.0, 0.0, 0.0, 1.0)


@dataclass(frozen=True)
class MagModel:
    """
    Energy-based saturation model.

    L_d, L_q in H, lam (the magnet flux linkage lambda) in Wb. The five alpha
    coefficients are stored unnormalized: A/Wb^2 for the cubic terms and
    A/Wb^3 for the quartic ones.
    """
    L_d: float
    L_q: float
    lam: float
    alpha30: float = 0.0
    alpha12: float = 0.0
    alpha40: float = 0.0
    alpha22: float = 0.0
    alpha04: float = 0.0

    def __post_init__(self):
        if not self.L_d > 0 or not self.L_q > 0:
            raise ValueError('L_d and L_q must be positive')
        if not self.lam >= 0:
            raise ValueError('lambda must be non-negative')
        for name in ('alpha30', 'alpha12', 'alpha40', 'alpha22', 'alpha04'):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f'{name} must be finite')

    @property
    def phi_m(self):
        return FluxDq(self.lam, 0.0)

    @property
    def alphas(self):
        return (self.alpha30, self.alpha12, self.alpha40, self.alpha22, self.alpha04)

    @property
    def is_saturated(self):
        return any(a != 0.0 for a in self.alphas)

    def scaled(self, s):
        """Same model with every saturation coefficient multiplied by s"""
        return replace(
            self,
            alpha30=s * self.alpha30, alpha12=s * self.alpha12,
            alpha40=s * self.alpha40, alpha22=s * self.alpha22,
            alpha04=s * self.alpha04,
        )

    def unsaturated(self):
        return self.scaled(0.0)

    @classmethod
    def from_normalized(cls, L_d, L_q, lam, I_n, a30, a12, a40, a22, a04):
        """
        Build from the dimensionless products printed in the motor datasheet
        table: a30 = alpha30 L_d^2 I_n, a12 = alpha12 L_d L_q I_n,
        a40 = alpha40 L_d^3 I_n^2, a22 = alpha22 L_d L_q^2 I_n^2,
        a04 = alpha04 L_q^3 I_n^2.
        """
        norms = _normalizers(L_d, L_q, I_n)
        return cls(
            L_d=L_d, L_q=L_q, lam=lam,
            alpha30=a30 / norms[0], alpha12=a12 / norms[1],
            alpha40=a40 / norms[2], alpha22=a22 / norms[3],
            alpha04=a04 / norms[4],
        )

    def normalized(self, I_n):
        """Inverse of from_normalized: the five dimensionless products"""
        norms = _normalizers(self.L_d, self.L_q, I_n)
        return tuple(a * k for a, k in zip(self.alphas, norms))


def _normalizers(L_d, L_q, I_n):
    return (
        L_d ** 2 * I_n,
        L_d * L_q * I_n,
        L_d ** 3 * I_n ** 2,
        L_d * L_q ** 2 * I_n ** 2,
        L_q ** 3 * I_n ** 2,
    )


# Rated and saturation parameters of the 1.5 kW surface-mounted test motor.
TABLE_I = {
    'rated_power': 1500.0,
    'I_n': 5.19,
    'rated_speed_rpm': 3000.0,
    'rated_torque': 6.06,
    'n': 5,
    'R': 2.1,
    'lam': 0.155,
    'L_d': 7.9e-3,
    'L_q': 8.2e-3,
    'a30': 0.0551,
    'a12': 0.0545,
    'a40': 0.0170,
    'a22': 0.0249,
    'a04': 0.0067,
}


def table_i_model():
    t = TABLE_I
    return MagModel.from_normalized(
        t['L_d'], t['L_q'], t['lam'], t['I_n'],
        t['a30'], t['a12'], t['a40'], t['a22'], t['a04'],
    )


def rotation(mu):
    """M_mu = [[cos mu, -sin mu], [sin mu, cos mu]]"""
    c = np.cos(mu)
    s = np.sin(mu)
    return Mat2(c, -s, s, c)


def energy(phi, m):
    """Magnetic energy H(phi) in A.Wb; zero at the origin"""
    pd, pq = phi
    pd2 = pd * pd
    pq2 = pq * pq
    linear = pd2 / (2.0 * m.L_d) + pq2 / (2.0 * m.L_q)
    return (linear + m.alpha30 * pd2 * pd + m.alpha12 * pd * pq2
            + m.alpha40 * pd2 * pd2 + m.alpha22 * pd2 * pq2 + m.alpha04 * pq2 * pq2)


def current_from_flux(phi, m):
    """Gradient of the energy: the flux-current magnetization curves"""
    pd, pq = phi
    pd2 = pd * pd
    pq2 = pq * pq
    i_d = (pd / m.L_d + 3.0 * m.alpha30 * pd2 + m.alpha12 * pq2
           + 4.0 * m.alpha40 * pd2 * pd + 2.0 * m.alpha22 * pd * pq2)
    i_q = (pq / m.L_q + 2.0 * m.alpha12 * pd * pq + 2.0 * m.alpha22 * pd2 * pq
           + 4.0 * m.alpha04 * pq2 * pq)
    return CurrentDq(i_d, i_q)


def hessian(phi, m):
    """Second derivatives of the energy, i.e. the Jacobian of current_from_flux"""
    pd, pq = phi
    h_dd = (1.0 / m.L_d + 6.0 * m.alpha30 * pd + 12.0 * m.alpha40 * pd * pd
            + 2.0 * m.alpha22 * pq * pq)
    h_dq = 2.0 * m.alpha12 * pq + 4.0 * m.alpha22 * pd * pq
    h_qq = (1.0 / m.L_q + 2.0 * m.alpha12 * pd + 2.0 * m.alpha22 * pd * pd
            + 12.0 * m.alpha04 * pq * pq)
    return Mat2(h_dd, h_dq, h_dq, h_qq)


def flux_from_current_first_order(i, m):
    """Explicit inverse of the magnetization curves, first order in the alphas"""
    i_d, i_q = i
    L_d, L_q = m.L_d, m.L_q
    phi_d = L_d * (i_d - 3.0 * m.alpha30 * L_d ** 2 * i_d ** 2
                   - m.alpha12 * L_q ** 2 * i_q ** 2
                   - 4.0 * m.alpha40 * L_d ** 3 * i_d ** 3
                   - 2.0 * m.alpha22 * L_d * L_q ** 2 * i_d * i_q ** 2)
    phi_q = L_q * (i_q - 2.0 * m.alpha12 * L_d * L_q * i_d * i_q
                   - 2.0 * m.alpha22 * L_d ** 2 * L_q * i_d ** 2 * i_q
                   - 4.0 * m.alpha04 * L_q ** 3 * i_q ** 3)
    return FluxDq(phi_d, phi_q)


def _residual(phi_d, phi_q, i_d, i_q, m):
    cur = current_from_flux((phi_d, phi_q), m)
    r_d = cur.i_d - i_d
    r_q = cur.i_q - i_q
    return r_d, r_q, np.hypot(r_d, r_q)


def _newton_step(phi_d, phi_q, r_d, r_q, m):
    h = hessian((phi_d, phi_q), m)
    # symmetric 2x2: eigenvalues from trace and determinant
    half_tr = 0.5 * (h.m11 + h.m22)
    radius = np.hypot(0.5 * (h.m11 - h.m22), h.m12)
    lam_big = np.abs(half_tr) + radius
    lam_small = np.abs(np.abs(half_tr) - radius)
    if np.any(lam_small * MAX_CONDITION < lam_big):
        raise SingularJacobian(
            f'energy Hessian ill-conditioned at phi=({phi_d}, {phi_q})'
        )
    det = h.det()
    step_d = (h.m22 * r_d - h.m12 * r_q) / det
    step_q = (-h.m21 * r_d + h.m11 * r_q) / det
    return step_d, step_q


def _as_scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def flux_from_current_exact(i, m, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER):
    """
    Invert the magnetization curves by damped Newton iteration.

    The seed is the first-order inverse. A step is halved (up to 20 times)
    wherever it increases the current residual. Once every element meets
    ||I(phi) - i|| <= tol * max(1, ||i||) one extra polishing step is taken
    where it still lowers the residual.

    Raises:
        NonConvergent: tolerance not met after max_iter steps
        SingularJacobian: Hessian condition number above 1e12 at an iterate
    """
    i_d = np.asarray(i[0], dtype=float)
    i_q = np.asarray(i[1], dtype=float)
    phi_d, phi_q = flux_from_current_first_order((i_d, i_q), m)
    bound = tol * np.maximum(1.0, np.hypot(i_d, i_q))
    r_d, r_q, norm = _residual(phi_d, phi_q, i_d, i_q, m)

    for iteration in range(max_iter + 1):
        converged = np.all(norm <= bound)
        step_d, step_q = _newton_step(phi_d, phi_q, r_d, r_q, m)
        t = np.ones_like(norm)
        trial_d = phi_d - step_d
        trial_q = phi_q - step_q
        tr_d, tr_q, trial_norm = _residual(trial_d, trial_q, i_d, i_q, m)

        if converged:
            better = trial_norm < norm
            phi_d = np.where(better, trial_d, phi_d)
            phi_q = np.where(better, trial_q, phi_q)
            return FluxDq(_as_scalar(phi_d), _as_scalar(phi_q))
        if iteration == max_iter:
            break

        for _ in range(NEWTON_MAX_HALVINGS):
            worse = trial_norm > norm
            if not np.any(worse):
                break
            t = np.where(worse, 0.5 * t, t)
            trial_d = phi_d - t * step_d
            trial_q = phi_q - t * step_q
            tr_d, tr_q, trial_norm = _residual(trial_d, trial_q, i_d, i_q, m)
        else:
            logger.debug(f'Newton step halving exhausted at iteration {iteration}')

        phi_d, phi_q = trial_d, trial_q
        r_d, r_q, norm = tr_d, tr_q, trial_norm

    raise NonConvergent(
        f'flux inversion failed after {max_iter} Newton steps '
        f'(residual {float(np.max(norm)):.3e} A)'
    )


def g_matrix_of_current(i, m):
    """Incremental inverse-inductance matrix G(i), first order in the alphas"""
    i_d, i_q = i
    L_d, L_q = m.L_d, m.L_q
    g_dd = (1.0 / L_d + 6.0 * m.alpha30 * L_d * i_d + 12.0 * m.alpha40 * L_d ** 2 * i_d ** 2
            + 2.0 * m.alpha22 * L_q ** 2 * i_q ** 2)
    g_dq = 2.0 * m.alpha12 * L_q * i_q + 4.0 * m.alpha22 * L_d * i_d * L_q * i_q
    g_qq = (1.0 / L_q + 2.0 * m.alpha12 * L_d * i_d + 2.0 * m.alpha22 * L_d ** 2 * i_d ** 2
            + 12.0 * m.alpha04 * L_q ** 2 * i_q ** 2)
    return Mat2(g_dd, g_dq, g_dq, g_qq)


def inductance_matrix(i, m):
    """Incremental inductance matrix, the inverse of G(i)"""
    g = g_matrix_of_current(i, m)
    det = g.det()
    if np.any(np.abs(det) < 1e-12 * g.frobenius_sq()):
        raise SingularJacobian(f'G(i) is singular at i={tuple(i)}')
    inv = g.inverse()
    # G is symmetric so the inverse is too; keep the off-diagonals identical
    return Mat2(inv.m11, inv.m12, inv.m12, inv.m22)


def saliency_matrix(mu, i_bar, m):
    """
    S(mu, i_bar) = M_mu DI(I^-1(M_mu^T i_bar)) M_mu^T.

    mu may be an array (evaluated elementwise against the same i_bar).
    """
    rot = rotation(mu)
    x_d, x_q = rot.T.apply(i_bar[0], i_bar[1])
    phi = flux_from_current_exact((x_d, x_q), m)
    s = rot.matmul(hessian(phi, m)).matmul(rot.T)
    # symmetric by construction; remove rounding asymmetry
    off = 0.5 * (s.m12 + s.m21)
    return Mat2(s.m11, off, off, s.m22)
