"""
Current demodulation

Splits sampled currents into the one-period sliding mean i_bar and the ripple
envelope i_tilde obtained by correlating with F(omega_inj t).
"""

import logging
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .dynamics import Waveform, f_primitive
from .exceptions import SeriesTooShort

logger = logging.getLogger('hfisim')

MIN_WINDOW = 16


@dataclass(frozen=True)
class DemodConfig:
    omega_inj: float
    dt: float
    waveform: Waveform = Waveform.SQUARE

    def __post_init__(self):
        if not self.omega_inj > 0 or not self.dt > 0:
            raise ValueError('omega_inj and dt must be positive')
        object.__setattr__(self, 'waveform', Waveform(self.waveform))
        if self.N < MIN_WINDOW:
            raise ValueError(f'window of {self.N} samples is shorter than {MIN_WINDOW}')
        if abs(self.N * self.dt - self.period) > 1e-6 * self.period:
            raise ValueError('dt does not divide the injection period')

    @classmethod
    def for_scenario(cls, cfg):
        return cls(cfg.inj.omega_inj, cfg.dt, cfg.inj.waveform)

    @property
    def period(self):
        return 2.0 * math.pi / self.omega_inj

    @property
    def N(self):
        return int(round(self.period / self.dt))

    def weights(self):
        """Trapezoid weights over the N+1 samples spanning one period, summing to one"""
        w = np.ones(self.N + 1)
        w[0] = w[-1] = 0.5
        return w / self.N


def _window_sum(x, w):
    """sum_j w_j x[k-N+j] for every k >= N, NaN before"""
    N = len(w) - 1
    out = np.full(x.shape, np.nan)
    if len(x) <= N:
        return out
    if x.ndim == 1:
        out[N:] = np.convolve(x, w[::-1], mode='valid')
    else:
        for c in range(x.shape[1]):
            out[N:, c] = np.convolve(x[:, c], w[::-1], mode='valid')
    return out


def _check_length(x, cfg):
    # a trapezoid window spans N + 1 samples
    if len(x) <= cfg.N:
        raise SeriesTooShort(f'{len(x)} samples, a window needs {cfg.N + 1}')


def sliding_mean(i_samples, cfg):
    """
    Causal one-period mean of the samples.

    Output k averages samples k-N..k; the first N outputs are warm-up and
    set to NaN.
    """
    x = np.asarray(i_samples, dtype=float)
    _check_length(x, cfg)
    return _window_sum(x, cfg.weights())


def sliding_correlate(i_samples, cfg, t=None):
    """
    Causal one-period correlation with F(omega_inj s), normalized by the
    same quadrature of F^2. t defaults to k * dt.
    """
    x = np.asarray(i_samples, dtype=float)
    _check_length(x, cfg)
    if t is None:
        t = np.arange(len(x)) * cfg.dt
    F = f_primitive(cfg.omega_inj * np.asarray(t, dtype=float), cfg.waveform)
    w = cfg.weights()
    norm = _window_sum(F * F, w)
    weighted = x * F[:, None] if x.ndim == 2 else x * F
    num = _window_sum(weighted, w)
    return num / norm[:, None] if x.ndim == 2 else num / norm


def warmup_mask(n_samples, cfg):
    """True where demodulated outputs are usable"""
    mask = np.ones(n_samples, dtype=bool)
    mask[:cfg.N] = False
    return mask


class SlidingDemodulator:
    """Streaming form of sliding_mean and sliding_correlate, one sample at a time"""

    def __init__(self, cfg):
        self.cfg = cfg
        self._w = cfg.weights()
        self._i = deque(maxlen=cfg.N + 1)
        self._F = deque(maxlen=cfg.N + 1)

    @property
    def ready(self):
        return len(self._i) == self.cfg.N + 1

    def reset(self):
        self._i.clear()
        self._F.clear()

    def push(self, t, i):
        """Add one sample; returns (i_bar, i_tilde) once a full period is buffered, else None"""
        self._i.append(np.asarray(i, dtype=float))
        self._F.append(float(f_primitive(self.cfg.omega_inj * t, self.cfg.waveform)))
        if not self.ready:
            return None
        samples = np.array(self._i)
        F = np.array(self._F)
        w = self._w
        i_bar = w @ samples
        i_tilde = (w * F) @ samples / (w @ (F * F))
        return i_bar, i_tilde
