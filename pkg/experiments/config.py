"""
Scenario configuration files

INI layout; SI units throughout, angles in rad, frequencies in Hz.

    [motor]         R, n, lam, L_d, L_q (required); J, I_n (optional)
    [saturation]    a30, a12, a40, a22, a04 in the normalized form of the
                    motor datasheet (a30 = alpha30 L_d^2 I_n, ...); a missing
                    section means an unsaturated motor
    [injection]     amplitude_gamma, amplitude_delta (V), frequency_hz, waveform
    [profiles]      omega_c, u_rd_gamma, u_rd_delta, tau_L as breakpoint lists
                    "t:value, t:value, ..."; omega_c is required
    [estimator]     grid_size, tol, continuity_window, initial_guess,
                    saturation_model (yes/no), hf_correction (yes/no: model
                    the resistive and mechanical response to the injection)
    [run]           t_end (required), dt, name, seed, noise_std, settle_time, stride

Example:

    [motor]
    R = 2.1
    n = 5
    lam = 0.155
    L_d = 7.9e-3
    L_q = 8.2e-3

    [profiles]
    omega_c = 0:31.4, 1:31.4

    [run]
    t_end = 1.0
"""

import configparser
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from django.conf import settings

from motor_models.dynamics import (
    TWO_PI, DriveProfiles, InjectionSpec, MotorParams, PiecewiseLinear, Waveform,
)
from motor_models.estimator import EstimatorConfig
from motor_models.magnetics import TABLE_I, MagModel
from motor_models.simulate import STEPS_PER_PERIOD, ScenarioConfig, profile_start

logger = logging.getLogger('hfisim')

SATURATION_KEYS = ('a30', 'a12', 'a40', 'a22', 'a04')
PROFILE_KEYS = ('omega_c', 'u_rd_gamma', 'u_rd_delta', 'tau_L')


class ConfigError(Exception):
    """Base class for configuration problems"""


class ParseError(ConfigError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = f' (line {line})' if line else ''
        super().__init__(f'{message}{where}')


class ValidationError(ConfigError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f'{field}: {message}')


@dataclass(frozen=True)
class LoadedConfig:
    scenario: ScenarioConfig
    estimator: EstimatorConfig
    settle_time: float = 0.0
    stride: Optional[int] = None


class _Reader:
    """Typed access to a parsed file, reporting the line of any bad value"""

    def __init__(self, parser, text):
        self.parser = parser
        self.lines = text.splitlines()

    def line_of(self, section, key):
        in_section = False
        pattern = re.compile(rf'^\s*{re.escape(key)}\s*[=:]', re.IGNORECASE)
        for number, line in enumerate(self.lines, start=1):
            header = re.match(r'^\s*\[([^\]]+)\]', line)
            if header:
                in_section = header.group(1).strip() == section
            elif in_section and pattern.match(line):
                return number
        return None

    def raw(self, section, key, required=False):
        if not self.parser.has_section(section) or not self.parser.has_option(section, key):
            if required:
                raise ValidationError(key, f'required in [{section}]')
            return None
        return self.parser.get(section, key).strip()

    def _convert(self, section, key, convert, default, required, kind):
        value = self.raw(section, key, required)
        if value is None:
            return default
        try:
            return convert(value)
        except ValueError:
            raise ParseError(
                f'[{section}] {key}: expected {kind}, got {value!r}',
                line=self.line_of(section, key), field=key,
            ) from None

    def number(self, section, key, default=None, required=False):
        return self._convert(section, key, float, default, required, 'a number')

    def integer(self, section, key, default=None, required=False):
        return self._convert(section, key, int, default, required, 'an integer')

    def boolean(self, section, key, default):
        value = self.raw(section, key)
        if value is None:
            return default
        try:
            return self.parser.getboolean(section, key)
        except ValueError:
            raise ParseError(
                f'[{section}] {key}: expected yes/no, got {value!r}',
                line=self.line_of(section, key), field=key,
            ) from None

    def breakpoints(self, section, key, required=False):
        value = self.raw(section, key, required)
        if value is None:
            return None
        pairs = []
        for item in value.split(','):
            item = item.strip()
            if not item:
                continue
            try:
                t, v = item.split(':')
                pairs.append((float(t), float(v)))
            except ValueError:
                raise ParseError(
                    f'[{section}] {key}: bad breakpoint {item!r}, expected t:value',
                    line=self.line_of(section, key), field=key,
                ) from None
        try:
            return PiecewiseLinear.from_pairs(pairs)
        except ValueError as exc:
            raise ValidationError(key, str(exc)) from None


def _motor(r):
    for key in ('R', 'n', 'lam', 'L_d', 'L_q'):
        r.raw('motor', key, required=True)
    L_d = r.number('motor', 'L_d')
    L_q = r.number('motor', 'L_q')
    lam = r.number('motor', 'lam')
    I_n = r.number('motor', 'I_n', default=TABLE_I['I_n'])
    try:
        if r.parser.has_section('saturation'):
            normalized = {k: r.number('saturation', k, default=0.0) for k in SATURATION_KEYS}
            mag = MagModel.from_normalized(L_d=L_d, L_q=L_q, lam=lam, I_n=I_n, **normalized)
        else:
            mag = MagModel(L_d=L_d, L_q=L_q, lam=lam)
    except ValueError as exc:
        raise ValidationError('motor', str(exc)) from None

    R = r.number('motor', 'R')
    n = r.integer('motor', 'n')
    J = r.number('motor', 'J', default=settings.HFISIM_INERTIA)
    for key, value in (('R', R), ('n', n), ('J', J)):
        if not value > 0:
            raise ValidationError(key, 'must be positive')
    return MotorParams(mag=mag, R=R, n=n, J=J)


def _injection(r):
    try:
        waveform = Waveform(r.raw('injection', 'waveform') or Waveform.SQUARE.value)
    except ValueError:
        raise ValidationError('waveform', 'expected square or sinusoid') from None
    hz = r.number('injection', 'frequency_hz', default=500.0)
    if not hz > 0:
        raise ValidationError('frequency_hz', 'must be positive')
    u_tilde = (
        r.number('injection', 'amplitude_gamma', default=0.0),
        r.number('injection', 'amplitude_delta', default=0.0),
    )
    return InjectionSpec(u_tilde, TWO_PI * hz, waveform)


def _profiles(r, t_end):
    omega_c = r.breakpoints('profiles', 'omega_c', required=True)
    zero = PiecewiseLinear.constant(0.0, max(t_end, omega_c.end))
    parts = [omega_c] + [r.breakpoints('profiles', key) or zero for key in PROFILE_KEYS[1:]]
    profiles = DriveProfiles(*parts)
    if profiles.end < t_end - 1e-9 * max(1.0, t_end):
        raise ValidationError('t_end', f'profiles end at {profiles.end} s, before t_end={t_end} s')
    return profiles


def _estimator(r, params):
    mag = params.mag
    use_model = r.boolean('estimator', 'saturation_model', True)
    fields = {'mag': mag if use_model else mag.unsaturated()}
    if r.boolean('estimator', 'hf_correction', True):
        fields['params'] = params
    grid_size = r.integer('estimator', 'grid_size')
    tol = r.number('estimator', 'tol')
    window = r.number('estimator', 'continuity_window')
    guess = r.raw('estimator', 'initial_guess')
    for key, value in (('grid_size', grid_size), ('tol', tol),
                       ('continuity_window', window), ('initial_guess', guess)):
        if value is not None:
            fields[key] = value
    try:
        return EstimatorConfig(**fields)
    except ValueError as exc:
        raise ValidationError('estimator', str(exc)) from None


def parse_config(text, name='scenario'):
    """Build a LoadedConfig from INI text"""
    parser = configparser.ConfigParser(inline_comment_prefixes=('#', ';'))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, 'lineno', None)
        if line is None and getattr(exc, 'errors', None):
            line = exc.errors[0][0]
        raise ParseError(str(exc).splitlines()[0], line=line) from None
    r = _Reader(parser, text)

    t_end = r.number('run', 't_end', required=True)
    if not t_end > 0:
        raise ValidationError('t_end', 'must be positive')
    params = _motor(r)
    inj = _injection(r)
    profiles = _profiles(r, t_end)

    dt = r.number('run', 'dt', default=ScenarioConfig.default_dt(inj) if inj.active else 1e-4)
    if not dt > 0:
        raise ValidationError('dt', 'must be positive')
    if inj.active and dt > inj.period / STEPS_PER_PERIOD * (1.0 + 1e-9):
        raise ValidationError('dt', f'{dt:.3e} s exceeds T/{STEPS_PER_PERIOD} of the injection')
    if inj.active and abs(inj.period / dt - round(inj.period / dt)) > 1e-6 * inj.period / dt:
        raise ValidationError('dt', 'must divide the injection period')
    noise_std = r.number('run', 'noise_std', default=0.0)
    if noise_std < 0:
        raise ValidationError('noise_std', 'must be non-negative')

    seed = r.integer('run', 'seed', default=settings.HFISIM_DEFAULT_SEED)
    try:
        scenario = ScenarioConfig(
            params=params, profiles=profiles, inj=inj, t_end=t_end, dt=dt,
            initial=profile_start(profiles, params, inj),
            noise_std=noise_std, seed=seed, name=r.raw('run', 'name') or name,
        )
    except ValueError as exc:
        raise ValidationError('run', str(exc)) from None
    stride = r.integer('run', 'stride')
    if stride is not None and stride < 1:
        raise ValidationError('stride', 'must be at least 1')
    return LoadedConfig(
        scenario=scenario,
        estimator=_estimator(r, params),
        settle_time=r.number('run', 'settle_time', default=0.0),
        stride=stride,
    )


def load_config(path):
    """
    Read and validate a scenario file.

    Raises:
        ParseError: malformed file or value, with line and field when known
        ValidationError: a value violates a model invariant; names the field
    """
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as exc:
        raise ConfigError(f'cannot read {path}: {exc.strerror}') from None
    loaded = parse_config(text, name=path.stem)
    logger.info(f'Loaded scenario {loaded.scenario.name} from {path}')
    return loaded
