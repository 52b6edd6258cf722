"""
Error hierarchy for the motor model library
"""


class MotorModelError(Exception):
    """Base class for numerical failures raised by motor_models"""


class NonConvergent(MotorModelError):
    """An iterative solve did not reach its tolerance"""


class SingularJacobian(MotorModelError):
    """A 2x2 Jacobian or inductance matrix could not be inverted"""


class NonFinite(MotorModelError):
    """An integration step produced inf or nan"""


class OutOfProfileDomain(MotorModelError):
    """A drive profile was evaluated outside its breakpoints"""


class SeriesTooShort(MotorModelError):
    """A sampled series is shorter than one demodulation window"""


class NoInjection(MotorModelError):
    """Position estimation was requested with a zero injection amplitude"""
