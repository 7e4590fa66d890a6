"""Exception types for solver failure modes that callers route on."""


class TwistpoError(Exception):
    """Base class for library-specific failures."""


class NumericFault(TwistpoError):
    """Overflow/NaN surfaced from extended-precision evaluation."""


class UnsupportedMapError(TwistpoError):
    """Operation needs map structure (e.g. involutions) the map lacks."""


class DegenerateFrameError(TwistpoError):
    """Curve tangent vanished somewhere: the reducibility frame folded."""


class TwistViolationError(TwistpoError):
    """Average local twist too close to zero to inject the free mean."""


class DivergenceError(TwistpoError):
    """Newton step left the trust region or the error grew persistently."""


class SingularSystemError(TwistpoError):
    """Trailing shooting block is numerically singular (parabolic orbit)."""


class FlatProfileError(TwistpoError):
    """Residue profile shows no sign-changing extrema to seed from."""


class ConfigError(TwistpoError):
    """Invalid run configuration (CLI exit code 2)."""


class SolverFailure(TwistpoError):
    """A requested solve did not reach its tolerance (CLI exit code 3)."""
