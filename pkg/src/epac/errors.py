"""Exception hierarchy shared by every stage of the EPAC pipeline."""


class EpacError(Exception):
    """Base class for all errors raised by this package."""


class NonQuartic(EpacError, ValueError):
    pass


class NonConfiningPotential(EpacError, ValueError):
    pass


class NotConverged(EpacError, RuntimeError):
    pass


class UnboundedSpectrumRequest(EpacError, ValueError):
    pass


class TruncationTooSevere(EpacError, ValueError):
    """The retained spectrum does not carry the thermal weight needed at this beta."""


class AcceptanceOutOfRange(EpacError, RuntimeError):
    pass


class FitRejected(EpacError, RuntimeError):
    pass


class IntegrandNotLocalized(EpacError, ValueError):
    pass


class QOutOfRange(EpacError, ValueError):
    """Requested Q is not reached by dw/dJ on the supplied source grid."""


class NonConvexAtOrigin(EpacError, ValueError):
    pass


class ConfigError(EpacError, ValueError):
    pass
