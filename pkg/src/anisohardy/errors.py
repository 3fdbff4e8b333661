"""Exception types raised across the toolkit."""


class AnisoHardyError(Exception):
    """Base class for all toolkit errors."""


class NotExpansive(AnisoHardyError, ValueError):
    pass


class Singular(AnisoHardyError, ValueError):
    pass


class EmptyFamily(AnisoHardyError, ValueError):
    pass


class EmptyRegion(AnisoHardyError, ValueError):
    pass


class GridMismatch(AnisoHardyError, ValueError):
    pass


class MalformedHeader(AnisoHardyError, ValueError):
    pass


class TruncatedPayload(AnisoHardyError, ValueError):
    pass


class UnknownFamily(AnisoHardyError, KeyError):
    pass


class UnsupportedSpace(AnisoHardyError, TypeError):
    pass


class NonConvergentBisection(AnisoHardyError, RuntimeError):
    pass


class NonPositiveWeight(AnisoHardyError, ValueError):
    pass


class EmptyDictionary(AnisoHardyError, ValueError):
    pass


class AnnulusBoundViolated(AnisoHardyError, ValueError):
    """The mother wavelet's Fourier transform is too small on the annulus.

    ``min_abs`` carries the measured minimum of ``|phi_hat|``.
    """

    def __init__(self, message, min_abs=0.0):
        super().__init__(message)
        self.min_abs = min_abs


class DivideNearZero(AnisoHardyError, ZeroDivisionError):
    pass


class SupportOverflow(AnisoHardyError, ValueError):
    pass


class LambdaTooSmall(AnisoHardyError, ValueError):
    pass


class RankDeficient(AnisoHardyError, ValueError):
    pass


class ZeroAverage(AnisoHardyError, ZeroDivisionError):
    pass


class DegenerateFamily(AnisoHardyError, ValueError):
    pass


class ExponentTooSmall(AnisoHardyError, ValueError):
    pass


class CoverageFailure(AnisoHardyError, RuntimeError):
    pass


class ConfigParse(AnisoHardyError, ValueError):
    pass
