"""Exception types raised by the numerical modules."""


class DirectImageError(Exception):
    """Base class for all package errors."""


class ConfigurationError(DirectImageError, ValueError):
    pass


class OddResolution(ConfigurationError):
    pass


class FluxInconsistency(ConfigurationError):
    pass


class NonRealWeight(ConfigurationError):
    pass


class BidegreeError(DirectImageError, ValueError):
    pass


class AmbiguousKernel(DirectImageError):
    def __init__(self, message, eigenvalues=None, threshold=None):
        super().__init__(message)
        self.eigenvalues = eigenvalues
        self.threshold = threshold


class NotSolvable(DirectImageError):
    def __init__(self, message, closed_residual=None, harmonic_residual=None):
        super().__init__(message)
        self.closed_residual = closed_residual
        self.harmonic_residual = harmonic_residual


class SingularCommutator(DirectImageError):
    def __init__(self, message, points=()):
        super().__init__(message)
        self.points = list(points)


class DimensionJump(DirectImageError):
    def __init__(self, message, points=()):
        super().__init__(message)
        self.points = list(points)


class FrameDegenerate(DirectImageError):
    pass


class TermContractViolated(DirectImageError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals or {}


class StencilIncomplete(DirectImageError):
    pass


class DegenerateKahlerForm(DirectImageError):
    pass
