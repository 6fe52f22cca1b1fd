"""Exception hierarchy shared by all chainlab modules."""


class ChainLabError(Exception):
    """Base class for all errors raised by chainlab."""


class QuadratureError(ChainLabError):
    """Adaptive quadrature failed to converge."""


class RangeError(ChainLabError):
    """Argument outside the tabulated/invertible range of a thermodynamic curve."""


class SamplerStuckError(ChainLabError):
    """Rejection sampler exceeded the consecutive-rejection budget."""


class ResolutionError(ChainLabError):
    """Grid or observation schedule too coarse for the requested computation."""


class ConditioningError(ChainLabError):
    """Conditioning point lies outside the support window of the block-mean density."""


class BlowUpError(ChainLabError):
    """A state or PDE solution left the smooth regime (non-finite value or gradient blow-up)."""

    def __init__(self, message, t=None, site=None):
        super().__init__(message)
        self.t = t
        self.site = site


class StalenessError(ChainLabError):
    """Microscopic state and hydrodynamic profile refer to different times."""


class InsufficientReplicasError(ChainLabError):
    """Too few replicas for the requested statistical estimate."""


class CompatibilityError(ChainLabError):
    """Singular linear system: right-hand side not orthogonal to constants."""


class ConfigError(ChainLabError):
    """Experiment configuration failed schema or invariant validation."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
