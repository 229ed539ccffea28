"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: InputError (and subclasses) -> 1,
NumericalError (and subclasses) -> 2.
"""


class CurveloftError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CurveloftError):
    """Invalid configuration value (network shape, suite name, resolution...)."""


class ContractError(CurveloftError, ValueError):
    """A documented precondition of an operation was violated by the caller."""


class InputError(CurveloftError):
    """Problem with user-supplied input data."""


class ParseError(InputError):
    """Input file exists but cannot be parsed."""


class DegenerateExtentError(InputError):
    """All input points coincide; normalization is impossible."""


class NumericalError(CurveloftError):
    """Numerical failure during optimization or evaluation."""


class OptimizerError(NumericalError):
    """Non-finite gradients handed to the optimizer."""


class NonFiniteLossError(NumericalError):
    """Loss evaluated to NaN/Inf during training."""


class DegenerateGradientError(NumericalError):
    """Field gradient below the curvature floor at a sample point."""


class DegenerateBatchError(NumericalError):
    """Every sample in a batch was rejected by the gradient floor."""


class EmptyLevelSetError(NumericalError):
    """The field has no zero crossing inside the sampled grid."""


class EmptyMeshError(EmptyLevelSetError):
    """Marching cubes produced no triangles."""


class TopologyError(CurveloftError):
    """Mesh is not a closed edge-manifold where one is required."""

    def __init__(self, message, bad_edges=None):
        super().__init__(message)
        self.bad_edges = list(bad_edges) if bad_edges is not None else []


class EvaluationError(NumericalError):
    """Metric evaluation could not proceed (e.g. empty level set)."""


class ExportError(NumericalError):
    """Mesh export failed (e.g. empty level set at export resolution)."""
