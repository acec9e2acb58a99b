"""Exception hierarchy shared across the package."""


class CohtreeError(Exception):
    """Base class for all package errors."""


# -- mesh ---------------------------------------------------------------

class InvalidDomainError(CohtreeError):
    """Degenerate or inverted rectangular window."""


class InvalidPointError(CohtreeError):
    """Point with non-finite coordinates."""


class EmptyPartitionError(CohtreeError):
    """Partition requested over an empty active set."""


# -- dynamics -----------------------------------------------------------

class FlowSpecError(CohtreeError):
    """Unknown flow kind or missing/invalid parameters."""


class DivergedTrajectoryError(CohtreeError):
    """Integration produced a non-finite state."""

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"trajectory diverged at point index {index}")


class OutOfRangeError(CohtreeError):
    """Gridded-field query outside the space-time grid."""


class GriddedFieldError(CohtreeError):
    """Malformed or inconsistent gridded velocity file."""


# -- transfer -----------------------------------------------------------

class EmptyMatrixError(CohtreeError):
    """No test point fell into any domain cell."""


class EmptySelectionError(CohtreeError):
    """Row/column restriction with an empty index set."""


# -- spectral -----------------------------------------------------------

class SpectralError(CohtreeError):
    """Singular-triple computation cannot proceed."""


class ConvergenceError(SpectralError):
    """Iteration budget exhausted before the residual target."""

    def __init__(self, residual, iterations, message=None):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            message
            or f"no convergence after {iterations} iterations (residual {residual:.3e})"
        )


# -- coherence ----------------------------------------------------------

class UndefinedRatioError(CohtreeError):
    """Coherence ratio with a zero-mass source set."""


class NoSplitError(CohtreeError):
    """No admissible threshold pair at this level."""


# -- hierarchy ----------------------------------------------------------

class UndefinedMeasureError(CohtreeError):
    """Relative measure over a zero-mass subset."""


# -- sampling -----------------------------------------------------------

class AdviceError(CohtreeError):
    """Sampling prescription overflows a usable point budget."""


# -- config / pipeline / io ---------------------------------------------

class ConfigError(CohtreeError):
    """Invalid or incomplete run configuration."""


class PipelineError(CohtreeError):
    """Stage failure during an end-to-end run."""

    def __init__(self, stage, message):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")


class BundleError(CohtreeError):
    """Unreadable or inconsistent persisted artifact."""


class RenderError(CohtreeError):
    """Invalid rendering request."""
