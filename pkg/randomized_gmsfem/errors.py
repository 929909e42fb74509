"""
Exceptions raised by randomized_gmsfem.

Each family carries the process exit code the command-line interface uses
when the exception escapes a subcommand.
"""


class GmsfemError(Exception):
    "Base class for all errors raised by this package."
    exit_code = 1


class ConfigurationError(GmsfemError, ValueError):
    "Invalid mesh sizes, config files, or parameters."
    exit_code = 2


class InadmissibleParameter(ConfigurationError):
    "A parameter vector mu for which some Theta_q(mu) is not positive."


class NumericalError(GmsfemError):
    "A numerical routine failed to produce a trustworthy result."
    exit_code = 3


class SolverError(NumericalError):
    """
    An iterative solve stopped without meeting its tolerance.

    Parameters
    ----------
    message : str
    residual : float
        Relative residual reached when the solver gave up.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NumericalRankError(NumericalError):
    "A matrix that must be positive definite is not, even after jitter."


class FitError(NumericalError):
    """
    A predictor could not be fitted.

    Parameters
    ----------
    message : str
    deficient : list, optional
        The basis terms (multi-indices) that the training design fails to
        determine.
    """

    def __init__(self, message, deficient=None):
        super().__init__(message)
        self.deficient = list(deficient or [])


class DegenerateBasisError(NumericalError):
    """
    The coarse system is singular because online basis columns are dependent.

    Parameters
    ----------
    message : str
    columns : list
        Columns dominating the near-null space, as indices or as
        (neighborhood, mode) pairs.
    """

    def __init__(self, message, columns=None):
        super().__init__(message)
        self.columns = list(columns or [])


class SamplingError(NumericalError):
    "Rejection sampling ran out of attempts."


class ArtifactError(GmsfemError, OSError):
    "Offline artifacts are missing, corrupt, or inconsistent with each other."
    exit_code = 4
