"""
Exceptions raised by the package.

All exceptions derive from :class:`TsgError`. Errors caused by bad input values also
derive from :class:`ValueError`.
"""


class TsgError(Exception):
    """Base class of all package errors"""


class ConfigError(TsgError, ValueError):
    """Invalid or inconsistent configuration parameters"""


class SchemaError(TsgError, ValueError):
    """Scenario file is missing a required field"""


class ValidationError(TsgError, ValueError):
    """Scenario file is well-formed but violates a scenario invariant"""


class PoseOffMap(TsgError, ValueError):
    """Sensor pose is not on a ground cell of the scenario"""


class RobotNotOnNode(TsgError):
    """The robot cell is not a traversable node"""


class RobotNotInFreeSpace(TsgError):
    """The robot voxel is not part of the thresholded free space"""


class DegenerateCluster(TsgError):
    """Too few cluster nodes to estimate width and direction"""


class UnboundedRoom(TsgError, ValueError):
    """Room has no bounded footprint"""


class MissingVariable(TsgError, KeyError):
    """A factor references a variable which is not in the graph"""


class SingularSystem(TsgError):
    """The damped normal equations could not be factorized"""


class DivergedStep(TsgError):
    """The optimized graph has a larger error than the initial one"""


class OpenTrajectory(TsgError, ValueError):
    """The ground truth trajectory does not return to its start"""


class ExperimentError(TsgError):
    """
    Error raised while running an experiment repeat.

    :param message: Description of the underlying problem
    :param repeat: Repeat number (zero-based)
    :param seed: Random seed used by the repeat
    """

    def __init__(self, message, repeat, seed):
        super().__init__(f'{message} (repeat={repeat}, seed={seed})')
        self.repeat = repeat
        self.seed = seed
