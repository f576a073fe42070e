# core/errors.py
"""
Error taxonomy shared by the engine, the simulator and the report server
"""


class RoadInspectError(Exception):
    """Base class for every error raised on purpose by this project"""


class ConfigurationError(RoadInspectError, ValueError):
    """Invalid configuration: layer shapes, windows, config values, sizes"""


class ShapeError(RoadInspectError, ValueError):
    """Tensor shape does not match what an operation expects"""


class StateError(RoadInspectError, RuntimeError):
    """Operation called in the wrong order (e.g. backward before forward)"""


class AuthorizationError(RoadInspectError, PermissionError):
    """A node tried to publish on a topic it does not own"""


class DecodeError(RoadInspectError, ValueError):
    """Malformed wire payload, label line or file"""


class ReportRejectedError(RoadInspectError, ValueError):
    """The destination refused a report; sending it again cannot succeed"""
