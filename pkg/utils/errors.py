class QGNLOError(Exception):
    """Base class for every error raised by the qgnlo library."""


class GraphSpecError(QGNLOError):
    """A graph spec document is malformed or describes an invalid graph."""


class NumericsError(QGNLOError):
    """A numerical kernel received inputs it cannot handle."""


class SpectrumError(QGNLOError):
    """The eigenproblem could not be solved to the requested depth."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}


class DLError(QGNLOError):
    """A Dalgarno-Lewis field could not be constructed."""


class ConfigError(QGNLOError):
    """A run configuration is inconsistent."""
