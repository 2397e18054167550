"""Exception types raised across the package."""


class PanelDataError(ValueError):
    """Malformed panel: ragged grid, non-finite cells, bad dimensions."""


class ParameterError(ValueError):
    """Parameters outside the admissible space."""


class ConfigError(ValueError):
    """Bad configuration file or command-line options."""


class EstimationError(RuntimeError):
    """A numerical procedure failed (no valid optimum, singular matrix, ...)."""
