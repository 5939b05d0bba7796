"""Three-phase frequency estimation with augmented complex Kalman filters."""

from ._wlfreq import (
    ConfigError,
    Error,
    __version__,
    clarke_samples,
    error_spectrum,
    estimate,
    estimate_network,
    list_experiments,
    run,
    sequence_components,
    validate,
)

__all__ = [
    "ConfigError",
    "Error",
    "__version__",
    "clarke_samples",
    "error_spectrum",
    "estimate",
    "estimate_network",
    "list_experiments",
    "run",
    "sequence_components",
    "validate",
]
