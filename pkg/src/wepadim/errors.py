"""Exception hierarchy shared by every module.

Each class carries the process exit code the CLI maps it to:
1 usage/config, 2 data, 3 model compatibility, 4 numerical.
"""


class WepadimError(Exception):
    exit_code = 2


class ConfigError(WepadimError):
    """Invalid configuration value (unknown wavelet, bad grid, bad flag)."""

    exit_code = 1


class FormatError(WepadimError):
    """Malformed on-disk structure (NPY header, PGM header, manifest JSON)."""


class UnsupportedDtypeError(FormatError):
    """Tensor file declares a dtype outside the supported float set."""


class StorageError(WepadimError):
    """I/O failure: missing file, truncated payload, unwritable target."""


class ManifestError(WepadimError):
    """Corpus manifest violates a protocol invariant."""


class SizeError(WepadimError):
    """Spatial extent too small for the requested transform."""


class ShapeError(WepadimError):
    """Array dimensions inconsistent with the receiving structure."""


class InsufficientDataError(WepadimError):
    """Fewer samples than the estimator requires."""


class MetricUndefinedError(WepadimError):
    """Metric requested on a degenerate input (single-class labels, empty partition)."""


class ModelCompatibilityError(WepadimError):
    """Stored model does not match the current configuration or code layout."""

    exit_code = 3


class NumericalError(WepadimError):
    """Numerical routine failed (e.g. covariance not positive definite)."""

    exit_code = 4
