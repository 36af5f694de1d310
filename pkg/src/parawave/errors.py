"""Exception taxonomy shared by every module.

The CLI maps these onto exit-code classes: configuration and format
problems exit with 3, numeric aborts (instability, blow-up) with 4.
Usage errors are argparse's own and exit with 2.
"""


class ParawaveError(Exception):
    """Base class for all errors raised by this package."""


class GridError(ParawaveError):
    """Invalid grid: bad size, unsupported dimensionality, grid mismatch."""


class ShapeError(ParawaveError):
    """Array shape inconsistent with the declared grid or tensor contract."""


class DomainError(ParawaveError):
    """Value outside its mathematical domain (nonpositive speed, aliased
    wavenumber, zero-energy reference, non-finite samples)."""


class RegionError(ParawaveError):
    """Requested raster subregion does not fit inside the source raster."""


class ConfigError(ParawaveError):
    """Inconsistent or unsatisfiable configuration parameters."""


class FormatError(ParawaveError):
    """Corrupt or truncated on-disk artifact (bad magic, length mismatch)."""


class StabilityError(ParawaveError):
    """Time step violates the CFL stability bound for the given medium."""


class NumericError(ParawaveError):
    """Numerical abort: solution blow-up, non-finite loss, failed factorization."""
