"""Exception hierarchy shared across the package.

Contract violations (bad arguments, shape mismatches, invalid configs) and
file-level problems (unreadable or malformed data) are kept distinct so the
CLI can map them to stable exit codes.
"""


class MvreidError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(MvreidError):
    """A documented precondition was violated by the caller."""


class ConfigError(ContractError):
    """A run or architecture configuration is invalid."""


class DimensionError(ContractError):
    """Tensor shapes are incompatible for the requested operation."""

    def __init__(self, op, *shapes):
        super().__init__("%s: incompatible shapes %s" % (op, " vs ".join(map(str, shapes))))
        self.shapes = shapes


class FormatError(MvreidError):
    """A file on disk does not conform to its expected format."""


class VersionError(FormatError):
    """A file has a recognised format but an unsupported version."""


class TruncatedFileError(FormatError):
    """A file ends before its declared payload is complete."""
