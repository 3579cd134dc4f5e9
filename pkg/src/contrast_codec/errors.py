"""Exception hierarchy shared by every module in the package."""


class ContrastCodecError(Exception):
    """Base class for all errors raised by contrast-codec."""


class DomainError(ContrastCodecError, ValueError):
    """An argument value is outside the range an operation accepts."""


class CapabilityError(ContrastCodecError):
    """A parameter combination that is well-formed but unsupported."""


class FormatError(ContrastCodecError):
    """An on-disk artifact (netpbm file, sidecar, codebook dump) is malformed."""


class MissingMetadataError(FormatError):
    """Decoding was attempted without metadata it cannot run without."""
