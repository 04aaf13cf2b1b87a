"""Exception hierarchy shared by all voxsr modules."""


class VoxsrError(Exception):
    """Base class for data errors raised by voxsr."""


class ParameterError(VoxsrError, ValueError):
    pass


class DepthUnderflowError(ParameterError):
    pass


class EmptyFrameError(ParameterError):
    pass


class CorruptStreamError(VoxsrError):
    """An octree mask stream that does not describe a valid tree."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (mask offset {offset})"
        super().__init__(message)
        self.offset = offset


class ParseError(VoxsrError):
    """Malformed PLY input. ``location`` is a header line or byte offset description."""

    def __init__(self, message, location=None):
        if location is not None:
            message = f"{message} at {location}"
        super().__init__(message)
        self.location = location


class CorruptFileError(VoxsrError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class BadMagicError(CorruptFileError):
    pass


class UnsupportedVersionError(CorruptFileError):
    pass


class CoordinateRangeError(CorruptFileError):
    pass


class MortonOrderError(CorruptFileError):
    pass


class TruncatedFileError(CorruptFileError):
    pass


class EmptyManifestError(VoxsrError):
    pass


class EmptyReportError(VoxsrError):
    pass
