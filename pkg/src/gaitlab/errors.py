"""Exception hierarchy shared by all gaitlab modules."""


class GaitlabError(Exception):
    """Base class for every error raised by gaitlab."""


class ParseError(GaitlabError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(ParseError):
    pass


class EmptyDatasetError(GaitlabError, ValueError):
    pass


class ParameterError(GaitlabError, ValueError):
    pass


class ConfigurationError(GaitlabError):
    pass


class ShapeError(GaitlabError, ValueError):
    pass


class DegenerateWalkError(GaitlabError, ValueError):
    """Root trajectory has no horizontal extent, so walking direction is undefined."""


class DegenerateGeometryError(GaitlabError, ValueError):
    def __init__(self, message, frame=None):
        self.frame = frame
        if frame is not None:
            message = f"frame {frame}: {message}"
        super().__init__(message)


class InsufficientClassesError(GaitlabError, ValueError):
    pass


class DegenerateModelError(GaitlabError):
    """The fitted criterion has no usable discriminant direction."""


class CoincidentCentroidsError(GaitlabError, ZeroDivisionError):
    def __init__(self, pair):
        self.pair = pair
        super().__init__(f"class centroids coincide for classes {pair[0]!r} and {pair[1]!r}")


class UndefinedMetricError(GaitlabError, ValueError):
    pass


class UndefinedScoreError(GaitlabError, ZeroDivisionError):
    pass


class EmptyGalleryError(GaitlabError):
    pass


class GalleryFormatError(GaitlabError):
    pass
