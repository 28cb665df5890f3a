"""Exception types raised across the toolkit."""


class MangaLayoutError(Exception):
    """Base class for every error raised by :mod:`mangalayout`."""


# annotation model
class SchemaError(MangaLayoutError, ValueError):
    pass


class BoundsError(MangaLayoutError, ValueError):
    def __init__(self, message, page_index=None, region_id=None):
        super().__init__(message)
        self.page_index = page_index
        self.region_id = region_id


class MissingMetadataError(MangaLayoutError, ValueError):
    pass


# rendering
class DimensionMismatchError(MangaLayoutError, ValueError):
    pass


class EmptyFrameListError(MangaLayoutError, ValueError):
    pass


# perturbation
class DegenerateBoxError(MangaLayoutError, ValueError):
    def __init__(self, message, region_id=None):
        super().__init__(message)
        self.region_id = region_id


# corpus
class InsufficientPagesError(MangaLayoutError, ValueError):
    pass


class SingleWorkClassError(MangaLayoutError, ValueError):
    pass


class StyleOverlapWarning(UserWarning):
    """Two synthetic styles share an identical parameter vector."""


# classifier
class CorpusMissingError(MangaLayoutError, FileNotFoundError):
    pass


class ClassCountMismatchError(MangaLayoutError, ValueError):
    pass


class ModelTaskMismatchError(MangaLayoutError, ValueError):
    pass


# explain
class LayerNotFoundError(MangaLayoutError, KeyError):
    pass


class NonScalarTargetError(MangaLayoutError, ValueError):
    pass


# report
class EmptyPredictionsError(MangaLayoutError, ValueError):
    pass


class IdOutOfRangeError(MangaLayoutError, ValueError):
    pass
