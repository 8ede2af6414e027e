"""Exception hierarchy shared across the package."""


class TminferError(Exception):
    """Base class for all errors raised by this package."""


class MalformedDocument(TminferError):
    pass


class MissingField(TminferError):
    def __init__(self, field: str):
        super().__init__(f"missing required field: {field}")
        self.field = field


class InvalidValue(TminferError):
    pass


class UnsupportedDtype(TminferError):
    pass


class UnsupportedQuantization(TminferError):
    pass


class ByteLengthMismatch(TminferError):
    pass


class DuplicateWeightName(TminferError):
    pass


class LabelCountMismatch(TminferError):
    pass


class ShapeMismatch(TminferError):
    pass


class EmptyInput(TminferError):
    pass


class UnsupportedLayer(TminferError):
    def __init__(self, class_name: str):
        super().__init__(f"unsupported layer class: {class_name}")
        self.class_name = class_name


class MissingWeight(TminferError):
    def __init__(self, name: str):
        super().__init__(f"weight not found in store: {name}")
        self.name = name


class UnboundWeights(TminferError):
    def __init__(self, names):
        super().__init__(f"manifest weights never consumed: {sorted(names)}")
        self.names = sorted(names)


class UnsupportedFormat(TminferError):
    pass


class CorruptImage(TminferError):
    pass


class NotSquare(TminferError):
    pass


class InvalidUrl(TminferError):
    pass


class NotReady(TminferError):
    pass


class FetchFailed(TminferError):
    def __init__(self, url: str, cause: str):
        super().__init__(f"fetch failed for {url}: {cause}")
        self.url = url
        self.cause = cause


class CacheCorrupt(TminferError):
    pass
