"""Exception hierarchy shared by all pipeline stages."""


class GeoWalksError(Exception):
    """Base class for every error raised by this package."""


class DataError(GeoWalksError):
    """Input data is malformed or inconsistent."""


class NTriplesError(DataError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no
        self.message = message


class WKTError(DataError):
    def __init__(self, offset: int, message: str):
        super().__init__(f"offset {offset}: {message}")
        self.offset = offset
        self.message = message


class WeightingError(DataError):
    """A kernel could not produce a weight for an edge (e.g. inverse distance at d=0)."""


class TrainingError(GeoWalksError):
    pass


class ConfigError(GeoWalksError):
    pass


class StageError(GeoWalksError):
    """A pipeline stage was run without the artifacts it depends on."""
