"""Exception types raised across the package."""


class MidiError(ValueError):
    pass


class MalformedHeader(MidiError):
    pass


class UnsupportedFormat(MidiError):
    pass


class TruncatedChunk(MidiError):
    pass


class NonRepresentableDuration(ValueError):
    pass


class EmptyCorpus(ValueError):
    pass


class CorpusTooSmall(ValueError):
    pass


class NoInputFiles(FileNotFoundError):
    pass


class UnknownSymbol(KeyError):
    def __init__(self, feature, value):
        super().__init__(f"{feature}={value!r} is not in the dictionary")
        self.feature = feature
        self.value = value


class MalformedEncoding(ValueError):
    pass


class NoFeasibleOffset(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class NonFiniteInput(ValueError):
    pass


class IndexOutOfRange(IndexError):
    pass


class UnknownVariant(ValueError):
    pass


class SongTooShort(ValueError):
    pass


class CheckpointError(ValueError):
    pass
