"""Exception hierarchy shared across the package."""

from __future__ import annotations


class BeatgridError(Exception):
    """Base class for all errors raised by beatgrid."""


# MIDI / annotation input
class MidiError(BeatgridError):
    """Base class for Standard MIDI File failures."""


class MalformedFile(MidiError):
    pass


class UnsupportedFormat(MidiError):
    pass


class DanglingNoteOn(UserWarning):
    """A note-on without a matching note-off; closed at the end of the file."""


class ParseError(BeatgridError):
    pass


class NonMonotonicTime(ParseError):
    pass


class CounterOutOfRange(ParseError):
    pass


class CsvParseError(ParseError):
    def __init__(self, message: str, line: int) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


# augmentation
class EmptySegment(BeatgridError):
    pass


class InfeasibleTranspose(BeatgridError):
    pass


# codec
class OutOfWindow(BeatgridError):
    pass


class CounterOverflow(BeatgridError):
    pass


# model
class LengthOverflow(BeatgridError):
    pass


class NonFiniteLoss(BeatgridError):
    pass


class ShapeMismatch(BeatgridError):
    pass


class CheckpointError(BeatgridError):
    pass


class VersionMismatch(CheckpointError):
    pass


class CorruptChecksum(CheckpointError):
    pass


# evaluation
class UnsortedInput(BeatgridError):
    pass


class EmptyCorpus(BeatgridError):
    pass


class ConfigError(BeatgridError):
    pass
