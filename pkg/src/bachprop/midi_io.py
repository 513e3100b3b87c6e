"""Standard MIDI File reading and writing.

Only what the note representation needs is decoded: note-on and note-off
channel messages. Every other event (meta, sysex, controllers, ...) is kept
as an ``other`` message so that delta times still add up correctly.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

from .errors import MalformedHeader, NonRepresentableDuration, TruncatedChunk, UnsupportedFormat
from .score import ATOMS_PER_QUARTER, Score

NOTE_ON = "note-on"
NOTE_OFF = "note-off"
OTHER = "other"

# data bytes following each channel-message status nibble
_DATA_BYTES = {0x8: 2, 0x9: 2, 0xA: 2, 0xB: 2, 0xC: 1, 0xD: 1, 0xE: 2}


class Message(NamedTuple):
    delta: int
    kind: str
    channel: int = 0
    pitch: int = 0
    velocity: int = 0


class TimedNote(NamedTuple):
    onset: int
    duration: int
    pitch: int


@dataclass(frozen=True)
class MidiSong:
    division: int
    tracks: tuple[tuple[Message, ...], ...]
    format: int = 0


class _Reader:
    def __init__(self, data: bytes, pos: int = 0, end: int | None = None):
        self.data = data
        self.pos = pos
        self.end = len(data) if end is None else end

    def byte(self) -> int:
        if self.pos >= self.end:
            raise TruncatedChunk("unexpected end of track data")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def take(self, n: int) -> bytes:
        if self.pos + n > self.end:
            raise TruncatedChunk("unexpected end of track data")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def vlq(self) -> int:
        value = 0
        for _ in range(4):
            b = self.byte()
            value = (value << 7) | (b & 0x7F)
            if not b & 0x80:
                return value
        raise TruncatedChunk("variable-length quantity longer than 4 bytes")

    def done(self) -> bool:
        return self.pos >= self.end


def _read_track(data: bytes, start: int, end: int) -> tuple[Message, ...]:
    r = _Reader(data, start, end)
    messages = []
    running = None
    while not r.done():
        delta = r.vlq()
        status = r.byte()
        if status == 0xFF:
            r.byte()  # meta type
            r.take(r.vlq())
            running = None
            messages.append(Message(delta, OTHER))
            continue
        if status in (0xF0, 0xF7):
            r.take(r.vlq())
            running = None
            messages.append(Message(delta, OTHER))
            continue
        if status < 0x80:
            if running is None:
                raise TruncatedChunk("data byte without running status")
            first = status
            status = running
        else:
            if status >= 0xF0:
                # system common/real-time bytes carry no delta-consistent payload we need
                running = None
                messages.append(Message(delta, OTHER))
                continue
            running = status
            first = r.byte()
        kind_nibble, channel = status >> 4, status & 0x0F
        second = r.byte() if _DATA_BYTES[kind_nibble] == 2 else 0
        if kind_nibble == 0x9 and second > 0:
            messages.append(Message(delta, NOTE_ON, channel, first & 0x7F, second & 0x7F))
        elif kind_nibble == 0x8 or kind_nibble == 0x9:
            messages.append(Message(delta, NOTE_OFF, channel, first & 0x7F, second & 0x7F))
        else:
            messages.append(Message(delta, OTHER, channel))
    return tuple(messages)


def parse_midi(data: bytes) -> MidiSong:
    """Decode a format 0 or 1 Standard MIDI File."""
    if len(data) < 14 or data[:4] != b"MThd":
        raise MalformedHeader("missing MThd chunk")
    (length,) = struct.unpack(">I", data[4:8])
    if length < 6 or 8 + length > len(data):
        raise MalformedHeader(f"bad header length {length}")
    fmt, ntracks, division = struct.unpack(">HHH", data[8:14])
    if fmt == 2:
        raise UnsupportedFormat("format 2 (independent sequences) is not supported")
    if fmt > 2:
        raise MalformedHeader(f"unknown format {fmt}")
    if division & 0x8000:
        raise UnsupportedFormat("SMPTE time division is not supported")
    if division == 0:
        raise MalformedHeader("division must be positive")

    pos = 8 + length
    tracks = []
    while len(tracks) < ntracks:
        if pos + 8 > len(data):
            raise TruncatedChunk(f"expected {ntracks} tracks, found {len(tracks)}")
        tag = data[pos:pos + 4]
        (size,) = struct.unpack(">I", data[pos + 4:pos + 8])
        start, end = pos + 8, pos + 8 + size
        if end > len(data):
            raise TruncatedChunk(f"chunk {tag!r} runs past end of file")
        if tag == b"MTrk":
            tracks.append(_read_track(data, start, end))
        pos = end
    return MidiSong(division=division, tracks=tuple(tracks), format=fmt)


def extract_notes(song: MidiSong) -> list[TimedNote]:
    """Merge all tracks and pair every ON with the next OFF of the same pitch.

    Pairing is first-in first-out per pitch across all channels. ONs left
    open are closed at the last event time; zero-length notes are dropped.
    """
    by_tick: dict[int, tuple[list[int], list[int]]] = {}  # tick -> (off pitches, on pitches)
    last_tick = 0
    for track in song.tracks:
        tick = 0
        for msg in track:
            tick += msg.delta
            if msg.kind != OTHER:
                offs, ons = by_tick.setdefault(tick, ([], []))
                (ons if msg.kind == NOTE_ON else offs).append(msg.pitch)
        last_tick = max(last_tick, tick)

    # Within a tick, OFFs close earlier ONs first; an OFF with nothing open
    # cancels a same-tick ON (a zero-length note). This keeps the result
    # independent of track order.
    open_notes: dict[int, list[int]] = {}
    notes = []
    for tick in sorted(by_tick):
        offs, ons = by_tick[tick]
        stray: dict[int, int] = {}
        for pitch in offs:
            pending = open_notes.get(pitch)
            if pending:
                onset = pending.pop(0)
                notes.append(TimedNote(onset, tick - onset, pitch))
            else:
                stray[pitch] = stray.get(pitch, 0) + 1
        for pitch in ons:
            if stray.get(pitch):
                stray[pitch] -= 1
            else:
                open_notes.setdefault(pitch, []).append(tick)
    for pitch, pending in open_notes.items():
        for onset in pending:
            if last_tick > onset:
                notes.append(TimedNote(onset, last_tick - onset, pitch))
    notes.sort(key=lambda n: (n.onset, n.pitch, n.duration))
    return notes


def ticks_to_quarters(notes, division: int) -> list[tuple[Fraction, Fraction, int]]:
    if division <= 0:
        raise ValueError("division must be positive")
    return [(Fraction(n.onset, division), Fraction(n.duration, division), n.pitch) for n in notes]


def _vlq(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def _atoms_to_ticks(atoms: int, division: int) -> int:
    ticks, rem = divmod(atoms * division, ATOMS_PER_QUARTER)
    if rem:
        raise NonRepresentableDuration(
            f"{Fraction(atoms, ATOMS_PER_QUARTER)} quarter is not a multiple of 1/{division}")
    return ticks


def write_midi(score: Score, division: int = 48, text: str | None = None) -> bytes:
    """Serialize a score as a single-track format-0 file.

    ``text`` is stored in a text meta event at tick 0 when given. Same-pitch
    notes whose spans nest cannot survive FIFO re-pairing; everything else
    round-trips exactly.
    """
    if not 0 < division < 0x8000:
        raise ValueError("division must be in 1..32767")
    events = []  # (tick, order, pitch, duration) ; OFF (order 0) before ON
    onset = 0
    for note in score.notes:
        onset += _atoms_to_ticks(note.dT, division)
        dur = _atoms_to_ticks(note.T, division)
        events.append((onset, 1, note.P, dur))
        events.append((onset + dur, 0, note.P, 0))
    events.sort()

    body = bytearray()
    if text is not None:
        payload = text.encode("utf-8")
        body += b"\x00\xff\x01" + _vlq(len(payload)) + payload
    now = 0
    for tick, order, pitch, _ in events:
        body += _vlq(tick - now)
        now = tick
        if order:
            body += bytes((0x90, pitch, 64))
        else:
            body += bytes((0x80, pitch, 0))
    body += b"\x00\xff\x2f\x00"

    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, division)
    return header + b"MTrk" + struct.pack(">I", len(body)) + bytes(body)


def read_score(data: bytes, grid=None, name: str = "", source: str = "") -> Score:
    """Full pipeline from SMF bytes to a quantized score."""
    from .score import build_grid, score_from_notes

    song = parse_midi(data)
    notes = ticks_to_quarters(extract_notes(song), song.division)
    return score_from_notes(notes, grid or build_grid(), name=name, source=source)
