"""Dynamic-schema numeric telemetry log: codec, file store, record/replay.

Algorithms register an ordered list of signal names once; afterwards every
log call is just an array of 64-bit floats stamped with virtual time and
tagged with the schema's content hash. Publishing the schema on a channel
(and re-announcing it at low frequency) lets any consumer restore the named
values, so debug signals and regular bus traffic land in one replayable
file.

Wire format (little-endian throughout, bit-exact across languages):

    header   magic "TSL1" + u16 version
    record   u8 kind + u32 payload_length + payload
    kind 1   schema:   u64 schema_id + u16 count + count * (u16 len + utf8)
                       + u16 len + utf8 source module
    kind 2   frame:    u64 schema_id + u64 stamp_ns + count * f64
    kind 3   envelope: u64 stamp_ns + u64 sequence + u16 len + utf8 topic
                       + u16 len + utf8 publisher + u32 len + payload bytes

schema_id is the FNV-1a 64-bit hash of the signal names joined with the
0x1F unit separator, so equal name lists hash identically everywhere.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Any, BinaryIO, Callable, Iterator, Optional

from pitwall.bus import (
    SimBus,
    SimTime,
    StampedEnvelope,
    TopicSpec,
    UnknownTopicError,
    decode_payload,
    encode_payload,
    fnv1a_64,
    sec,
)

MAGIC = b"TSL1"
VERSION = 1

KIND_SCHEMA = 1
KIND_FRAME = 2
KIND_ENVELOPE = 3

_SEPARATOR = b"\x1f"

SCHEMA_TOPIC = "/tsl/schema"
FRAME_TOPIC = "/tsl/frame"
LOG_QUEUE_DEPTH = 128  # the log sink must not drop frames
REANNOUNCE_PERIOD = sec(1)


class TslError(Exception):
    pass


class DuplicateSignalNameError(TslError):
    pass


class EmptySignalNameError(TslError):
    pass


class LengthMismatchError(TslError):
    pass


class CorruptHeaderError(TslError):
    pass


class TruncatedRecordError(TslError):
    def __init__(self, offset: int):
        super().__init__(f"truncated record at byte {offset}")
        self.offset = offset


class UnknownSchemaError(TslError):
    def __init__(self, schema_id: int, offset: int):
        super().__init__(f"frame at byte {offset} references unknown schema {schema_id:#018x}")
        self.schema_id = schema_id
        self.offset = offset


class IoFailureError(TslError):
    pass


def schema_hash(names: list[str] | tuple[str, ...]) -> int:
    return fnv1a_64(_SEPARATOR.join(n.encode("utf-8") for n in names))


@dataclass(frozen=True)
class SignalSchema:
    schema_id: int
    signal_names: tuple[str, ...]
    source_module: str

    @staticmethod
    def create(source_module: str, names: list[str]) -> "SignalSchema":
        if any(not n for n in names):
            raise EmptySignalNameError("signal names must be non-empty")
        if len(set(names)) != len(names):
            raise DuplicateSignalNameError(f"duplicate signal names in {names}")
        return SignalSchema(schema_hash(names), tuple(names), source_module)


@dataclass(frozen=True)
class SignalFrame:
    schema_id: int
    stamp: SimTime
    values: tuple[float, ...]
    sanitized: bool = False  # true when non-finite inputs were stored as NaN


def make_frame(schema: SignalSchema, values, stamp: SimTime) -> SignalFrame:
    """Build a frame against a schema; non-finite values become NaN and flag it."""
    if len(values) != len(schema.signal_names):
        raise LengthMismatchError(
            f"{len(values)} values for {len(schema.signal_names)} signals")
    sanitized = False
    cleaned = []
    for v in values:
        v = float(v)
        if not math.isfinite(v):
            v = math.nan
            sanitized = True
        cleaned.append(v)
    return SignalFrame(schema.schema_id, stamp, tuple(cleaned), sanitized)


# ----------------------------------------------------------------------
# binary encoding
# ----------------------------------------------------------------------

def _pack_str(text: str) -> bytes:
    data = text.encode("utf-8")
    return struct.pack("<H", len(data)) + data


def encode_schema(schema: SignalSchema) -> bytes:
    parts = [struct.pack("<QH", schema.schema_id, len(schema.signal_names))]
    parts.extend(_pack_str(n) for n in schema.signal_names)
    parts.append(_pack_str(schema.source_module))
    return b"".join(parts)


def encode_frame(frame: SignalFrame) -> bytes:
    return struct.pack("<QQ", frame.schema_id, frame.stamp) + \
        struct.pack(f"<{len(frame.values)}d", *frame.values)


def encode_envelope_record(envelope: StampedEnvelope) -> bytes:
    payload = encode_payload(envelope.payload)
    return (struct.pack("<QQ", envelope.publish_stamp, envelope.sequence)
            + _pack_str(envelope.topic)
            + _pack_str(envelope.publisher_id)
            + struct.pack("<I", len(payload))
            + payload)


def wrap_record(kind: int, payload: bytes) -> bytes:
    return struct.pack("<BI", kind, len(payload)) + payload


@dataclass(frozen=True)
class EnvelopeRecord:
    stamp: SimTime
    sequence: int
    topic: str
    publisher_id: str
    payload_bytes: bytes


def _unpack_str(payload: bytes, offset: int) -> tuple[str, int]:
    (length,) = struct.unpack_from("<H", payload, offset)
    offset += 2
    return payload[offset:offset + length].decode("utf-8"), offset + length


def decode_schema(payload: bytes) -> SignalSchema:
    schema_id, count = struct.unpack_from("<QH", payload, 0)
    offset = 10
    names = []
    for _ in range(count):
        name, offset = _unpack_str(payload, offset)
        names.append(name)
    source, _ = _unpack_str(payload, offset)
    return SignalSchema(schema_id, tuple(names), source)


def decode_frame(payload: bytes) -> SignalFrame:
    schema_id, stamp = struct.unpack_from("<QQ", payload, 0)
    count = (len(payload) - 16) // 8
    values = struct.unpack_from(f"<{count}d", payload, 16)
    return SignalFrame(schema_id, stamp, values)


def decode_envelope_record(payload: bytes) -> EnvelopeRecord:
    stamp, sequence = struct.unpack_from("<QQ", payload, 0)
    topic, offset = _unpack_str(payload, 16)
    publisher, offset = _unpack_str(payload, offset)
    (length,) = struct.unpack_from("<I", payload, offset)
    offset += 4
    return EnvelopeRecord(stamp, sequence, topic, publisher, payload[offset:offset + length])


# ----------------------------------------------------------------------
# file store
# ----------------------------------------------------------------------

class LogWriter:
    """Append-only log file; write failures surface as IoFailureError."""

    def __init__(self, path_or_file):
        if hasattr(path_or_file, "write"):
            self._fh: BinaryIO = path_or_file
            self._owns = False
        else:
            self._fh = open(path_or_file, "wb")
            self._owns = True
        self._write(MAGIC + struct.pack("<H", VERSION))

    def _write(self, data: bytes) -> None:
        try:
            self._fh.write(data)
        except OSError as exc:
            raise IoFailureError(str(exc)) from exc

    def write_schema(self, schema: SignalSchema) -> None:
        self._write(wrap_record(KIND_SCHEMA, encode_schema(schema)))

    def write_frame(self, frame: SignalFrame) -> None:
        self._write(wrap_record(KIND_FRAME, encode_frame(frame)))

    def write_envelope(self, envelope: StampedEnvelope) -> None:
        self._write(wrap_record(KIND_ENVELOPE, encode_envelope_record(envelope)))

    def close(self) -> None:
        if self._owns:
            self._fh.close()
        else:
            try:
                self._fh.flush()
            except OSError as exc:
                raise IoFailureError(str(exc)) from exc


def read_records(data: bytes) -> Iterator[tuple[int, int, bytes]]:
    """Yield (offset, kind, payload) for every complete record.

    Raises CorruptHeaderError for a bad magic and TruncatedRecordError when
    the file ends inside a record; everything before the cut is yielded.
    """
    if len(data) < 6 or data[:4] != MAGIC:
        raise CorruptHeaderError("missing TSL1 magic")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != VERSION:
        raise CorruptHeaderError(f"unsupported version {version}")
    offset = 6
    total = len(data)
    while offset < total:
        if offset + 5 > total:
            raise TruncatedRecordError(offset)
        kind, length = struct.unpack_from("<BI", data, offset)
        if offset + 5 + length > total:
            raise TruncatedRecordError(offset)
        yield offset, kind, data[offset + 5:offset + 5 + length]
        offset += 5 + length


def _read_file(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def read_log(path) -> Iterator[tuple[int, Any]]:
    """Yield (offset, record) where record is a SignalSchema, SignalFrame,
    or EnvelopeRecord, in file order."""
    for offset, kind, payload in read_records(_read_file(path)):
        if kind == KIND_SCHEMA:
            yield offset, decode_schema(payload)
        elif kind == KIND_FRAME:
            yield offset, decode_frame(payload)
        elif kind == KIND_ENVELOPE:
            yield offset, decode_envelope_record(payload)
        else:
            raise TslError(f"unknown record kind {kind} at byte {offset}")


def iter_named_frames(path) -> Iterator[tuple[SimTime, dict[str, float]]]:
    """Decode frames into (stamp, name -> value) maps, resolving schemas from
    earlier records in the same file. A frame whose schema has not been
    announced yet is an error, never silently dropped."""
    schemas: dict[int, SignalSchema] = {}
    for offset, record in read_log(path):
        if isinstance(record, SignalSchema):
            schemas[record.schema_id] = record
        elif isinstance(record, SignalFrame):
            schema = schemas.get(record.schema_id)
            if schema is None:
                raise UnknownSchemaError(record.schema_id, offset)
            if len(record.values) != len(schema.signal_names):
                raise LengthMismatchError(
                    f"frame at byte {offset} has {len(record.values)} values "
                    f"for {len(schema.signal_names)} signals")
            yield record.stamp, dict(zip(schema.signal_names, record.values))


def list_schemas(path) -> list[SignalSchema]:
    seen: dict[int, SignalSchema] = {}
    for _, record in read_log(path):
        if isinstance(record, SignalSchema):
            seen.setdefault(record.schema_id, record)
    return list(seen.values())


# ----------------------------------------------------------------------
# bus integration: signal hub, recorder, replay
# ----------------------------------------------------------------------

@dataclass
class SignalSchemaMsg:
    schema_id: int
    signal_names: list[str]
    source_module: str


@dataclass
class SignalFrameMsg:
    schema_id: int
    stamp: SimTime
    values: list[float]
    sanitized: bool = False


class SignalGroup:
    """Handle an algorithm logs through; the owning wrapper stamps and ships."""

    def __init__(self, hub: "SignalHub", schema: SignalSchema):
        self._hub = hub
        self.schema = schema

    def log(self, values) -> SignalFrame:
        return self._hub.emit(self.schema, values)


class SignalHub:
    """Publishes schemas and frames on the logging topics.

    Schemas go out immediately on registration and re-announce every second
    so a recorder that starts late can still resolve every frame it sees.
    """

    def __init__(self, bus: SimBus, owner: str = "signal_hub"):
        self._bus = bus
        self._owner = owner
        if not bus.has_topic(SCHEMA_TOPIC):
            bus.register_topic(TopicSpec(SCHEMA_TOPIC, SignalSchemaMsg,
                                         queue_depth=LOG_QUEUE_DEPTH))
        if not bus.has_topic(FRAME_TOPIC):
            bus.register_topic(TopicSpec(FRAME_TOPIC, SignalFrameMsg,
                                         queue_depth=LOG_QUEUE_DEPTH))
        self._schema_pub = bus.advertise(SCHEMA_TOPIC, owner)
        self._frame_pubs: dict[str, Any] = {}
        self._schemas: list[SignalSchema] = []
        bus.schedule_timer(REANNOUNCE_PERIOD, self._announce_all, owner)

    @property
    def schemas(self) -> list[SignalSchema]:
        return list(self._schemas)

    def register(self, source_module: str, names: list[str]) -> SignalGroup:
        schema = SignalSchema.create(source_module, names)
        self._schemas.append(schema)
        self._schema_pub.publish(_schema_msg(schema))
        return SignalGroup(self, schema)

    def emit(self, schema: SignalSchema, values) -> SignalFrame:
        frame = make_frame(schema, values, self._bus.now)
        pub = self._frame_pubs.get(schema.source_module)
        if pub is None:
            pub = self._bus.advertise(FRAME_TOPIC, schema.source_module)
            self._frame_pubs[schema.source_module] = pub
        pub.publish(SignalFrameMsg(frame.schema_id, frame.stamp,
                                   list(frame.values), frame.sanitized))
        return frame

    def _announce_all(self, _now: SimTime) -> None:
        for schema in self._schemas:
            self._schema_pub.publish(_schema_msg(schema))


def _schema_msg(schema: SignalSchema) -> SignalSchemaMsg:
    return SignalSchemaMsg(schema.schema_id, list(schema.signal_names), schema.source_module)


class EnvelopeRecorder:
    """Taps bus topics and appends everything delivered to one log file.

    Frames and schemas seen on the logging topics are stored as first-class
    records so decoding needs nothing else; every other topic is stored as a
    raw envelope. The recorder subscribes with a deep queue so bursts are
    never dropped. Write failures flip ``failed`` and stop the recorder
    without disturbing the rest of the stack.
    """

    def __init__(self, bus: SimBus, topics: list[str], writer: LogWriter,
                 owner: str = "recorder",
                 on_error: Optional[Callable[[IoFailureError], None]] = None):
        self._writer = writer
        self._on_error = on_error
        self.failed: Optional[str] = None
        self.records_written = 0
        for name in topics:
            if not bus.has_topic(name):
                raise UnknownTopicError(name)
            bus.subscribe(name, self._on_envelope, owner, queue_depth=LOG_QUEUE_DEPTH)

    def _on_envelope(self, envelope: StampedEnvelope) -> None:
        if self.failed is not None:
            return
        try:
            payload = envelope.payload
            if isinstance(payload, SignalSchemaMsg):
                self._writer.write_schema(SignalSchema(
                    payload.schema_id, tuple(payload.signal_names), payload.source_module))
            elif isinstance(payload, SignalFrameMsg):
                self._writer.write_frame(SignalFrame(
                    payload.schema_id, payload.stamp, tuple(payload.values), payload.sanitized))
            else:
                self._writer.write_envelope(envelope)
            self.records_written += 1
        except IoFailureError as exc:
            self.failed = str(exc)
            if self._on_error is not None:
                self._on_error(exc)


class TopicMissingError(TslError):
    pass


class SchemaMismatchError(TslError):
    pass


def replay(path, bus: SimBus) -> int:
    """Schedule every recorded envelope for re-publication at its original
    virtual stamp; returns the number of envelopes scheduled.

    The receiving bus must have every recorded topic registered with a
    payload type whose canonical encoding matches the recorded bytes.
    """
    count = 0
    for offset, record in read_log(path):
        if not isinstance(record, EnvelopeRecord):
            continue
        if not bus.has_topic(record.topic):
            raise TopicMissingError(record.topic)
        message_type = bus.topic(record.topic).spec.message_type
        try:
            payload = decode_payload(message_type, record.payload_bytes)
        except (TypeError, ValueError) as exc:
            raise SchemaMismatchError(
                f"{record.topic} at byte {offset}: {exc}") from exc
        bus.inject_envelope(StampedEnvelope(
            record.topic, record.publisher_id, record.sequence, record.stamp, payload))
        count += 1
    return count
