"""Strict DER codec for the ASN.1 subset OCSP and X.509 messages need.

Encoding is canonical DER: definite minimal-octet lengths, minimal
two's-complement INTEGERs, GeneralizedTime with no trailing zeros in the
fractional part. The decoder rejects everything the encoder could not have
produced (indefinite lengths, non-minimal length octets, high tag numbers),
which is what makes ``encode(decode(b)) == b`` hold for every accepted input.

Decoded values keep the exact byte span they were parsed from in
``DerValue.raw`` so that signed substructures can be hashed byte-exactly
without ever being re-encoded.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum

CLASS_UNIVERSAL = 0
CLASS_APPLICATION = 1
CLASS_CONTEXT = 2
CLASS_PRIVATE = 3

TAG_BOOLEAN = 0x01
TAG_INTEGER = 0x02
TAG_BIT_STRING = 0x03
TAG_OCTET_STRING = 0x04
TAG_NULL = 0x05
TAG_OID = 0x06
TAG_ENUMERATED = 0x0A
TAG_UTF8_STRING = 0x0C
TAG_SEQUENCE = 0x10
TAG_SET = 0x11
TAG_PRINTABLE_STRING = 0x13
TAG_GENERALIZED_TIME = 0x18

_MAX_DEPTH = 96


class DerError(ValueError):
    """Base class for codec errors."""


class MalformedEncoding(DerError):
    """Input is not valid DER (truncation, bad tag, non-minimal form...)."""


class UnsupportedFeature(DerError):
    """Input is structurally plausible but outside the supported subset."""


class InstantOutOfRange(DerError):
    """GeneralizedTime instant outside the supported 1950-2999 range."""


class TimeGranularity(str, Enum):
    SECOND = "second"
    MILLISECOND = "millisecond"


def _utc(instant: datetime) -> datetime:
    if instant.tzinfo is None:
        return instant.replace(tzinfo=timezone.utc)
    return instant.astimezone(timezone.utc)


@dataclass(frozen=True)
class GeneralizedTimeValue:
    """A UTC instant with millisecond resolution plus its rendered precision.

    Construction normalizes: the instant is truncated to the granularity, and
    a millisecond value whose fraction is zero collapses to second granularity
    because the two render to identical DER bytes.
    """

    instant: datetime
    granularity: TimeGranularity = TimeGranularity.SECOND

    def __post_init__(self) -> None:
        instant = _utc(self.instant)
        if self.granularity is TimeGranularity.SECOND:
            instant = instant.replace(microsecond=0)
        else:
            instant = instant.replace(microsecond=instant.microsecond // 1000 * 1000)
            if instant.microsecond == 0:
                object.__setattr__(self, "granularity", TimeGranularity.SECOND)
        object.__setattr__(self, "instant", instant)

    @property
    def millisecond(self) -> int:
        return self.instant.microsecond // 1000

    def render(self) -> str:
        base = self.instant.strftime("%Y%m%d%H%M%S")
        if self.millisecond == 0:
            return base + "Z"
        return base + "." + f"{self.millisecond:03d}".rstrip("0") + "Z"

    _PATTERN = re.compile(r"\A(\d{14})(?:\.(\d{1,3}))?Z\Z")

    @classmethod
    def parse(cls, text: str) -> "GeneralizedTimeValue":
        m = cls._PATTERN.match(text)
        if m is None:
            raise MalformedEncoding(f"bad GeneralizedTime {text!r}")
        try:
            instant = datetime.strptime(m.group(1), "%Y%m%d%H%M%S")
        except ValueError as exc:
            raise MalformedEncoding(f"bad GeneralizedTime {text!r}") from exc
        if not 1950 <= instant.year <= 2999:
            raise MalformedEncoding(f"GeneralizedTime year out of range: {text!r}")
        frac = m.group(2)
        if frac is None:
            return cls(instant, TimeGranularity.SECOND)
        if frac.endswith("0"):
            raise MalformedEncoding(f"trailing fraction zeros in {text!r}")
        ms = int(frac.ljust(3, "0"))
        return cls(instant + timedelta(milliseconds=ms), TimeGranularity.MILLISECOND)


@dataclass(frozen=True)
class DerValue:
    """One TLV: tag plus either content bytes or child values.

    ``raw`` is the original encoded span when the value came from ``decode``;
    it is excluded from equality so decoded and constructed values compare
    structurally.
    """

    tag_class: int
    tag: int
    constructed: bool
    content: bytes | tuple["DerValue", ...]
    raw: bytes | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.constructed != isinstance(self.content, tuple):
            raise DerError("constructed flag does not match content type")

    # -- schema helpers -------------------------------------------------

    def expect(self, tag_class: int, tag: int, constructed: bool | None = None) -> "DerValue":
        if self.tag_class != tag_class or self.tag != tag:
            raise MalformedEncoding(
                f"expected tag ({tag_class},{tag}), found ({self.tag_class},{self.tag})"
            )
        if constructed is not None and self.constructed != constructed:
            raise MalformedEncoding("constructed flag mismatch")
        return self

    def is_context(self, tag: int) -> bool:
        return self.tag_class == CLASS_CONTEXT and self.tag == tag

    @property
    def children(self) -> tuple["DerValue", ...]:
        if not self.constructed:
            raise MalformedEncoding("primitive value has no children")
        assert isinstance(self.content, tuple)
        return self.content

    @property
    def octets(self) -> bytes:
        if self.constructed:
            raise MalformedEncoding("constructed value has no primitive content")
        assert isinstance(self.content, bytes)
        return self.content

    def child(self, index: int) -> "DerValue":
        kids = self.children
        if index >= len(kids):
            raise MalformedEncoding("missing required field")
        return kids[index]

    # -- typed accessors ------------------------------------------------

    def as_int(self) -> int:
        self.expect(CLASS_UNIVERSAL, TAG_INTEGER, False)
        return _int_from_content(self.octets)

    def as_enumerated(self) -> int:
        self.expect(CLASS_UNIVERSAL, TAG_ENUMERATED, False)
        return _int_from_content(self.octets)

    def as_bool(self) -> bool:
        self.expect(CLASS_UNIVERSAL, TAG_BOOLEAN, False)
        if self.octets == b"\xff":
            return True
        if self.octets == b"\x00":
            return False
        raise MalformedEncoding("BOOLEAN content must be 0x00 or 0xFF")

    def as_octet_string(self) -> bytes:
        self.expect(CLASS_UNIVERSAL, TAG_OCTET_STRING, False)
        return self.octets

    def as_bit_string(self) -> bytes:
        """Content bits of a BIT STRING with no unused bits."""
        self.expect(CLASS_UNIVERSAL, TAG_BIT_STRING, False)
        content = self.octets
        if not content:
            raise MalformedEncoding("empty BIT STRING content")
        if content[0] != 0:
            raise UnsupportedFeature("BIT STRING with unused bits")
        return content[1:]

    def as_oid(self) -> str:
        self.expect(CLASS_UNIVERSAL, TAG_OID, False)
        return _oid_from_content(self.octets)

    def as_text(self) -> str:
        if self.tag_class == CLASS_UNIVERSAL and self.tag in (
            TAG_UTF8_STRING,
            TAG_PRINTABLE_STRING,
        ):
            try:
                return self.octets.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise MalformedEncoding("undecodable string content") from exc
        raise MalformedEncoding("not a supported string type")

    def as_time(self) -> GeneralizedTimeValue:
        self.expect(CLASS_UNIVERSAL, TAG_GENERALIZED_TIME, False)
        try:
            text = self.octets.decode("ascii")
        except UnicodeDecodeError as exc:
            raise MalformedEncoding("non-ASCII GeneralizedTime") from exc
        return GeneralizedTimeValue.parse(text)


# -- constructors -------------------------------------------------------


def boolean(value: bool) -> DerValue:
    return DerValue(CLASS_UNIVERSAL, TAG_BOOLEAN, False, b"\xff" if value else b"\x00")


def integer(value: int) -> DerValue:
    return DerValue(CLASS_UNIVERSAL, TAG_INTEGER, False, _int_to_content(value))


def enumerated(value: int) -> DerValue:
    return DerValue(CLASS_UNIVERSAL, TAG_ENUMERATED, False, _int_to_content(value))


def bit_string(data: bytes) -> DerValue:
    """BIT STRING with zero unused bits (the only form the lab emits)."""
    return DerValue(CLASS_UNIVERSAL, TAG_BIT_STRING, False, b"\x00" + data)


def octet_string(data: bytes) -> DerValue:
    return DerValue(CLASS_UNIVERSAL, TAG_OCTET_STRING, False, bytes(data))


def null() -> DerValue:
    return DerValue(CLASS_UNIVERSAL, TAG_NULL, False, b"")


def object_identifier(dotted: str) -> DerValue:
    return DerValue(CLASS_UNIVERSAL, TAG_OID, False, _oid_to_content(dotted))


def utf8_string(text: str) -> DerValue:
    return DerValue(CLASS_UNIVERSAL, TAG_UTF8_STRING, False, text.encode("utf-8"))


def printable_string(text: str) -> DerValue:
    return DerValue(CLASS_UNIVERSAL, TAG_PRINTABLE_STRING, False, text.encode("ascii"))


def generalized_time(value: GeneralizedTimeValue) -> DerValue:
    if not 1950 <= value.instant.year <= 2999:
        raise InstantOutOfRange(f"year {value.instant.year} outside 1950-2999")
    return DerValue(
        CLASS_UNIVERSAL, TAG_GENERALIZED_TIME, False, value.render().encode("ascii")
    )


def sequence(*children: DerValue) -> DerValue:
    return DerValue(CLASS_UNIVERSAL, TAG_SEQUENCE, True, tuple(children))


def set_value(*children: DerValue) -> DerValue:
    return DerValue(CLASS_UNIVERSAL, TAG_SET, True, tuple(children))


def context(tag: int, *children: DerValue) -> DerValue:
    """Constructed context-specific value (EXPLICIT wrapper or retagged SEQUENCE)."""
    return DerValue(CLASS_CONTEXT, tag, True, tuple(children))


def context_primitive(tag: int, content: bytes) -> DerValue:
    """Primitive context-specific value (IMPLICITly retagged primitive)."""
    return DerValue(CLASS_CONTEXT, tag, False, bytes(content))


def encode_generalized_time(value: GeneralizedTimeValue) -> bytes:
    """Full GeneralizedTime TLV for ``value`` (tag 0x18)."""
    return encode(generalized_time(value))


# -- encoding -----------------------------------------------------------


def _int_to_content(value: int) -> bytes:
    if value == 0:
        return b"\x00"
    length = (value.bit_length() + 8) // 8 if value > 0 else ((-1 - value).bit_length() + 8) // 8
    return value.to_bytes(length, "big", signed=True)


def _int_from_content(content: bytes) -> int:
    if len(content) == 0:
        raise MalformedEncoding("empty INTEGER content")
    if len(content) > 1:
        if content[0] == 0x00 and content[1] < 0x80:
            raise MalformedEncoding("non-minimal INTEGER (redundant 0x00)")
        if content[0] == 0xFF and content[1] >= 0x80:
            raise MalformedEncoding("non-minimal INTEGER (redundant 0xFF)")
    return int.from_bytes(content, "big", signed=True)


def _oid_to_content(dotted: str) -> bytes:
    try:
        arcs = [int(part) for part in dotted.split(".")]
    except ValueError as exc:
        raise DerError(f"bad OID {dotted!r}") from exc
    if len(arcs) < 2 or arcs[0] > 2 or (arcs[0] < 2 and arcs[1] > 39) or min(arcs) < 0:
        raise DerError(f"bad OID {dotted!r}")
    out = bytearray()
    for value in [arcs[0] * 40 + arcs[1]] + arcs[2:]:
        chunk = [value & 0x7F]
        value >>= 7
        while value:
            chunk.append(0x80 | (value & 0x7F))
            value >>= 7
        out.extend(reversed(chunk))
    return bytes(out)


def _oid_from_content(content: bytes) -> str:
    if not content:
        raise MalformedEncoding("empty OID content")
    arcs: list[int] = []
    value = 0
    first = True
    for i, byte in enumerate(content):
        if first and byte == 0x80:
            raise MalformedEncoding("non-minimal OID subidentifier")
        value = (value << 7) | (byte & 0x7F)
        first = False
        if not byte & 0x80:
            arcs.append(value)
            value = 0
            first = True
        elif i == len(content) - 1:
            raise MalformedEncoding("truncated OID subidentifier")
    head = arcs[0]
    if head < 40:
        prefix = [0, head]
    elif head < 80:
        prefix = [1, head - 40]
    else:
        prefix = [2, head - 80]
    return ".".join(str(a) for a in prefix + arcs[1:])


def _encode_length(length: int) -> bytes:
    if length < 0x80:
        return bytes([length])
    encoded = length.to_bytes((length.bit_length() + 7) // 8, "big")
    return bytes([0x80 | len(encoded)]) + encoded


def encode(value: DerValue) -> bytes:
    if value.tag >= 0x1F:
        raise UnsupportedFeature("high tag numbers are not supported")
    if value.constructed:
        body = b"".join(encode(child) for child in value.children)
    else:
        body = value.octets
    identifier = (value.tag_class << 6) | (0x20 if value.constructed else 0) | value.tag
    return bytes([identifier]) + _encode_length(len(body)) + body


# -- decoding -----------------------------------------------------------


def _decode_header(data: bytes, pos: int) -> tuple[int, int, bool, int, int]:
    """Returns (tag_class, tag, constructed, content_start, content_length)."""
    if pos >= len(data):
        raise MalformedEncoding("truncated: missing identifier octet")
    identifier = data[pos]
    tag_class = identifier >> 6
    constructed = bool(identifier & 0x20)
    tag = identifier & 0x1F
    if tag == 0x1F:
        raise UnsupportedFeature("high tag numbers are not supported")
    pos += 1
    if pos >= len(data):
        raise MalformedEncoding("truncated: missing length octet")
    first = data[pos]
    pos += 1
    if first < 0x80:
        return tag_class, tag, constructed, pos, first
    if first == 0x80:
        raise UnsupportedFeature("indefinite length is not DER")
    count = first & 0x7F
    if count > 8:
        raise MalformedEncoding("length field too long")
    if pos + count > len(data):
        raise MalformedEncoding("truncated: length octets")
    raw_len = data[pos : pos + count]
    if raw_len[0] == 0:
        raise MalformedEncoding("non-minimal length (leading zero)")
    length = int.from_bytes(raw_len, "big")
    if length < 0x80:
        raise MalformedEncoding("non-minimal length (long form for short value)")
    return tag_class, tag, constructed, pos + count, length


def _decode_at(data: bytes, pos: int, depth: int) -> tuple[DerValue, int]:
    if depth > _MAX_DEPTH:
        raise UnsupportedFeature("nesting deeper than supported")
    tag_class, tag, constructed, start, length = _decode_header(data, pos)
    end = start + length
    if end > len(data):
        raise MalformedEncoding("truncated: content")
    if constructed:
        children: list[DerValue] = []
        cursor = start
        while cursor < end:
            child, cursor = _decode_at(data, cursor, depth + 1)
            children.append(child)
        if cursor != end:
            raise MalformedEncoding("child overruns constructed value")
        value = DerValue(tag_class, tag, True, tuple(children), raw=data[pos:end])
    else:
        value = DerValue(tag_class, tag, False, data[start:end], raw=data[pos:end])
    return value, end


def decode(data: bytes) -> DerValue:
    """Decode exactly one DER value spanning all of ``data``."""
    value, end = _decode_at(bytes(data), 0, 0)
    if end != len(data):
        raise MalformedEncoding(f"{len(data) - end} trailing bytes after value")
    return value
