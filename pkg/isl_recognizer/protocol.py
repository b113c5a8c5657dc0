"""
Wire format shared by the frame server and the stream client.

    magic "ISLR" | version u8 | type u8 | length u32 (big-endian) | payload

FRAME payloads are `width u16 | height u16 | rgb bytes`; RESULT and ERROR
payloads are UTF-8 text; END_STREAM has an empty payload.
"""
import asyncio
import struct
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import ProtocolError
from .imaging import Frame

MAGIC = b"ISLR"
VERSION = 1
HEADER = struct.Struct(">4sBBI")
FRAME_HEADER = struct.Struct(">HH")
HEADER_SIZE = HEADER.size
MAX_PAYLOAD = FRAME_HEADER.size + 3 * 4096 * 4096


class MessageType(IntEnum):
    FRAME = 0x01
    RESULT = 0x02
    END_STREAM = 0x03
    ERROR = 0x04


@dataclass(frozen=True)
class WireMessage:
    type: MessageType
    payload: bytes = b""

    @property
    def text(self) -> str:
        return self.payload.decode("utf-8")


def encode_message(message_type: MessageType, payload: bytes = b"") -> bytes:
    if len(payload) > MAX_PAYLOAD:
        raise ProtocolError(f"payload too large: {len(payload)} bytes")
    return HEADER.pack(MAGIC, VERSION, int(message_type), len(payload)) + payload


def decode_header(header: bytes):
    """Validate a header and return (type, payload length)."""
    magic, version, raw_type, length = HEADER.unpack(header)
    if magic != MAGIC:
        raise ProtocolError("bad magic")
    if version != VERSION:
        raise ProtocolError(f"unsupported version {version}")
    try:
        message_type = MessageType(raw_type)
    except ValueError:
        raise ProtocolError(f"unknown message type {raw_type:#04x}") from None
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"payload too large: {length} bytes")
    return message_type, length


def decode_message(data: bytes) -> WireMessage:
    if len(data) < HEADER_SIZE:
        raise ProtocolError("truncated header")
    message_type, length = decode_header(data[:HEADER_SIZE])
    payload = data[HEADER_SIZE:]
    if len(payload) != length:
        raise ProtocolError(f"length field says {length} bytes, got {len(payload)}")
    return WireMessage(message_type, payload)


def encode_frame(frame: Frame) -> bytes:
    if frame.width > 0xFFFF or frame.height > 0xFFFF:
        raise ProtocolError(f"frame {frame.width}x{frame.height} does not fit the wire format")
    return FRAME_HEADER.pack(frame.width, frame.height) + frame.pixels.tobytes()


def decode_frame(payload: bytes) -> Frame:
    if len(payload) < FRAME_HEADER.size:
        raise ProtocolError("frame payload shorter than its header")
    width, height = FRAME_HEADER.unpack_from(payload)
    if width == 0 or height == 0:
        raise ProtocolError("frame dimensions must be positive")
    expected = FRAME_HEADER.size + 3 * width * height
    if len(payload) != expected:
        raise ProtocolError(f"frame {width}x{height} needs {expected} bytes, got {len(payload)}")
    pixels = np.frombuffer(payload, dtype=np.uint8, offset=FRAME_HEADER.size).reshape(height, width, 3)
    return Frame(pixels)


async def read_message(reader: asyncio.StreamReader) -> WireMessage:
    """Read one message; raises EOFError on a clean close before a header."""
    try:
        header = await reader.readexactly(HEADER_SIZE)
    except asyncio.IncompleteReadError as e:
        if not e.partial:
            raise EOFError("connection closed") from e
        raise ProtocolError("truncated header") from e
    message_type, length = decode_header(header)
    try:
        payload = await reader.readexactly(length) if length else b""
    except asyncio.IncompleteReadError as e:
        raise ProtocolError(f"truncated payload: expected {length} bytes, got {len(e.partial)}") from e
    return WireMessage(message_type, payload)


async def write_message(writer: asyncio.StreamWriter, message_type: MessageType, payload: bytes = b"") -> None:
    writer.write(encode_message(message_type, payload))
    await writer.drain()
