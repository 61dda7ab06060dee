"""Binary control-channel frames.

Every control message is one fixed-size big-endian frame:

====================  ======  =========================================
field                 bytes   meaning
====================  ======  =========================================
magic                 4       ``b"QRK1"``
version               1       1
type                  1       message type, see :class:`MsgType`
flags                 1       reserved, 0
reserved              1       0
session_id            8       constant per conversation
generation            8       key generation the message refers to
next_spi              4       SPI payload (announced / acknowledged SPI)
aux                   4       type-specific (reset epoch, fail reason)
timestamp_us          8       sender clock, microseconds
====================  ======  =========================================

40 bytes total.  Frames round-trip bit-exactly through encode/decode.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

MAGIC = b"QRK1"
VERSION = 1

_FORMAT = ">4sBBBBQQIIQ"
FRAME_SIZE = struct.calcsize(_FORMAT)
assert FRAME_SIZE == 40


class WireError(ValueError):
    """Frame does not parse (length, magic, version or type)."""


class MsgType(IntEnum):
    KEY_CHANGE_REQUEST = 0x01
    KEY_CHANGE_ACK = 0x02
    KEY_CHANGE_FAIL = 0x03
    RESET_REQ = 0x10
    RESET_ACK = 0x11
    RESET_CONFIRM = 0x12
    CTRL_REKEY_REQ = 0x20
    CTRL_REKEY_ACK = 0x21
    CTRL_REKEY_CONFIRM = 0x22


@dataclass(frozen=True)
class ProtocolMessage:
    type: MsgType
    session_id: int
    generation: int
    next_spi: int
    aux: int = 0
    timestamp_us: int = 0
    flags: int = 0


def encode(msg: ProtocolMessage) -> bytes:
    return struct.pack(
        _FORMAT,
        MAGIC,
        VERSION,
        int(msg.type),
        msg.flags,
        0,
        msg.session_id,
        msg.generation,
        msg.next_spi,
        msg.aux,
        msg.timestamp_us,
    )


def decode(frame: bytes) -> ProtocolMessage:
    if len(frame) != FRAME_SIZE:
        raise WireError(f"frame must be {FRAME_SIZE} bytes, got {len(frame)}")
    magic, version, mtype, flags, _reserved, session_id, generation, next_spi, aux, ts = struct.unpack(
        _FORMAT, frame
    )
    if magic != MAGIC:
        raise WireError(f"bad magic {magic!r}")
    if version != VERSION:
        raise WireError(f"unsupported version {version}")
    try:
        mtype = MsgType(mtype)
    except ValueError as exc:
        raise WireError(f"unknown message type {mtype:#x}") from exc
    return ProtocolMessage(
        type=mtype,
        session_id=session_id,
        generation=generation,
        next_spi=next_spi,
        aux=aux,
        timestamp_us=ts,
        flags=flags,
    )
