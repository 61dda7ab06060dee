"""Wire format: golden vectors for all nine types, bit-exact round trips."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from qrekey.wire import FRAME_SIZE, MsgType, ProtocolMessage, WireError, decode, encode

# Expected frames assembled by hand from the layout:
# magic(4) version(1) type(1) flags(1) reserved(1) session_id(8)
# generation(8) next_spi(4) aux(4) timestamp_us(8), big-endian.
_COMMON = ProtocolMessage(
    type=MsgType.KEY_CHANGE_REQUEST,
    session_id=0x1122334455667788,
    generation=0x00000000000000FF,
    next_spi=0xDEADBEEF,
    aux=0x00000007,
    timestamp_us=0x0000000000981234,
)

GOLDEN = {
    MsgType.KEY_CHANGE_REQUEST: "01",
    MsgType.KEY_CHANGE_ACK: "02",
    MsgType.KEY_CHANGE_FAIL: "03",
    MsgType.RESET_REQ: "10",
    MsgType.RESET_ACK: "11",
    MsgType.RESET_CONFIRM: "12",
    MsgType.CTRL_REKEY_REQ: "20",
    MsgType.CTRL_REKEY_ACK: "21",
    MsgType.CTRL_REKEY_CONFIRM: "22",
}


def _expected_hex(type_hex: str) -> str:
    return (
        "51524b31"          # "QRK1"
        + "01"              # version
        + type_hex
        + "00"              # flags
        + "00"              # reserved
        + "1122334455667788"
        + "00000000000000ff"
        + "deadbeef"
        + "00000007"
        + "0000000000981234"
    )


@pytest.mark.parametrize("mtype", list(MsgType))
def test_golden_frames(mtype):
    msg = ProtocolMessage(
        type=mtype,
        session_id=_COMMON.session_id,
        generation=_COMMON.generation,
        next_spi=_COMMON.next_spi,
        aux=_COMMON.aux,
        timestamp_us=_COMMON.timestamp_us,
    )
    frame = encode(msg)
    assert len(frame) == FRAME_SIZE == 40
    assert frame.hex() == _expected_hex(GOLDEN[mtype])
    assert decode(frame) == msg


def test_decode_rejects_bad_magic():
    frame = bytearray(encode(_COMMON))
    frame[0] = ord("X")
    with pytest.raises(WireError):
        decode(bytes(frame))


def test_decode_rejects_bad_version():
    frame = bytearray(encode(_COMMON))
    frame[4] = 9
    with pytest.raises(WireError):
        decode(bytes(frame))


def test_decode_rejects_unknown_type():
    frame = bytearray(encode(_COMMON))
    frame[5] = 0x7F
    with pytest.raises(WireError):
        decode(bytes(frame))


def test_decode_rejects_wrong_length():
    with pytest.raises(WireError):
        decode(encode(_COMMON)[:-1])
    with pytest.raises(WireError):
        decode(encode(_COMMON) + b"\x00")


@given(
    mtype=st.sampled_from(list(MsgType)),
    session=st.integers(min_value=0, max_value=2**64 - 1),
    generation=st.integers(min_value=0, max_value=2**64 - 1),
    spi=st.integers(min_value=0, max_value=2**32 - 1),
    aux=st.integers(min_value=0, max_value=2**32 - 1),
    ts=st.integers(min_value=0, max_value=2**64 - 1),
    flags=st.integers(min_value=0, max_value=255),
)
def test_roundtrip(mtype, session, generation, spi, aux, ts, flags):
    msg = ProtocolMessage(mtype, session, generation, spi, aux, ts, flags)
    assert decode(encode(msg)) == msg
