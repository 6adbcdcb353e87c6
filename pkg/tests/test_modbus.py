import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idslab import modbus as mb
from idslab import plant as pl
from idslab.errors import (DecodeError, FrameTooLongError, LengthMismatchError,
                           ProtocolIdError, ShortBufferError, UnknownFunctionError)


def test_read_request_bytes():
    frame = mb.read_request(1, 1, 0, 2)
    assert mb.encode_frame(frame).hex(" ") == "00 01 00 00 00 06 01 03 00 00 00 02"


def test_write_single_bytes():
    frame = mb.write_single_request(2, 1, 5, 0x00FF)
    assert mb.encode_frame(frame).hex(" ") == "00 02 00 00 00 06 01 06 00 05 00 ff"


def test_exception_response_bytes():
    request = mb.read_request(3, 1, 100, 1)
    data = mb.encode_frame(mb.exception_response(request, mb.ILLEGAL_DATA_ADDRESS))
    assert data[7] == 0x83 and data[8] == 0x02


def test_decode_roundtrip_example():
    data = bytes.fromhex("000100000006010300000002")
    frame = mb.decode_frame(data)
    assert (frame.transaction_id, frame.unit_id, frame.function_code) == (1, 1, 0x03)
    assert frame.payload == bytes.fromhex("00000002")


def test_decode_errors_are_distinct():
    with pytest.raises(ShortBufferError):
        mb.decode_frame(b"\x00\x01\x00\x00")
    good = mb.encode_frame(mb.read_request(1, 1, 0, 2))
    with pytest.raises(ProtocolIdError):
        mb.decode_frame(good[:2] + b"\x00\x01" + good[4:])
    with pytest.raises(LengthMismatchError):
        mb.decode_frame(good[:4] + b"\x00\x08" + good[6:])
    with pytest.raises(UnknownFunctionError):
        mb.decode_frame(good[:7] + b"\x2b" + good[8:])


def test_payload_too_long():
    with pytest.raises(FrameTooLongError):
        mb.encode_frame(mb.ModbusFrame(1, 1, 0x10, bytes(254)))


frames = st.builds(
    mb.ModbusFrame,
    transaction_id=st.integers(0, 0xFFFF),
    unit_id=st.integers(0, 0xFF),
    function_code=st.sampled_from(sorted(mb.FUNCTION_CODES)),
    payload=st.binary(max_size=mb.MAX_PAYLOAD),
)


@settings(max_examples=10_000, deadline=None)
@given(frames)
def test_roundtrip(frame):
    assert mb.decode_frame(mb.encode_frame(frame)) == frame


def assert_valid(frame):
    frame.validate()
    assert frame.protocol_id == 0
    assert frame.length == 2 + len(frame.payload)


@settings(max_examples=10_000, deadline=None)
@given(st.binary(max_size=300))
def test_fuzz_decode_total(data):
    try:
        frame = mb.decode_frame(data)
    except DecodeError:
        return
    assert_valid(frame)
    assert mb.encode_frame(frame) == data


def _plc():
    return pl.initial_plc(pl.PlantState(), pl.PlantConfig())


def test_write_then_echo():
    plc, resp = mb.slave_apply(_plc(), mb.write_single_request(9, 1, pl.REG_PUMP1, 1))
    assert plc.register(pl.REG_PUMP1) == 1
    assert resp.function_code == 0x06 and resp.payload == bytes.fromhex("00020001")


def test_read_after_writes():
    plc, _ = mb.slave_apply(_plc(), mb.write_multiple_request(1, 1, 0, [7, 9]))
    _, resp = mb.slave_apply(plc, mb.read_request(2, 1, 0, 2))
    assert mb.parse_read_response(resp) == [7, 9]


@pytest.mark.parametrize("request_", [
    mb.read_request(1, 1, 16, 1),
    mb.read_request(1, 1, 10, 10),
    mb.write_single_request(1, 1, 16, 5),
    mb.write_multiple_request(1, 1, 15, [1, 2]),
])
def test_out_of_range_is_exception_without_mutation(request_):
    before = _plc()
    after, resp = mb.slave_apply(before, request_)
    assert after == before
    assert resp.is_exception and resp.payload == bytes([mb.ILLEGAL_DATA_ADDRESS])


def test_malformed_request_gets_exception():
    plc = _plc()
    bad = mb.ModbusFrame(1, 1, 0x10, bytes.fromhex("0000000203000100"))
    after, resp = mb.slave_apply(plc, bad)
    assert after == plc and resp.payload == bytes([mb.ILLEGAL_DATA_VALUE])


def test_master_transaction_ids_wrap():
    m = mb.Master(mb.EndpointId("h", 1, mb.Role.HMI), first_transaction=0xFFFE)
    assert [m.read(0, 1).transaction_id for _ in range(3)] == [0xFFFE, 0xFFFF, 0]


ops = st.lists(st.tuples(st.integers(0, 2), st.integers(0, 15), st.integers(0, 0xFFFF)),
               max_size=60)


@settings(max_examples=300, deadline=None)
@given(ops)
def test_reads_see_latest_write_from_any_master(sequence):
    plc = _plc()
    masters = [mb.Master(mb.EndpointId(f"10.0.0.{i}", 1000 + i, mb.Role.HMI)) for i in range(3)]
    model = list(plc.holding_registers)
    for who, address, value in sequence:
        plc, _ = mb.slave_apply(plc, masters[who].write(address, value))
        model[address] = value
        _, resp = mb.slave_apply(plc, masters[(who + 1) % 3].read(0, 16))
        assert mb.parse_read_response(resp) == model
