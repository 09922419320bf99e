import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from secinfer.errors import AddressInUse, ChannelClosed, ConnectionRefused, FrameTooLarge, MalformedMessage
from secinfer.transport import (HEADER_SIZE, CommStats, MessageKind, TcpListener, connect_tcp, make_inproc_pair,
                                pack_frame, unpack_header)


def test_header_layout():
    frame = pack_frame(5, b"abc")
    assert len(frame) == HEADER_SIZE + 3 == 19
    assert frame[:4] == b"SINF"
    assert unpack_header(frame[:HEADER_SIZE]) == (5, 3)


def test_bad_headers():
    frame = bytearray(pack_frame(1, b""))
    with pytest.raises(MalformedMessage):
        unpack_header(bytes(frame[:10]))
    frame[0] ^= 1
    with pytest.raises(MalformedMessage):
        unpack_header(bytes(frame))


@given(st.lists(st.tuples(st.sampled_from("ab"), st.binary(max_size=64)), max_size=20))
def test_inproc_accounting(script):
    a, b = make_inproc_pair(depth=64)
    ends = {"a": (a, b), "b": (b, a)}
    flights, last = 0, None
    sent = {"a": 0, "b": 0}
    for who, payload in script:
        src, dst = ends[who]
        src.send(MessageKind.SETUP, payload)
        assert dst.recv_kind(MessageKind.SETUP) == payload
        sent[who] += HEADER_SIZE + len(payload)
        if who != last:
            flights, last = flights + 1, who
    want = CommStats(sent["a"], sent["b"], sum(w == "a" for w, _ in script), sum(w == "b" for w, _ in script),
                     flights, flights // 2)
    assert a.stats == b.stats == want


def test_reset_stats():
    a, b = make_inproc_pair()
    a.send(1, b"x")
    b.recv()
    a.reset_stats()
    b.reset_stats()
    assert a.stats == b.stats == CommStats()


def test_frame_cap_and_closed():
    a, b = make_inproc_pair(max_frame=8)
    with pytest.raises(FrameTooLarge):
        a.send(1, b"x" * 9)
    a.close()
    with pytest.raises(ChannelClosed):
        b.recv(timeout=1)
    with pytest.raises(ChannelClosed):
        a.send(1, b"")


def test_wrong_kind():
    a, b = make_inproc_pair()
    a.send(MessageKind.RESULT, b"")
    with pytest.raises(MalformedMessage):
        b.recv_kind(MessageKind.SETUP)


def test_recv_timeout():
    _, b = make_inproc_pair()
    with pytest.raises(ChannelClosed):
        b.recv(timeout=0.05)


def test_tcp_roundtrip_and_stats():
    listener = TcpListener("127.0.0.1:0")
    box = {}

    def serve():
        with listener.accept(timeout=10) as a:
            box["msg"] = a.recv_kind(MessageKind.SETUP)
            a.send(MessageKind.RESULT, box["msg"][::-1])
            a.recv()  # wait for the client to finish
            box["stats"] = a.stats

    t = threading.Thread(target=serve)
    t.start()
    with connect_tcp(listener.address, retries=20) as b:
        b.send(MessageKind.SETUP, b"hello" * 1000)
        assert b.recv_kind(MessageKind.RESULT) == (b"hello" * 1000)[::-1]
        b.send(MessageKind.REVEAL, b"")
        stats = b.stats
    t.join()
    listener.close()
    assert box["stats"] == stats
    assert stats.bytes_b_to_a == 2 * HEADER_SIZE + 5000 and stats.flights == 3 and stats.round_trips == 1


def test_tcp_errors():
    listener = TcpListener("127.0.0.1:0")
    with pytest.raises(AddressInUse):
        TcpListener(listener.address)
    addr = listener.address
    listener.close()
    with pytest.raises(ConnectionRefused):
        connect_tcp(addr)
    with pytest.raises(ValueError):
        TcpListener("nonsense")
