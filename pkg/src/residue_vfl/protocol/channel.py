"""Ordered two-way message channels between the parties.

Both backends move the exact frame bytes from :mod:`.wire`, and both record
every frame into a shared :class:`Transcript` at send time, so transcripts are
byte-identical whichever backend carried them.
"""
from __future__ import annotations

import queue
import socket
import struct
import threading
import time

from ..errors import ProtocolError
from .wire import Party, ProtocolMessage, Transcript


class _Recorder:
    def __init__(self, transcript: Transcript):
        self.transcript = transcript
        self.lock = threading.Lock()

    def record(self, frame: bytes) -> None:
        with self.lock:
            self.transcript.append(frame)


class Endpoint:
    """One party's side of a channel."""

    def __init__(self, party: Party, recorder: _Recorder):
        self.party = party
        self._recorder = recorder
        self.channel_seconds = 0.0

    def send(self, msg: ProtocolMessage) -> None:
        if msg.sender != self.party:
            raise ProtocolError(f"{self.party.name} cannot send as {msg.sender.name}")
        t0 = time.perf_counter()
        frame = msg.to_frame()
        self._recorder.record(frame)
        self._transmit(frame)
        self.channel_seconds += time.perf_counter() - t0

    def record_local(self, msg: ProtocolMessage) -> None:
        """Put a message in the transcript without transmitting it."""
        self._recorder.record(msg.to_frame())

    def recv(self) -> ProtocolMessage | None:
        """Next message from the peer, or ``None`` once the peer has closed."""
        frame = self._receive()
        if frame is None:
            return None
        t0 = time.perf_counter()
        msg = ProtocolMessage.from_frame(frame)
        self.channel_seconds += time.perf_counter() - t0
        return msg

    def close(self) -> None:
        raise NotImplementedError

    def dispose(self) -> None:
        """Release transport resources once both parties are done."""

    def _transmit(self, frame: bytes) -> None:
        raise NotImplementedError

    def _receive(self) -> bytes | None:
        raise NotImplementedError


class _QueueEndpoint(Endpoint):
    def __init__(self, party, recorder, outbox: queue.Queue, inbox: queue.Queue):
        super().__init__(party, recorder)
        self._outbox = outbox
        self._inbox = inbox

    def _transmit(self, frame):
        self._outbox.put(frame)

    def _receive(self):
        return self._inbox.get()

    def close(self):
        self._outbox.put(None)


class _SocketEndpoint(Endpoint):
    def __init__(self, party, recorder, sock: socket.socket):
        super().__init__(party, recorder)
        self._sock = sock

    def _transmit(self, frame):
        self._sock.sendall(frame)

    def _read_exact(self, n: int) -> bytes | None:
        chunks, got = [], 0
        while got < n:
            chunk = self._sock.recv(n - got)
            if not chunk:
                if got == 0:
                    return None
                raise ProtocolError("connection closed mid-frame")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def _receive(self):
        header = self._read_exact(5)
        if header is None:
            return None
        (length,) = struct.unpack(">I", header[:4])
        body = self._read_exact(length) if length else b""
        if body is None:
            raise ProtocolError("connection closed mid-frame")
        return header + body

    def close(self):
        try:
            self._sock.shutdown(socket.SHUT_WR)
        except OSError:
            pass

    def dispose(self):
        self._sock.close()


def make_channel(transport: str = "inprocess") -> tuple[Endpoint, Endpoint, Transcript]:
    """Return ``(alice_endpoint, bob_endpoint, transcript)``."""
    transcript = Transcript()
    recorder = _Recorder(transcript)
    if transport == "inprocess":
        a_to_b, b_to_a = queue.Queue(), queue.Queue()
        alice = _QueueEndpoint(Party.ALICE, recorder, a_to_b, b_to_a)
        bob = _QueueEndpoint(Party.BOB, recorder, b_to_a, a_to_b)
    elif transport == "socket":
        sa, sb = socket.socketpair()
        alice = _SocketEndpoint(Party.ALICE, recorder, sa)
        bob = _SocketEndpoint(Party.BOB, recorder, sb)
    else:
        raise ValueError(f"unknown transport {transport!r}")
    return alice, bob, transcript
