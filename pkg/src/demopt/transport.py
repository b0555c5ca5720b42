"""All-gather collectives over two interchangeable transports.

Both transports move the same serialized bytes (the in-memory one does not
shortcut through object passing), so wire-format bugs and byte accounting
are exercised identically.  ``all_gather`` is a per-step barrier: it returns
only when every worker's payload for the current step is available, as a
list ordered by rank.

The TCP transport is a full mesh of persistent connections with
length-prefixed framing (u32 little-endian byte count before each message).
"""

from __future__ import annotations

import socket
import struct
import threading
import time
from dataclasses import dataclass, field

from demopt.errors import (
    PeerDisconnectedError,
    StepMismatchError,
    TransportError,
    TransportTimeoutError,
)
from demopt.wire import SyncPayload, deserialize, serialize_accounted

_FRAME = struct.Struct("<I")

DEFAULT_TIMEOUT_S = 30.0


@dataclass
class LedgerRecord:
    step: int
    bytes_sent: int
    bytes_received: int
    payload_bytes: int
    payload_bytes_per_tensor: dict[int, int] = field(default_factory=dict)


class CommLedger:
    """Per-worker, per-step byte counters.

    ``payload_bytes`` is the worker's own component bytes for the step (the
    "would-send" size, recorded even when nothing crosses a wire, e.g. a
    single-worker in-memory gather).  ``bytes_sent``/``bytes_received`` count
    what actually moved, including any framing.
    """

    def __init__(self, rank: int):
        self.rank = rank
        self.records: list[LedgerRecord] = []

    def record(self, step: int, bytes_sent: int, bytes_received: int,
               payload_bytes: int, per_tensor: dict[int, int]) -> None:
        self.records.append(
            LedgerRecord(step, bytes_sent, bytes_received, payload_bytes, dict(per_tensor))
        )

    @property
    def total_bytes_sent(self) -> int:
        return sum(r.bytes_sent for r in self.records)

    @property
    def total_bytes_received(self) -> int:
        return sum(r.bytes_received for r in self.records)

    @property
    def total_payload_bytes(self) -> int:
        return sum(r.payload_bytes for r in self.records)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("step,rank,bytes_sent,bytes_received\n")
            for r in self.records:
                fh.write(f"{r.step},{self.rank},{r.bytes_sent},{r.bytes_received}\n")


class Collective:
    """Rank-addressed all-gather endpoint for one worker."""

    def __init__(self, rank: int, world_size: int):
        if world_size < 1 or not 0 <= rank < world_size:
            raise TransportError(f"invalid rank {rank} for world size {world_size}")
        self.rank = rank
        self.world_size = world_size
        self.ledger = CommLedger(rank)

    def all_gather(self, payload: SyncPayload) -> list[SyncPayload]:
        raise NotImplementedError

    def close(self) -> None:
        pass

    @staticmethod
    def _geometry_registry(payload: SyncPayload):
        return {e.tensor_id: e.geometry for e in payload.entries}


class InMemoryHub:
    """Shared rendezvous for worker threads in one process."""

    def __init__(self, world_size: int, timeout_s: float = DEFAULT_TIMEOUT_S):
        self.world_size = world_size
        self.timeout_s = timeout_s
        self.slots: list[tuple[int, bytes] | None] = [None] * world_size
        self.barrier = threading.Barrier(world_size)

    def collective(self, rank: int) -> "InMemoryCollective":
        return InMemoryCollective(self, rank)

    def abort(self) -> None:
        """Break the rendezvous so peers blocked in all_gather fail promptly."""
        self.barrier.abort()


class InMemoryCollective(Collective):
    def __init__(self, hub: InMemoryHub, rank: int):
        super().__init__(rank, hub.world_size)
        self._hub = hub

    def all_gather(self, payload: SyncPayload) -> list[SyncPayload]:
        hub = self._hub
        msg, per_tensor = serialize_accounted(payload)
        hub.slots[self.rank] = (payload.step, msg)
        self._wait()
        snapshot = [slot for slot in hub.slots]
        steps = sorted({s for s, _ in snapshot})
        if steps != [payload.step]:
            # every worker sees the same table, so all raise consistently
            raise StepMismatchError(
                f"workers disagree on step: saw {steps}, expected {payload.step}"
            )
        registry = self._geometry_registry(payload)
        gathered = [deserialize(m, registry) for _, m in snapshot]
        # second phase: nobody may overwrite a slot until all have read
        self._wait()
        peer_bytes = sum(len(m) for i, (_, m) in enumerate(snapshot) if i != self.rank)
        self.ledger.record(
            step=payload.step,
            bytes_sent=(self.world_size - 1) * len(msg),
            bytes_received=peer_bytes,
            payload_bytes=sum(per_tensor.values()),
            per_tensor=per_tensor,
        )
        return gathered

    def _wait(self) -> None:
        try:
            self._hub.barrier.wait(timeout=self._hub.timeout_s)
        except threading.BrokenBarrierError:
            raise TransportTimeoutError(
                f"rank {self.rank}: barrier broken or timed out after "
                f"{self._hub.timeout_s}s"
            ) from None


def bind_listeners(world_size: int, host: str = "127.0.0.1", base_port: int = 0):
    """Pre-bind one listening socket per rank; returns (addresses, sockets).

    ``base_port`` 0 lets the OS pick free ports.  Binding everything before
    any worker starts connecting means the mesh handshake cannot miss a
    listener.
    """
    addresses = []
    sockets = []
    for rank in range(world_size):
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        port = base_port + rank if base_port else 0
        sock.bind((host, port))
        sock.listen(world_size)
        addresses.append((host, sock.getsockname()[1]))
        sockets.append(sock)
    return addresses, sockets


class TcpCollective(Collective):
    """Full-mesh TCP all-gather; one persistent connection per peer pair.

    Rank i dials every lower rank and accepts from every higher rank; a u16
    rank handshake identifies the dialing peer.  Within a gather, sending to
    peers overlaps with receiving from them on a helper thread.
    """

    def __init__(self, rank: int, world_size: int, addresses,
                 timeout_s: float = DEFAULT_TIMEOUT_S, listen_sock=None):
        super().__init__(rank, world_size)
        self.timeout_s = timeout_s
        self._conns: dict[int, socket.socket] = {}
        self._listener = None
        if world_size == 1:
            return
        deadline = time.monotonic() + timeout_s
        if listen_sock is None:
            _, socks = bind_listeners(1, addresses[rank][0], addresses[rank][1])
            listen_sock = socks[0]
        self._listener = listen_sock
        self._listener.settimeout(timeout_s)
        try:
            for peer in range(rank):
                self._conns[peer] = self._dial(addresses[peer], deadline)
            for _ in range(world_size - 1 - rank):
                conn, _ = self._listener.accept()
                conn.settimeout(timeout_s)
                conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                peer = struct.unpack("<H", self._recv_exact(conn, 2))[0]
                if not 0 <= peer < world_size or peer in self._conns:
                    raise TransportError(f"unexpected handshake from rank {peer}")
                self._conns[peer] = conn
        except socket.timeout:
            raise TransportTimeoutError(
                f"rank {rank}: mesh setup timed out after {timeout_s}s"
            ) from None

    def _dial(self, address, deadline: float) -> socket.socket:
        last_err: Exception | None = None
        while time.monotonic() < deadline:
            try:
                conn = socket.create_connection(address, timeout=self.timeout_s)
                conn.settimeout(self.timeout_s)
                conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                conn.sendall(struct.pack("<H", self.rank))
                return conn
            except OSError as err:
                last_err = err
                time.sleep(0.05)
        raise TransportTimeoutError(
            f"rank {self.rank}: could not reach {address}: {last_err}"
        )

    @staticmethod
    def _recv_exact(conn: socket.socket, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            try:
                part = conn.recv(n - len(buf))
            except socket.timeout:
                raise TransportTimeoutError("receive timed out") from None
            if not part:
                raise PeerDisconnectedError("peer closed the connection")
            buf.extend(part)
        return bytes(buf)

    def all_gather(self, payload: SyncPayload) -> list[SyncPayload]:
        msg, per_tensor = serialize_accounted(payload)
        registry = self._geometry_registry(payload)
        if self.world_size == 1:
            self.ledger.record(payload.step, 0, 0, sum(per_tensor.values()), per_tensor)
            return [deserialize(msg, registry)]

        frame = _FRAME.pack(len(msg)) + msg
        send_err: list[Exception] = []

        def _send_all():
            try:
                for peer in sorted(self._conns):
                    self._conns[peer].sendall(frame)
            except socket.timeout:
                send_err.append(TransportTimeoutError("send timed out"))
            except OSError as err:
                send_err.append(PeerDisconnectedError(f"send failed: {err}"))

        sender = threading.Thread(target=_send_all, daemon=True)
        sender.start()
        messages: dict[int, bytes] = {self.rank: msg}
        received = 0
        for peer in sorted(self._conns):
            conn = self._conns[peer]
            (length,) = _FRAME.unpack(self._recv_exact(conn, _FRAME.size))
            messages[peer] = self._recv_exact(conn, length)
            received += _FRAME.size + length
        sender.join(timeout=self.timeout_s)
        if sender.is_alive():
            raise TransportTimeoutError("send did not complete")
        if send_err:
            raise send_err[0]

        gathered = []
        for peer in range(self.world_size):
            decoded = deserialize(messages[peer], registry)
            if decoded.step != payload.step:
                raise StepMismatchError(
                    f"rank {peer} sent step {decoded.step}, expected {payload.step}"
                )
            if decoded.rank != peer:
                raise TransportError(
                    f"message from connection {peer} claims rank {decoded.rank}"
                )
            gathered.append(decoded)
        self.ledger.record(
            step=payload.step,
            bytes_sent=(self.world_size - 1) * len(frame),
            bytes_received=received,
            payload_bytes=sum(per_tensor.values()),
            per_tensor=per_tensor,
        )
        return gathered

    def close(self) -> None:
        for conn in self._conns.values():
            try:
                conn.close()
            except OSError:
                pass
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
