"""Master/worker execution harness with deterministic in-process transport.

One worker owns one shard for the lifetime of a solve.  Every iteration is a
strict three-phase epoch: the master broadcasts the current coefficients, each
worker computes its local update and posts a coefficient-space vector (plus a
small diagnostics vector), and the master reduces the posted vectors in
ascending shard order.  No mutable state crosses the phase barrier except via
messages, so two runs of the same solve produce bitwise-identical traces.

Three transports implement the same protocol:

* ``inline``  -- plain function calls, no threads (fastest, default for
  library solves),
* ``thread``  -- one thread per worker, queue-based channels,
* ``socket``  -- the byte codec below over loopback TCP (integration only).
"""
from __future__ import annotations

import queue
import socket
import struct
import threading
from dataclasses import dataclass

import numpy as np

from .types import ParafitError

DEFAULT_TIMEOUT = 300.0

KIND_BROADCAST = 1
KIND_STOP = 2
KIND_ETA = 3
KIND_XI = 4
KIND_FAULT = 5
KIND_STATS = 6
KIND_STATE = 7


class WorkerFault(ParafitError):
    def __init__(self, shard_index, description):
        super().__init__(f"worker {shard_index} faulted: {description}")
        self.shard_index = shard_index
        self.description = description


class DecodeError(ParafitError):
    pass


@dataclass(frozen=True)
class Broadcast:
    iteration: int
    x: np.ndarray


@dataclass(frozen=True)
class Stop:
    reason: str = ""


@dataclass(frozen=True)
class Eta:
    shard_index: int
    eta: float


@dataclass(frozen=True)
class Xi:
    shard_index: int
    iteration: int
    xi: np.ndarray


@dataclass(frozen=True)
class Stats:
    shard_index: int
    iteration: int
    values: np.ndarray


@dataclass(frozen=True)
class State:
    shard_index: int
    payload: np.ndarray


@dataclass(frozen=True)
class Fault:
    shard_index: int
    description: str


# --------------------------------------------------------------------------
# byte codec
#
# Frame layout (all little-endian):
#   8 bytes  total frame length (including this prefix)
#   1 byte   kind tag
#   4 bytes  shard index
#   4 bytes  iteration
#   8 bytes  payload length: number of float64s for vector kinds,
#            number of utf-8 bytes for Stop/Fault
#   payload
# --------------------------------------------------------------------------

_HEADER = struct.Struct("<QBiiQ")
MAX_PAYLOAD = 1 << 32


def encode_message(msg):
    """Serialize a message to bytes; inverse of :func:`decode_message`."""
    if isinstance(msg, Broadcast):
        kind, shard, it, payload = KIND_BROADCAST, 0, msg.iteration, _vec_bytes(msg.x)
        count = len(payload) // 8
    elif isinstance(msg, Stop):
        kind, shard, it = KIND_STOP, 0, 0
        payload = msg.reason.encode("utf-8")
        count = len(payload)
    elif isinstance(msg, Eta):
        kind, shard, it = KIND_ETA, msg.shard_index, 0
        payload = struct.pack("<d", msg.eta)
        count = 1
    elif isinstance(msg, Xi):
        kind, shard, it, payload = KIND_XI, msg.shard_index, msg.iteration, _vec_bytes(msg.xi)
        count = len(payload) // 8
    elif isinstance(msg, Stats):
        kind, shard, it = KIND_STATS, msg.shard_index, msg.iteration
        payload = _vec_bytes(msg.values)
        count = len(payload) // 8
    elif isinstance(msg, State):
        kind, shard, it, payload = KIND_STATE, msg.shard_index, 0, _vec_bytes(msg.payload)
        count = len(payload) // 8
    elif isinstance(msg, Fault):
        kind, shard, it = KIND_FAULT, msg.shard_index, 0
        payload = msg.description.encode("utf-8")
        count = len(payload)
    else:
        raise TypeError(f"cannot encode {type(msg).__name__}")
    header = _HEADER.pack(_HEADER.size + len(payload), kind, shard, it, count)
    return header + payload


def _vec_bytes(vec):
    return np.ascontiguousarray(vec, dtype="<f8").tobytes()


def decode_message(buf):
    """Parse one encoded message; raises DecodeError with the byte offset."""
    if len(buf) < _HEADER.size:
        raise DecodeError(
            f"truncated header: expected {_HEADER.size} bytes, got {len(buf)}"
        )
    total, kind, shard, it, count = _HEADER.unpack_from(buf, 0)
    if count > MAX_PAYLOAD:
        raise DecodeError(f"payload length {count} overflows limit {MAX_PAYLOAD}")
    if total != len(buf):
        raise DecodeError(
            f"frame length mismatch at offset 0: header says {total} bytes, "
            f"buffer has {len(buf)}"
        )
    payload = buf[_HEADER.size:]
    if kind in (KIND_STOP, KIND_FAULT):
        if len(payload) < count:
            raise DecodeError(
                f"truncated payload at offset {_HEADER.size}: expected "
                f"{count} bytes, got {len(payload)}"
            )
        text = payload[:count].decode("utf-8")
        return Stop(text) if kind == KIND_STOP else Fault(shard, text)
    if len(payload) < 8 * count:
        raise DecodeError(
            f"truncated payload at offset {_HEADER.size}: expected "
            f"{8 * count} bytes, got {len(payload)}"
        )
    vec = np.frombuffer(payload[: 8 * count], dtype="<f8").astype(np.float64)
    if kind == KIND_BROADCAST:
        return Broadcast(it, vec)
    if kind == KIND_ETA:
        return Eta(shard, float(vec[0]))
    if kind == KIND_XI:
        return Xi(shard, it, vec)
    if kind == KIND_STATS:
        return Stats(shard, it, vec)
    if kind == KIND_STATE:
        return State(shard, vec)
    raise DecodeError(f"unknown kind tag {kind} at offset 8")


# --------------------------------------------------------------------------
# worker logic contract and worker main loop
# --------------------------------------------------------------------------


class WorkerLogic:
    """What a solver must supply per shard; the harness owns the transport.

    ``setup`` runs once on the initial broadcast and returns
    (eta, payload, stats); ``step`` runs once per subsequent epoch and
    returns (payload, stats); ``final_state`` returns the locally owned
    variables as one flat vector, shipped back on Stop.
    """

    shard_index = 0

    def setup(self, x0):
        raise NotImplementedError

    def step(self, k, x):
        raise NotImplementedError

    def final_state(self):
        raise NotImplementedError


def _worker_main(logic, recv, send):
    started = False
    try:
        while True:
            msg = recv()
            if isinstance(msg, Stop):
                send(State(logic.shard_index, logic.final_state()))
                return
            if not started:
                eta, payload, stats = logic.setup(msg.x)
                send(Eta(logic.shard_index, float(eta)))
                started = True
            else:
                payload, stats = logic.step(msg.iteration, msg.x)
            send(Xi(logic.shard_index, msg.iteration, np.asarray(payload)))
            send(Stats(logic.shard_index, msg.iteration, np.asarray(stats)))
    except Exception as exc:  # surfaced master-side as WorkerFault
        send(Fault(logic.shard_index, repr(exc)))


# --------------------------------------------------------------------------
# executors
# --------------------------------------------------------------------------


class Executor:
    """Runs the epoch protocol against D workers and reduces their replies."""

    def __init__(self, logics, timeout=DEFAULT_TIMEOUT):
        self.logics = list(logics)
        self.D = len(self.logics)
        if self.D < 1:
            raise ValueError("at least one worker is required")
        self.timeout = timeout
        self.counters = {"broadcasts": 0, "eta": 0, "xi": 0, "stats": 0}
        self._stopped = False

    # transport hooks -------------------------------------------------------
    def _send_all(self, msg):
        raise NotImplementedError

    def _recv(self):
        raise NotImplementedError

    # protocol --------------------------------------------------------------
    def setup(self, x0):
        """Epoch 0: broadcast x0, collect one Eta + Xi + Stats per worker."""
        self._send_all(Broadcast(0, np.asarray(x0, dtype=np.float64)))
        self.counters["broadcasts"] += self.D
        etas, xis, stats = [None] * self.D, [None] * self.D, [None] * self.D
        for _ in range(3 * self.D):
            msg = self._recv()
            if isinstance(msg, Eta):
                etas[msg.shard_index] = msg.eta
                self.counters["eta"] += 1
            elif isinstance(msg, Xi):
                xis[msg.shard_index] = msg.xi
                self.counters["xi"] += 1
            elif isinstance(msg, Stats):
                stats[msg.shard_index] = msg.values
                self.counters["stats"] += 1
        return etas, xis, stats

    def epoch(self, k, x):
        """Broadcast x for iteration k; return (xi, stats) sorted by shard."""
        self._send_all(Broadcast(k, np.asarray(x, dtype=np.float64)))
        self.counters["broadcasts"] += self.D
        xis, stats = [None] * self.D, [None] * self.D
        for _ in range(2 * self.D):
            msg = self._recv()
            if isinstance(msg, Xi):
                if msg.iteration != k:
                    raise ParafitError(
                        f"protocol violation: Xi for iteration {msg.iteration} "
                        f"during epoch {k}"
                    )
                xis[msg.shard_index] = msg.xi
                self.counters["xi"] += 1
            elif isinstance(msg, Stats):
                stats[msg.shard_index] = msg.values
                self.counters["stats"] += 1
        return xis, stats

    def shutdown(self, reason="done"):
        """Send Stop; return each worker's final state vector, by shard."""
        if self._stopped:
            return None
        self._stopped = True
        self._send_all(Stop(reason))
        states = [None] * self.D
        for _ in range(self.D):
            msg = self._recv()
            if isinstance(msg, State):
                states[msg.shard_index] = msg.payload
        self._close()
        return states

    def _close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        try:
            self.shutdown("context exit")
        except ParafitError:
            pass


class InlineExecutor(Executor):
    """Direct function calls in ascending shard order; no threads."""

    def __init__(self, logics, timeout=DEFAULT_TIMEOUT):
        super().__init__(logics, timeout)
        self._inbox = []

    def _send_all(self, msg):
        for logic in self.logics:
            _worker_main_single(logic, msg, self._inbox.append)

    def _recv(self):
        msg = self._inbox.pop(0)
        if isinstance(msg, Fault):
            raise WorkerFault(msg.shard_index, msg.description)
        return msg


def _worker_main_single(logic, msg, send):
    # one message step of _worker_main, for the inline transport
    try:
        if isinstance(msg, Stop):
            send(State(logic.shard_index, logic.final_state()))
            return
        if not getattr(logic, "_started", False):
            eta, payload, stats = logic.setup(msg.x)
            send(Eta(logic.shard_index, float(eta)))
            logic._started = True
        else:
            payload, stats = logic.step(msg.iteration, msg.x)
        send(Xi(logic.shard_index, msg.iteration, np.asarray(payload)))
        send(Stats(logic.shard_index, msg.iteration, np.asarray(stats)))
    except Exception as exc:
        send(Fault(logic.shard_index, repr(exc)))


class ThreadExecutor(Executor):
    """One thread per worker; queue channels; shared master inbox."""

    def __init__(self, logics, timeout=DEFAULT_TIMEOUT):
        super().__init__(logics, timeout)
        self._inbox = queue.Queue()
        self._to_workers = []
        self._threads = []
        for logic in self.logics:
            chan = queue.Queue()
            self._to_workers.append(chan)
            t = threading.Thread(
                target=_worker_main,
                args=(logic, lambda c=chan: c.get(), self._inbox.put),
                daemon=True,
            )
            t.start()
            self._threads.append(t)

    def _send_all(self, msg):
        for chan in self._to_workers:
            chan.put(msg)

    def _recv(self):
        try:
            msg = self._inbox.get(timeout=self.timeout)
        except queue.Empty:
            raise ParafitError(f"epoch timed out after {self.timeout} s") from None
        if isinstance(msg, Fault):
            raise WorkerFault(msg.shard_index, msg.description)
        return msg

    def _close(self):
        for t in self._threads:
            t.join(timeout=5.0)


class _SocketChannel:
    """Length-framed duplex message channel over a connected socket."""

    def __init__(self, sock):
        self.sock = sock
        self.bytes_sent = 0
        self.bytes_received = 0

    def send(self, msg):
        data = encode_message(msg)
        self.sock.sendall(data)
        self.bytes_sent += len(data)

    def recv(self):
        prefix = self._read_exact(8)
        (total,) = struct.unpack("<Q", prefix)
        rest = self._read_exact(total - 8)
        self.bytes_received += total
        return decode_message(prefix + rest)

    def _read_exact(self, count):
        chunks = []
        got = 0
        while got < count:
            chunk = self.sock.recv(count - got)
            if not chunk:
                raise DecodeError(
                    f"connection closed: expected {count} bytes, got {got}"
                )
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def close(self):
        self.sock.close()


class SocketExecutor(Executor):
    """Workers behind loopback TCP connections using the byte codec."""

    def __init__(self, logics, timeout=DEFAULT_TIMEOUT):
        super().__init__(logics, timeout)
        self._inbox = queue.Queue()
        listener = socket.create_server(("127.0.0.1", 0))
        port = listener.getsockname()[1]
        self._channels = [None] * self.D
        self._threads = []
        for logic in self.logics:
            t = threading.Thread(
                target=self._run_worker, args=(logic, port), daemon=True
            )
            t.start()
            self._threads.append(t)
        for _ in range(self.D):
            conn, _ = listener.accept()
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            chan = _SocketChannel(conn)
            hello = chan.recv()  # Eta-framed handshake carrying the shard index
            self._channels[hello.shard_index] = chan
            reader = threading.Thread(
                target=self._pump, args=(chan,), daemon=True
            )
            reader.start()
            self._threads.append(reader)
        listener.close()

    @staticmethod
    def _run_worker(logic, port):
        sock = socket.create_connection(("127.0.0.1", port))
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        chan = _SocketChannel(sock)
        chan.send(Eta(logic.shard_index, 0.0))  # handshake
        try:
            _worker_main(logic, chan.recv, chan.send)
        finally:
            chan.close()

    def _pump(self, chan):
        try:
            while True:
                self._inbox.put(chan.recv())
        except (DecodeError, OSError):
            return

    def _send_all(self, msg):
        for chan in self._channels:
            chan.send(msg)

    def _recv(self):
        try:
            msg = self._inbox.get(timeout=self.timeout)
        except queue.Empty:
            raise ParafitError(f"epoch timed out after {self.timeout} s") from None
        if isinstance(msg, Fault):
            raise WorkerFault(msg.shard_index, msg.description)
        return msg

    @property
    def bytes_transferred(self):
        return sum(
            c.bytes_sent + c.bytes_received for c in self._channels if c is not None
        )


_TRANSPORTS = {
    "inline": InlineExecutor,
    "thread": ThreadExecutor,
    "socket": SocketExecutor,
}


def spawn_cluster(shards, logic_factory, transport="thread", timeout=DEFAULT_TIMEOUT):
    """Create one worker per shard and return the executor handle.

    ``logic_factory(shard)`` must return a :class:`WorkerLogic` whose
    ``shard_index`` matches the shard's.  Shard indices must be 0..D-1.
    """
    shards = sorted(shards, key=lambda s: s.shard_index)
    if [s.shard_index for s in shards] != list(range(len(shards))):
        raise ValueError("shard indices must be contiguous from 0")
    try:
        cls = _TRANSPORTS[transport]
    except KeyError:
        raise ValueError(f"unknown transport {transport!r}") from None
    return cls([logic_factory(s) for s in shards], timeout=timeout)
