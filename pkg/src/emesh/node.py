"""Processor node: a four-bank scratchpad behind four 8-byte/cycle ports.

Nodes are transaction sources and servicers, not instruction interpreters.
Each cycle a node may receive one packet, perform one local load/store,
fetch 8 bytes, and send one packet.  Ports that touch the same bank in the
same cycle are serialized by fixed priority.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from typing import Mapping, NamedTuple

from . import _kernels as K
from .addrmap import (AddressLayout, DEFAULT_LAYOUT, NodeCoord, decode_address,
                      encode_address, is_local)
from .errors import AddressRangeError, ContractError, EmeshError
from .packet import (NocPacket, PacketKind, make_read_reply, make_read_request,
                     make_write, size_code)

SCRATCHPAD_BYTES = 65536
N_BANKS = 4
BANK_BYTES = SCRATCHPAD_BYTES // N_BANKS
PORT_BYTES = 8


class Port(enum.IntEnum):
    """Node ports, in bank-conflict priority order."""
    NET_RECEIVE = 0
    LOAD_STORE = 1
    FETCH = 2
    NET_SEND = 3


@dataclass(frozen=True)
class PortBudget:
    fetch: int = PORT_BYTES
    load_store: int = PORT_BYTES
    net_receive: int = PORT_BYTES
    net_send: int = PORT_BYTES

    @property
    def total(self) -> int:
        return self.fetch + self.load_store + self.net_receive + self.net_send


def bank_of(offset: int) -> int:
    if not 0 <= offset < SCRATCHPAD_BYTES:
        raise AddressRangeError(f"offset 0x{offset:x} is outside the {SCRATCHPAD_BYTES}-byte scratchpad")
    return (offset >> 3) % N_BANKS


def grant_ports(requests: Mapping[Port, int | None]) -> dict[Port, bool]:
    """Resolve one cycle of port requests.

    *requests* maps a port to the bank it touches (None for no bank).  A port
    is granted unless a higher-priority port already holds its bank.
    """
    taken = set()
    grants = {}
    for port in sorted(requests):
        bank = requests[port]
        if bank is None:
            grants[port] = True
        elif bank in taken:
            grants[port] = False
        else:
            taken.add(bank)
            grants[port] = True
    return grants


class Scratchpad:
    """64KB of byte-addressable memory, allocated on first write."""

    def __init__(self):
        self._mem: bytearray | None = None

    @staticmethod
    def check(offset: int, size: int):
        size_code(size)
        if offset < 0 or offset + size > SCRATCHPAD_BYTES:
            raise AddressRangeError(f"access 0x{offset:x}+{size} outside scratchpad")
        if offset % size:
            raise AddressRangeError(f"misaligned {size}-byte access at 0x{offset:x}")

    def read(self, offset: int, size: int = 8) -> int:
        self.check(offset, size)
        if self._mem is None:
            return 0
        return int.from_bytes(self._mem[offset:offset + size], "little")

    def write(self, offset: int, size: int, value: int):
        self.check(offset, size)
        if self._mem is None:
            self._mem = bytearray(SCRATCHPAD_BYTES)
        self._mem[offset:offset + size] = (value & ((1 << (8 * size)) - 1)).to_bytes(size, "little")

    def load(self, offset: int, data: bytes):
        if offset < 0 or offset + len(data) > SCRATCHPAD_BYTES:
            raise AddressRangeError("preload outside scratchpad")
        if self._mem is None:
            self._mem = bytearray(SCRATCHPAD_BYTES)
        self._mem[offset:offset + len(data)] = data

    def snapshot(self) -> bytes:
        return bytes(self._mem) if self._mem is not None else bytes(SCRATCHPAD_BYTES)


class Op(enum.Enum):
    LOCAL_READ = "LOCAL_READ"
    LOCAL_WRITE = "LOCAL_WRITE"
    REMOTE_READ = "REMOTE_READ"
    REMOTE_WRITE = "REMOTE_WRITE"


@dataclass(frozen=True)
class Transaction:
    """One entry of a node's program-ordered script.

    For LOCAL_* ops *address* is a scratchpad offset.  For REMOTE_* ops it is
    a full system address; REMOTE_READ uses *data* as the offset in the
    issuing node's own scratchpad where the reply lands.
    """
    op: Op
    address: int
    data: int = 0
    size: int = 8
    blocking: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> Transaction:
        def num(v):
            return int(v, 0) if isinstance(v, str) else int(v)
        return cls(Op(d["op"]), num(d["address"]), num(d.get("data", 0)),
                   int(d.get("size", 8)), bool(d.get("blocking", True)))


class Effect(NamedTuple):
    """A memory access applied at a node, in global application order."""
    seq: int
    tick: int
    node: NodeCoord
    access: str       # "store" or "load"
    offset: int
    size: int
    value: int
    origin: str       # "local", "remote" or "reply"


@dataclass
class TransactionResult:
    index: int
    op: Op
    issued: int
    completed: int | None = None
    value: int | None = None


class NodeCycleResult(NamedTuple):
    accepted: NocPacket | None
    sent: NocPacket | None
    grants: dict


@dataclass
class NodeStats:
    errors: int = 0
    bank_stalls: int = 0
    send_refusals: int = 0
    fetch_stalls: int = 0
    fetched: int = 0
    budget_violations: int = 0
    bank_violations: int = 0


class Node:
    def __init__(self, coord: NodeCoord, layout: AddressLayout = DEFAULT_LAYOUT, *,
                 reply_depth: int = 4, blocking_reads: bool = True,
                 fetch: bool = False, fetch_base: int = 0, fetch_span: int = 4096):
        self.coord = NodeCoord(*coord)
        self.layout = layout
        self.memory = Scratchpad()
        self.reply_depth = reply_depth
        self.blocking_reads = blocking_reads
        self.fetch = fetch
        self.fetch_base = fetch_base
        self.fetch_span = fetch_span
        self._fetch_ptr = 0
        self.script: deque[tuple[int, Transaction]] = deque()
        self._n_ops = 0
        self.replies: deque[NocPacket] = deque()
        self.waiting: int | None = None       # return offset of a blocking read
        self.outstanding: deque[tuple[int, int]] = deque()   # (return offset, result index)
        self.results: list[TransactionResult] = []
        self.stats = NodeStats()

    def load_script(self, ops):
        for op in ops:
            self.script.append((self._n_ops, op))
            self._n_ops += 1

    @property
    def busy(self) -> bool:
        """True while the node has work that does not wait on the network."""
        return bool(self.replies) or (bool(self.script) and self.waiting is None)

    @property
    def done(self) -> bool:
        return not self.script and not self.replies and self.waiting is None and not self.outstanding

    @property
    def accepting_requests(self) -> bool:
        return len(self.replies) < self.reply_depth

    def _record(self, log, tick, access, offset, size, value, origin):
        if log is not None:
            log.append(Effect(len(log), tick, self.coord, access, offset, size, value, origin))

    def _head(self):
        if self.waiting is not None or not self.script:
            return None
        return self.script[0]

    def _is_local_op(self, op: Transaction) -> bool:
        if op.op in (Op.LOCAL_READ, Op.LOCAL_WRITE):
            return True
        try:
            return is_local(op.address, self.coord, self.layout)
        except EmeshError:
            return False

    def _local_offset(self, op: Transaction) -> int:
        if op.op in (Op.LOCAL_READ, Op.LOCAL_WRITE):
            return op.address
        return decode_address(op.address, self.layout)[1]

    def _remote_packet(self, op: Transaction) -> NocPacket:
        if op.op is Op.REMOTE_WRITE:
            return make_write(op.address, op.data, op.size)
        if op.op is Op.REMOTE_READ:
            ret = encode_address(self.coord, op.data, self.layout)
            return make_read_request(op.address, ret, op.size)
        raise ContractError(f"{op.op} is not a remote operation")

    def cycle(self, cycle: int, incoming=None, fabric=None, log=None) -> NodeCycleResult:
        """Run one clock cycle.

        *incoming* is the packet (a :class:`emesh.noc.Delivery`) the hub
        ejected to this node since the previous cycle, if any.  Outgoing
        packets are offered to *fabric*.
        """
        tick = 2 * cycle
        requests: dict[Port, int | None] = {}

        rx_pkt = incoming.packet if incoming is not None else None
        rx_off = None
        if rx_pkt is not None:
            rx_off = decode_address(rx_pkt.dst_addr, self.layout)[1]
            try:
                Scratchpad.check(rx_off, rx_pkt.size)
                requests[Port.NET_RECEIVE] = bank_of(rx_off)
            except AddressRangeError:
                requests[Port.NET_RECEIVE] = None
                rx_off = None

        head = self._head()
        local = None
        if head is not None and self._is_local_op(head[1]):
            local = head
            off = self._local_offset(head[1])
            try:
                Scratchpad.check(off, head[1].size)
                requests[Port.LOAD_STORE] = bank_of(off)
            except AddressRangeError:
                self.stats.errors += 1
                self.results.append(TransactionResult(head[0], head[1].op, tick, tick, None))
                self.script.popleft()
                local = None

        if self.fetch:
            requests[Port.FETCH] = bank_of(self.fetch_base + self._fetch_ptr)

        send = None
        if self.replies:
            send = self.replies[0]
        elif head is not None and local is None and self.script and self.script[0] is head:
            try:
                send = self._remote_packet(head[1])
                if fabric is not None:
                    fabric.dest_index(send)
            except EmeshError:
                self.stats.errors += 1
                self.results.append(TransactionResult(head[0], head[1].op, tick, tick, None))
                self.script.popleft()
                send = None
        if send is not None:
            requests[Port.NET_SEND] = None

        grants = grant_ports(requests)
        self._check_invariants(requests, grants, rx_pkt, local, send)

        accepted = None
        if rx_pkt is not None:
            accepted = rx_pkt
            if rx_off is None:
                self.stats.errors += 1
            else:
                self._service(rx_pkt, rx_off, incoming.tick, log)

        if local is not None:
            if grants[Port.LOAD_STORE]:
                self._do_local(local, tick, log)
                self.script.popleft()
            else:
                self.stats.bank_stalls += 1

        if self.fetch:
            if grants[Port.FETCH]:
                self._fetch_ptr = (self._fetch_ptr + PORT_BYTES) % self.fetch_span
                self.stats.fetched += PORT_BYTES
            else:
                self.stats.fetch_stalls += 1

        sent = None
        if send is not None and fabric is not None:
            if fabric.inject(self.coord, send):
                sent = send
                if self.replies and send is self.replies[0]:
                    self.replies.popleft()
                else:
                    idx, op = self.script.popleft()
                    res = TransactionResult(idx, op.op, tick)
                    self.results.append(res)
                    if op.op is Op.REMOTE_READ:
                        ri = len(self.results) - 1
                        if op.blocking and self.blocking_reads:
                            self.waiting = op.data
                        self.outstanding.append((op.data, ri))
                    else:
                        res.completed = tick
            else:
                self.stats.send_refusals += 1
        return NodeCycleResult(accepted, sent, grants)

    def _check_invariants(self, requests, grants, rx_pkt, local, send):
        moved = 0
        if rx_pkt is not None:
            moved += rx_pkt.size
        if local is not None and grants.get(Port.LOAD_STORE):
            moved += local[1].size
        if self.fetch and grants.get(Port.FETCH):
            moved += PORT_BYTES
        if send is not None:
            moved += send.size
        if moved > 4 * PORT_BYTES:
            self.stats.budget_violations += 1
        banks = [requests[p] for p, ok in grants.items() if ok and requests[p] is not None]
        if len(banks) != len(set(banks)):
            self.stats.bank_violations += 1

    def _service(self, pkt: NocPacket, offset: int, tick: int, log):
        kind = pkt.kind
        if kind is PacketKind.READ_REQUEST:
            value = self.memory.read(offset, pkt.size)
            self._record(log, tick, "load", offset, pkt.size, value, "remote")
            self.replies.append(make_read_reply(pkt, value))
            return
        self.memory.write(offset, pkt.size, pkt.data)
        origin = "reply" if kind is PacketKind.READ_REPLY else "remote"
        self._record(log, tick, "store", offset, pkt.size, pkt.data, origin)
        if kind is PacketKind.READ_REPLY:
            self._complete_read(offset, pkt.data, tick)

    def _complete_read(self, offset: int, value: int, tick: int):
        for i, (ret, ri) in enumerate(self.outstanding):
            if ret == offset:
                del self.outstanding[i]
                self.results[ri].completed = tick
                self.results[ri].value = value
                break
        if self.waiting == offset:
            self.waiting = None

    def _do_local(self, entry, tick, log):
        idx, op = entry
        off = self._local_offset(op)
        if op.op in (Op.LOCAL_WRITE, Op.REMOTE_WRITE):
            self.memory.write(off, op.size, op.data)
            self._record(log, tick, "store", off, op.size, op.data & ((1 << (8 * op.size)) - 1), "local")
            self.results.append(TransactionResult(idx, op.op, tick, tick))
        else:
            value = self.memory.read(off, op.size)
            self._record(log, tick, "load", off, op.size, value, "local")
            if op.op is Op.REMOTE_READ:
                # same landing spot as a reply from another node would use
                self.memory.write(op.data, op.size, value)
                self._record(log, tick, "store", op.data, op.size, value, "reply")
            self.results.append(TransactionResult(idx, op.op, tick, tick, value))


# synthetic traffic

class PatternKind(enum.IntEnum):
    UNIFORM_RANDOM = K.UNIFORM_RANDOM
    NEAREST_NEIGHBOR = K.NEAREST_NEIGHBOR
    TRANSPOSE = K.TRANSPOSE
    BIT_REVERSAL = K.BIT_REVERSAL
    HOTSPOT = K.HOTSPOT
    MIRROR_HALVES = K.MIRROR_HALVES


@dataclass(frozen=True)
class TrafficPattern:
    kind: PatternKind
    rate: float
    size: int = 8
    seed: int = 0
    hotspot: NodeCoord | None = None
    hotspot_fraction: float = 0.25

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"injection rate must be within [0, 1], got {self.rate}")
        size_code(self.size)
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def pattern_destination(kind: PatternKind, src: NodeCoord, rows: int, cols: int,
                        seed: int = 0, cycle: int = 0, hotspot: NodeCoord | None = None,
                        hotspot_fraction: float = 0.25) -> NodeCoord | None:
    """Where *src* sends under *kind* this cycle, or None if it stays silent."""
    hot = hotspot if hotspot is not None else NodeCoord(cols // 2, rows // 2)
    d = K.pattern_dest(int(kind), src.y * cols + src.x, cols, rows, seed, cycle,
                       hot.y * cols + hot.x, hotspot_fraction)
    if d < 0:
        return None
    return NodeCoord(int(d % cols), int(d // cols))


def gen_traffic(pattern: TrafficPattern, dims: tuple[int, int], tick: int) -> list[tuple[NodeCoord, NodeCoord]]:
    """Injection decisions for one tick as (source, destination) pairs.

    Decisions are made on even ticks only (once per cycle) and depend on
    nothing but (pattern, seed, tick).  *dims* is (rows, cols).
    """
    if tick % 2:
        return []
    rows, cols = dims
    cycle = tick // 2
    out = []
    for n in range(rows * cols):
        if K.unit(pattern.seed, cycle, n, 0) >= pattern.rate:
            continue
        src = NodeCoord(n % cols, n // cols)
        dst = pattern_destination(pattern.kind, src, rows, cols, pattern.seed, cycle,
                                  pattern.hotspot, pattern.hotspot_fraction)
        if dst is not None:
            out.append((src, dst))
    return out
