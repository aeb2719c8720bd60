"""Three-plane mesh fabric: state arrays, injection, ejection and the tick loop."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import _kernels as K
from .addrmap import (AddressLayout, ChipGeometry, DEFAULT_LAYOUT, NodeCoord,
                      decode_address)
from .errors import UnroutableError
from .packet import NetworkClass, NocPacket, classify_network
from .router import Direction, RouterState, route_decision

N_PLANES = len(NetworkClass)
HIST_BINS = 1 << 16
EVENT_NAMES = ("inject", "hop", "eject")


@dataclass(frozen=True)
class LinkParams:
    """Chip-to-chip channel settings (see :mod:`emesh.multichip`)."""
    payload_rate: float = 1.5
    clock_ratio: float = 1.0
    queue_depth: int = 4


class Delivery(NamedTuple):
    node: NodeCoord
    plane: NetworkClass
    packet: NocPacket
    tick: int
    injected: int
    hops: int

    @property
    def latency(self) -> int:
        """Injection to ejection, in ticks."""
        return self.tick - self.injected


class TraceRecord(NamedTuple):
    tick: int
    plane: NetworkClass
    event: str
    node: NodeCoord
    direction: Direction
    packet: NocPacket

    def line(self) -> str:
        return f"{self.tick} {self.plane.name.lower()} {self.event} {self.packet.hex()}"


@dataclass(frozen=True)
class Flow:
    """A constant-rate background stream between two nodes on one plane."""
    src: NodeCoord
    dst: NodeCoord
    rate: float
    plane: NetworkClass = NetworkClass.CMESH


class Fabric:
    """Every router, link and queue of the three planes.

    With ``chips=(cx, cy)`` the fabric spans a cx-by-cy array of
    ``rows`` x ``cols`` chips; links that cross a chip edge become rate-limited
    chip-to-chip channels.  Coordinates are global.
    """

    def __init__(self, rows: int, cols: int, layout: AddressLayout = DEFAULT_LAYOUT, *,
                 chips: tuple[int, int] = (1, 1), inject_depth: int = 4,
                 link: LinkParams = LinkParams(), check: bool = False, trace: bool = False):
        if rows < 1 or cols < 1:
            raise ValueError(f"mesh dimensions must be >= 1, got {rows}x{cols}")
        if chips[0] < 1 or chips[1] < 1:
            raise ValueError(f"chip array dimensions must be >= 1, got {chips}")
        if inject_depth < 1:
            raise ValueError("inject_depth must be >= 1")
        self.rows, self.cols = rows, cols
        self.chips = (int(chips[0]), int(chips[1]))
        self.width = cols * self.chips[0]
        self.height = rows * self.chips[1]
        self.layout = layout
        self.geom = ChipGeometry(rows, cols)
        self.link = link
        if not layout.fits(NodeCoord(self.width - 1, self.height - 1, 0)):
            raise ValueError(f"{self.width}x{self.height} mesh does not fit address layout {layout}")
        n = self.width * self.height
        self.n_nodes = n
        self._build_topology()
        self._alloc_state(inject_depth)
        self.ip[K.IP_CHECK] = int(check)
        self.ip[K.IP_TRACE] = int(trace)
        self._t = 0
        self._objs: dict[int, NocPacket] = {}
        self.trace_records: list[TraceRecord] = []

    # construction

    def _build_topology(self):
        w, h = self.width, self.height
        n = w * h
        idx = np.arange(n, dtype=np.int64)
        self.rx = idx % w
        self.ry = idx // w
        nbr = np.full((n, 4), -1, dtype=np.int64)
        for d in (Direction.NORTH, Direction.EAST, Direction.SOUTH, Direction.WEST):
            dx, dy = d.delta
            x2, y2 = self.rx + dx, self.ry + dy
            ok = (x2 >= 0) & (x2 < w) & (y2 >= 0) & (y2 < h)
            nbr[ok, d] = y2[ok] * w + x2[ok]
        self.nbr = nbr
        iol = np.full((n, 4), -1, dtype=np.int64)
        dst, ddir, ends = [], [], []
        for r in range(n):
            for d in range(4):
                m = nbr[r, d]
                if m < 0:
                    continue
                if (self.rx[r] // self.cols != self.rx[m] // self.cols
                        or self.ry[r] // self.rows != self.ry[m] // self.rows):
                    iol[r, d] = len(dst)
                    dst.append(m)
                    ddir.append(int(Direction(d).opposite))
                    ends.append((r, d))
        self.iol = iol
        self.io_dst = np.array(dst, dtype=np.int64)
        self.io_dir = np.array(ddir, dtype=np.int64)
        # (source router, exit direction) per chip-to-chip channel
        self.channel_ends = ends

    def _alloc_state(self, q):
        P, R, L = N_PLANES, self.n_nodes, len(self.io_dst)
        qi = self.link.queue_depth
        i64 = np.int64
        self.ip = np.zeros(K.IP_LEN, dtype=i64)
        self.fp = np.zeros(K.FP_LEN, dtype=np.float64)
        self.ip[K.IP_W], self.ip[K.IP_H] = self.width, self.height
        self.ip[K.IP_CROWS], self.ip[K.IP_CCOLS] = self.rows, self.cols
        self.ip[K.IP_QDEPTH], self.ip[K.IP_IODEPTH] = q, qi
        self.ip[K.IP_GEN_KIND] = -1
        self.ip[K.IP_XBITS], self.ip[K.IP_YBITS] = self.layout.x_bits, self.layout.y_bits
        self.ip[K.IP_WIN_START], self.ip[K.IP_WIN_END] = 0, 0
        self.fp[K.FP_IORATE] = self.link.payload_rate
        self.fp[K.FP_IORATIO] = self.link.clock_ratio
        self.gen_planes = np.zeros(N_PLANES, dtype=i64)
        self._set_flow_arrays([])
        never = -(1 << 40)
        self.slot = np.full((P, R, 5), -1, dtype=i64)
        self.sroute = np.zeros((P, R, 5), dtype=i64)
        self.rr = np.zeros((P, R, 5), dtype=i64)
        self.last_send = np.full((P, R, 5), never, dtype=i64)
        self.lq = np.full((P, R, 5, K.LINK_CAP), -1, dtype=i64)
        self.lqt = np.zeros((P, R, 5, K.LINK_CAP), dtype=i64)
        self.lqn = np.zeros((P, R, 5), dtype=i64)
        self.iq = np.full((P, R, q), -1, dtype=i64)
        self.iqn = np.zeros((P, R), dtype=i64)
        self.last_inj = np.full((P, R), never, dtype=i64)
        self.accept = np.ones((P, R), dtype=np.uint8)
        self.last_recv = np.full(R, never, dtype=i64)
        self.ej_rr = np.zeros(R, dtype=i64)
        self.last_node_send = np.full(R, never, dtype=i64)
        self.ioq = np.full((L, qi), -1, dtype=i64)
        self.ioqt = np.zeros((L, qi), dtype=i64)
        self.ion = np.zeros(L, dtype=i64)
        self.iocred = np.full(L, K.PACKET_BYTES, dtype=np.float64)
        pool = P * R * (5 + 5 * K.LINK_CAP + q) + L * qi + 2 * R + 64
        self.p_dst = np.zeros(pool, dtype=i64)
        self.p_dx = np.zeros(pool, dtype=i64)
        self.p_dy = np.zeros(pool, dtype=i64)
        self.p_plane = np.zeros(pool, dtype=i64)
        self.p_t0 = np.zeros(pool, dtype=i64)
        self.p_hops = np.zeros(pool, dtype=i64)
        self.p_size = np.zeros(pool, dtype=i64)
        self.p_synth = np.zeros(pool, dtype=i64)
        self.p_ew = np.zeros(pool, dtype=i64)
        self.p_addr = np.zeros(pool, dtype=np.uint64)
        self.p_payload = np.zeros(pool, dtype=np.uint64)
        self.p_ctrl = np.zeros(pool, dtype=i64)
        self.free_ids = np.arange(pool - 1, -1, -1, dtype=i64)
        self.free_top = np.array([pool], dtype=i64)
        self.cnt = np.zeros((P, K.C_LEN), dtype=i64)
        self.hist = np.zeros((P, HIST_BINS), dtype=i64)
        self.link_use = np.zeros((P, R, 5), dtype=i64)
        self.viol = np.zeros(K.V_LEN, dtype=i64)
        self.dl = np.zeros((4 * R, 4), dtype=i64)
        self.dl_n = np.zeros(1, dtype=i64)
        tr = P * R * 8 + L + 64
        self.tr_i = np.zeros((tr, 5), dtype=i64)
        self.tr_u = np.zeros((tr, 2), dtype=np.uint64)
        self.tr_c = np.zeros(tr, dtype=i64)
        self.tr_n = np.zeros(1, dtype=i64)

    def _set_flow_arrays(self, flows):
        self.fl_src = np.array([f[0] for f in flows], dtype=np.int64)
        self.fl_dst = np.array([f[1] for f in flows], dtype=np.int64)
        self.fl_plane = np.array([f[2] for f in flows], dtype=np.int64)
        self.fl_rate = np.array([f[3] for f in flows], dtype=np.float64)
        self.ip[K.IP_NFLOWS] = len(flows)

    def _args(self):
        return (self.ip, self.fp, self.gen_planes, self.fl_src, self.fl_dst, self.fl_plane,
                self.fl_rate, self.rx, self.ry, self.nbr, self.iol, self.io_dst, self.io_dir,
                self.slot, self.sroute, self.rr, self.last_send, self.lq, self.lqt, self.lqn,
                self.iq, self.iqn, self.last_inj, self.accept, self.last_recv, self.ej_rr,
                self.last_node_send, self.ioq, self.ioqt, self.ion, self.iocred,
                self.p_dst, self.p_dx, self.p_dy, self.p_plane, self.p_t0, self.p_hops,
                self.p_size, self.p_synth, self.p_ew, self.p_addr, self.p_payload, self.p_ctrl,
                self.free_ids, self.free_top, self.cnt, self.hist, self.link_use, self.viol,
                self.dl, self.dl_n, self.tr_i, self.tr_u, self.tr_c, self.tr_n)

    # coordinates

    @property
    def tick(self) -> int:
        """Index of the next tick to execute (two ticks per cycle)."""
        return self._t

    @property
    def cycle(self) -> int:
        return self._t // 2

    def index(self, node) -> int:
        if isinstance(node, (int, np.integer)):
            if not 0 <= node < self.n_nodes:
                raise ValueError(f"node index {node} outside mesh")
            return int(node)
        x, y = node[0], node[1]
        z = node[2] if len(node) > 2 else 0
        if not (0 <= x < self.width and 0 <= y < self.height) or z != 0:
            raise ValueError(f"{node} is not on the {self.width}x{self.height} mesh")
        return y * self.width + x

    def coord(self, index: int) -> NodeCoord:
        return NodeCoord(int(index % self.width), int(index // self.width), 0)

    def chip_index(self, node) -> tuple[int, int]:
        c = self.coord(self.index(node))
        return c.x // self.cols, c.y // self.rows

    def dest_index(self, pkt: NocPacket) -> int:
        coord, _ = decode_address(pkt.dst_addr, self.layout)
        if coord.z != 0 or not (0 <= coord.x < self.width and 0 <= coord.y < self.height):
            raise UnroutableError(f"destination {coord} is outside the {self.width}x{self.height} system")
        return coord.y * self.width + coord.x

    def classify(self, node, pkt: NocPacket) -> NetworkClass:
        return classify_network(pkt, self.chip_index(node), self.geom, self.chips, self.layout)

    # traffic

    def set_traffic(self, pattern, planes: Sequence[NetworkClass] | None = None,
                    hotspot: NodeCoord | None = None):
        """Enable synthetic traffic from a :class:`emesh.node.TrafficPattern`.

        With *planes* unset, packets are writes routed by destination chip
        (on-chip to cmesh, off-chip to xmesh); otherwise each node rotates
        over the listed planes cycle by cycle.
        """
        self.ip[K.IP_GEN_KIND] = int(pattern.kind)
        self.ip[K.IP_GEN_SIZE] = pattern.size
        self.ip[K.IP_SEED] = pattern.seed
        self.fp[K.FP_RATE] = pattern.rate
        self.fp[K.FP_HOTFRAC] = pattern.hotspot_fraction
        hot = hotspot if hotspot is not None else pattern.hotspot
        if hot is None:
            hot = NodeCoord(self.width // 2, self.height // 2)
        self.ip[K.IP_HOT] = self.index(hot)
        planes = list(planes or [])
        self.ip[K.IP_NGP] = len(planes)
        for i, p in enumerate(planes):
            self.gen_planes[i] = int(p)

    def set_flows(self, flows: Iterable[Flow], seed: int | None = None):
        self._set_flow_arrays([(self.index(f.src), self.index(f.dst), int(f.plane), f.rate)
                               for f in flows])
        if seed is not None:
            self.ip[K.IP_SEED] = seed

    def stop_traffic(self):
        self.ip[K.IP_GEN_KIND] = -1
        self._set_flow_arrays([])

    def set_window(self, start_tick: int, end_tick: int):
        self.ip[K.IP_WIN_START] = start_tick
        self.ip[K.IP_WIN_END] = end_tick

    def set_accept(self, plane: NetworkClass, node, accepting: bool):
        self.accept[int(plane), self.index(node)] = int(accepting)

    # injection

    def inject(self, node, pkt: NocPacket, plane: NetworkClass | None = None) -> bool:
        """Offer *pkt* at *node*'s hub on *plane*.

        False is push-back (hub full, or this plane already took a packet from
        the node this cycle); the caller keeps the packet and retries.
        """
        n = self.index(node)
        d = self.dest_index(pkt)
        if plane is None:
            plane = self.classify(n, pkt)
        p = int(plane)
        top = int(self.free_top[0])
        if top == 0:
            self.viol[K.V_POOL] += 1
            return False
        pid = int(self.free_ids[top - 1])
        self.p_dst[pid] = d
        self.p_dx[pid] = self.rx[d]
        self.p_dy[pid] = self.ry[d]
        self.p_plane[pid] = p
        self.p_t0[pid] = self._t
        self.p_hops[pid] = 0
        self.p_size[pid] = pkt.size
        self.p_synth[pid] = 0
        self.p_ew[pid] = 0
        self.p_addr[pid] = pkt.dst_addr
        self.p_payload[pid] = pkt.payload
        self.p_ctrl[pid] = pkt.ctrl
        ok = K.inject_pid(p, n, pid, self.cycle, self.ip[K.IP_QDEPTH], self.rx, self.ry,
                          self.p_dx, self.p_dy, self.slot, self.sroute, self.iq, self.iqn,
                          self.last_inj, self.last_node_send)
        if not ok:
            return False
        self.free_top[0] = top - 1
        self._objs[pid] = pkt
        self.cnt[p, K.C_INJ] += 1
        if self.ip[K.IP_WIN_START] <= self._t < self.ip[K.IP_WIN_END]:
            self.cnt[p, K.C_WINJ] += 1
        if self.ip[K.IP_TRACE]:
            self.trace_records.append(TraceRecord(self._t, NetworkClass(p), "inject",
                                                  self.coord(n), Direction.HUB, pkt))
        return True

    # time

    def step(self) -> list[Delivery]:
        """Advance exactly one tick and return packets ejected during it."""
        K.tick(self._t, *self._args())
        self._t += 1
        return self._drain()

    def run(self, n_ticks: int, stop_on_delivery: bool = False) -> list[Delivery]:
        """Advance up to *n_ticks* ticks in compiled code."""
        out: list[Delivery] = []
        left = n_ticks
        while left > 0:
            done = K.run(self._t, left, stop_on_delivery, *self._args())
            self._t += done
            left -= done
            out.extend(self._drain())
            if stop_on_delivery and out:
                break
        return out

    def run_until_idle(self, max_ticks: int) -> bool:
        """Step until every plane is empty; False if *max_ticks* runs out first."""
        spent = 0
        while self.in_flight() > 0:
            if spent >= max_ticks:
                return False
            chunk = min(max_ticks - spent, 256)
            self.run(chunk)
            spent += chunk
        return True

    def _drain(self) -> list[Delivery]:
        if self.tr_n[0]:
            self._drain_trace()
        k = int(self.dl_n[0])
        if not k:
            return []
        out = []
        for pid, p, r, t in self.dl[:k].tolist():
            pkt = self._objs.pop(pid, None)
            if pkt is None:
                pkt = NocPacket(int(self.p_addr[pid]), int(self.p_payload[pid]), int(self.p_ctrl[pid]))
            out.append(Delivery(self.coord(r), NetworkClass(p), pkt, t,
                                int(self.p_t0[pid]), int(self.p_hops[pid])))
            top = self.free_top[0]
            self.free_ids[top] = pid
            self.free_top[0] = top + 1
        self.dl_n[0] = 0
        return out

    def _drain_trace(self):
        k = int(self.tr_n[0])
        for (t, p, ev, r, d), (addr, payload), ctrl in zip(
                self.tr_i[:k].tolist(), self.tr_u[:k].tolist(), self.tr_c[:k].tolist()):
            self.trace_records.append(TraceRecord(t, NetworkClass(p), EVENT_NAMES[ev],
                                                  self.coord(r), Direction(d),
                                                  NocPacket(addr, payload, ctrl)))
        self.tr_n[0] = 0

    def enable_trace(self, on: bool = True):
        self.ip[K.IP_TRACE] = int(on)

    def enable_checks(self, on: bool = True):
        self.ip[K.IP_CHECK] = int(on)

    def take_trace(self) -> list[TraceRecord]:
        recs, self.trace_records = self.trace_records, []
        return recs

    # inspection

    def in_flight(self, plane: NetworkClass | None = None) -> int:
        if plane is None:
            return int((self.cnt[:, K.C_INJ] - self.cnt[:, K.C_DEL]).sum())
        return int(self.cnt[int(plane), K.C_INJ] - self.cnt[int(plane), K.C_DEL])

    def held(self) -> list[int]:
        """Packets physically present in each plane's buffers, recounted."""
        held = []
        for p in range(N_PLANES):
            s = int((self.slot[p] >= 0).sum() + self.lqn[p].sum() + self.iqn[p].sum())
            for c in range(len(self.ion)):
                s += sum(1 for k in range(self.ion[c]) if self.p_plane[self.ioq[c, k]] == p)
            held.append(s)
        return held

    def injected(self, plane: NetworkClass) -> int:
        return int(self.cnt[int(plane), K.C_INJ])

    def delivered(self, plane: NetworkClass) -> int:
        return int(self.cnt[int(plane), K.C_DEL])

    @property
    def violations(self) -> dict:
        names = ("conservation", "dimension_order", "pool_exhausted", "trace_overflow", "io_overrun")
        return {k: int(v) for k, v in zip(names, self.viol)}

    def router_state(self, plane: NetworkClass, node) -> RouterState:
        """Snapshot one router as a :class:`emesh.router.RouterState`."""
        p, r = int(plane), self.index(node)
        st = RouterState(self.coord(r))
        for d in Direction:
            pid = int(self.slot[p, r, d])
            st.rr[d] = Direction(int(self.rr[p, r, d]))
            st.last_send[d] = int(self.last_send[p, r, d])
            if pid >= 0:
                pkt = self._objs.get(pid) or NocPacket(int(self.p_addr[pid]),
                                                      int(self.p_payload[pid]), int(self.p_ctrl[pid]))
                st.slots[d] = pkt
                st.routes[d] = route_decision(st.coord, self.coord(int(self.p_dst[pid])))
        return st


def build_fabric(rows: int, cols: int, layout: AddressLayout = DEFAULT_LAYOUT, **kw) -> Fabric:
    return Fabric(rows, cols, layout, **kw)
