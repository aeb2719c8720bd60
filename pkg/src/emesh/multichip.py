"""Arrays of chips joined edge to edge by io-slice links."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Any, NamedTuple

from .addrmap import (AddressLayout, ChipGeometry, DEFAULT_LAYOUT, NodeCoord, chip_of,
                      decode_address)
from .errors import ConfigError, ContractError, UnroutableError
from .noc import Fabric, LinkParams
from .packet import PACKET_BYTES, NocPacket
from .router import Direction

SLICES_PER_SIDE = 32
PINS_PER_SLICE = 8
SIDES = (Direction.NORTH, Direction.EAST, Direction.SOUTH, Direction.WEST)
TOTAL_PINS = len(SIDES) * SLICES_PER_SIDE * PINS_PER_SLICE
IO_BYTES_PER_CLOCK = 192.0


class SliceMode(enum.Enum):
    LINK = "link"
    GPIO = "gpio"


@dataclass(frozen=True)
class IoSlice:
    side: Direction
    index: int
    mode: SliceMode = SliceMode.LINK
    pins: int = PINS_PER_SLICE

    def __post_init__(self):
        if self.side not in SIDES:
            raise ValueError(f"io slices sit on the four chip edges, not {self.side.name}")
        if not 0 <= self.index < SLICES_PER_SIDE:
            raise ValueError(f"slice index {self.index} outside 0..{SLICES_PER_SIDE - 1}")


def chip_slices(mode: SliceMode = SliceMode.LINK) -> list[IoSlice]:
    return [IoSlice(side, i, mode) for side in SIDES for i in range(SLICES_PER_SIDE)]


class Endpoint(NamedTuple):
    chip: tuple[int, int]
    side: Direction
    slice: int


@dataclass
class ChipLink:
    """One direction of a slice-to-slice connection.

    Credit accrues at ``payload_rate`` bytes per IO clock, capped at one
    packet's worth.  A whole packet crosses once a full packet of credit has
    built up and the receiver has room; the credit then starts over from zero.
    """
    src: Endpoint
    dst: Endpoint
    payload_rate: float = 1.5
    clock_ratio: float = 1.0
    depth: int = 4
    channel: int = -1
    credit: float = float(PACKET_BYTES)
    queue: deque = field(default_factory=deque)

    def __post_init__(self):
        if self.payload_rate <= 0 or self.clock_ratio <= 0:
            raise ValueError("link rate and clock ratio must be positive")
        if self.depth < 1:
            raise ValueError("link queue depth must be >= 1")

    def offer(self, pkt: Any) -> bool:
        """Enqueue *pkt*; False is push-back from a full queue."""
        if len(self.queue) >= self.depth:
            return False
        self.queue.append(pkt)
        return True

    def clocks_in_cycle(self, cycle: int) -> int:
        r = self.clock_ratio
        return int((cycle + 1) * r) - int(cycle * r)

    def tick(self, downstream_ready: bool = True) -> list:
        """Advance one IO clock and return the packets that crossed."""
        self.credit = min(self.credit + self.payload_rate, float(PACKET_BYTES))
        if self.queue and self.credit >= PACKET_BYTES and downstream_ready:
            self.credit = 0.0
            return [self.queue.popleft()]
        return []


def link_tick(link: ChipLink, downstream_ready: bool = True) -> list:
    return link.tick(downstream_ready)


@dataclass
class ChipArray:
    """A chips_x by chips_y array sharing one global mesh."""
    chips_x: int
    chips_y: int
    geom: ChipGeometry
    fabric: Fabric
    slices: dict[tuple[int, int], list[IoSlice]]
    links: list[ChipLink]

    @property
    def layout(self) -> AddressLayout:
        return self.fabric.layout

    @property
    def bundles(self) -> dict[tuple[tuple[int, int], Direction], list[ChipLink]]:
        """Outgoing links grouped by (chip, side)."""
        out: dict = {}
        for ln in self.links:
            out.setdefault((ln.src.chip, ln.src.side), []).append(ln)
        return out

    def slice_pairs(self) -> set[frozenset]:
        """Physical slice-to-slice connections, each counted once."""
        return {frozenset((ln.src, ln.dst)) for ln in self.links}

    def io_bytes_per_clock(self, chip: tuple[int, int]) -> float:
        """Aggregate payload rate of one chip's LINK-mode slices."""
        per = self.fabric.link.payload_rate
        return sum(per for s in self.slices[chip] if s.mode is SliceMode.LINK)

    def contains(self, chip: tuple[int, int]) -> bool:
        return 0 <= chip[0] < self.chips_x and 0 <= chip[1] < self.chips_y


def build_array(chips_x: int, chips_y: int, geom: ChipGeometry = ChipGeometry(),
                layout: AddressLayout = DEFAULT_LAYOUT, link: LinkParams = LinkParams(),
                **fabric_kw) -> ChipArray:
    """Wire a chip array.  Every router on an abutting edge gets one slice."""
    if chips_x < 1 or chips_y < 1:
        raise ConfigError(f"chip array must be at least 1x1, got {chips_x}x{chips_y}")
    if geom.rows > SLICES_PER_SIDE or geom.cols > SLICES_PER_SIDE:
        raise ConfigError(f"a chip edge carries at most {SLICES_PER_SIDE} slices; "
                          f"{geom.rows}x{geom.cols} chips need one per edge router")
    fab = Fabric(geom.rows, geom.cols, layout, chips=(chips_x, chips_y), link=link, **fabric_kw)
    slices = {(cx, cy): chip_slices() for cy in range(chips_y) for cx in range(chips_x)}
    for sl in slices.values():
        pins = sum(s.pins for s in sl)
        assert pins == TOTAL_PINS, pins
        assert len(sl) * LinkParams().payload_rate == IO_BYTES_PER_CLOCK
    links = []
    for ch, (r, d) in enumerate(fab.channel_ends):
        m = int(fab.nbr[r, d])
        here, there = fab.coord(r), fab.coord(m)
        a, b = chip_of(here, geom), chip_of(there, geom)
        d = Direction(d)
        pos_a = a.local_col if d.is_vertical else a.local_row
        pos_b = b.local_col if d.is_vertical else b.local_row
        links.append(ChipLink(Endpoint((a.chip_x, a.chip_y), d, pos_a),
                              Endpoint((b.chip_x, b.chip_y), d.opposite, pos_b),
                              link.payload_rate, link.clock_ratio, link.queue_depth, ch))
    return ChipArray(chips_x, chips_y, geom, fab, slices, links)


def route_offchip(self_chip: tuple[int, int], pkt: NocPacket, array: ChipArray) -> Direction:
    """Chip edge a packet leaves through: global y is resolved before x."""
    coord, _ = decode_address(pkt.dst_addr, array.layout)
    c = chip_of(coord, array.geom)
    dst = (c.chip_x, c.chip_y)
    if not array.contains(dst) or coord.z != array.geom.origin.z:
        raise UnroutableError(f"chip {dst} is outside the {array.chips_x}x{array.chips_y} array")
    if not array.contains(self_chip):
        raise UnroutableError(f"source chip {self_chip} is outside the array")
    if dst[1] > self_chip[1]:
        return Direction.SOUTH
    if dst[1] < self_chip[1]:
        return Direction.NORTH
    if dst[0] > self_chip[0]:
        return Direction.EAST
    if dst[0] < self_chip[0]:
        return Direction.WEST
    raise ContractError(f"destination {coord} is on the issuing chip {self_chip}")


def global_coord(chip: tuple[int, int], local: NodeCoord, geom: ChipGeometry) -> NodeCoord:
    return NodeCoord(geom.origin.x + chip[0] * geom.cols + local.x,
                     geom.origin.y + chip[1] * geom.rows + local.y, geom.origin.z)
