"""Flat 64-bit distributed address map.

Layout of a system address (low to high)::

    [19:0]   byte offset inside a node's 1MB region
    [49:20]  node coordinate, packed x (low) / y / z (high)
    [63:50]  reserved, must be zero

The 30 coordinate bits can be split between x, y and z in any way; the
split only repartitions the space, it never changes its size.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

from .errors import AddressRangeError, MalformedAddressError

OFFSET_BITS = 20
COORD_BITS = 30
ADDR_BITS = 64
RESERVED_SHIFT = OFFSET_BITS + COORD_BITS
RESERVED_MASK = ((1 << ADDR_BITS) - 1) & ~((1 << RESERVED_SHIFT) - 1)
OFFSET_MASK = (1 << OFFSET_BITS) - 1


@dataclass(frozen=True)
class AddressLayout:
    x_bits: int = 15
    y_bits: int = 15
    z_bits: int = 0
    # all-zero coordinate field means "this node"
    local_alias: bool = True

    offset_bits = OFFSET_BITS

    def __post_init__(self):
        widths = (self.x_bits, self.y_bits, self.z_bits)
        if any(w < 0 for w in widths):
            raise AddressRangeError(f"negative coordinate width in {widths}")
        if sum(widths) != COORD_BITS:
            raise AddressRangeError(
                f"coordinate widths must sum to {COORD_BITS}, got {sum(widths)}")

    @property
    def y_shift(self) -> int:
        return OFFSET_BITS + self.x_bits

    @property
    def z_shift(self) -> int:
        return OFFSET_BITS + self.x_bits + self.y_bits

    def fits(self, coord: NodeCoord) -> bool:
        return (0 <= coord.x < (1 << self.x_bits)
                and 0 <= coord.y < (1 << self.y_bits)
                and 0 <= coord.z < (1 << self.z_bits))


DEFAULT_LAYOUT = AddressLayout()


class NodeCoord(NamedTuple):
    x: int
    y: int
    z: int = 0


@dataclass(frozen=True, order=True)
class GlobalAddress:
    raw: int

    @property
    def is_valid(self) -> bool:
        return 0 <= self.raw < (1 << ADDR_BITS) and not self.raw & RESERVED_MASK

    def __int__(self):
        return self.raw

    def __index__(self):
        return self.raw

    def __repr__(self):
        return f"GlobalAddress(0x{self.raw:016x})"


class ChipCoord(NamedTuple):
    chip_x: int
    chip_y: int
    local_row: int
    local_col: int


@dataclass(frozen=True)
class ChipGeometry:
    rows: int = 32
    cols: int = 32
    origin: NodeCoord = NodeCoord(0, 0, 0)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"chip geometry must be at least 1x1, got {self.rows}x{self.cols}")

    @property
    def nodes(self) -> int:
        return self.rows * self.cols


class Capacity(NamedTuple):
    max_nodes: int
    total_bytes: int


def _raw(addr) -> int:
    return addr.raw if isinstance(addr, GlobalAddress) else int(addr)


def encode_address(coord: NodeCoord, offset: int,
                   layout: AddressLayout = DEFAULT_LAYOUT) -> GlobalAddress:
    if not layout.fits(coord):
        raise AddressRangeError(f"{coord} does not fit layout {layout}")
    if not 0 <= offset <= OFFSET_MASK:
        raise AddressRangeError(f"offset 0x{offset:x} exceeds {OFFSET_BITS} bits")
    raw = ((coord.z << layout.z_shift) | (coord.y << layout.y_shift)
           | (coord.x << OFFSET_BITS) | offset)
    return GlobalAddress(raw)


def decode_address(addr, layout: AddressLayout = DEFAULT_LAYOUT) -> tuple[NodeCoord, int]:
    raw = _raw(addr)
    if raw < 0 or raw >= 1 << ADDR_BITS:
        raise MalformedAddressError(f"address {raw:#x} is not a 64-bit value")
    if raw & RESERVED_MASK:
        raise MalformedAddressError(f"reserved bits set in 0x{raw:016x}")
    x = (raw >> OFFSET_BITS) & ((1 << layout.x_bits) - 1)
    y = (raw >> layout.y_shift) & ((1 << layout.y_bits) - 1)
    z = (raw >> layout.z_shift) & ((1 << layout.z_bits) - 1)
    return NodeCoord(x, y, z), raw & OFFSET_MASK


def check_address(addr) -> int:
    """Return the raw value of *addr*, raising if reserved bits are set."""
    raw = _raw(addr)
    if raw < 0 or raw >= 1 << ADDR_BITS or raw & RESERVED_MASK:
        raise MalformedAddressError(f"malformed address {raw:#x}")
    return raw


def is_local(addr, self_coord: NodeCoord, layout: AddressLayout = DEFAULT_LAYOUT) -> bool:
    coord, _ = decode_address(addr, layout)
    if coord == self_coord:
        return True
    return layout.local_alias and coord == NodeCoord(0, 0, 0)


def chip_of(coord: NodeCoord, geom: ChipGeometry) -> ChipCoord:
    dx = coord.x - geom.origin.x
    dy = coord.y - geom.origin.y
    return ChipCoord(dx // geom.cols, dy // geom.rows, dy % geom.rows, dx % geom.cols)


def system_capacity(layout: AddressLayout = DEFAULT_LAYOUT) -> Capacity:
    # widths always sum to COORD_BITS, so the split never matters
    nodes = 1 << (layout.x_bits + layout.y_bits + layout.z_bits)
    return Capacity(nodes, nodes << OFFSET_BITS)
