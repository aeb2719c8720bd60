"""The 136-bit mesh packet.

Serialized layout, most significant first::

    [135:128] ctrl     bit0 write, bits[2:1] log2(size), bit3 reply, bits[7:4] zero
    [127:64]  dst_addr
    [63:0]    payload  (data, or the return address of a read request)
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .addrmap import (AddressLayout, ChipGeometry, DEFAULT_LAYOUT, NodeCoord,
                      check_address, chip_of, decode_address)
from .errors import ContractError, MalformedPacketError, UnroutableError

PACKET_BITS = 136
PACKET_BYTES = PACKET_BITS // 8
WORD_MASK = (1 << 64) - 1

CTRL_WRITE = 0x01
CTRL_SIZE_SHIFT = 1
CTRL_SIZE_MASK = 0x06
CTRL_REPLY = 0x08
CTRL_RESERVED = 0xF0

_LOG2 = {1: 0, 2: 1, 4: 2, 8: 3}


class PacketKind(enum.Enum):
    WRITE = "write"
    READ_REQUEST = "read_request"
    READ_REPLY = "read_reply"


class NetworkClass(enum.IntEnum):
    RMESH = 0
    CMESH = 1
    XMESH = 2

    @classmethod
    def parse(cls, name) -> NetworkClass:
        if isinstance(name, cls):
            return name
        try:
            return cls[str(name).upper()]
        except KeyError:
            raise ValueError(f"unknown network plane {name!r}") from None


def size_code(size_bytes: int) -> int:
    try:
        return _LOG2[size_bytes]
    except (KeyError, TypeError):
        raise ValueError(f"datasize must be one of 1, 2, 4, 8 bytes, got {size_bytes!r}") from None


@dataclass(frozen=True)
class NocPacket:
    dst_addr: int
    payload: int
    ctrl: int

    @property
    def is_write(self) -> bool:
        return bool(self.ctrl & CTRL_WRITE)

    @property
    def is_reply(self) -> bool:
        return bool(self.ctrl & CTRL_REPLY)

    @property
    def kind(self) -> PacketKind:
        if not self.is_write:
            return PacketKind.READ_REQUEST
        return PacketKind.READ_REPLY if self.is_reply else PacketKind.WRITE

    @property
    def size(self) -> int:
        return 1 << ((self.ctrl & CTRL_SIZE_MASK) >> CTRL_SIZE_SHIFT)

    @property
    def data(self) -> int:
        """Payload bytes actually carried (right-aligned)."""
        return self.payload & ((1 << (8 * self.size)) - 1)

    def serialize(self) -> int:
        return serialize(self)

    def hex(self) -> str:
        return f"{serialize(self):034x}"


def make_write(dst, data: int, size_bytes: int = 8) -> NocPacket:
    code = size_code(size_bytes)
    raw = check_address(dst)
    data &= (1 << (8 * size_bytes)) - 1
    return NocPacket(raw, data, CTRL_WRITE | (code << CTRL_SIZE_SHIFT))


def make_read_request(dst, return_addr, size_bytes: int = 8) -> NocPacket:
    code = size_code(size_bytes)
    return NocPacket(check_address(dst), check_address(return_addr), code << CTRL_SIZE_SHIFT)


def make_read_reply(request: NocPacket, data: int) -> NocPacket:
    if request.kind is not PacketKind.READ_REQUEST:
        raise ContractError(f"cannot reply to a {request.kind.value} packet")
    size = request.size
    ctrl = CTRL_WRITE | CTRL_REPLY | (request.ctrl & CTRL_SIZE_MASK)
    return NocPacket(check_address(request.payload), data & ((1 << (8 * size)) - 1), ctrl)


def classify_network(pkt: NocPacket, src_chip: tuple[int, int], geom: ChipGeometry,
                     array: tuple[int, int] = (1, 1),
                     layout: AddressLayout = DEFAULT_LAYOUT) -> NetworkClass:
    """Pick the plane a packet is injected on.

    *src_chip* and *array* are (chip_x, chip_y) and (chips_x, chips_y).
    """
    coord, _ = decode_address(pkt.dst_addr, layout)
    cx, cy, _, _ = chip_of(coord, geom)
    if not (0 <= cx < array[0] and 0 <= cy < array[1]) or coord.z != geom.origin.z:
        raise UnroutableError(f"destination {coord} is outside the {array[0]}x{array[1]} chip array")
    if pkt.kind is PacketKind.READ_REQUEST:
        return NetworkClass.RMESH
    if (cx, cy) == tuple(src_chip):
        return NetworkClass.CMESH
    return NetworkClass.XMESH


def serialize(pkt: NocPacket) -> int:
    if not 0 <= pkt.ctrl < 256 or pkt.ctrl & CTRL_RESERVED:
        raise MalformedPacketError(f"bad ctrl byte {pkt.ctrl:#x}")
    if not (0 <= pkt.dst_addr <= WORD_MASK and 0 <= pkt.payload <= WORD_MASK):
        raise MalformedPacketError("address and payload must be 64-bit unsigned")
    return (pkt.ctrl << 128) | (pkt.dst_addr << 64) | pkt.payload


def deserialize(word) -> NocPacket:
    """Inverse of :func:`serialize`; accepts an int or exactly 17 bytes."""
    if isinstance(word, (bytes, bytearray)):
        if len(word) * 8 != PACKET_BITS:
            raise ContractError(f"packet word must be {PACKET_BITS} bits, got {len(word) * 8}")
        word = int.from_bytes(word, "big")
    if not 0 <= word < 1 << PACKET_BITS:
        raise ContractError(f"packet word wider than {PACKET_BITS} bits")
    ctrl = word >> 128
    if ctrl & CTRL_RESERVED:
        raise MalformedPacketError(f"reserved ctrl bits set: {ctrl:#04x}")
    return NocPacket((word >> 64) & WORD_MASK, word & WORD_MASK, ctrl)


def to_bytes(pkt: NocPacket) -> bytes:
    return serialize(pkt).to_bytes(PACKET_BYTES, "big")


def destination(pkt: NocPacket, layout: AddressLayout = DEFAULT_LAYOUT) -> tuple[NodeCoord, int]:
    return decode_address(pkt.dst_addr, layout)
