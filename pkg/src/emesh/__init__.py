"""Cycle-level simulator of a three-plane 2D mesh manycore fabric."""

from .addrmap import (DEFAULT_LAYOUT, AddressLayout, ChipGeometry, GlobalAddress, NodeCoord,
                      decode_address, encode_address, is_local, system_capacity)
from .machine import Machine
from .multichip import build_array
from .node import Op, PatternKind, TrafficPattern, Transaction
from .noc import Fabric, Flow, LinkParams, build_fabric
from .packet import NetworkClass, NocPacket, make_read_request, make_write

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_LAYOUT", "AddressLayout", "ChipGeometry", "GlobalAddress", "NodeCoord",
    "decode_address", "encode_address", "is_local", "system_capacity",
    "Machine", "build_array", "Op", "PatternKind", "TrafficPattern", "Transaction",
    "Fabric", "Flow", "LinkParams", "build_fabric",
    "NetworkClass", "NocPacket", "make_read_request", "make_write",
]
