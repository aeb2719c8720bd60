"""Reference model of one five-port mesh switch.

This is the readable, object-level statement of the switch semantics.  The
array kernels in :mod:`emesh._kernels` implement the same rules for whole
meshes at once and are checked against this model tick for tick.

Timing is counted in ticks, two per core clock cycle.  An output port may
issue at most one packet per cycle (every second tick).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, NamedTuple

from .addrmap import NodeCoord
from .errors import ContractError

TICKS_PER_CYCLE = 2
# departure to departure across one link, unloaded: 1.5 cycles
HOP_TICKS = 3
# time a packet spends on a link before it may enter the next input slot
LINK_TICKS = 2
EJECT_TICKS = 2
LINK_CAPACITY = 2


class Direction(enum.IntEnum):
    NORTH = 0
    EAST = 1
    SOUTH = 2
    WEST = 3
    HUB = 4

    @property
    def opposite(self) -> Direction:
        if self is Direction.HUB:
            return self
        return Direction((self + 2) % 4)

    @property
    def is_vertical(self) -> bool:
        return self in (Direction.NORTH, Direction.SOUTH)

    @property
    def delta(self) -> tuple[int, int]:
        # y grows southward, x grows eastward
        return _DELTA[self]


_DELTA = {Direction.NORTH: (0, -1), Direction.EAST: (1, 0), Direction.SOUTH: (0, 1),
          Direction.WEST: (-1, 0), Direction.HUB: (0, 0)}

# fixed cyclic order walked by every round-robin arbiter
ARB_ORDER = (Direction.NORTH, Direction.EAST, Direction.SOUTH, Direction.WEST, Direction.HUB)


def route_decision(here: NodeCoord, dst: NodeCoord) -> Direction:
    """Static dimension-order step: resolve y (north/south) first, then x."""
    if dst.y > here.y:
        return Direction.SOUTH
    if dst.y < here.y:
        return Direction.NORTH
    if dst.x > here.x:
        return Direction.EAST
    if dst.x < here.x:
        return Direction.WEST
    return Direction.HUB


def arbitrate(output: Direction, requesters: Iterable[Direction],
              rr: Direction) -> tuple[Direction, Direction]:
    """Grant the first requester at or after *rr*; return (grant, next pointer)."""
    wanting = set(requesters)
    if not wanting:
        raise ContractError(f"arbitration for {output.name} with no requesters")
    for k in range(len(ARB_ORDER)):
        d = ARB_ORDER[(rr + k) % len(ARB_ORDER)]
        if d in wanting:
            return d, ARB_ORDER[(d + 1) % len(ARB_ORDER)]
    raise AssertionError("unreachable")


class Routed(NamedTuple):
    """A packet together with its destination coordinate."""
    dst: NodeCoord
    packet: Any = None


@dataclass
class RouterState:
    coord: NodeCoord
    slots: dict = field(default_factory=lambda: {d: None for d in Direction})
    routes: dict = field(default_factory=lambda: {d: None for d in Direction})
    rr: dict = field(default_factory=lambda: {d: Direction.NORTH for d in Direction})
    last_send: dict = field(default_factory=lambda: {d: -(1 << 30) for d in Direction})

    def occupancy(self) -> int:
        return sum(p is not None for p in self.slots.values())

    def accept(self, direction: Direction, item: Routed) -> bool:
        """Place *item* in an input slot; False means push-back."""
        if self.slots[direction] is not None:
            return False
        self.slots[direction] = item
        self.routes[direction] = route_decision(self.coord, item.dst)
        return True


class TickResult(NamedTuple):
    offers: dict
    accepted: dict


def router_tick(state: RouterState, tick: int,
                ready: Mapping[Direction, bool],
                arrivals: Mapping[Direction, Routed] | None = None) -> TickResult:
    """Advance one switch by one tick.

    First every output whose downstream is *ready* and whose issue interval
    has elapsed grants one requesting input slot.  Then *arrivals* are taken
    into input slots that are free after forwarding; an arrival that finds
    its slot occupied is refused and must be held upstream.
    """
    before = state.occupancy()
    offers = {}
    for out in ARB_ORDER:
        if not ready.get(out, False):
            continue
        if tick - state.last_send[out] < TICKS_PER_CYCLE:
            continue
        wanting = [d for d in ARB_ORDER
                   if state.slots[d] is not None and state.routes[d] is out]
        if not wanting:
            continue
        grant, state.rr[out] = arbitrate(out, wanting, state.rr[out])
        offers[out] = state.slots[grant]
        state.slots[grant] = None
        state.routes[grant] = None
        state.last_send[out] = tick
    accepted = {}
    for d, item in (arrivals or {}).items():
        accepted[d] = state.accept(d, item)
    taken = sum(accepted.values())
    assert before + taken == len(offers) + state.occupancy(), "router lost or duplicated a packet"
    return TickResult(offers, accepted)
