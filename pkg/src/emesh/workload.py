"""Random scripted workloads whose final memory state has a single answer.

Every source node owns a private slice of offsets.  It stores only into that
slice (on any node, itself included) and lands read replies there too, while
reads target a preloaded region nobody writes.  Stores from one source to one
node all follow the same path on the same plane, so they arrive in program
order; with blocking reads the whole run therefore has one final state,
however the fabric interleaves traffic.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .addrmap import (AddressLayout, DEFAULT_LAYOUT, NodeCoord, decode_address, encode_address,
                      is_local)
from .node import SCRATCHPAD_BYTES, Effect, Op, Scratchpad, Transaction

SHARED_BASE = 0x8000
SIZES = (1, 2, 4, 8)


@dataclass
class Workload:
    width: int
    height: int
    scripts: dict[NodeCoord, list[Transaction]]
    preload: dict[NodeCoord, bytes] = field(default_factory=dict)
    layout: AddressLayout = DEFAULT_LAYOUT

    def nodes(self) -> list[NodeCoord]:
        return [NodeCoord(x, y) for y in range(self.height) for x in range(self.width)]


def shared_image(node: NodeCoord, seed: int) -> bytes:
    rng = random.Random(f"{seed}:{node.x}:{node.y}")
    return rng.randbytes(SCRATCHPAD_BYTES - SHARED_BASE)


def random_workload(seed: int, width: int, height: int, *, sources: int = 4,
                    ops: int = 8, layout: AddressLayout = DEFAULT_LAYOUT) -> Workload:
    rng = random.Random(seed)
    everyone = [NodeCoord(x, y) for y in range(height) for x in range(width)]
    # node (0, 0) doubles as the local alias, so nobody targets it remotely
    targets = [c for c in everyone if c != NodeCoord(0, 0)] or everyone
    srcs = rng.sample(everyone, min(sources, len(everyone)))
    span = SHARED_BASE // len(everyone)
    scripts = {}
    for src in srcs:
        base = everyone.index(src) * span
        script = []
        for _ in range(ops):
            size = rng.choice(SIZES)
            off = base + size * rng.randrange(span // size)
            kind = rng.random()
            if kind < 0.2:
                script.append(Transaction(Op.LOCAL_WRITE, off, rng.getrandbits(8 * size), size))
            elif kind < 0.6:
                dst = rng.choice(targets)
                script.append(Transaction(Op.REMOTE_WRITE, int(encode_address(dst, off, layout)),
                                          rng.getrandbits(8 * size), size))
            elif kind < 0.9:
                dst = rng.choice([t for t in targets if t != src] or targets)
                rd = SHARED_BASE + size * rng.randrange((SCRATCHPAD_BYTES - SHARED_BASE) // size)
                script.append(Transaction(Op.REMOTE_READ, int(encode_address(dst, rd, layout)),
                                          off, size))
            else:
                script.append(Transaction(Op.LOCAL_READ, off, 0, size))
        scripts[src] = script
    preload = {c: shared_image(c, seed) for c in everyone}
    return Workload(width, height, scripts, preload, layout)


def reference_memories(wl: Workload) -> dict[NodeCoord, bytes]:
    """Run every script to completion, one operation at a time, in program order."""
    mem = {c: Scratchpad() for c in wl.nodes()}
    for c, img in wl.preload.items():
        mem[c].load(SHARED_BASE, img)
    for src, script in wl.scripts.items():
        for op in script:
            if op.op in (Op.LOCAL_WRITE, Op.LOCAL_READ):
                target, off = src, op.address
            else:
                target, off = decode_address(op.address, wl.layout)
                if is_local(op.address, src, wl.layout):
                    target = src
            if op.op in (Op.LOCAL_WRITE, Op.REMOTE_WRITE):
                mem[target].write(off, op.size, op.data)
            elif op.op is Op.REMOTE_READ:
                mem[src].write(op.data, op.size, mem[target].read(off, op.size))
    return {c: m.snapshot() for c, m in mem.items()}


def replay_effects(effects: list[Effect], wl: Workload) -> dict[NodeCoord, bytes]:
    """Apply the stores a run actually performed, in the order it performed them."""
    mem = {c: Scratchpad() for c in wl.nodes()}
    for c, img in wl.preload.items():
        mem[c].load(SHARED_BASE, img)
    for e in sorted(effects, key=lambda e: e.seq):
        if e.access == "store":
            mem[e.node].write(e.offset, e.size, e.value)
    return {c: m.snapshot() for c, m in mem.items()}
