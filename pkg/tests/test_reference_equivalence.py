"""The compiled fabric against the router-by-router reference mesh."""

import random

import pytest
from hypothesis import given, settings, strategies as st

from emesh.addrmap import NodeCoord, encode_address
from emesh.noc import Fabric
from emesh.packet import NetworkClass, make_write
from refmesh import RefMesh


def drive(rows, cols, seed, ticks, rate, toggle_accept=False):
    rng = random.Random(seed)
    fab = Fabric(rows, cols)
    ref = RefMesh(rows, cols)
    nodes = ref.nodes
    serial = 0
    delivered = 0
    for t in range(ticks):
        assert fab.tick == ref.t == t
        if t < ticks - 400:
            for c in nodes:
                if rng.random() >= rate:
                    continue
                d = rng.choice(nodes)
                plane = rng.randrange(3)
                serial += 1
                pkt = make_write(encode_address(d, 8 * (serial % 4096)), serial)
                a = fab.inject(c, pkt, NetworkClass(plane))
                b = ref.inject(c, plane, pkt)
                assert a == b, f"injection acceptance differs at tick {t}"
        if toggle_accept and t % 7 == 0 and t < ticks - 300:
            c, plane, on = rng.choice(nodes), rng.randrange(3), rng.random() < 0.6
            fab.set_accept(NetworkClass(plane), c, on)
            ref.accepting[plane][c] = on
        if t == ticks - 300:
            for p in range(3):
                for c in nodes:
                    fab.set_accept(NetworkClass(p), c, True)
                    ref.accepting[p][c] = True
        got = sorted((d.tick, d.node, int(d.plane), d.packet.payload, d.injected) for d in fab.step())
        want = sorted((t_, (c.x, c.y, 0), p, pkt.payload, t0) for t_, c, p, pkt, t0 in ref.step())
        assert [(a, tuple(n), *rest) for a, n, *rest in got] == want, f"tick {t}"
        delivered += len(got)
    assert fab.in_flight() == 0
    return delivered


@pytest.mark.parametrize("rows,cols,rate", [(4, 4, 0.2), (3, 5, 0.6), (1, 6, 0.5), (6, 1, 0.9)])
def test_matches_reference(rows, cols, rate):
    assert drive(rows, cols, seed=rows * 31 + cols, ticks=1200, rate=rate) > 0


def test_matches_reference_with_backpressure():
    assert drive(4, 4, seed=9, ticks=1500, rate=0.5, toggle_accept=True) > 0


@settings(max_examples=15)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2 ** 32), st.floats(0.05, 1.0))
def test_matches_reference_random(rows, cols, seed, rate):
    drive(rows, cols, seed, ticks=600, rate=rate)


def test_router_snapshot_matches_slots():
    fab = Fabric(4, 4)
    pkt = make_write(encode_address(NodeCoord(3, 3), 0), 1)
    assert fab.inject(NodeCoord(0, 0), pkt, NetworkClass.CMESH)
    st_ = fab.router_state(NetworkClass.CMESH, NodeCoord(0, 0))
    assert st_.occupancy() == 1
    from emesh.router import Direction
    assert st_.routes[Direction.HUB] is Direction.SOUTH
