import math

import pytest

from emesh.addrmap import ChipGeometry, NodeCoord, encode_address
from emesh.errors import ConfigError, ContractError, UnroutableError
from emesh.multichip import (IO_BYTES_PER_CLOCK, SLICES_PER_SIDE, TOTAL_PINS, ChipLink, Endpoint,
                             IoSlice, SliceMode, build_array, chip_slices, global_coord,
                             link_tick, route_offchip)
from emesh.noc import Fabric, LinkParams
from emesh.packet import NetworkClass, make_write
from emesh.router import Direction

E = Endpoint((0, 0), Direction.EAST, 0)
W = Endpoint((1, 0), Direction.WEST, 0)


def w(x, y, data=0):
    return make_write(encode_address(NodeCoord(x, y), 0), data)


def test_slice_accounting():
    sl = chip_slices()
    assert len(sl) == 128
    assert sum(s.pins for s in sl) == TOTAL_PINS == 1024
    assert len(sl) * 1.5 == IO_BYTES_PER_CLOCK == 192
    with pytest.raises(ValueError):
        IoSlice(Direction.HUB, 0)
    with pytest.raises(ValueError):
        IoSlice(Direction.NORTH, SLICES_PER_SIDE)


def test_one_by_one_has_no_links():
    arr = build_array(1, 1, ChipGeometry(4, 4))
    assert arr.links == [] and arr.fabric.n_nodes == 16
    assert len(arr.fabric.io_dst) == 0


def test_two_by_one_full_chips():
    arr = build_array(2, 1)
    assert len(arr.slice_pairs()) == 32
    assert len(arr.links) == 64
    assert set(arr.bundles) == {((0, 0), Direction.EAST), ((1, 0), Direction.WEST)}
    for ln in arr.links:
        # abutting edges only, slice index equals the shared row
        assert abs(ln.src.chip[0] - ln.dst.chip[0]) + abs(ln.src.chip[1] - ln.dst.chip[1]) == 1
        assert ln.src.slice == ln.dst.slice


def test_two_by_two_bundles():
    arr = build_array(2, 2, ChipGeometry(4, 4))
    # four abutting chip pairs, each wired in both directions
    adjacencies = sum(1 for a in range(2) for b in range(2) for c in range(2) for d in range(2)
                      if abs(a - c) + abs(b - d) == 1) // 2
    assert adjacencies == 4
    assert len(arr.bundles) == 2 * adjacencies == 8
    assert len(arr.slice_pairs()) == 4 * 4
    assert arr.io_bytes_per_clock((1, 1)) == 192


def test_build_errors():
    with pytest.raises(ConfigError):
        build_array(0, 1)
    with pytest.raises(ConfigError):
        build_array(2, 1, ChipGeometry(33, 4))


def run_link(link, clocks, ready=lambda c: True):
    out = []
    for c in range(clocks):
        for p in link_tick(link, ready(c)):
            out.append((c, p))
    return out


def test_credit_arithmetic_twelve_clocks():
    assert math.ceil(17 / 1.5) == 12
    ln = ChipLink(E, W, depth=1000)
    for i in range(50):
        ln.offer(i)
    out = run_link(ln, 600)
    gaps = {b[0] - a[0] for a, b in zip(out, out[1:])}
    assert gaps == {12}
    assert [p for _, p in out] == list(range(50))


def test_empty_link_credit_capped():
    ln = ChipLink(E, W)
    run_link(ln, 1000)
    assert ln.credit == 17.0
    ln.offer("a")
    ln.offer("b")
    out = run_link(ln, 13)
    assert [(c, p) for c, p in out] == [(0, "a"), (12, "b")]


def test_pushback_and_conservation():
    ln = ChipLink(E, W, depth=3)
    assert all(ln.offer(i) for i in range(3))
    assert not ln.offer(99)
    out = run_link(ln, 200, ready=lambda c: c > 100)
    assert [p for _, p in out] == [0, 1, 2]
    assert out[0][0] == 101


def test_clock_ratio_spreads_io_clocks():
    ln = ChipLink(E, W, clock_ratio=0.5)
    assert sum(ln.clocks_in_cycle(c) for c in range(100)) == 50
    ln = ChipLink(E, W, clock_ratio=2.0)
    assert [ln.clocks_in_cycle(c) for c in range(3)] == [2, 2, 2]
    with pytest.raises(ValueError):
        ChipLink(E, W, payload_rate=0)


def test_fabric_channel_paces_packets():
    fab = Fabric(1, 1, chips=(2, 1))
    assert len(fab.io_dst) == 2
    sent = 0
    got = []
    for t in range(4000):
        if t % 2 == 0 and sent < 40 and fab.inject(NodeCoord(0, 0), w(1, 0, sent), NetworkClass.XMESH):
            sent += 1
        got.extend(fab.step())
    ticks = [d.tick for d in got]
    assert [d.packet.payload for d in got] == list(range(40))
    gaps = {b - a for a, b in zip(ticks, ticks[1:])}
    assert gaps == {24}


def test_fabric_channel_faster_clock():
    fab = Fabric(1, 1, chips=(2, 1), link=LinkParams(payload_rate=17.0))
    for i in range(10):
        while not fab.inject(NodeCoord(0, 0), w(1, 0, i), NetworkClass.XMESH):
            fab.run(1)
    out = []
    for _ in range(400):
        out.extend(fab.step())
    gaps = {b.tick - a.tick for a, b in zip(out, out[1:])}
    assert gaps == {2}


def test_channel_shared_by_planes_keeps_fifo():
    fab = Fabric(2, 2, chips=(2, 1), check=True)
    got = []
    for i in range(30):
        p = NetworkClass(i % 3)
        while not fab.inject(NodeCoord(1, 0), w(2, 0, i), p):
            got.extend(fab.step())
        got.extend(fab.step())
    while fab.in_flight():
        got.extend(fab.step())
    for p in NetworkClass:
        seq = [d.packet.payload for d in got if d.plane is p]
        assert seq == sorted(seq) and len(seq) == 10
    assert fab.violations["conservation"] == 0


def test_route_offchip_examples():
    arr21 = build_array(2, 1, ChipGeometry(4, 4))
    assert route_offchip((0, 0), w(5, 1), arr21) is Direction.EAST
    assert route_offchip((1, 0), w(1, 1), arr21) is Direction.WEST
    arr22 = build_array(2, 2, ChipGeometry(4, 4))
    assert route_offchip((0, 0), w(5, 5), arr22) is Direction.SOUTH
    assert route_offchip((1, 1), w(5, 1), arr22) is Direction.NORTH
    with pytest.raises(UnroutableError):
        route_offchip((0, 0), w(21, 1), arr22)
    with pytest.raises(ContractError):
        route_offchip((0, 0), w(1, 1), arr22)


def test_global_coord():
    assert global_coord((1, 1), NodeCoord(2, 3), ChipGeometry(4, 4)) == NodeCoord(6, 7)


def test_gpio_mode_inert():
    sl = chip_slices(SliceMode.GPIO)
    assert all(s.mode is SliceMode.GPIO for s in sl)
