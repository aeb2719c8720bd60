import pytest

from emesh.errors import ConfigError
from emesh.metrics import (SpecConfig, StatsReport, cut_capacity, measure_bisection,
                           measure_latency, simulate, spec_metrics, zero_load_latency)
from emesh.node import PatternKind, TrafficPattern
from emesh.noc import Fabric
from emesh.packet import NetworkClass

CM = NetworkClass.CMESH


def test_default_figures():
    assert tuple(spec_metrics()) == (2048, 4096, 32768, 1536, 192)


def test_desk_scale_figures():
    f = spec_metrics(SpecConfig(cores=64))
    assert f[:4] == (128, 256, 2048, 3 * 8 * 2 * 8)
    assert f.bisection_bytes_per_cycle == 384


def test_zero_cores():
    assert tuple(spec_metrics(SpecConfig(cores=0))) == (0, 0, 0, 0, 0)
    with pytest.raises(ConfigError):
        SpecConfig(cores=-1)


def test_cut_capacity_and_zero_load():
    assert cut_capacity(32) == 512 and cut_capacity(16) == 256 and cut_capacity(8) == 128
    assert zero_load_latency(1) == 2.5
    assert zero_load_latency(14) == 22.0
    assert zero_load_latency(14) - zero_load_latency(0) == 14 * 1.5


def test_zero_load_matches_fabric():
    for hops in range(1, 8):
        fab = Fabric(1, 8)
        from emesh.addrmap import NodeCoord, encode_address
        from emesh.packet import make_write
        fab.inject(NodeCoord(0, 0), make_write(encode_address(NodeCoord(hops, 0), 0), 1), CM)
        (d,) = fab.run(100, stop_on_delivery=True)
        assert d.latency / 2 == zero_load_latency(hops)


def test_bisection_8x8_near_capacity():
    rep = measure_bisection(Fabric(8, 8), warmup=500, window=3000)
    assert 0.9 * 128 <= rep.cut_throughput[CM] <= 128
    assert rep.cut_throughput[0] == rep.cut_throughput[2] == 0


def test_bisection_odd_rows_rejected():
    with pytest.raises(ConfigError):
        measure_bisection(Fabric(5, 4))


def test_zero_rate_gives_zero():
    rep = measure_bisection(Fabric(4, 4), rate=0.0, warmup=10, window=100)
    assert rep.cut_throughput == [0.0, 0.0, 0.0] and rep.injected == [0, 0, 0]


def test_latency_sweep_saturates():
    reps = measure_latency(lambda: Fabric(8, 8), PatternKind.UNIFORM_RANDOM,
                           [0.05, 0.2, 0.6, 1.0], warmup=500, window=2000)
    lat = [r.latency_mean[CM] for r in reps]
    thr = [r.throughput[CM] for r in reps]
    assert lat == sorted(lat)
    assert lat[-1] > 2 * lat[0]
    # past saturation the delivered rate levels off
    assert thr[-1] < 1.2 * thr[-2]
    assert [r.label for r in reps] == ["UNIFORM_RANDOM@0.05", "UNIFORM_RANDOM@0.2",
                                       "UNIFORM_RANDOM@0.6", "UNIFORM_RANDOM@1"]
    with pytest.raises(ConfigError):
        measure_latency(lambda: Fabric(2, 2), PatternKind.UNIFORM_RANDOM, [0.0])


@pytest.mark.parametrize("kind", list(PatternKind))
def test_throughput_bounded(kind):
    fab = Fabric(8, 8)
    rep = simulate(fab, TrafficPattern(kind, 1.0, seed=2), [NetworkClass.RMESH, CM, NetworkClass.XMESH],
                   warmup=200, window=1000)
    rep.check()
    for p in range(3):
        assert rep.cut_throughput[p] <= cut_capacity(8)
        # a hub ejects one 8-byte packet per cycle at most
        assert rep.throughput[p] <= 64 * 8
        assert 0 <= rep.link_util_max[p] <= 1.0
    assert sum(rep.throughput) <= 64 * 8
    assert rep.total_violations == 0


def test_report_dict_round_trip():
    rep = simulate(Fabric(4, 4), TrafficPattern(PatternKind.HOTSPOT, 0.3, seed=1), [CM],
                   warmup=50, window=200, drain=500)
    assert rep.drained is True
    again = StatsReport.from_dict(rep.to_dict())
    assert again == rep
    with pytest.raises(ValueError):
        StatsReport.from_dict({**rep.to_dict(), "bogus": 1})
    flat = rep.flat()
    assert flat["chips"] == "1x1" and "throughput_cmesh" in flat and "link_counts" not in flat


def test_simulate_validates_window():
    with pytest.raises(ConfigError):
        simulate(Fabric(2, 2), TrafficPattern(PatternKind.UNIFORM_RANDOM, 0.1), window=0)
