"""Analytic throughput figures and their measured counterparts."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernels as K
from .errors import ConfigError
from .noc import N_PLANES, Fabric
from .node import PatternKind, TrafficPattern
from .packet import NetworkClass
from .router import TICKS_PER_CYCLE

PLANE_NAMES = tuple(p.name.lower() for p in NetworkClass)


@dataclass(frozen=True)
class SpecConfig:
    """Per-core accounting constants of the architecture.

    ``cols`` defaults to the side of a square mesh of ``cores``; ``io_links``
    defaults to a full chip's 128 links (none when there are no cores).
    """
    cores: int = 1024
    dp_flops_per_core_cycle: int = 2
    sp_flops_per_core_cycle: int = 4
    bytes_per_core_cycle: int = 32
    planes: int = 3
    link_payload_bytes: int = 8
    cols: int | None = None
    io_links: int | None = None
    io_link_payload: float = 1.5

    def __post_init__(self):
        if self.cores < 0:
            raise ConfigError("cores must be non-negative")

    @property
    def cut_links(self) -> int:
        return self.cols if self.cols is not None else math.isqrt(self.cores)

    @property
    def links(self) -> int:
        if self.io_links is not None:
            return self.io_links
        return 128 if self.cores else 0


class SpecFigures(NamedTuple):
    dp_flops_per_cycle: int
    sp_flops_per_cycle: int
    memory_bytes_per_cycle: int
    bisection_bytes_per_cycle: int
    io_bytes_per_io_clock: float


def spec_metrics(cfg: SpecConfig = SpecConfig()) -> SpecFigures:
    return SpecFigures(
        cfg.cores * cfg.dp_flops_per_core_cycle,
        cfg.cores * cfg.sp_flops_per_core_cycle,
        cfg.cores * cfg.bytes_per_core_cycle,
        cfg.planes * cfg.cut_links * 2 * cfg.link_payload_bytes,
        cfg.links * cfg.io_link_payload,
    )


def cut_capacity(cols: int, link_payload: int = 8) -> int:
    """Bytes per cycle one plane can move across the horizontal mid-cut."""
    return cols * 2 * link_payload


def zero_load_latency(hops: int) -> float:
    """Cycles from injection to ejection for a lone packet."""
    return (hops * K.LINK_TICKS + hops + K.EJECT_TICKS) / TICKS_PER_CYCLE


@dataclass
class StatsReport:
    """Counters from one measured run; per-plane lists follow rmesh, cmesh, xmesh."""
    label: str
    rows: int
    cols: int
    chips: list[int]
    pattern: str
    rate: float
    seed: int
    warmup: int
    window: int
    injected: list[int]
    delivered: list[int]
    window_injected: list[int]
    window_delivered: list[int]
    throughput: list[float]
    cut_throughput: list[float]
    latency_min: list[float | None]
    latency_mean: list[float | None]
    latency_p99: list[float | None]
    latency_max: list[float | None]
    link_util_mean: list[float]
    link_util_max: list[float]
    violations: dict[str, int]
    drained: bool | None = None
    link_counts: list[list[list[int]]] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> StatsReport:
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown report fields: {sorted(unknown)}")
        return cls(**d)

    def flat(self) -> dict:
        """One CSV row: scalars plus one column per plane for every list."""
        row = {}
        for k, v in self.to_dict().items():
            if k == "link_counts":
                continue
            if k == "chips":
                row[k] = f"{v[0]}x{v[1]}"
            elif isinstance(v, list):
                for name, x in zip(PLANE_NAMES, v):
                    row[f"{k}_{name}"] = x
            elif isinstance(v, dict):
                for name, x in v.items():
                    row[f"{k}_{name}"] = x
            else:
                row[k] = v
        return row

    @property
    def total_violations(self) -> int:
        return sum(self.violations.values())

    def check(self):
        """Internal consistency of the counters."""
        for p in range(N_PLANES):
            assert 0 <= self.delivered[p] <= self.injected[p]
            assert 0 <= self.window_delivered[p]
            assert self.throughput[p] >= 0 and self.cut_throughput[p] >= 0


def _percentile(hist: np.ndarray, q: float) -> int | None:
    n = int(hist.sum())
    if n == 0:
        return None
    rank = math.ceil(q * n)
    return int(np.searchsorted(np.cumsum(hist), rank))


def _cycles(ticks) -> float | None:
    return None if ticks is None else ticks / TICKS_PER_CYCLE


def collect(fab: Fabric, *, label: str = "", pattern: str = "", rate: float = 0.0,
            seed: int = 0, warmup: int = 0, window: int = 0,
            drained: bool | None = None) -> StatsReport:
    """Summarize a fabric whose measurement window has closed."""
    cnt = fab.cnt
    cyc = max(window, 1)
    lat_min, lat_mean, lat_p99, lat_max = [], [], [], []
    for p in range(N_PLANES):
        n = int(cnt[p, K.C_LATN])
        lat_min.append(_cycles(int(cnt[p, K.C_LATMIN])) if n else None)
        lat_mean.append(round(int(cnt[p, K.C_LATSUM]) / n / TICKS_PER_CYCLE, 6) if n else None)
        lat_p99.append(_cycles(_percentile(fab.hist[p], 0.99)))
        lat_max.append(_cycles(int(cnt[p, K.C_LATMAX])) if n else None)
    # each mesh output can carry one packet per cycle
    links = fab.link_use[:, :, :4].astype(np.int64)
    exists = fab.nbr >= 0
    util_mean, util_max = [], []
    for p in range(N_PLANES):
        used = links[p][exists]
        util_mean.append(round(float(used.mean()) / cyc, 6) if used.size else 0.0)
        util_max.append(round(float(used.max()) / cyc, 6) if used.size else 0.0)
    return StatsReport(
        label=label, rows=fab.rows, cols=fab.cols, chips=list(fab.chips), pattern=pattern,
        rate=rate, seed=seed, warmup=warmup, window=window,
        injected=[int(x) for x in cnt[:, K.C_INJ]],
        delivered=[int(x) for x in cnt[:, K.C_DEL]],
        window_injected=[int(x) for x in cnt[:, K.C_WINJ]],
        window_delivered=[int(x) for x in cnt[:, K.C_WDEL]],
        throughput=[round(int(x) / cyc, 6) for x in cnt[:, K.C_WBYTES]],
        cut_throughput=[round(int(x) / cyc, 6) for x in cnt[:, K.C_WCUT]],
        latency_min=lat_min, latency_mean=lat_mean, latency_p99=lat_p99, latency_max=lat_max,
        link_util_mean=util_mean, link_util_max=util_max,
        violations=fab.violations, drained=drained,
        link_counts=links.tolist(),
    )


def simulate(fab: Fabric, pattern: TrafficPattern, planes: Sequence[NetworkClass] | None = None,
             *, warmup: int = 2000, window: int = 10_000, drain: int = 0,
             label: str = "") -> StatsReport:
    """Run *pattern* for warmup + window cycles, optionally draining afterwards."""
    if warmup < 0 or window < 1:
        raise ConfigError("warmup must be >= 0 and window >= 1 cycles")
    start = fab.tick
    w0 = start + warmup * TICKS_PER_CYCLE
    w1 = w0 + window * TICKS_PER_CYCLE
    fab.set_traffic(pattern, planes)
    fab.set_window(w0, w1)
    fab.run(w1 - start)
    drained = None
    if drain:
        fab.stop_traffic()
        drained = fab.run_until_idle(drain * TICKS_PER_CYCLE)
    return collect(fab, label=label, pattern=pattern.kind.name, rate=pattern.rate,
                   seed=pattern.seed, warmup=warmup, window=window, drained=drained)


def measure_bisection(fab: Fabric, pattern: PatternKind = PatternKind.MIRROR_HALVES, *,
                      warmup: int = 2000, window: int = 10_000,
                      planes: Sequence[NetworkClass] = (NetworkClass.CMESH,),
                      rate: float = 1.0, seed: int = 0, label: str = "bisection") -> StatsReport:
    """Payload bytes per cycle crossing the horizontal mid-cut, per plane."""
    if fab.height % 2:
        raise ConfigError(f"bisection needs an even number of rows, got {fab.height}")
    return simulate(fab, TrafficPattern(pattern, rate, seed=seed), list(planes),
                    warmup=warmup, window=window, label=label)


def measure_latency(make_fabric, pattern: PatternKind, rates: Sequence[float], *,
                    warmup: int = 2000, window: int = 10_000, seed: int = 0,
                    planes: Sequence[NetworkClass] | None = (NetworkClass.CMESH,)) -> list[StatsReport]:
    """One report per offered rate, each on a fresh fabric from *make_fabric*."""
    out = []
    for r in rates:
        if not 0.0 < r <= 1.0:
            raise ConfigError(f"offered rate {r} outside (0, 1]")
        fab = make_fabric()
        out.append(simulate(fab, TrafficPattern(pattern, r, seed=seed), planes,
                            warmup=warmup, window=window, label=f"{pattern.name}@{r:g}"))
    return out
