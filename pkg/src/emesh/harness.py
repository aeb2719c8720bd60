"""Experiment orchestration: one validated config in, one deterministic result out."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Callable, Sequence

from .addrmap import ChipGeometry, NodeCoord
from .config import RunConfig
from .errors import ConfigError
from .machine import Machine
from .metrics import (PLANE_NAMES, SpecConfig, collect, cut_capacity, measure_bisection,
                      measure_latency, simulate, spec_metrics)
from .multichip import build_array
from .noc import Fabric, LinkParams
from .node import PatternKind, Transaction, TrafficPattern
from .ordering import pair_name, run_table
from .packet import NetworkClass
from .report import RunResult
from .workload import SHARED_BASE, random_workload, reference_memories, replay_effects

SPEC_UNITS = (
    ("dp_flops", "FLOPs/cycle"),
    ("sp_flops", "FLOPs/cycle"),
    ("memory_bandwidth", "bytes/cycle"),
    ("bisection_bandwidth", "bytes/cycle"),
    ("io_bandwidth", "bytes/IO clock"),
)


def make_fabric(cfg: RunConfig, *, trace: bool | None = None) -> Fabric:
    link = LinkParams(**cfg.link)
    kw = dict(inject_depth=cfg.planes["inject_depth"], link=link, check=cfg.check,
              trace=cfg.trace if trace is None else trace)
    rows, cols = cfg.mesh["rows"], cfg.mesh["cols"]
    if cfg.chips["x"] > 1 or cfg.chips["y"] > 1:
        return build_array(cfg.chips["x"], cfg.chips["y"], ChipGeometry(rows, cols),
                           cfg.address_layout, link, **{k: v for k, v in kw.items() if k != "link"}
                           ).fabric
    return Fabric(rows, cols, cfg.address_layout, **kw)


def _pattern(cfg: RunConfig, kind: str | None = None, rate: float | None = None) -> TrafficPattern:
    t = cfg.traffic
    hot = NodeCoord(*t["hotspot"]) if t["hotspot"] is not None else None
    return TrafficPattern(PatternKind[(kind or t["pattern"]).upper()],
                          t["rate"] if rate is None else rate, t["size"], cfg.seed, hot,
                          t["hotspot_fraction"])


def _status(measurements) -> str:
    return "FAIL" if any(m.total_violations or m.drained is False for m in measurements) else "PASS"


def _run_specs(cfg, res):
    figs = spec_metrics(SpecConfig(**cfg.spec))
    for (name, unit), v in zip(SPEC_UNITS, figs):
        res.rows.append({"metric": name, "value": v, "unit": unit})


def _run_traffic(cfg, res, trace):
    fab = make_fabric(cfg, trace=trace)
    m = simulate(fab, _pattern(cfg), cfg.traffic_planes, warmup=cfg.warmup, window=cfg.window,
                 drain=cfg.drain, label=cfg.name)
    res.measurements.append(m)
    res.trace = [r.line() for r in fab.take_trace()]
    res.status = _status(res.measurements)


def _run_bisection(cfg, res, trace):
    fab = make_fabric(cfg, trace=trace)
    planes = cfg.traffic_planes or [NetworkClass.CMESH]
    m = measure_bisection(fab, PatternKind[cfg.traffic["pattern"]], warmup=cfg.warmup,
                          window=cfg.window, planes=planes, rate=cfg.traffic["rate"],
                          seed=cfg.seed, label=cfg.name)
    res.measurements.append(m)
    res.trace = [r.line() for r in fab.take_trace()]
    cap = cut_capacity(fab.width)
    res.status = _status(res.measurements)
    for p in sorted(int(x) for x in planes):
        got = m.cut_throughput[p]
        res.rows.append({"plane": PLANE_NAMES[p], "cut_bytes_per_cycle": got,
                         "capacity": cap, "fraction": round(got / cap, 6)})
        if got > cap:
            res.status = "FAIL"
            res.notes.append(f"{PLANE_NAMES[p]} cut throughput {got} exceeds capacity {cap}")


def _run_sweep(cfg, res, rates):
    rates = list(rates if rates is not None else cfg.sweep["rates"])
    kind = cfg.sweep["pattern"] or cfg.traffic["pattern"]
    reps = measure_latency(lambda: make_fabric(cfg, trace=False), PatternKind[kind.upper()],
                           rates, warmup=cfg.warmup, window=cfg.window, seed=cfg.seed,
                           planes=cfg.traffic_planes or [NetworkClass.CMESH])
    res.measurements.extend(reps)
    res.status = _status(reps)


def _run_litmus(cfg, res, trials, progress):
    n = trials if trials is not None else cfg.litmus["trials"]
    table = run_table(n, cfg.seed, cfg.litmus["adversarial_trials"], progress=progress)
    for r in table.rows:
        o = r.observed
        res.rows.append({"pair": pair_name(r.pair), "deterministic": r.deterministic,
                         "trials": o.trials, "preserved": o.preserved, "reversed": o.reversed,
                         "concurrent": o.concurrent, "value_anomalies": o.value_anomalies,
                         "status": r.status, "scenarios": " ".join(r.scenarios)})
    res.status = table.status


def _num(v):
    return int(v, 0) if isinstance(v, str) else int(v)


def load_scripts(cfg: RunConfig) -> tuple[dict, list]:
    """Scripts and preloads from the config, read and checked up front."""
    scripts, preload = {}, []
    for i, entry in enumerate(cfg.scripts["nodes"] or []):
        where = f"scripts.nodes[{i}]"
        if not isinstance(entry, dict) or "node" not in entry:
            raise ConfigError(f"{where} must be an object with a 'node' key")
        extra = set(entry) - {"node", "ops", "path"}
        if extra:
            raise ConfigError(f"{where}: unknown keys {sorted(extra)}")
        ops = entry.get("ops")
        if "path" in entry:
            p = cfg.resolve(entry["path"])
            try:
                ops = json.loads(p.read_text())
            except OSError as exc:
                raise ConfigError(f"{where}: cannot read {p}: {exc.strerror}") from None
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{p}: invalid JSON: {exc.msg}", exc.lineno) from None
        if not isinstance(ops, list):
            raise ConfigError(f"{where} needs an 'ops' list or a 'path' to one")
        try:
            node = NodeCoord(*entry["node"])
            scripts[node] = [Transaction.from_dict(o) for o in ops]
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"{where}: bad transaction: {exc}") from None
    for i, entry in enumerate(cfg.scripts["preload"] or []):
        try:
            preload.append((NodeCoord(*entry["node"]), _num(entry["offset"]),
                            bytes.fromhex(entry["hex"])))
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"scripts.preload[{i}]: {exc}") from None
    return scripts, preload


def _run_scripts(cfg, res, trace):
    scripts, preload = load_scripts(cfg)
    w, h = cfg.mesh["cols"] * cfg.chips["x"], cfg.mesh["rows"] * cfg.chips["y"]
    for node in [*scripts, *(p[0] for p in preload)]:
        if not (0 <= node.x < w and 0 <= node.y < h and node.z == 0):
            raise ConfigError(f"scripts: node {tuple(node)} is not on the {w}x{h} mesh")
    fab = make_fabric(cfg, trace=trace)
    fab.set_window(0, 1 << 62)
    m = Machine(fab)
    for node, off, data in preload:
        m.preload(node, off, data)
    m.load_scripts(scripts)
    cycles = m.run(cfg.scripts["max_cycles"])
    done = m.quiescent()
    res.measurements.append(collect(fab, label=cfg.name, pattern="SCRIPTS", seed=cfg.seed,
                                    window=max(fab.cycle, 1)))
    for node in sorted(scripts, key=lambda c: (c.y, c.x)):
        for r in m.node(node).results:
            res.rows.append({"node": f"{node.x},{node.y}", "index": r.index, "op": r.op.value,
                             "issued_tick": r.issued, "completed_tick": r.completed,
                             "value": r.value})
    stats = m.stats()
    res.notes.append(f"cycles={cycles} quiescent={done} " +
                     " ".join(f"{k}={v}" for k, v in stats.items()))
    res.trace = [r.line() for r in fab.take_trace()]
    bad = res.measurements[0].total_violations or stats["budget_violations"] or stats["bank_violations"]
    res.status = "FAIL" if bad or not done else "PASS"


def run_workload(wl, fab: Fabric, max_cycles: int = 200_000) -> Machine:
    m = Machine(fab)
    for c, img in wl.preload.items():
        m.preload(c, SHARED_BASE, img)
    m.load_scripts(wl.scripts)
    m.run(max_cycles)
    return m


def memory_check(seed: int, rows: int, cols: int, chips: tuple[int, int], *,
                 sources: int = 4, ops: int = 8, compare_flat: bool = True,
                 link: LinkParams = LinkParams()) -> dict:
    """One random workload: run it, then compare against the references."""
    w, h = cols * chips[0], rows * chips[1]
    wl = random_workload(seed, w, h, sources=sources, ops=ops)
    if chips != (1, 1):
        fab = build_array(chips[0], chips[1], ChipGeometry(rows, cols), link=link).fabric
    else:
        fab = Fabric(rows, cols, link=link)
    m = run_workload(wl, fab)
    mem = m.memories()
    ref = reference_memories(wl)
    out = {"seed": seed, "quiescent": m.quiescent(),
           "reference_match": all(mem.get(c) == ref[c] for c in ref),
           "replay_match": replay_effects(m.log, wl) == {c: mem[c] for c in ref},
           "violations": sum(fab.violations.values())}
    if compare_flat and chips != (1, 1):
        flat = run_workload(wl, Fabric(h, w, link=link))
        fm = flat.memories()
        same_results = all(
            [(r.index, r.op, r.value) for r in m.node(c).results]
            == [(r.index, r.op, r.value) for r in flat.node(c).results] for c in wl.scripts)
        out["flat_match"] = fm == mem and same_results
    return out


def _run_memcheck(cfg, res):
    mc = cfg.memcheck
    chips = (cfg.chips["x"], cfg.chips["y"])
    link = LinkParams(**cfg.link)
    fails = {"reference": 0, "replay": 0, "flat": 0, "incomplete": 0, "violations": 0}
    for k in range(mc["workloads"]):
        r = memory_check(cfg.seed * 1_000_003 + k, cfg.mesh["rows"], cfg.mesh["cols"], chips,
                         sources=mc["sources"], ops=mc["ops"], compare_flat=mc["compare_flat"],
                         link=link)
        fails["reference"] += not r["reference_match"]
        fails["replay"] += not r["replay_match"]
        fails["flat"] += not r.get("flat_match", True)
        fails["incomplete"] += not r["quiescent"]
        fails["violations"] += r["violations"]
    res.rows.append({"workloads": mc["workloads"], **{f"{k}_failures": v for k, v in fails.items()}})
    res.status = "FAIL" if any(fails.values()) else "PASS"


def run_experiment(cfg: RunConfig, *, trace: bool | None = None, trials: int | None = None,
                   rates: Sequence[float] | None = None,
                   progress: Callable | None = None) -> RunResult:
    res = RunResult(cfg.name, cfg.mode, cfg.seed)
    mode = "sweep" if rates is not None and cfg.mode in ("traffic", "sweep") else cfg.mode
    res.mode = mode
    if mode == "specs":
        _run_specs(cfg, res)
    elif mode == "traffic":
        _run_traffic(cfg, res, trace)
    elif mode == "bisection":
        _run_bisection(cfg, res, trace)
    elif mode == "sweep":
        _run_sweep(cfg, res, rates)
    elif mode == "litmus":
        _run_litmus(cfg, res, trials, progress)
    elif mode == "scripts":
        _run_scripts(cfg, res, trace)
    elif mode == "memcheck":
        _run_memcheck(cfg, res)
    else:
        raise ConfigError(f"unknown mode {mode!r}")
    for m in res.measurements:
        m.check()
    return res


def figures_for(res: RunResult, out_dir: Path, stem: str) -> list[Path]:
    """Render the figures that suit *res* into *out_dir*."""
    from . import plotting
    out = []
    if res.mode == "sweep" and res.measurements:
        out.append(plotting.load_curves(res.measurements, out_dir / f"{stem}_load.png"))
    elif res.mode in ("traffic", "bisection"):
        for m in res.measurements:
            for p in range(3):
                if m.injected[p]:
                    out.append(plotting.link_heatmap(m, out_dir / f"{stem}_{PLANE_NAMES[p]}_links.png", p))
    elif res.mode == "litmus" and res.rows:
        out.append(plotting.reorder_bars(res.rows, out_dir / f"{stem}_reorders.png"))
    return out
