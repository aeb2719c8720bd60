"""Run configuration: JSON documents validated before any simulation state exists."""

from __future__ import annotations

import json
import json.decoder
import json.scanner
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .addrmap import AddressLayout
from .errors import ConfigError
from .node import PatternKind
from .packet import NetworkClass

MODES = ("specs", "traffic", "bisection", "sweep", "litmus", "scripts", "memcheck")
SEED_ENV = "EMESH_SEED"


class _Obj(dict):
    """A parsed JSON object that remembers the line of each of its keys."""
    line: int = 1
    key_lines: dict

    def line_of(self, key) -> int:
        return self.key_lines.get(key, self.line)


def _line(s: str, pos: int) -> int:
    return s.count("\n", 0, pos) + 1


def _parse_object(s_and_end, strict, scan_once, object_hook, object_pairs_hook,
                  memo=None, _w=json.decoder.WHITESPACE.match):
    s, end = s_and_end
    pairs, new_end = json.decoder.JSONObject(s_and_end, strict, scan_once, None,
                                             lambda kv: kv, memo, _w)
    obj = _Obj()
    obj.line = _line(s, end - 1)
    obj.key_lines = {}
    pos = end
    for k, v in pairs:
        at = s.find(json.dumps(k), pos, new_end)
        if at < 0:
            at = pos
        if k in obj:
            raise ConfigError(f"duplicate key {k!r}", _line(s, at))
        obj[k] = v
        obj.key_lines[k] = _line(s, at)
        pos = at + 1
    return obj, new_end


def parse_json(text: str) -> Any:
    dec = json.JSONDecoder()
    dec.parse_object = _parse_object
    dec.scan_once = json.scanner.py_make_scanner(dec)
    try:
        return dec.decode(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno) from None


# schema: key -> (accepted types, default)

_INT, _NUM, _BOOL, _STR = (int,), (int, float), (bool,), (str,)

SCHEMA: dict[str, dict[str, tuple]] = {
    "": {
        "name": (_STR, "run"), "mode": (_STR, "traffic"), "seed": (_INT, 0),
        "mesh": (dict, None), "chips": (dict, None), "layout": (dict, None),
        "traffic": (dict, None), "planes": (dict, None), "link": (dict, None),
        "warmup": (_INT, 2000), "window": (_INT, 10_000), "drain": (_INT, 0),
        "check": (_BOOL, False), "trace": (_BOOL, False),
        "litmus": (dict, None), "sweep": (dict, None), "spec": (dict, None),
        "scripts": (dict, None), "memcheck": (dict, None), "output": (dict, None),
    },
    "mesh": {"rows": (_INT, 16), "cols": (_INT, 16)},
    "chips": {"x": (_INT, 1), "y": (_INT, 1)},
    "layout": {"x_bits": (_INT, 15), "y_bits": (_INT, 15), "z_bits": (_INT, 0),
               "local_alias": (_BOOL, True)},
    "traffic": {"pattern": (_STR, "UNIFORM_RANDOM"), "rate": (_NUM, 0.1), "size": (_INT, 8),
                "planes": (list, None), "hotspot": (list, None),
                "hotspot_fraction": (_NUM, 0.25)},
    "planes": {"inject_depth": (_INT, 4)},
    "link": {"payload_rate": (_NUM, 1.5), "clock_ratio": (_NUM, 1.0), "queue_depth": (_INT, 4)},
    "litmus": {"trials": (_INT, 10_000), "adversarial_trials": (_INT, 200)},
    "sweep": {"rates": (list, None), "pattern": (_STR, None)},
    "spec": {"cores": (_INT, 1024), "dp_flops_per_core_cycle": (_INT, 2),
             "sp_flops_per_core_cycle": (_INT, 4), "bytes_per_core_cycle": (_INT, 32),
             "planes": (_INT, 3), "link_payload_bytes": (_INT, 8), "cols": (_INT, None),
             "io_links": (_INT, None), "io_link_payload": (_NUM, 1.5)},
    "scripts": {"nodes": (list, None), "max_cycles": (_INT, 100_000), "preload": (list, None)},
    "memcheck": {"workloads": (_INT, 100), "sources": (_INT, 4), "ops": (_INT, 8),
                 "compare_flat": (_BOOL, True)},
    "output": {"report": (_STR, None), "trace": (_STR, None)},
}


def _typecheck(value, types, where: str, line: int):
    if types is dict:
        ok = isinstance(value, dict)
    elif types is list:
        ok = isinstance(value, list)
    else:
        ok = isinstance(value, types) and not (bool not in types and isinstance(value, bool))
    if not ok:
        want = types.__name__ if isinstance(types, type) else "/".join(t.__name__ for t in types)
        raise ConfigError(f"{where} must be {want}, got {type(value).__name__}", line)


def _section(obj: _Obj, name: str) -> dict:
    schema = SCHEMA[name]
    out = {}
    for k in obj:
        if k not in schema:
            where = f"{name}.{k}" if name else k
            raise ConfigError(f"unknown key {where!r}", obj.line_of(k))
    for k, (types, default) in schema.items():
        if k in obj:
            where = f"{name}.{k}" if name else k
            _typecheck(obj[k], types, where, obj.line_of(k))
            out[k] = obj[k]
        elif types not in (dict,):
            out[k] = default
    return out


@dataclass
class RunConfig:
    name: str = "run"
    mode: str = "traffic"
    seed: int = 0
    mesh: dict = field(default_factory=lambda: _defaults("mesh"))
    chips: dict = field(default_factory=lambda: _defaults("chips"))
    layout: dict = field(default_factory=lambda: _defaults("layout"))
    traffic: dict = field(default_factory=lambda: _defaults("traffic"))
    planes: dict = field(default_factory=lambda: _defaults("planes"))
    link: dict = field(default_factory=lambda: _defaults("link"))
    warmup: int = 2000
    window: int = 10_000
    drain: int = 0
    check: bool = False
    trace: bool = False
    litmus: dict = field(default_factory=lambda: _defaults("litmus"))
    sweep: dict = field(default_factory=lambda: _defaults("sweep"))
    spec: dict = field(default_factory=lambda: _defaults("spec"))
    scripts: dict = field(default_factory=lambda: _defaults("scripts"))
    memcheck: dict = field(default_factory=lambda: _defaults("memcheck"))
    output: dict = field(default_factory=lambda: _defaults("output"))
    base_dir: Path = field(default=Path("."), repr=False)

    @property
    def address_layout(self) -> AddressLayout:
        return AddressLayout(**self.layout)

    @property
    def traffic_planes(self) -> list[NetworkClass] | None:
        names = self.traffic.get("planes")
        return None if names is None else [NetworkClass.parse(n) for n in names]

    def resolve(self, p: str | None) -> Path | None:
        if p is None:
            return None
        q = Path(p)
        return q if q.is_absolute() else self.base_dir / q


def _defaults(name: str) -> dict:
    return {k: d for k, (_, d) in SCHEMA[name].items()}


def _check_ranges(cfg: RunConfig, root: _Obj):
    def fail(msg, section, key=None):
        obj = root.get(section) if section in root else root
        line = obj.line_of(key) if isinstance(obj, _Obj) and key else root.line_of(section)
        raise ConfigError(msg, line)

    if cfg.mode not in MODES:
        fail(f"mode must be one of {', '.join(MODES)}, got {cfg.mode!r}", "mode")
    if cfg.mesh["rows"] < 1 or cfg.mesh["cols"] < 1:
        fail("mesh dimensions must be >= 1", "mesh", "rows")
    if cfg.chips["x"] < 1 or cfg.chips["y"] < 1:
        fail("chip array dimensions must be >= 1", "chips", "x")
    if (cfg.chips["x"] > 1 or cfg.chips["y"] > 1) and max(cfg.mesh["rows"], cfg.mesh["cols"]) > 32:
        fail("chips with more than 32 rows or columns cannot be linked", "mesh", "rows")
    try:
        cfg.address_layout
    except ValueError as exc:
        fail(str(exc), "layout", "x_bits")
    t = cfg.traffic
    if t["pattern"].upper() not in PatternKind.__members__:
        fail(f"unknown traffic pattern {t['pattern']!r}", "traffic", "pattern")
    if not 0.0 <= t["rate"] <= 1.0:
        fail(f"traffic.rate must be within [0, 1], got {t['rate']}", "traffic", "rate")
    if t["size"] not in (1, 2, 4, 8):
        fail("traffic.size must be 1, 2, 4 or 8 bytes", "traffic", "size")
    try:
        cfg.traffic_planes
    except (ValueError, KeyError) as exc:
        fail(f"traffic.planes: {exc}", "traffic", "planes")
    if t["hotspot"] is not None and (len(t["hotspot"]) != 2
                                     or not all(isinstance(v, int) for v in t["hotspot"])):
        fail("traffic.hotspot must be [x, y]", "traffic", "hotspot")
    if cfg.seed < 0:
        fail("seed must be non-negative", "seed")
    if cfg.warmup < 0:
        fail("warmup must be >= 0", "warmup")
    if cfg.window < 1:
        fail("window must be >= 1", "window")
    if cfg.drain < 0:
        fail("drain must be >= 0", "drain")
    if cfg.planes["inject_depth"] < 1:
        fail("planes.inject_depth must be >= 1", "planes", "inject_depth")
    lk = cfg.link
    if lk["payload_rate"] <= 0 or lk["clock_ratio"] <= 0 or lk["queue_depth"] < 1:
        fail("link rates must be positive and queue_depth >= 1", "link", "payload_rate")
    if cfg.litmus["trials"] < 1 or cfg.litmus["adversarial_trials"] < 1:
        fail("litmus trial counts must be >= 1", "litmus", "trials")
    rates = cfg.sweep["rates"]
    if rates is not None:
        if not rates or not all(isinstance(r, (int, float)) and not isinstance(r, bool)
                                and 0 < r <= 1 for r in rates):
            fail("sweep.rates must be a non-empty list of numbers in (0, 1]", "sweep", "rates")
    if cfg.mode == "sweep" and rates is None:
        fail("sweep mode needs sweep.rates", "sweep" if "sweep" in root else "mode")
    if cfg.mode == "bisection" and (cfg.mesh["rows"] * cfg.chips["y"]) % 2:
        fail("bisection needs an even number of rows", "mesh", "rows")
    if cfg.spec["cores"] < 0:
        fail("spec.cores must be >= 0", "spec", "cores")
    if cfg.mode == "scripts" and not cfg.scripts["nodes"]:
        fail("scripts mode needs scripts.nodes", "scripts" if "scripts" in root else "mode")
    mc = cfg.memcheck
    if mc["workloads"] < 1 or mc["sources"] < 1 or mc["ops"] < 1:
        fail("memcheck counts must be >= 1", "memcheck", "workloads")


def load_config(source, *, env: dict | None = None) -> RunConfig:
    """Parse and validate a config file path, JSON text or mapping.

    ``EMESH_SEED`` in *env* (default: the process environment) overrides the
    seed.
    """
    base = Path(".")
    if isinstance(source, dict):
        text = json.dumps(source, indent=1)
    elif isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        path = Path(source)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        base = path.parent
    else:
        text = source
    root = parse_json(text)
    if not isinstance(root, _Obj):
        raise ConfigError("config must be a JSON object", 1)
    top = _section(root, "")
    kw = {k: v for k, v in top.items() if SCHEMA[""][k][0] is not dict}
    for name in SCHEMA:
        if name and SCHEMA[""][name][0] is dict:
            sub = root.get(name)
            if sub is not None and not isinstance(sub, _Obj):
                raise ConfigError(f"{name} must be an object", root.line_of(name))
            kw[name] = _section(sub, name) if sub is not None else _defaults(name)
    if kw["traffic"]["pattern"]:
        kw["traffic"]["pattern"] = kw["traffic"]["pattern"].upper()
    cfg = RunConfig(**kw, base_dir=base)
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        try:
            cfg.seed = int(env[SEED_ENV], 0)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from None
    _check_ranges(cfg, root)
    return cfg
