"""Remote-transfer ordering: the expected verdicts and litmus runs that test them.

A trial issues two transfers back to back from one node.  The effect of a
transfer is the access it performs at its target scratchpad.  For two
transfers to the same core the order of those accesses is exact; for
different cores the delivery ticks are compared and equal ticks are reported
as concurrent rather than ordered either way.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

from .addrmap import NodeCoord, encode_address
from .errors import ConfigError, IncompleteError
from .machine import Machine
from .node import Effect, Op, Transaction
from .noc import Fabric, Flow
from .packet import NetworkClass


class Access(enum.Enum):
    READ = "READ"
    WRITE = "WRITE"


class Core(enum.Enum):
    A = "A"
    B = "B"


class TransferDesc(NamedTuple):
    op: Access
    target: Core

    def __str__(self):
        return f"{self.op.value.title()} {self.target.value}"


class OrderVerdict(NamedTuple):
    deterministic: bool


RA, RB = TransferDesc(Access.READ, Core.A), TransferDesc(Access.READ, Core.B)
WA, WB = TransferDesc(Access.WRITE, Core.A), TransferDesc(Access.WRITE, Core.B)

# every pair that starts at core A, in the customary row order
TABLE_ROWS: tuple[tuple[TransferDesc, TransferDesc], ...] = (
    (RA, RA), (RA, RB), (RA, WA), (RA, WB),
    (WA, WA), (WA, WB), (WA, RA), (WA, RB),
)


def classify_pair(t1: TransferDesc, t2: TransferDesc) -> OrderVerdict:
    """Whether the second transfer's effect can never precede the first's.

    A read blocks the issuer until its reply is back, so anything after it is
    ordered.  Two writes to one core share a plane and a path, so they stay
    in order.  A write followed by anything else races.
    """
    if t1.op is Access.READ:
        return OrderVerdict(True)
    return OrderVerdict(t2.op is Access.WRITE and t2.target is t1.target)


def pair_name(pair: tuple[TransferDesc, TransferDesc]) -> str:
    return f"{pair[0]} -> {pair[1]}"


@dataclass(frozen=True)
class LitmusScenario:
    """*trials* repetitions of one transfer pair, issued serially by one node.

    Each trial uses its own 8-byte slot at the targets, so effects can be told
    apart.  Between trials the issuer idles for a random 0..max_delay cycles.
    """
    pair: tuple[TransferDesc, TransferDesc]
    issuer: NodeCoord
    a: NodeCoord
    b: NodeCoord
    flows: tuple[Flow, ...] = ()
    trials: int = 100
    seed: int = 0
    max_delay: int = 0
    rows: int = 4
    cols: int = 4
    label: str = ""

    def __post_init__(self):
        if self.a == self.b:
            raise ConfigError("cores A and B must differ")
        if self.issuer in (self.a, self.b):
            raise ConfigError("both transfers must be remote to the issuer")
        if not 1 <= self.trials <= MAX_TRIALS:
            raise ConfigError(f"trials per scenario must be in 1..{MAX_TRIALS}")


MAX_TRIALS = 1024
SLOT_BASE = 0x4000
# a second read of the pair uses its own slot so the two loads stay distinguishable
ALT_BASE = SLOT_BASE + 8 * MAX_TRIALS
RETURN_BASE = ALT_BASE + 8 * MAX_TRIALS
IDLE_OFFSET = 0xFFF8


class ObservationSet(NamedTuple):
    trials: int
    preserved: int
    reversed: int
    concurrent: int
    value_anomalies: int

    def __add__(self, other):
        return ObservationSet(*(a + b for a, b in zip(self, other)))


NO_OBSERVATIONS = ObservationSet(0, 0, 0, 0, 0)


def _trial_value(seed: int, k: int, which: int) -> int:
    # nonzero and distinct from the untouched-memory value
    return ((seed & 0xFFFF) << 40) | (k << 8) | (which + 1)


def _slot(pair, which: int, k: int) -> int:
    if which == 1 and pair[0].op is pair[1].op is Access.READ:
        return ALT_BASE + 8 * k
    return SLOT_BASE + 8 * k


def _script(sc: LitmusScenario, rng: random.Random, layout):
    ops, marks = [], []
    cores = {Core.A: sc.a, Core.B: sc.b}
    for k in range(sc.trials):
        for _ in range(rng.randint(0, sc.max_delay)):
            ops.append(Transaction(Op.LOCAL_READ, IDLE_OFFSET))
        idx = []
        for which, t in enumerate(sc.pair):
            addr = int(encode_address(cores[t.target], _slot(sc.pair, which, k), layout))
            idx.append(len(ops))
            if t.op is Access.WRITE:
                ops.append(Transaction(Op.REMOTE_WRITE, addr, _trial_value(sc.seed, k, which)))
            else:
                ops.append(Transaction(Op.REMOTE_READ, addr, RETURN_BASE + 16 * k + 8 * which))
        marks.append(idx)
    return ops, marks


def _expected_read(pair, which: int, k: int, seed: int) -> int:
    """Value a read should see when both transfers act in program order."""
    if which == 1 and pair[0].op is Access.WRITE and pair[0].target is pair[1].target:
        return _trial_value(seed, k, 0)
    return 0


def run_litmus(sc: LitmusScenario, fabric: Fabric | None = None) -> ObservationSet:
    fab = fabric if fabric is not None else Fabric(sc.rows, sc.cols)
    for c in (sc.issuer, sc.a, sc.b, *(f.src for f in sc.flows), *(f.dst for f in sc.flows)):
        try:
            fab.index(c)
        except ValueError as exc:
            raise ConfigError(f"litmus scenario refers to {tuple(c)}: {exc}") from None
    rng = random.Random(sc.seed)
    m = Machine(fab)
    ops, marks = _script(sc, rng, fab.layout)
    m.load_script(sc.issuer, ops)
    if sc.flows:
        fab.set_flows(sc.flows, seed=sc.seed)
    limit = 400 * sc.trials + 10 * len(ops) + 1000
    m.run(limit)
    if not m.quiescent():
        raise IncompleteError(f"litmus scenario {sc.label or pair_name(sc.pair)} did not finish "
                              f"within {limit} cycles")
    fab.stop_traffic()

    found: dict[tuple, list[Effect]] = {}
    for e in m.log:
        if e.origin == "remote":
            found.setdefault((e.node, e.offset), []).append(e)
    issuer = m.node(sc.issuer)
    results = {r.index: r for r in issuer.results}
    cores = {Core.A: sc.a, Core.B: sc.b}

    preserved = rev = conc = anomalies = 0
    for k, idx in enumerate(marks):
        effects = []
        for which, t in enumerate(sc.pair):
            at = found.get((cores[t.target], _slot(sc.pair, which, k)), [])
            if t.op is Access.WRITE:
                want = _trial_value(sc.seed, k, which)
                hit = [e for e in at if e.access == "store" and e.value == want]
            else:
                hit = [e for e in at if e.access == "load"]
                got = results[idx[which]].value
                if got != _expected_read(sc.pair, which, k, sc.seed):
                    anomalies += 1
            if len(hit) != 1:
                raise IncompleteError(f"trial {k}: transfer {which + 1} left {len(hit)} effects")
            effects.append(hit[0])
        e1, e2 = effects
        if e1.node == e2.node:
            before = e1.seq < e2.seq
            tie = False
        else:
            before = e1.tick < e2.tick
            tie = e1.tick == e2.tick
        if tie:
            conc += 1
        elif before:
            preserved += 1
        else:
            rev += 1
    return ObservationSet(sc.trials, preserved, rev, conc, anomalies)


# scenarios

def _hotspot_flows(dst: NodeCoord, rows: int, cols: int, exclude: Sequence[NodeCoord],
                   plane=NetworkClass.CMESH, rate: float = 1.0) -> tuple[Flow, ...]:
    return tuple(Flow(NodeCoord(x, y), dst, rate, plane)
                 for y in range(rows) for x in range(cols)
                 if NodeCoord(x, y) not in exclude and NodeCoord(x, y) != dst)


def adversarial_scenarios(trials: int = 200, seed: int = 1) -> dict:
    """Schedules built to expose each racing pair.

    Write A -> Write B: A sits far from the issuer and B next to it, so the
    second write has a much shorter path on the same plane.  Write A -> Read
    A/B: write traffic floods A's column on the write plane while the read
    plane stays idle, so the read request overtakes the queued write.
    """
    issuer = NodeCoord(0, 1)
    far, near = NodeCoord(3, 3), NodeCoord(1, 1)
    hot_a = NodeCoord(3, 1)
    other = NodeCoord(1, 2)
    flood = _hotspot_flows(hot_a, 4, 4, exclude=(issuer, other))
    return {
        (WA, WB): [LitmusScenario((WA, WB), issuer, far, near, (), trials, seed, 3,
                                  label="path-asymmetry")],
        (WA, RA): [LitmusScenario((WA, RA), issuer, hot_a, other, flood, trials, seed, 3,
                                  label="write-plane-flood")],
        (WA, RB): [LitmusScenario((WA, RB), issuer, hot_a, other, flood, trials, seed, 3,
                                  label="write-plane-flood")],
    }


def random_scenarios(pair, trials: int, seed: int, *, rows: int = 4, cols: int = 4,
                     per_scenario: int = 100, max_flows: int = 8, max_delay: int = 6):
    """Split *trials* over scenarios with random nodes and random background flows."""
    rng = random.Random(f"{pair_name(pair)}/{seed}")
    nodes = [NodeCoord(x, y) for y in range(rows) for x in range(cols)]
    # (0, 0) is every node's local alias, so it is never a remote target
    targets = [c for c in nodes if c != NodeCoord(0, 0)]
    out, done = [], 0
    while done < trials:
        n = min(per_scenario, trials - done)
        issuer = rng.choice(nodes)
        a, b = rng.sample([c for c in targets if c != issuer], 2)
        flows = []
        for _ in range(rng.randint(0, max_flows)):
            s, d = rng.sample(nodes, 2)
            if s == issuer:
                continue
            plane = rng.choice((NetworkClass.RMESH, NetworkClass.CMESH, NetworkClass.CMESH))
            flows.append(Flow(s, d, rng.choice((0.25, 0.5, 1.0)), plane))
        out.append(LitmusScenario(pair, issuer, a, b, tuple(flows), n, rng.getrandbits(31),
                                  max_delay, rows, cols, label=f"random-{len(out)}"))
        done += n
    return out


# verdicts

class RowReport(NamedTuple):
    pair: tuple[TransferDesc, TransferDesc]
    deterministic: bool
    observed: ObservationSet
    status: str          # PASS, WEAK-PASS or FAIL
    scenarios: tuple[str, ...]


@dataclass
class TableReport:
    rows: list[RowReport] = field(default_factory=list)

    @property
    def status(self) -> str:
        st = {r.status for r in self.rows}
        if "FAIL" in st:
            return "FAIL"
        return "WEAK-PASS" if "WEAK-PASS" in st else "PASS"

    def failures(self) -> list[str]:
        return [pair_name(r.pair) for r in self.rows if r.status == "FAIL"]


def check_table(observations: dict, scenarios: dict | None = None) -> TableReport:
    """Grade per-pair observations against :func:`classify_pair`.

    A deterministic pair fails on any reversal or wrong read value.  A racing
    pair passes once it has been seen reversed; otherwise it is WEAK-PASS,
    since a quiet schedule proves nothing about the fabric.
    """
    missing = [pair_name(p) for p in TABLE_ROWS if p not in observations]
    if missing:
        raise IncompleteError("no observations for " + ", ".join(missing))
    rep = TableReport()
    for pair in TABLE_ROWS:
        obs = observations[pair]
        det = classify_pair(*pair).deterministic
        if det:
            status = "PASS" if obs.reversed == 0 and obs.value_anomalies == 0 else "FAIL"
        else:
            status = "PASS" if obs.reversed > 0 else "WEAK-PASS"
        labels = tuple(s.label for s in (scenarios or {}).get(pair, ()))
        rep.rows.append(RowReport(pair, det, obs, status, labels))
    return rep


def run_table(trials: int = 10_000, seed: int = 0, adversarial_trials: int = 200,
              progress=None) -> TableReport:
    """Every pair: randomized trials for ordered pairs, adversarial ones for racing pairs."""
    observations, used = {}, {}
    adv = adversarial_scenarios(adversarial_trials, seed + 1)
    for pair in TABLE_ROWS:
        if classify_pair(*pair).deterministic:
            scs = random_scenarios(pair, trials, seed)
        else:
            scs = adv[pair]
        total = NO_OBSERVATIONS
        for sc in scs:
            total = total + run_litmus(sc)
        if progress:
            progress(pair, total)
        observations[pair] = total
        used[pair] = scs
    return check_table(observations, used)


def pairs_from_names(names: Iterable[str]) -> list[tuple[TransferDesc, TransferDesc]]:
    lookup = {pair_name(p): p for p in TABLE_ROWS}
    out = []
    for n in names:
        if n not in lookup:
            raise ConfigError(f"unknown transfer pair {n!r}")
        out.append(lookup[n])
    return out
