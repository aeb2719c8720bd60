"""A fabric populated with nodes: the unit that runs scripted workloads."""

from __future__ import annotations

from typing import Callable, Iterable, Mapping

from .addrmap import NodeCoord
from .node import Effect, Node, Transaction
from .noc import Delivery, Fabric
from .packet import NetworkClass


class Machine:
    """Drives node cycles and fabric ticks in lock step.

    Per cycle: nodes consume what the hubs ejected during the previous cycle,
    issue their next operations, then the fabric advances two ticks.  When no
    node has pending work the fabric is fast-forwarded in compiled code until
    the next delivery reaches a node.
    """

    def __init__(self, fabric: Fabric, *, reply_depth: int = 4, blocking_reads: bool = True,
                 fetch: bool = False):
        self.fabric = fabric
        self.layout = fabric.layout
        self._node_kw = dict(reply_depth=reply_depth, blocking_reads=blocking_reads, fetch=fetch)
        self.nodes: dict[int, Node] = {}
        self.log: list[Effect] = []
        self._busy: set[int] = set()
        self._pending: list[Delivery] = []
        self.delivered: list[Delivery] = []
        self.keep_deliveries = False
        if fetch:
            for i in range(fabric.n_nodes):
                self._busy.add(i)
                self.node(i)

    def node(self, where) -> Node:
        i = self.fabric.index(where)
        nd = self.nodes.get(i)
        if nd is None:
            nd = self.nodes[i] = Node(self.fabric.coord(i), self.layout, **self._node_kw)
        return nd

    def load_script(self, where, ops: Iterable[Transaction]):
        nd = self.node(where)
        nd.load_script(ops)
        self._busy.add(self.fabric.index(where))

    def load_scripts(self, scripts: Mapping):
        for where, ops in scripts.items():
            self.load_script(where, ops)

    def preload(self, where, offset: int, data: bytes):
        self.node(where).memory.load(offset, data)

    @property
    def cycle_count(self) -> int:
        return self.fabric.cycle

    def quiescent(self) -> bool:
        """No script work left anywhere and no script packet in flight."""
        if self._pending or self.fabric._objs:
            return False
        return all(nd.done for nd in self.nodes.values())

    def step_cycle(self):
        fab = self.fabric
        if fab.tick % 2:
            self._pending.extend(fab.step())
        cycle = fab.cycle
        incoming = {}
        for d in self._pending:
            incoming[fab.index(d.node)] = d
        if self.keep_deliveries:
            self.delivered.extend(self._pending)
        self._pending = []
        for i in sorted(self._busy.union(incoming)):
            nd = self.node(i)
            nd.cycle(cycle, incoming.get(i), fab, self.log)
            if nd.busy or nd.fetch:
                self._busy.add(i)
            else:
                self._busy.discard(i)
            ok = nd.accepting_requests
            if fab.accept[NetworkClass.RMESH, i] != ok:
                fab.set_accept(NetworkClass.RMESH, i, ok)
        self._pending.extend(fab.step())
        self._pending.extend(fab.step())

    def run(self, max_cycles: int, until: Callable[[Machine], bool] | None = None) -> int:
        """Run until *until* holds (default: quiescent) or *max_cycles* elapse."""
        until = until or Machine.quiescent
        start = self.fabric.cycle
        while self.fabric.cycle - start < max_cycles:
            if until(self):
                break
            if not self._busy and not self._pending:
                left = 2 * (max_cycles - (self.fabric.cycle - start))
                self._pending.extend(self.fabric.run(left, stop_on_delivery=True))
                if self.fabric.tick % 2:
                    self._pending.extend(self.fabric.step())
                continue
            self.step_cycle()
        return self.fabric.cycle - start

    def memories(self) -> dict[NodeCoord, bytes]:
        return {nd.coord: nd.memory.snapshot() for nd in self.nodes.values()}

    def stats(self) -> dict:
        tot = {"errors": 0, "bank_stalls": 0, "send_refusals": 0, "fetch_stalls": 0,
               "budget_violations": 0, "bank_violations": 0}
        for nd in self.nodes.values():
            for k in tot:
                tot[k] += getattr(nd.stats, k)
        return tot
