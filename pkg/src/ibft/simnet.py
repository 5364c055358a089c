"""Seeded discrete-event simulator for the partial-synchrony model.

Time is an integer virtual clock. Handlers take zero time: actions are
stamped with the time of the event that produced them. A message sent at
``t >= gst`` arrives within ``(0, delta]``; before GST it is dropped with
probability ``drop_probability`` or delayed by up to ``pre_gst_max_delay``.
Messages to self arrive with zero delay.
"""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Tuple

from .adversary import make_adversary
from .core import PrePrepare, RoundChange, SignedMessage, Signer
from .instance import Broadcast, Decide, ScheduleTimer, StopTimer, Unicast
from .justification import PrepareCertificate, RoundChangeCertificate
from .rng import SplitMix64, mix_seed
from .scenario import Scenario
from .smr import ProposalSource, Replica


class ForgeryError(Exception):
    """A process emitted a message whose authenticator it could not have produced."""


class InvariantViolation(AssertionError):
    pass


@dataclass(frozen=True)
class NetConfig:
    gst: int
    delta: int
    pre_gst_drop_probability: float = 0.0
    pre_gst_max_delay: int = 1000
    seed: int = 0
    fixed_delay: bool = False
    isolate: Optional[int] = None

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta > 0 violated")
        if not 0.0 <= self.pre_gst_drop_probability <= 1.0:
            raise ValueError("drop probability must be in [0, 1]")

    @classmethod
    def from_scenario(cls, s: Scenario) -> "NetConfig":
        return cls(s.gst, s.delta, s.drop_probability, s.pre_gst_max_delay, s.seed,
                   s.delay == "fixed", s.isolate)


class EventQueue:
    """Min-queue ordered by (due_time, insertion sequence); entries can be cancelled."""

    def __init__(self):
        self._heap: list = []
        self._seq = 0
        self._live = 0

    def __len__(self):
        return self._live

    def push(self, due: int, kind: str, data) -> list:
        entry = [due, self._seq, kind, data, True]
        self._seq += 1
        self._live += 1
        heapq.heappush(self._heap, entry)
        return entry

    def cancel(self, entry: list):
        if entry[4]:
            entry[4] = False
            self._live -= 1

    def peek_live(self, k: int) -> List[list]:
        """The first k live entries in pop order."""
        return heapq.nsmallest(k, (e for e in self._heap if e[4]))

    def pop(self, index: int = 0) -> Optional[list]:
        heap = self._heap
        if index == 0:
            while heap:
                e = heapq.heappop(heap)
                if e[4]:
                    self._live -= 1
                    return e
            return None
        live = self.peek_live(index + 1)
        if len(live) <= index:
            raise IndexError(index)
        e = live[index]
        heap.remove(e)
        heapq.heapify(heap)
        self._live -= 1
        return e


# Trace records are (time, kind, process, data) with a per-kind data layout:
#   send / deliver / drop : (message id, peer, SignedMessage)   peer = dst for send/drop, src for deliver
#   timer_set             : (instance, duration or -1 when stopped)
#   timer_fire            : (instance, suppressed flag)
#   rule_fire             : (instance, rule, round, detail)
#   decide                : (instance, value, commit round)
TraceRecord = Tuple[int, str, int, tuple]

KINDS = ("send", "deliver", "drop", "timer_set", "timer_fire", "rule_fire", "decide")


def _fmt_value(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, bytes):
        return v.hex()
    return str(v)


def format_message(m: SignedMessage) -> str:
    p = m.payload
    head = f"type={p.kind} inst={p.instance} round={p.round} sender={m.sender}"
    if isinstance(p, RoundChange):
        body = f" pr={_fmt_value(p.prepared.round)} pv={_fmt_value(p.prepared.value)}"
    else:
        body = f" value={p.value.hex()}"
    j = m.justification
    if isinstance(j, PrepareCertificate):
        body += f" just=P{len(j.prepares)}"
    elif isinstance(j, RoundChangeCertificate):
        body += f" just=RC{len(j.round_changes)}"
    return head + body


def format_record(rec: TraceRecord) -> str:
    time, kind, process, data = rec
    if kind in ("send", "drop"):
        detail = f"id={data[0]} to={data[1]} {format_message(data[2])}"
    elif kind == "deliver":
        detail = f"id={data[0]} from={data[1]} {format_message(data[2])}"
    elif kind == "timer_set":
        detail = f"inst={data[0]} " + ("stop" if data[1] < 0 else f"duration={data[1]}")
    elif kind == "timer_fire":
        detail = f"inst={data[0]}" + (" suppressed" if data[1] else "")
    elif kind == "rule_fire":
        detail = f"inst={data[0]} rule={data[1]} round={data[2]} detail={_fmt_value(data[3])}"
    elif kind == "decide":
        detail = f"inst={data[0]} value={data[1].hex()} round={data[2]}"
    else:
        raise ValueError(f"unknown record kind {kind!r}")
    return f"{time}\t{kind}\t{process}\t{detail}"


class RunTrace:
    """Append-only record of one run.

    `meta` carries run parameters (n, f, byzantine set, gst, delta, ...);
    the digest covers the record sequence only.
    """

    def __init__(self, meta: Optional[dict] = None):
        self.records: List[TraceRecord] = []
        self.meta: dict = dict(meta or {})

    def append(self, time: int, kind: str, process: int, data: tuple):
        self.records.append((time, kind, process, data))

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def of_kind(self, kind: str) -> Iterator[TraceRecord]:
        return (r for r in self.records if r[1] == kind)

    @property
    def correct(self) -> Tuple[int, ...]:
        bad = self.meta.get("byzantine", frozenset())
        return tuple(p for p in range(self.meta["n"]) if p not in bad)

    @property
    def terminated(self) -> bool:
        return bool(self.meta.get("terminated"))

    def lines(self) -> Iterator[str]:
        return (format_record(r) for r in self.records)

    def digest(self) -> str:
        h = hashlib.sha256()
        for line in self.lines():
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()

    def header(self) -> str:
        m = self.meta
        keys = sorted(k for k in m if k != "byzantine")
        parts = [f"{k}={m[k]}" for k in keys]
        parts.append("byzantine=" + ",".join(str(p) for p in sorted(m.get("byzantine", ()))))
        return "# " + " ".join(parts)

    def to_text(self) -> str:
        body = "".join(line + "\n" for line in self.lines())
        return f"{self.header()}\n{body}digest\t{self.digest()}\n"

    def messages(self) -> List[SignedMessage]:
        """Every distinct message object sent during the run, in first-send order."""
        seen = set()
        out = []
        for _, kind, _, data in self.records:
            if kind == "send" and id(data[2]) not in seen:
                seen.add(id(data[2]))
                out.append(data[2])
        return out


Chooser = Callable[[int], int]


class Simulation:
    """One seeded run of a Scenario.

    `chooser`, if given, is called with the number of candidate events (at
    most ``window + 1``) and returns the index to process next; the default
    processes events strictly in (time, sequence) order. `max_round`
    suppresses timer expiries that would take a process past that round.
    """

    def __init__(self, scenario: Scenario, proposals: Optional[ProposalSource] = None,
                 chooser: Optional[Chooser] = None, window: int = 0,
                 max_round: Optional[int] = None, check_invariants: bool = True):
        self.scenario = s = scenario
        self.net = NetConfig.from_scenario(scenario)
        self.config = scenario.config()
        self.rng = SplitMix64(scenario.seed)
        self.queue = EventQueue()
        self.now = 0
        self.chooser = chooser
        self.window = window
        self.max_round = max_round
        self.check_invariants = check_invariants
        self.byzantine = scenario.byzantine
        self.ledger: set = set()
        self.trace = RunTrace({
            "n": s.n, "f": s.f, "byzantine": self.byzantine, "gst": s.gst, "delta": s.delta,
            "delay": s.delay, "instances": s.instances, "seed": s.seed,
            "base_timeout": s.base_timeout, "beta": s.beta_mode,
            "isolate": "-" if s.isolate is None else s.isolate,
        })
        self.replicas: List[Replica] = []
        specs = {a.process: a for a in scenario.adversaries}
        for pid in range(s.n):
            signer = Signer(pid, self.ledger)
            factory = None
            if pid in specs:
                spec = specs[pid]
                factory = (lambda lam, spec=spec, signer=signer: make_adversary(
                    spec, self.config, signer, s.base_timeout, mix_seed(s.seed, lam)))
            self.replicas.append(Replica(pid, self.config, signer, s.base_timeout, proposals,
                                         factory, instances=s.instances))
        self._timers: Dict[Tuple[int, int], list] = {}
        self._msg_id = 0
        self._rule_seen: Dict[Tuple[int, int], int] = {}
        self._audited: set = set()
        self._monotone: Dict[Tuple[int, int], tuple] = {}
        self._done = 0
        self.events = 0

    # driver

    def run(self) -> RunTrace:
        s = self.scenario
        for pid in range(s.n):
            self._step(pid, self.replicas[pid].advance(0, 0))
        terminated = self._all_done()
        while not terminated:
            if self.events >= s.max_events:
                break
            index = 0
            if self.chooser is not None and self.window > 0:
                k = min(self.window + 1, len(self.queue))
                if k > 1:
                    index = self.chooser(k)
            entry = self.queue.pop(index)
            if entry is None or entry[0] > s.max_time:
                break
            self.events += 1
            if entry[0] > self.now:
                self.now = entry[0]
            kind, data = entry[2], entry[3]
            if kind == "deliver":
                dst, src, msg_id, m = data
                self.trace.append(self.now, "deliver", dst, (msg_id, src, m))
                self._step(dst, self.replicas[dst].deliver(m, self.now))
            else:
                pid, lam = data
                self._timers.pop((pid, lam), None)
                replica = self.replicas[pid]
                machine = replica.machines.get(lam)
                suppressed = (self.max_round is not None and machine is not None
                              and machine.round >= self.max_round)
                self.trace.append(self.now, "timer_fire", pid, (lam, suppressed))
                if not suppressed:
                    self._step(pid, replica.timer_expired(lam, self.now))
            terminated = self._all_done()
        self.trace.meta["terminated"] = terminated
        self.trace.meta["end_time"] = self.now
        self.trace.meta["events"] = self.events
        return self.trace

    def _all_done(self) -> bool:
        return self._done >= self.scenario.n - len(self.byzantine)

    # effects

    def _step(self, pid: int, actions):
        replica = self.replicas[pid]
        self._harvest_rules(pid, replica)
        for a in actions:
            if isinstance(a, Broadcast):
                self._audit(a.message)
                for dst in range(self.scenario.n):
                    self._send(pid, dst, a.message)
            elif isinstance(a, Unicast):
                self._audit(a.message)
                self._send(pid, a.dst, a.message)
            elif isinstance(a, ScheduleTimer):
                key = (pid, a.instance)
                old = self._timers.get(key)
                if old is not None:
                    self.queue.cancel(old)
                self._timers[key] = self.queue.push(self.now + a.duration, "timer", key)
                self.trace.append(self.now, "timer_set", pid, (a.instance, a.duration))
            elif isinstance(a, StopTimer):
                old = self._timers.pop((pid, a.instance), None)
                if old is not None:
                    self.queue.cancel(old)
                self.trace.append(self.now, "timer_set", pid, (a.instance, -1))
            elif isinstance(a, Decide):
                self.trace.append(self.now, "decide", pid,
                                  (a.instance, a.value, a.certificate.round))
                if (pid not in self.byzantine
                        and a.instance == self.scenario.instances - 1):
                    self._done += 1
            else:
                raise TypeError(f"unknown action {a!r}")
        if self.check_invariants and pid not in self.byzantine:
            self._check_monotone(pid, replica)

    def _harvest_rules(self, pid: int, replica: Replica):
        for lam, machine in replica.machines.items():
            log = machine.rule_log
            seen = self._rule_seen.get((pid, lam), 0)
            if len(log) > seen:
                for rule, rnd, detail in log[seen:]:
                    self.trace.append(self.now, "rule_fire", pid, (lam, rule, rnd, detail))
                self._rule_seen[(pid, lam)] = len(log)

    def _check_monotone(self, pid: int, replica: Replica):
        for lam, machine in replica.machines.items():
            pr = machine.prepared.round or 0
            now = (machine.round, pr, machine.decided)
            before = self._monotone.get((pid, lam))
            if before is not None:
                if now[0] < before[0] or now[1] < before[1]:
                    raise InvariantViolation(f"p{pid} round/prepared decreased: {before[:2]} -> {now[:2]}")
                if before[2] is not None and now[2] is not before[2]:
                    raise InvariantViolation(f"p{pid} changed its decision")
            if pr > machine.round:
                raise InvariantViolation(f"p{pid} prepared round {pr} above round {machine.round}")
            self._monotone[(pid, lam)] = now

    def _audit(self, m: SignedMessage):
        if id(m) in self._audited:
            return
        if (m.sender, m.payload) not in self.ledger:
            raise ForgeryError(f"message attributed to p{m.sender} was never signed by it: {m.payload}")
        j = m.justification
        if isinstance(j, PrepareCertificate):
            for x in j.prepares:
                self._audit(x)
        elif isinstance(j, RoundChangeCertificate):
            for x in j.round_changes:
                self._audit(x)
        self._audited.add(id(m))

    def _send(self, src: int, dst: int, m: SignedMessage):
        msg_id = self._msg_id
        self._msg_id += 1
        now = self.now
        self.trace.append(now, "send", src, (msg_id, dst, m))
        net = self.net
        if src == dst:
            delay = 0
        elif now >= net.gst:
            delay = net.delta if net.fixed_delay else self.rng.randint(1, net.delta)
        elif net.isolate is not None and net.isolate in (src, dst):
            delay = None
        elif self.rng.random() < net.pre_gst_drop_probability:
            delay = None
        else:
            delay = self.rng.randint(1, net.pre_gst_max_delay)
        if delay is None:
            self.trace.append(now, "drop", src, (msg_id, dst, m))
            return
        self.queue.push(now + delay, "deliver", (dst, src, msg_id, m))


def run(scenario: Scenario, **kwargs) -> RunTrace:
    return Simulation(scenario, **kwargs).run()


def deliver_semantics_check(trace: RunTrace, net: NetConfig) -> bool:
    """Every send from a correct process at t >= GST to a correct process is
    delivered by t + delta, for deadlines falling before the end of the trace."""
    correct = set(trace.correct)
    end = trace.meta.get("end_time")
    if end is None:
        end = max((r[0] for r in trace.records), default=0)
    pending: Dict[int, int] = {}
    delivered: Dict[int, int] = {}
    for time, kind, process, data in trace.records:
        if kind == "send" and time >= net.gst and process in correct and data[1] in correct:
            pending[data[0]] = time + net.delta
        elif kind == "deliver":
            delivered.setdefault(data[0], time)
    for msg_id, deadline in pending.items():
        t = delivered.get(msg_id)
        if t is None:
            if deadline < end:
                return False
        elif t > deadline:
            return False
    return True
