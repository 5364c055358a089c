"""Per-process, per-instance IBFT state machine.

The machine consumes events and returns actions; it never performs I/O.
Upon rules are evaluated in the fixed priority order R3, R6, R2, R1, R5 and
re-evaluated until none is enabled. R4 fires on timer expiry, R7 on a
ROUND-CHANGE received after the decision.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Union

from .core import (
    BOTTOM,
    Commit,
    PreparedState,
    Prepare,
    PrePrepare,
    RoundChange,
    SignedMessage,
    Signer,
    SystemConfig,
    leader,
    quorum_size,
    timeout,
)
from .justification import (
    PrepareCertificate,
    RoundChangeCertificate,
    highest_prepared,
    justify_pre_prepare,
    justify_round_change,
    validate_with_certificate,
)


class InstanceError(Exception):
    pass


@dataclass(frozen=True)
class CommitCertificate:
    commits: Tuple[SignedMessage, ...]

    @property
    def value(self) -> bytes:
        return self.commits[0].payload.value

    @property
    def round(self) -> int:
        return self.commits[0].payload.round


# events

@dataclass(frozen=True)
class Start:
    instance: int
    value: bytes


@dataclass(frozen=True)
class Deliver:
    message: SignedMessage


@dataclass(frozen=True)
class TimerExpired:
    pass


Event = Union[Start, Deliver, TimerExpired]


# actions

@dataclass(frozen=True)
class Broadcast:
    message: SignedMessage


@dataclass(frozen=True)
class Unicast:
    dst: int
    message: SignedMessage


@dataclass(frozen=True)
class ScheduleTimer:
    duration: int
    instance: Optional[int] = None


@dataclass(frozen=True)
class StopTimer:
    instance: Optional[int] = None


@dataclass(frozen=True)
class Decide:
    instance: int
    value: bytes
    certificate: CommitCertificate


Action = Union[Broadcast, Unicast, ScheduleTimer, StopTimer, Decide]


class InstanceState:
    """State of process `pid` in one consensus instance.

    `timer` is one of ``("stopped", None)``, ``("running", expiry)`` or
    ``("expired", None)``. `rule_log` lists ``(rule, round, detail)`` for every
    firing, in order; `dropped` lists ``(reason, message)`` for rejected input.
    """

    def __init__(self, pid: int, config: SystemConfig, signer: Optional[Signer] = None,
                 base_timeout: int = 1000):
        self.pid = pid
        self.config = config
        self.signer = signer or Signer(pid)
        self.base_timeout = base_timeout
        self.quorum = quorum_size(config)

        self.instance: Optional[int] = None
        self.round = 0
        self.prepared: PreparedState = BOTTOM
        self.prepared_certificate: Optional[PrepareCertificate] = None
        self.input_value: Optional[bytes] = None
        self.timer: Tuple[str, Optional[int]] = ("stopped", None)
        self.decided: Optional[Tuple[bytes, CommitCertificate]] = None
        self.fired_rules: set = set()
        self.rule_log: List[tuple] = []
        self.dropped: List[tuple] = []

        self._preprepares: Dict[int, List[SignedMessage]] = {}
        # (round, value) -> {sender: message}
        self._prepares: Dict[tuple, Dict[int, SignedMessage]] = {}
        self._commits: Dict[tuple, Dict[int, SignedMessage]] = {}
        # round -> {sender: [messages]}
        self._round_changes: Dict[int, Dict[int, List[SignedMessage]]] = {}
        self._seen: set = set()
        self._unjustified: set = set()

    # entry points

    def start(self, instance: int, value: bytes, now: int = 0) -> List[Action]:
        if self.instance is not None:
            raise InstanceError(f"instance already started (lambda={self.instance})")
        self.instance = instance
        self.round = 1
        self.prepared = BOTTOM
        self.input_value = value
        actions: List[Action] = []
        if leader(instance, 1, self.config.n) == self.pid:
            actions.append(Broadcast(self._sign(PrePrepare(instance, 1, value))))
        actions.append(self._set_timer(now))
        return actions

    def handle_event(self, event: Event, now: int) -> List[Action]:
        if isinstance(event, Start):
            return self.start(event.instance, event.value, now)
        if self.instance is None:
            raise InstanceError("event before start")
        if isinstance(event, TimerExpired):
            return self._on_timer(now)
        if isinstance(event, Deliver):
            return self._on_message(event.message, now)
        raise TypeError(f"unknown event {event!r}")

    # helpers

    def _sign(self, payload, justification=None) -> SignedMessage:
        return self.signer.sign(payload, justification)

    def _set_timer(self, now: int) -> ScheduleTimer:
        d = timeout(self.round, self.base_timeout)
        self.timer = ("running", now + d)
        return ScheduleTimer(d, self.instance)

    def _fire(self, rule: str, detail=None) -> bool:
        key = (rule, self.round)
        if key in self.fired_rules:
            return False
        self.fired_rules.add(key)
        self.rule_log.append((rule, self.round, detail))
        return True

    def _round_change(self) -> SignedMessage:
        payload = RoundChange(self.instance, self.round, self.prepared)
        return self._sign(payload, self.prepared_certificate if not self.prepared.is_bottom else None)

    def _on_timer(self, now: int) -> List[Action]:
        state, expiry = self.timer
        if state != "running" or expiry > now or self.decided is not None:
            self.dropped.append(("timer-not-running", None))
            return []
        self.timer = ("expired", None)
        if not self._fire("R4", self.round + 1):
            return []
        self.round += 1
        actions: List[Action] = [self._set_timer(now), Broadcast(self._round_change())]
        return actions + self._quiesce(now)

    def _on_message(self, m: SignedMessage, now: int) -> List[Action]:
        if m.payload.instance != self.instance:
            raise InstanceError(
                f"message for instance {m.payload.instance} delivered to {self.instance}")
        v = validate_with_certificate(m, self.config)
        if not v:
            self.dropped.append((v.reason, m))
            return []
        p = m.payload
        if self.decided is not None:
            if isinstance(p, RoundChange) and m.sender != self.pid:
                return [Unicast(m.sender, c) for c in self.decided[1].commits]
            return []
        self._store(m)
        return self._quiesce(now)

    def _store(self, m: SignedMessage):
        # distinct per sender and payload; the first copy (and its justification) wins
        key = (m.sender, m.payload)
        if key in self._seen:
            return
        self._seen.add(key)
        p = m.payload
        if isinstance(p, Prepare):
            self._prepares.setdefault((p.round, p.value), {}).setdefault(m.sender, m)
        elif isinstance(p, Commit):
            self._commits.setdefault((p.round, p.value), {}).setdefault(m.sender, m)
        elif isinstance(p, RoundChange):
            self._round_changes.setdefault(p.round, {}).setdefault(m.sender, []).append(m)
        elif isinstance(p, PrePrepare):
            self._preprepares.setdefault(p.round, []).append(m)

    def _quiesce(self, now: int) -> List[Action]:
        actions: List[Action] = []
        rules = (self._r3_commit, self._r6_propose, self._r2_prepare,
                 self._r1_preprepare, self._r5_catch_up)
        while self.decided is None:
            for rule in rules:
                out = rule(now)
                if out is not None:
                    actions.extend(out)
                    break
            else:
                break
        return actions

    # upon rules

    def _r3_commit(self, now):
        for (round, value), by_sender in self._commits.items():
            if len(by_sender) >= self.quorum:
                cert = CommitCertificate(tuple(by_sender[s] for s in sorted(by_sender)))
                self.decided = (value, cert)
                self.timer = ("stopped", None)
                self.rule_log.append(("R3", round, value))
                return [StopTimer(self.instance), Decide(self.instance, value, cert)]
        return None

    def _r6_propose(self, now):
        if self.round < 2 or leader(self.instance, self.round, self.config.n) != self.pid:
            return None
        by_sender = self._round_changes.get(self.round)
        if not by_sender or len(by_sender) < self.quorum or ("R6", self.round) in self.fired_rules:
            return None
        q = RoundChangeCertificate(tuple(by_sender[s][0] for s in sorted(by_sender)))
        if not justify_round_change(q, self.config):
            return None
        hp = highest_prepared(q)
        value = self.input_value if hp is None else hp[1]
        self._fire("R6", value)
        return [Broadcast(self._sign(PrePrepare(self.instance, self.round, value), q))]

    def _r2_prepare(self, now):
        if ("R2", self.round) in self.fired_rules:
            return None
        for (round, value), by_sender in self._prepares.items():
            if round == self.round and len(by_sender) >= self.quorum:
                self._fire("R2", value)
                self.prepared = PreparedState(round, value)
                self.prepared_certificate = PrepareCertificate(
                    tuple(by_sender[s] for s in sorted(by_sender)))
                return [Broadcast(self._sign(Commit(self.instance, round, value)))]
        return None

    def _r1_preprepare(self, now):
        if ("R1", self.round) in self.fired_rules:
            return None
        expected = leader(self.instance, self.round, self.config.n)
        for m in self._preprepares.get(self.round, ()):
            if m.sender != expected or id(m) in self._unjustified:
                continue
            if not justify_pre_prepare(m, self.config):
                self._unjustified.add(id(m))
                self.dropped.append(("unjustified-pre-prepare", m))
                continue
            value = m.payload.value
            self._fire("R1", value)
            return [self._set_timer(now),
                    Broadcast(self._sign(Prepare(self.instance, self.round, value)))]
        return None

    def _r5_catch_up(self, now):
        if ("R5", self.round) in self.fired_rules:
            return None
        # highest round > r_i per sender; jump to the (f+1)-th highest so that
        # f+1 distinct senders are at or above the target
        best: Dict[int, int] = {}
        for round, by_sender in self._round_changes.items():
            if round > self.round:
                for s in by_sender:
                    if round > best.get(s, 0):
                        best[s] = round
        need = self.config.f + 1
        if len(best) < need:
            return None
        target = sorted(best.values(), reverse=True)[need - 1]
        self._fire("R5", target)
        self.round = target
        return [self._set_timer(now), Broadcast(self._round_change())]
