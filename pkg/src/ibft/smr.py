"""State machine replication: sequential consensus instances per replica."""

from __future__ import annotations

from typing import Callable, Dict, List, Optional, Protocol, Tuple

from .core import RoundChange, SignedMessage, Signer, SystemConfig, value_digest
from .instance import (
    Action,
    CommitCertificate,
    Deliver,
    InstanceState,
    TimerExpired,
    Unicast,
)
from .justification import validate_with_certificate


class ReplicaError(Exception):
    pass


class ProposalSource(Protocol):
    def next_value(self, process: int, instance: int) -> bytes: ...


class DefaultProposals:
    """Each process proposes ``value-<instance>-p<process>``."""

    def next_value(self, process: int, instance: int) -> bytes:
        return f"value-{instance}-p{process}".encode()


class ReplicaLog:
    """Append-only, densely indexed decisions."""

    def __init__(self):
        self._entries: List[Tuple[bytes, CommitCertificate]] = []

    def __len__(self):
        return len(self._entries)

    def __getitem__(self, instance: int) -> Tuple[bytes, CommitCertificate]:
        return self._entries[instance]

    def __contains__(self, instance: int) -> bool:
        return 0 <= instance < len(self._entries)

    def append(self, instance: int, value: bytes, certificate: CommitCertificate):
        if instance != len(self._entries):
            raise ReplicaError(f"log has {len(self._entries)} entries, cannot append {instance}")
        self._entries.append((value, certificate))

    def values(self) -> List[bytes]:
        return [v for v, _ in self._entries]

    def dump(self) -> str:
        return "".join(f"{i}\t{value_digest(v)}\t{len(c.commits)}\n"
                       for i, (v, c) in enumerate(self._entries))


MachineFactory = Callable[[int], object]


class Replica:
    """Runs instances 0, 1, 2, ... in order, buffering messages for later instances.

    `machine_factory(instance)` builds the per-instance machine; anything with
    ``start``/``handle_event``/``round``/``decided`` works, which is how
    Byzantine replicas reuse this class.
    """

    def __init__(self, pid: int, config: SystemConfig, signer: Optional[Signer] = None,
                 base_timeout: int = 1000, proposals: Optional[ProposalSource] = None,
                 machine_factory: Optional[MachineFactory] = None, instances: Optional[int] = None):
        self.pid = pid
        self.config = config
        self.signer = signer or Signer(pid)
        self.base_timeout = base_timeout
        self.proposals = proposals or DefaultProposals()
        self.machine_factory = machine_factory or (
            lambda lam: InstanceState(pid, config, self.signer, base_timeout))
        self.max_instances = instances
        self.log = ReplicaLog()
        self.current: Optional[int] = None
        self.machines: Dict[int, object] = {}
        self._pending: Dict[int, List[SignedMessage]] = {}

    @property
    def machine(self):
        return self.machines.get(self.current)

    def advance(self, instance: int, now: int = 0) -> List[Action]:
        if instance != len(self.log):
            raise ReplicaError(f"advance({instance}) on log of length {len(self.log)}")
        if instance in self.machines:
            raise ReplicaError(f"instance {instance} already started")
        self.current = instance
        machine = self.machine_factory(instance)
        self.machines[instance] = machine
        actions = machine.start(instance, self.proposals.next_value(self.pid, instance), now)
        for m in self._pending.pop(instance, ()):
            actions.extend(machine.handle_event(Deliver(m), now))
        return actions + self._after_step(now)

    def deliver(self, m: SignedMessage, now: int) -> List[Action]:
        lam = m.payload.instance
        if lam in self.log:
            return sync_on_round_change(self, m)
        if self.current is None or lam > self.current:
            self._pending.setdefault(lam, []).append(m)
            return []
        if lam < self.current:
            return []
        actions = self.machine.handle_event(Deliver(m), now)
        return actions + self._after_step(now)

    def timer_expired(self, instance: int, now: int) -> List[Action]:
        if instance != self.current or instance in self.log:
            return []
        return self.machine.handle_event(TimerExpired(), now) + self._after_step(now)

    def _after_step(self, now: int) -> List[Action]:
        machine = self.machine
        if machine is None or machine.decided is None or self.current in self.log:
            return []
        value, cert = machine.decided
        self.log.append(self.current, value, cert)
        nxt = self.current + 1
        if self.max_instances is not None and nxt >= self.max_instances:
            return []
        return self.advance(nxt, now)


def sync_on_round_change(replica: Replica, rc: SignedMessage) -> List[Action]:
    """Answer a ROUND-CHANGE for a decided instance with that instance's commit quorum."""
    p = rc.payload
    if not isinstance(p, RoundChange) or p.instance not in replica.log:
        return []
    if rc.sender == replica.pid or not validate_with_certificate(rc, replica.config):
        return []
    _, cert = replica.log[p.instance]
    return [Unicast(rc.sender, c) for c in cert.commits]
