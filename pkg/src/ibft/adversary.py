"""Byzantine behaviours for designated faulty processes.

Every adversary signs only as itself. Strategies that deviate selectively
(crash, equivocation, stale claims) wrap an honest InstanceState and rewrite
its output; ``silent`` and ``random_byzantine`` do not run the protocol.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

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
)
from .instance import Action, Broadcast, Decide, Deliver, InstanceState, Unicast
from .justification import PrepareCertificate, RoundChangeCertificate
from .rng import SplitMix64, mix_seed

STRATEGIES = ("silent", "crash_after", "equivocating_leader", "stale_claim", "random_byzantine")


@dataclass(frozen=True)
class AdversarySpec:
    process: int
    strategy: str
    params: tuple = ()

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown adversary strategy {self.strategy!r}")

    @classmethod
    def parse(cls, text: str) -> "AdversarySpec":
        """Parse ``pid:strategy[:args]``, e.g. ``0:equivocating_leader:a,b``."""
        pid, _, rest = text.partition(":")
        strategy, _, args = rest.partition(":")
        strategy = strategy.strip()
        if strategy == "silent":
            params = ()
        elif strategy == "crash_after":
            params = (int(args),)
        elif strategy == "equivocating_leader":
            params = tuple(a.encode() for a in args.split(",") if a)
            if not params:
                raise ValueError("equivocating_leader needs at least one value")
        elif strategy == "stale_claim":
            pr, _, value = args.partition(",")
            params = (int(pr), value.encode())
        elif strategy == "random_byzantine":
            params = (int(args) if args else 0,)
        else:
            raise ValueError(f"unknown adversary strategy {strategy!r}")
        return cls(int(pid), strategy, params)

    def format(self) -> str:
        if self.strategy == "silent":
            args = ""
        elif self.strategy == "equivocating_leader":
            args = ",".join(v.decode() for v in self.params)
        elif self.strategy == "stale_claim":
            args = f"{self.params[0]},{self.params[1].decode()}"
        else:
            args = str(self.params[0])
        return f"{self.process}:{self.strategy}" + (f":{args}" if args else "")


class Adversary:
    """Common surface shared with InstanceState: start, handle_event, round, decided."""

    def __init__(self, spec: AdversarySpec, config: SystemConfig, signer: Signer,
                 base_timeout: int):
        self.spec = spec
        self.pid = spec.process
        self.config = config
        self.signer = signer
        self.base_timeout = base_timeout
        self.rule_log: list = []
        self.instance: Optional[int] = None

    round = 0
    decided = None

    def start(self, instance: int, value: bytes, now: int = 0) -> List[Action]:
        self.instance = instance
        return []

    def handle_event(self, event, now: int) -> List[Action]:
        return []


class Silent(Adversary):
    pass


class _Wrapped(Adversary):
    """Runs the honest machine and passes its actions through `rewrite`."""

    def __init__(self, *args):
        super().__init__(*args)
        self.honest = InstanceState(self.pid, self.config, self.signer, self.base_timeout)
        self.rule_log = self.honest.rule_log

    @property
    def round(self):
        return self.honest.round

    @property
    def decided(self):
        return self.honest.decided

    def start(self, instance, value, now=0):
        self.instance = instance
        return self.rewrite(self.honest.start(instance, value, now))

    def handle_event(self, event, now):
        return self.rewrite(self.honest.handle_event(event, now))

    def rewrite(self, actions: List[Action]) -> List[Action]:
        return [a for a in actions if not isinstance(a, Decide)]


class CrashAfter(_Wrapped):
    def __init__(self, *args):
        super().__init__(*args)
        self.remaining = self.spec.params[0]

    def _step(self, fn, *args):
        if self.remaining <= 0:
            return []
        self.remaining -= 1
        return self.rewrite(fn(*args))

    def start(self, instance, value, now=0):
        self.instance = instance
        return self._step(self.honest.start, instance, value, now)

    def handle_event(self, event, now):
        return self._step(self.honest.handle_event, event, now)


def split_destinations(n: int, k: int) -> List[range]:
    """Partition processes 0..n-1 into k contiguous blocks of near-equal size."""
    bounds = [i * n // k for i in range(k + 1)]
    return [range(bounds[i], bounds[i + 1]) for i in range(k)]


class EquivocatingLeader(_Wrapped):
    """Sends each block of destinations its own value for every PRE-PREPARE,
    PREPARE and COMMIT the honest machine would broadcast."""

    def rewrite(self, actions):
        values: Sequence[bytes] = self.spec.params
        out = []
        for a in super().rewrite(actions):
            p = a.message.payload if isinstance(a, Broadcast) else None
            if not isinstance(p, (PrePrepare, Prepare, Commit)):
                out.append(a)
                continue
            for value, block in zip(values, split_destinations(self.config.n, len(values))):
                m = self.signer.sign(type(p)(p.instance, p.round, value), a.message.justification)
                out.extend(Unicast(dst, m) for dst in block)
        return out


class StaleClaim(_Wrapped):
    """Replaces every ROUND-CHANGE with one asserting an unsubstantiated prepared state."""

    def rewrite(self, actions):
        pr, value = self.spec.params
        out = []
        for a in super().rewrite(actions):
            if isinstance(a, Broadcast) and isinstance(a.message.payload, RoundChange):
                p = a.message.payload
                a = Broadcast(self.signer.sign(RoundChange(p.instance, p.round,
                                                           PreparedState(pr, value))))
            out.append(a)
        return out


class RandomByzantine(Adversary):
    """Seeded arbitrary messages: fabricated payloads signed as itself, stale or
    mismatched certificates, and replays of observed messages."""

    max_sends = 60

    def __init__(self, spec, config, signer, base_timeout, run_seed: int = 0):
        super().__init__(spec, config, signer, base_timeout)
        self.rng = SplitMix64(mix_seed(spec.params[0], run_seed, spec.process))
        self.observed: List[SignedMessage] = []
        self.values: List[bytes] = [b"junk"]
        self.top_round = 1
        self.sent = 0

    def start(self, instance, value, now=0):
        self.instance = instance
        self.values.append(value)
        return self._emit()

    def handle_event(self, event, now):
        if isinstance(event, Deliver):
            m = event.message
            self.observed.append(m)
            self.top_round = max(self.top_round, m.payload.round)
            v = m.value
            if v is not None and v not in self.values:
                self.values.append(v)
        return self._emit()

    def _emit(self) -> List[Action]:
        rng = self.rng
        out: List[Action] = []
        for _ in range(rng.randint(0, 2)):
            if self.sent >= self.max_sends:
                break
            self.sent += 1
            m = self._fabricate()
            if rng.random() < 0.5:
                out.append(Broadcast(m))
            else:
                out.append(Unicast(rng.randint(0, self.config.n - 1), m))
        return out

    def _pick(self, seq):
        return seq[self.rng.randint(0, len(seq) - 1)]

    def _fabricate(self) -> SignedMessage:
        rng = self.rng
        choice = rng.randint(0, 5)
        if choice == 5 and self.observed:
            return self._pick(self.observed)
        lam = self.instance
        r = rng.randint(1, self.top_round + 1)
        value = self._pick(self.values)
        if choice == 0:
            just = self._round_change_justification(r) if r > 1 else None
            return self.signer.sign(PrePrepare(lam, r, value), just)
        if choice == 1:
            return self.signer.sign(Prepare(lam, r, value))
        if choice == 2:
            return self.signer.sign(Commit(lam, r, value))
        # ROUND-CHANGE, possibly with a bogus or borrowed claim
        prepared = BOTTOM
        if rng.random() < 0.6:
            prepared = PreparedState(rng.randint(1, r + 1), value)
        prepares = tuple(m for m in self.observed if isinstance(m.payload, Prepare))
        just = PrepareCertificate(prepares) if prepares and not prepared.is_bottom else None
        return self.signer.sign(RoundChange(lam, r, prepared), just)

    def _round_change_justification(self, r: int):
        rcs = tuple(m for m in self.observed
                    if isinstance(m.payload, RoundChange) and m.payload.round == r)
        if rcs:
            return RoundChangeCertificate(rcs)
        pps = [m for m in self.observed
               if isinstance(m.payload, PrePrepare) and m.justification is not None]
        return self._pick(pps).justification if pps else None


def make_adversary(spec: AdversarySpec, config: SystemConfig, signer: Signer,
                   base_timeout: int, run_seed: int = 0) -> Adversary:
    if signer.pid != spec.process:
        raise ValueError("an adversary may only hold its own signer")
    cls = {
        "silent": Silent,
        "crash_after": CrashAfter,
        "equivocating_leader": EquivocatingLeader,
        "stale_claim": StaleClaim,
    }.get(spec.strategy)
    if cls is not None:
        return cls(spec, config, signer, base_timeout)
    return RandomByzantine(spec, config, signer, base_timeout, run_seed)


def byzantine_step(adversary: Adversary, observed: Sequence[SignedMessage],
                   now: int = 0) -> List[Action]:
    """Feed observed messages to an adversary and collect what it emits."""
    out: List[Action] = []
    for m in observed:
        if m.payload.instance == adversary.instance:
            out.extend(adversary.handle_event(Deliver(m), now))
    return out

