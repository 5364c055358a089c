"""Domain types, quorum arithmetic and stateless message validation."""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Union

ProcessId = int
InstanceId = int
Round = int
Value = bytes

# Simulated signing key. Unforgeability is a convention enforced by the
# simulator: processes only ever hold a Signer bound to their own id.
_SIGNING_KEY = b"ibft-simulated-authenticator"


def always_true(value: Value) -> bool:
    return True


@dataclass(frozen=True)
class SystemConfig:
    n: int
    f: int
    beta: Callable[[Value], bool] = always_true

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n >= 1 violated")
        if self.f < 0:
            raise ValueError("f >= 0 violated")
        if self.n < 3 * self.f + 1:
            raise ValueError(f"n ≥ 3f+1 violated (n={self.n}, f={self.f})")

    @property
    def quorum(self) -> int:
        return quorum_size(self)


@dataclass(frozen=True)
class PreparedState:
    round: Optional[Round] = None
    value: Optional[Value] = None

    @property
    def is_bottom(self) -> bool:
        return self.round is None and self.value is None


BOTTOM = PreparedState()


@dataclass(frozen=True)
class PrePrepare:
    instance: InstanceId
    round: Round
    value: Value
    kind = "PRE-PREPARE"


@dataclass(frozen=True)
class Prepare:
    instance: InstanceId
    round: Round
    value: Value
    kind = "PREPARE"


@dataclass(frozen=True)
class Commit:
    instance: InstanceId
    round: Round
    value: Value
    kind = "COMMIT"


@dataclass(frozen=True)
class RoundChange:
    instance: InstanceId
    round: Round
    prepared: PreparedState = BOTTOM
    kind = "ROUND-CHANGE"

    @property
    def prepared_round(self) -> Optional[Round]:
        return self.prepared.round

    @property
    def prepared_value(self) -> Optional[Value]:
        return self.prepared.value


Payload = Union[PrePrepare, Prepare, Commit, RoundChange]


def payload_bytes(payload: Payload) -> bytes:
    """Canonical encoding of a payload, the input to the authenticator."""
    if isinstance(payload, RoundChange):
        pr = "-" if payload.prepared.round is None else str(payload.prepared.round)
        pv = "-" if payload.prepared.value is None else payload.prepared.value.hex()
        body = f"{payload.instance}|{payload.round}|{pr}|{pv}"
    else:
        body = f"{payload.instance}|{payload.round}|{payload.value.hex()}"
    return f"{payload.kind}|{body}".encode()


@lru_cache(maxsize=1 << 16)
def _tag(sender: ProcessId, payload: Payload) -> bytes:
    msg = str(sender).encode() + b"|" + payload_bytes(payload)
    return hmac.new(_SIGNING_KEY, msg, hashlib.sha256).digest()


@dataclass(frozen=True)
class SignedMessage:
    """A protocol message attributed to `sender`.

    The justification is piggybacked: it travels with the message but is not
    covered by the authenticator and does not take part in equality.
    """

    sender: ProcessId
    payload: Payload
    authenticator: bytes
    justification: object = field(default=None, compare=False, repr=False)

    @property
    def kind(self) -> str:
        return self.payload.kind

    @property
    def instance(self) -> InstanceId:
        return self.payload.instance

    @property
    def round(self) -> Round:
        return self.payload.round

    @property
    def value(self) -> Optional[Value]:
        if isinstance(self.payload, RoundChange):
            return self.payload.prepared.value
        return self.payload.value

    def with_justification(self, justification) -> "SignedMessage":
        return SignedMessage(self.sender, self.payload, self.authenticator, justification)


class Signer:
    """Signing handle bound to one process.

    `ledger`, when given, records every (sender, payload) signed through
    this handle so a simulator can audit for forgeries.
    """

    def __init__(self, pid: ProcessId, ledger: Optional[set] = None):
        self.pid = pid
        self._ledger = ledger

    def sign(self, payload: Payload, justification=None) -> SignedMessage:
        if self._ledger is not None:
            self._ledger.add((self.pid, payload))
        return SignedMessage(self.pid, payload, _tag(self.pid, payload), justification)


def verify_authenticator(m: SignedMessage) -> bool:
    return hmac.compare_digest(m.authenticator, _tag(m.sender, m.payload))


@dataclass(frozen=True)
class Validation:
    ok: bool
    reason: str = "ok"

    def __bool__(self):
        return self.ok


VALID = Validation(True)


def quorum_size(config: SystemConfig) -> int:
    return (config.n + config.f) // 2 + 1


def max_faulty(n: int) -> int:
    if n < 1:
        raise ValueError("n >= 1 violated")
    return (n - 1) // 3


def leader(instance: InstanceId, round: Round, n: int) -> ProcessId:
    if round < 1:
        raise ValueError(f"round must be >= 1, got {round}")
    return (instance + round - 1) % n


def timeout(round: Round, base: int) -> int:
    if round < 1:
        raise ValueError(f"round must be >= 1, got {round}")
    if base <= 0:
        raise ValueError("base timeout must be positive")
    return base * 2 ** (round - 1)


def validate_message(m: SignedMessage, config: SystemConfig) -> Validation:
    """Stateless validity of a single message; piggybacked certificates are not inspected."""
    return _validate(m, config)


@lru_cache(maxsize=1 << 17)
def _validate(m: SignedMessage, config: SystemConfig) -> Validation:
    p = m.payload
    if not 0 <= m.sender < config.n:
        return Validation(False, "unknown-sender")
    if not isinstance(p, (PrePrepare, Prepare, Commit, RoundChange)):
        return Validation(False, "unknown-payload")
    if p.instance < 0:
        return Validation(False, "bad-instance")
    if p.round < 1:
        return Validation(False, "round-below-1")
    if isinstance(p, RoundChange):
        pr, pv = p.prepared.round, p.prepared.value
        if (pr is None) != (pv is None):
            return Validation(False, "prepared-half-bottom")
        if pr is not None:
            if pr < 1:
                return Validation(False, "prepared-round-below-1")
            if pr >= p.round:
                return Validation(False, "prepared-round-not-below-round")
            if not config.beta(pv):
                return Validation(False, "beta-false")
    elif not config.beta(p.value):
        return Validation(False, "beta-false")
    if not verify_authenticator(m):
        return Validation(False, "bad-authenticator")
    return VALID


def value_digest(value: Optional[Value]) -> str:
    if value is None:
        return "-"
    return hashlib.sha256(value).hexdigest()[:16]
