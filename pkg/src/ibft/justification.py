"""Piggybacked certificates and the round-change / pre-prepare justification predicates.

A ROUND-CHANGE that claims a prepared state is only accepted when it carries
a quorum of matching PREPARE messages; see :func:`validate_with_certificate`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

from .core import (
    Prepare,
    PrePrepare,
    RoundChange,
    SignedMessage,
    SystemConfig,
    Validation,
    VALID,
    quorum_size,
    validate_message,
)


@dataclass(frozen=True)
class PrepareCertificate:
    prepares: Tuple[SignedMessage, ...]

    def senders(self) -> frozenset:
        return frozenset(m.sender for m in self.prepares)


@dataclass(frozen=True)
class RoundChangeCertificate:
    round_changes: Tuple[SignedMessage, ...]

    def senders(self) -> frozenset:
        return frozenset(m.sender for m in self.round_changes)


def prepare_quorum_senders(prepares: Iterable[SignedMessage], config: SystemConfig,
                           instance: int, round: int, value: bytes) -> frozenset:
    """Distinct senders of valid Prepare(instance, round, value) among `prepares`."""
    out = set()
    for m in prepares:
        p = m.payload
        if (isinstance(p, Prepare) and p.instance == instance and p.round == round
                and p.value == value and validate_message(m, config)):
            out.add(m.sender)
    return frozenset(out)


def prepare_certificate_ok(cert, config: SystemConfig, instance: int, round: int,
                           value: bytes) -> bool:
    if not isinstance(cert, PrepareCertificate):
        return False
    senders = prepare_quorum_senders(cert.prepares, config, instance, round, value)
    return len(senders) >= quorum_size(config)


def validate_with_certificate(m: SignedMessage, config: SystemConfig) -> Validation:
    """validate_message, plus: a prepared claim must embed its prepare quorum."""
    v = validate_message(m, config)
    if not v:
        return v
    p = m.payload
    if isinstance(p, RoundChange) and p.prepared.round is not None:
        if not prepare_certificate_ok(m.justification, config, p.instance,
                                      p.prepared.round, p.prepared.value):
            return Validation(False, "unjustified-prepared-claim")
    return VALID


def _highest_entry(q: RoundChangeCertificate) -> Optional[SignedMessage]:
    # maximal prepared round, ties to the lowest sender index
    best = None
    for m in q.round_changes:
        pr = m.payload.prepared
        if pr.round is None:
            continue
        if best is None or (pr.round, -m.sender) > (best.payload.prepared.round, -best.sender):
            best = m
    return best


def highest_prepared(q: RoundChangeCertificate) -> Optional[Tuple[int, bytes]]:
    m = _highest_entry(q)
    return None if m is None else (m.payload.prepared.round, m.payload.prepared.value)


def justify_round_change(q: RoundChangeCertificate, config: SystemConfig) -> bool:
    """J1: nobody claims a prepared state. J2: the highest claim embeds a
    prepare quorum for exactly that (round, value)."""
    m = _highest_entry(q)
    if m is None:
        return True
    pr = m.payload.prepared
    return prepare_certificate_ok(m.justification, config, m.payload.instance, pr.round, pr.value)


def round_change_certificate_ok(q, config: SystemConfig, instance: int, round: int) -> bool:
    """Structural check: a quorum of distinct, individually valid ROUND-CHANGEs for (instance, round)."""
    if not isinstance(q, RoundChangeCertificate):
        return False
    senders = set()
    for m in q.round_changes:
        p = m.payload
        if not isinstance(p, RoundChange) or p.instance != instance or p.round != round:
            return False
        if not validate_with_certificate(m, config):
            return False
        senders.add(m.sender)
    return len(senders) >= quorum_size(config)


def justify_pre_prepare(m: SignedMessage, config: SystemConfig) -> bool:
    p = m.payload
    if not isinstance(p, PrePrepare):
        return False
    if p.round == 1:
        return True
    q = m.justification
    if not round_change_certificate_ok(q, config, p.instance, p.round):
        return False
    if not justify_round_change(q, config):
        return False
    hp = highest_prepared(q)
    return hp is None or hp[1] == p.value
