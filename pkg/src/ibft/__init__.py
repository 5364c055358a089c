"""IBFT consensus as a deterministic state machine, with a seeded
partial-synchrony simulator and trace-level correctness checks."""

from .core import (
    PreparedState,
    SignedMessage,
    Signer,
    SystemConfig,
    leader,
    max_faulty,
    quorum_size,
    timeout,
    validate_message,
)
from .instance import InstanceState
from .scenario import Scenario, parse_scenario
from .simnet import RunTrace, run

__all__ = [
    "InstanceState", "PreparedState", "RunTrace", "Scenario", "SignedMessage", "Signer",
    "SystemConfig", "leader", "max_faulty", "parse_scenario", "quorum_size", "run",
    "timeout", "validate_message",
]
