"""Simulation scenarios and the ``key=value`` scenario file format."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Tuple

from .adversary import AdversarySpec
from .core import SystemConfig


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class RejectListed:
    """External validity predicate rejecting a fixed set of values."""

    rejected: Tuple[bytes, ...]

    def __call__(self, value: bytes) -> bool:
        return value not in self.rejected


def _always_true(value: bytes) -> bool:
    return True


@dataclass(frozen=True)
class Scenario:
    n: int
    f: int
    gst: int = 0
    delta: int = 100
    base_timeout: int = 1000
    seed: int = 0
    instances: int = 1
    adversaries: Tuple[AdversarySpec, ...] = ()
    # () accepts everything; otherwise the listed values are rejected by beta
    rejected_values: Tuple[bytes, ...] = ()
    delay: str = "uniform"
    drop_probability: float = 0.1
    pre_gst_max_delay: int = 1000
    isolate: Optional[int] = None
    max_time: int = 10_000_000
    max_events: int = 500_000

    def __post_init__(self):
        check_scenario(self)

    @property
    def beta(self):
        return RejectListed(self.rejected_values) if self.rejected_values else _always_true

    @property
    def beta_mode(self) -> str:
        if not self.rejected_values:
            return "always_true"
        return "reject_listed:" + ",".join(v.decode() for v in self.rejected_values)

    def config(self) -> SystemConfig:
        return SystemConfig(self.n, self.f, self.beta)

    @property
    def byzantine(self) -> frozenset:
        return frozenset(a.process for a in self.adversaries)

    @property
    def correct(self) -> Tuple[int, ...]:
        bad = self.byzantine
        return tuple(p for p in range(self.n) if p not in bad)

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)

    def to_text(self) -> str:
        lines = [
            f"n={self.n}", f"f={self.f}", f"gst={self.gst}", f"delta={self.delta}",
            f"base_timeout={self.base_timeout}", f"seed={self.seed}",
            f"instances={self.instances}", f"beta={self.beta_mode}", f"delay={self.delay}",
            f"drop_probability={self.drop_probability!r}",
            f"pre_gst_max_delay={self.pre_gst_max_delay}",
            f"max_time={self.max_time}", f"max_events={self.max_events}",
        ]
        if self.isolate is not None:
            lines.append(f"isolate={self.isolate}")
        lines.extend(f"byzantine={a.format()}" for a in self.adversaries)
        return "\n".join(lines) + "\n"


def check_scenario(s: Scenario):
    if s.n < 1:
        raise ScenarioError("n ≥ 1 violated")
    if s.f < 0:
        raise ScenarioError("f ≥ 0 violated")
    if s.n < 3 * s.f + 1:
        raise ScenarioError(f"n ≥ 3f+1 violated (n={s.n}, f={s.f})")
    if len(s.adversaries) > s.f:
        raise ScenarioError(f"more adversaries than f ({len(s.adversaries)} > {s.f})")
    procs = [a.process for a in s.adversaries]
    if len(set(procs)) != len(procs):
        raise ScenarioError("duplicate adversary process")
    if any(not 0 <= p < s.n for p in procs):
        raise ScenarioError("adversary process out of range")
    if s.delta <= 0:
        raise ScenarioError("delta > 0 violated")
    if s.base_timeout <= 0:
        raise ScenarioError("base_timeout > 0 violated")
    if s.gst < 0:
        raise ScenarioError("gst ≥ 0 violated")
    if s.instances < 1:
        raise ScenarioError("instances ≥ 1 violated")
    if s.delay not in ("uniform", "fixed"):
        raise ScenarioError(f"delay must be 'uniform' or 'fixed', got {s.delay!r}")
    if not 0.0 <= s.drop_probability <= 1.0:
        raise ScenarioError("drop_probability in [0, 1] violated")
    if s.pre_gst_max_delay < 1:
        raise ScenarioError("pre_gst_max_delay ≥ 1 violated")
    if s.isolate is not None and not 0 <= s.isolate < s.n:
        raise ScenarioError("isolate out of range")
    if s.max_time <= 0 or s.max_events <= 0:
        raise ScenarioError("bound must be finite and positive")


_INT_KEYS = ("n", "f", "gst", "delta", "base_timeout", "seed", "instances",
             "pre_gst_max_delay", "max_time", "max_events", "isolate")


def parse_scenario(text: str) -> Scenario:
    """Parse ``key=value`` lines; ``#`` starts a comment. Unknown keys are rejected."""
    fields: dict = {}
    adversaries = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ScenarioError(f"line {lineno}: expected key=value")
        try:
            if key in _INT_KEYS:
                fields[key] = int(value)
            elif key == "drop_probability":
                fields[key] = float(value)
            elif key == "delay":
                fields[key] = value
            elif key == "byzantine":
                adversaries.append(AdversarySpec.parse(value))
            elif key == "beta":
                fields["rejected_values"] = _parse_beta(value)
            else:
                raise ScenarioError(f"line {lineno}: unknown key {key!r}")
        except ScenarioError:
            raise
        except ValueError as e:
            raise ScenarioError(f"line {lineno}: bad value for {key}: {e}") from None
    for required in ("n", "f"):
        if required not in fields:
            raise ScenarioError(f"missing required key {required!r}")
    return Scenario(adversaries=tuple(adversaries), **fields)


def _parse_beta(value: str) -> Tuple[bytes, ...]:
    if value == "always_true":
        return ()
    mode, _, listed = value.partition(":")
    if mode != "reject_listed" or not listed:
        raise ScenarioError(f"beta must be always_true or reject_listed:<values>, got {value!r}")
    return tuple(v.encode() for v in listed.split(",") if v)
