"""Trace checkers, run reports, complexity sweeps, seed fuzzing and bounded exploration."""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from .adversary import AdversarySpec
from .core import (
    BOTTOM,
    PreparedState,
    Prepare,
    PrePrepare,
    RoundChange,
    SignedMessage,
    Signer,
    SystemConfig,
    leader,
    max_faulty,
    quorum_size,
    validate_message,
)
from .justification import (
    PrepareCertificate,
    RoundChangeCertificate,
    justify_pre_prepare,
    validate_with_certificate,
)
from .rng import SplitMix64, mix_seed
from .scenario import Scenario
from .simnet import NetConfig, RunTrace, Simulation, deliver_semantics_check, run


@dataclass(frozen=True)
class Verdict:
    name: str
    passed: bool
    detail: str = ""

    def __bool__(self):
        return self.passed


# checkers

def _decisions(trace: RunTrace):
    correct = set(trace.correct)
    for time, kind, pid, data in trace.records:
        if kind == "decide" and pid in correct:
            yield time, pid, data


def check_agreement(trace: RunTrace) -> Verdict:
    by_instance: Dict[int, set] = defaultdict(set)
    for _, _, (lam, value, _) in _decisions(trace):
        by_instance[lam].add(value)
    bad = {lam: vals for lam, vals in by_instance.items() if len(vals) > 1}
    if bad:
        lam = min(bad)
        return Verdict("agreement", False, f"instance {lam} decided {sorted(v.hex() for v in bad[lam])}")
    return Verdict("agreement", True)


def check_validity(trace: RunTrace, beta: Callable[[bytes], bool]) -> Verdict:
    for _, pid, (lam, value, _) in _decisions(trace):
        if not beta(value):
            return Verdict("validity", False, f"p{pid} decided rejected value {value.hex()} in {lam}")
    return Verdict("validity", True)


def check_termination(trace: RunTrace, scenario: Scenario) -> Verdict:
    decided = defaultdict(set)
    for time, pid, (lam, _, _) in _decisions(trace):
        if time <= scenario.max_time:
            decided[pid].add(lam)
    wanted = set(range(scenario.instances))
    missing = [p for p in trace.correct if not wanted <= decided[p]]
    if missing:
        return Verdict("termination", False, f"undecided correct processes {missing}")
    return Verdict("termination", True)


def prepared_claims(trace: RunTrace) -> Dict[int, Dict[Tuple[int, bytes], set]]:
    """instance -> (round, value) -> correct processes that prepared it."""
    correct = set(trace.correct)
    out: Dict[int, Dict[Tuple[int, bytes], set]] = defaultdict(lambda: defaultdict(set))
    for _, kind, pid, data in trace.records:
        if kind == "rule_fire" and data[1] == "R2" and pid in correct:
            out[data[0]][(data[2], data[3])].add(pid)
    return out


def check_prepared_unique(trace: RunTrace) -> Verdict:
    """No two correct processes prepare different values in the same round."""
    for lam, claims in prepared_claims(trace).items():
        rounds: Dict[int, set] = defaultdict(set)
        for r, v in claims:
            rounds[r].add(v)
        for r, vals in rounds.items():
            if len(vals) > 1:
                return Verdict("prepared_unique", False, f"instance {lam} round {r} prepared {len(vals)} values")
    return Verdict("prepared_unique", True)


def check_timeliness(trace: RunTrace, scenario: Scenario) -> Verdict:
    return Verdict("timeliness", deliver_semantics_check(trace, NetConfig.from_scenario(scenario)))


_PROBE = b"lock-probe"


def lock_counterexamples(trace: RunTrace, config: SystemConfig) -> List[SignedMessage]:
    """Build the most permissive PRE-PREPAREs the run's messages allow and
    return those that are justified despite contradicting a value prepared by
    f+1 correct processes in an earlier round.

    Correct processes contribute only the ROUND-CHANGEs they actually sent;
    faulty processes may contribute any ROUND-CHANGE or PREPARE they can sign.
    """
    n, f = config.n, config.f
    q = quorum_size(config)
    correct = set(trace.correct)
    faulty = [p for p in range(n) if p not in correct]
    messages = trace.messages()
    found: List[SignedMessage] = []
    for lam, claims in prepared_claims(trace).items():
        targets = [(r, v) for (r, v), who in claims.items() if len(who) >= f + 1]
        if not targets:
            continue
        prepares: Dict[Tuple[int, bytes], Dict[int, SignedMessage]] = defaultdict(dict)
        rcs: Dict[int, Dict[int, List[SignedMessage]]] = defaultdict(lambda: defaultdict(list))
        values = {_PROBE}
        top = 1
        for m in messages:
            p = m.payload
            if p.instance != lam:
                continue
            top = max(top, p.round)
            if m.value is not None:
                values.add(m.value)
            if isinstance(p, Prepare) and validate_message(m, config):
                prepares[(p.round, p.value)].setdefault(m.sender, m)
            elif (isinstance(p, RoundChange) and m.sender in correct
                  and validate_with_certificate(m, config)):
                rcs[p.round][m.sender].append(m)
        signers = {p: Signer(p) for p in range(n)}

        certs: Dict[Tuple[int, bytes], PrepareCertificate] = {}

        def certificate(pr, pv):
            # best effort: every prepare seen for (pr, pv) plus the faulty ones
            if (pr, pv) in certs:
                return certs[(pr, pv)]
            have = dict(prepares.get((pr, pv), {}))
            for p in faulty:
                have.setdefault(p, signers[p].sign(Prepare(lam, pr, pv)))
            certs[(pr, pv)] = PrepareCertificate(tuple(have[s] for s in sorted(have)))
            return certs[(pr, pv)]

        def attempt(r2, v2, chosen):
            if len({m.sender for m in chosen}) < q:
                return
            pp = signers[leader(lam, r2, n)].sign(
                PrePrepare(lam, r2, v2), RoundChangeCertificate(tuple(chosen)))
            if justify_pre_prepare(pp, config):
                found.append(pp)

        for r, v in targets:
            for r2 in range(r + 1, top + 2):
                sent = {p: rcs[r2][p] for p in sorted(correct) if rcs[r2][p]}
                # J1: a quorum of bottom ROUND-CHANGEs
                bottoms = [next((m for m in sent[p] if m.payload.prepared.is_bottom), None)
                           for p in sent]
                bottoms = [m for m in bottoms if m is not None]
                bottoms += [signers[p].sign(RoundChange(lam, r2, BOTTOM)) for p in faulty]
                attempt(r2, _PROBE, bottoms[:q])
                for v2 in sorted(values):
                    if v2 == v:
                        continue
                    for pr in [None] + list(range(1, r2)):
                        if pr is None:
                            forged = [signers[p].sign(RoundChange(lam, r2, BOTTOM)) for p in faulty]
                        else:
                            cert = certificate(pr, v2)
                            forged = [signers[p].sign(RoundChange(lam, r2, PreparedState(pr, v2)), cert)
                                      for p in faulty]
                        # correct entries whose claims do not outrank the forged anchor
                        low = []
                        for msgs in sent.values():
                            for m in msgs:
                                c = m.payload.prepared
                                if (c.round is None
                                        or (pr is not None and (c.round < pr or (c.round, c.value) == (pr, v2)))):
                                    low.append(m)
                                    break
                        attempt(r2, v2, forged + low)
                        # every correct entry as sent, whatever it claims
                        as_sent = [msgs[0] for msgs in sent.values()]
                        attempt(r2, v2, forged + as_sent)
                        attempt(r2, v2, forged + as_sent[:max(q - len(forged), 0)])
    return found


def check_lock_respected(trace: RunTrace, config: SystemConfig) -> Verdict:
    found = lock_counterexamples(trace, config)
    if found:
        p = found[0].payload
        return Verdict("lock_respected", False, f"justified PRE-PREPARE round {p.round} value {p.value.hex()}")
    return Verdict("lock_respected", True)


# reports

@dataclass
class RunReport:
    decided: Dict[int, List[Tuple[int, bytes, int, int]]]
    messages: Dict[str, int]
    total_sends: int
    round_change_sends: int
    latency_in_delays: Optional[float]
    rounds_used: int
    verdicts: List[Verdict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.verdicts)

    def failures(self) -> List[str]:
        return [v.name for v in self.verdicts if not v]

    def summary(self) -> dict:
        return {
            "decided": {str(p): [[lam, v.hex(), t, r] for lam, v, t, r in ds]
                        for p, ds in sorted(self.decided.items())},
            "messages": dict(sorted(self.messages.items())),
            "total_sends": self.total_sends,
            "round_change_sends": self.round_change_sends,
            "latency_in_delays": self.latency_in_delays,
            "rounds_used": self.rounds_used,
            "verdicts": {v.name: v.passed for v in self.verdicts},
        }

    def to_text(self) -> str:
        lines = []
        for p, ds in sorted(self.decided.items()):
            for lam, v, t, r in ds:
                lines.append(f"metric\tdecided.p{p}.inst{lam}\tvalue={v.hex()} time={t} round={r}")
        for kind, count in sorted(self.messages.items()):
            lines.append(f"metric\tsends.{kind}\t{count}")
        lines.append(f"metric\tsends.total\t{self.total_sends}")
        lines.append(f"metric\tsends.round_change_rounds\t{self.round_change_sends}")
        lat = "-" if self.latency_in_delays is None else repr(self.latency_in_delays)
        lines.append(f"metric\tlatency_in_delays\t{lat}")
        lines.append(f"metric\trounds_used\t{self.rounds_used}")
        for v in self.verdicts:
            lines.append(f"verdict\t{v.name}\t{'pass' if v else 'fail'}"
                         + (f"\t{v.detail}" if v.detail else ""))
        lines.append("summary\t" + json.dumps(self.summary(), sort_keys=True))
        return "\n".join(lines) + "\n"


def build_report(trace: RunTrace, scenario: Scenario, lock_check: bool = True) -> RunReport:
    """Fold a trace into metrics and invariant verdicts."""
    correct = set(trace.correct)
    decided: Dict[int, list] = {p: [] for p in sorted(correct)}
    for time, pid, (lam, value, rnd) in _decisions(trace):
        decided[pid].append((lam, value, time, rnd))
    messages: Counter = Counter()
    rc_sends = 0
    rounds_used = 1
    for time, kind, pid, data in trace.records:
        if kind == "send":
            p = data[2].payload
            messages[p.kind] += 1
            if p.round >= 2:
                rc_sends += 1
        elif kind == "rule_fire" and pid in correct and data[1] in ("R4", "R5"):
            rounds_used = max(rounds_used, data[3])
    latency = None
    if scenario.delay == "fixed":
        first = [ds[0][2] for ds in decided.values() if ds]
        if first and len(first) == len(decided):
            latency = max(first) / scenario.delta
    verdicts = [
        check_agreement(trace),
        check_validity(trace, scenario.beta),
        check_termination(trace, scenario),
        check_prepared_unique(trace),
        check_timeliness(trace, scenario),
    ]
    if lock_check:
        verdicts.append(check_lock_respected(trace, scenario.config()))
    return RunReport(decided, dict(messages), sum(messages.values()), rc_sends, latency,
                     rounds_used, verdicts)


def run_scenario(scenario: Scenario, lock_check: bool = True) -> Tuple[RunTrace, RunReport]:
    trace = run(scenario)
    return trace, build_report(trace, scenario, lock_check)


# complexity

def _failure_free(template: Scenario, n: int) -> Scenario:
    return template.with_(n=n, f=max_faulty(n), adversaries=(), gst=0, delay="fixed",
                          rejected_values=(), isolate=None)


def measure_complexity(template: Scenario, n_values: Iterable[int]) -> List[Tuple[int, int]]:
    """(n, total point-to-point sends) of a failure-free run for each n."""
    out = []
    for n in n_values:
        trace = run(_failure_free(template, n))
        out.append((n, sum(1 for r in trace.records if r[1] == "send")))
    return out


def measure_round_change_complexity(template: Scenario,
                                    n_values: Iterable[int]) -> List[Tuple[int, int]]:
    """(n, sends for rounds >= 2) when the round-1 leader is silent."""
    out = []
    for n in n_values:
        s = _failure_free(template, n)
        s = s.with_(adversaries=(AdversarySpec(leader(0, 1, n), "silent"),))
        trace = run(s)
        sends = sum(1 for r in trace.records if r[1] == "send" and r[3][2].payload.round >= 2)
        out.append((n, sends))
    return out


# fuzzing

@dataclass
class FuzzReport:
    runs: int = 0
    failures: List[Tuple[int, str]] = field(default_factory=list)
    verdict_failures: Counter = field(default_factory=Counter)
    max_rounds: int = 0
    prepared_quorum_runs: int = 0

    @property
    def passed(self) -> bool:
        return not self.failures

    def failing_seeds(self) -> List[int]:
        return sorted({s for s, _ in self.failures})

    def to_text(self) -> str:
        lines = [f"metric\tfuzz.runs\t{self.runs}",
                 f"metric\tfuzz.max_rounds\t{self.max_rounds}"]
        for name in sorted(self.verdict_failures):
            lines.append(f"metric\tfuzz.failures.{name}\t{self.verdict_failures[name]}")
        for seed, name in self.failures:
            lines.append(f"failure\t{seed}\t{name}")
        lines.append(f"verdict\tfuzz\t{'pass' if self.passed else 'fail'}")
        return "\n".join(lines) + "\n"


def fuzz_scenario(template: Scenario, seed: int, gst_max: Optional[int] = None) -> Scenario:
    s = template.with_(seed=seed)
    if gst_max is not None:
        s = s.with_(gst=SplitMix64(mix_seed(seed, 0x475354)).randint(0, gst_max))
    return s


def _fuzz_one(args):
    template, seed, gst_max, lock_check = args
    s = fuzz_scenario(template, seed, gst_max)
    trace = run(s)
    report = build_report(trace, s, lock_check)
    prepared = any(len(who) >= s.f + 1 for claims in prepared_claims(trace).values()
                   for who in claims.values())
    return seed, report.failures(), report.rounds_used, prepared


def fuzz(template: Scenario, seeds: Iterable[int], gst_max: Optional[int] = None,
         lock_check: bool = True, workers: int = 1) -> FuzzReport:
    """Run every seed, apply all checkers, collect failing (seed, verdict) pairs."""
    jobs = [(template, seed, gst_max, lock_check) for seed in seeds]
    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_fuzz_one, jobs, chunksize=16))
    else:
        results = [_fuzz_one(j) for j in jobs]
    report = FuzzReport()
    for seed, failed, rounds, prepared in results:
        report.runs += 1
        report.max_rounds = max(report.max_rounds, rounds)
        report.prepared_quorum_runs += prepared
        for name in failed:
            report.failures.append((seed, name))
            report.verdict_failures[name] += 1
    return report


# bounded exploration

@dataclass
class ExploreResult:
    passed: bool
    complete: bool
    schedules: int
    violations: List[Tuple[Tuple[Tuple[int, int], ...], str]] = field(default_factory=list)
    digests: set = field(default_factory=set)


def explore_scenario(adversary: Optional[AdversarySpec] = None, n: int = 4,
                     base_timeout: int = 250, delta: int = 100) -> Scenario:
    return Scenario(n=n, f=max_faulty(n), delay="fixed", delta=delta, base_timeout=base_timeout,
                    adversaries=(adversary,) if adversary else (), max_events=20_000)


def replay(scenario: Scenario, forced: Sequence[Tuple[int, int]], window: int,
           round_bound: int) -> Tuple[RunTrace, List[int]]:
    """Run with the given (choice point, index) overrides; return the trace and
    the number of candidates seen at every choice point."""
    overrides = dict(forced)
    seen: List[int] = []

    def chooser(k):
        i = len(seen)
        seen.append(k)
        c = overrides.get(i, 0)
        return c if c < k else 0

    sim = Simulation(scenario, chooser=chooser, window=window, max_round=round_bound)
    return sim.run(), seen


def explore(n: int = 4, round_bound: int = 2, reorder_bound: int = 2, *,
            adversary: Optional[AdversarySpec] = None, max_reorders: int = 2,
            budget: int = 5000, base_timeout: int = 250) -> ExploreResult:
    """Enumerate delivery orders where each step may take any of the first
    ``reorder_bound + 1`` pending events and at most `max_reorders` steps
    deviate from time order. Agreement must hold in every explored schedule.

    Stops after `budget` schedules and reports ``complete=False``.
    """
    if n != 4:
        raise ValueError("exploration is only budgeted for n=4")
    scenario = explore_scenario(adversary, n, base_timeout)
    result = ExploreResult(True, True, 0)
    stack: List[Tuple[Tuple[int, int], ...]] = [()]
    while stack:
        if result.schedules >= budget:
            result.complete = False
            break
        forced = stack.pop()
        trace, seen = replay(scenario, forced, reorder_bound, round_bound)
        result.schedules += 1
        result.digests.add(trace.digest())
        verdict = check_agreement(trace)
        if not verdict:
            result.passed = False
            result.violations.append((forced, verdict.detail))
        if len(forced) < max_reorders:
            start = forced[-1][0] + 1 if forced else 0
            for step in range(len(seen) - 1, start - 1, -1):
                for c in range(seen[step] - 1, 0, -1):
                    stack.append(forced + ((step, c),))
    return result
