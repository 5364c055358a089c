"""The round-1 leader is silent. After the first timeout everyone moves to
round 2, p1 collects a ROUND-CHANGE quorum and proposes.

Run: python3 demos/02_round_change.py
"""

from ibft.adversary import AdversarySpec
from ibft.scenario import Scenario
from ibft.simnet import format_record, run

scenario = Scenario(n=4, f=1, delay="fixed", delta=100, base_timeout=1000,
                    adversaries=(AdversarySpec(0, "silent"),))
trace = run(scenario)

for rec in trace.records:
    if rec[1] in ("rule_fire", "decide", "timer_fire"):
        print(format_record(rec))

# timeout at 1000, then ROUND-CHANGE, PRE-PREPARE, PREPARE, COMMIT: four hops
print()
print("decisions:", sorted((p, t, d[2]) for t, _, p, d in trace.of_kind("decide")))
