"""Four honest processes, fixed 100-unit hops: watch one instance decide.

Run: python3 demos/01_good_case.py
"""

from ibft.harness import build_report
from ibft.scenario import Scenario
from ibft.simnet import format_record, run

scenario = Scenario(n=4, f=1, delay="fixed", delta=100)
trace = run(scenario)

# The leader of round 1 is p0. Its PRE-PREPARE lands at t=100, everyone's
# PREPARE at t=200, the COMMITs at t=300.
for rec in trace.records:
    if rec[1] in ("rule_fire", "decide"):
        print(format_record(rec))

report = build_report(trace, scenario)
print()
print("latency in message delays:", report.latency_in_delays)
print("sends by kind:", report.messages, "total", report.total_sends)
print("verdicts:", {v.name: v.passed for v in report.verdicts})
