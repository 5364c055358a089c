"""p3 is cut off until GST while the others decide. Once the network heals,
p3's ROUND-CHANGE reaches the decided processes, which answer with their
commit quorum, and p3 adopts the decision.

Run: python3 demos/05_laggard_sync.py
"""

from ibft.scenario import Scenario
from ibft.simnet import Simulation, format_record

scenario = Scenario(n=4, f=1, isolate=3, gst=5000, delay="fixed",
                    drop_probability=0.0, pre_gst_max_delay=100)
sim = Simulation(scenario)
trace = sim.run()

for rec in trace.records:
    time, kind, pid, data = rec
    if kind == "decide":
        print(format_record(rec))
    elif kind == "deliver" and pid == 3 and data[2].kind == "COMMIT" and data[1] != data[2].sender:
        print(format_record(rec), "  <- relayed")

print()
for replica in sim.replicas:
    print(f"p{replica.pid} log:", replica.log.dump().strip())
