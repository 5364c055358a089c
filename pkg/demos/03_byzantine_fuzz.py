"""Seed sweeps against each built-in adversary, with pre-GST chaos.

Every run is checked for agreement, validity, termination, the prepared
uniqueness invariant and the post-hoc certificate builder.

Run: python3 demos/03_byzantine_fuzz.py [seeds]
"""

import sys

from ibft.adversary import AdversarySpec
from ibft.harness import fuzz
from ibft.scenario import Scenario

seeds = range(int(sys.argv[1]) if len(sys.argv) > 1 else 100)

for strategy in ["silent", "crash_after:5", "equivocating_leader:a,b",
                 "stale_claim:1,w", "random_byzantine:17"]:
    for n, f in [(4, 1), (7, 2)]:
        template = Scenario(n=n, f=f, drop_probability=0.2, pre_gst_max_delay=2000,
                            adversaries=tuple(AdversarySpec.parse(f"{p}:{strategy}") for p in range(f)))
        r = fuzz(template, seeds, gst_max=10_000)
        print(f"{strategy:26s} n={n}  runs={r.runs}  max_round={r.max_rounds}  "
              f"failures={r.failures or 'none'}")
