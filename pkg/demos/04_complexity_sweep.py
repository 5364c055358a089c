"""Message counts against system size.

Failure-free runs send exactly n + 2n^2 messages; a silent first leader adds
one round-change round whose cost also grows quadratically.

Run: python3 demos/04_complexity_sweep.py
"""

from ibft.harness import measure_complexity, measure_round_change_complexity
from ibft.scenario import Scenario

sizes = [4, 7, 10, 13, 16, 32]
base = Scenario(n=4, f=1)
normal = dict(measure_complexity(base, sizes))
rounds = dict(measure_round_change_complexity(base, sizes))

print(f"{'n':>4} {'sends':>7} {'n+2n^2':>7} {'round>=2':>9} {'3n^2+n':>7}")
for n in sizes:
    print(f"{n:>4} {normal[n]:>7} {n + 2 * n * n:>7} {rounds[n]:>9} {3 * n * n + n:>7}")
print("ratio 16->32:", round(normal[32] / normal[16], 3))
