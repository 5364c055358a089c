"""Portable seeded random stream (SplitMix64).

The algorithm is fixed so traces can be reproduced bit-for-bit by any
implementation: state advances by 0x9E3779B97F4A7C15 and is finalised with
the standard SplitMix64 mixer. ``randint`` reduces by modulo and ``random``
takes the top 53 bits.
"""

MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)

    def randint(self, lo: int, hi: int) -> int:
        """Integer in [lo, hi], both inclusive."""
        return lo + self.next_u64() % (hi - lo + 1)

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))


def mix_seed(*parts: int) -> int:
    """Combine integers into one 64-bit seed, order-sensitive."""
    acc = 0x6A09E667F3BCC909
    for p in parts:
        acc = SplitMix64(acc ^ (p & MASK)).next_u64()
    return acc
