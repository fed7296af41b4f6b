"""splitmix64 stream shared by the interpreter and the jitted fast path.

Both engines must draw the exact same numbers in the same order, so the
generator is tiny and explicit rather than borrowed from numpy/random.
"""

MASK = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, seed=0):
        self.state = int(seed) & MASK

    def next_u64(self):
        self.state = (self.state + GAMMA) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * MIX1) & MASK
        z = ((z ^ (z >> 27)) * MIX2) & MASK
        return z ^ (z >> 31)

    def below(self, n):
        """Integer in [0, n). Modulo bias is < 2**-50 for the n we use."""
        return self.next_u64() % n

    def random(self):
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def coin(self):
        return self.next_u64() >> 63

    def spawn(self, salt):
        """Independent child stream (used for per-run seeds in sweeps)."""
        child = SplitMix64(self.state ^ ((salt * GAMMA) & MASK))
        child.next_u64()
        return child
