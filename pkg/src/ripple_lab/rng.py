"""Counter-based per-trial random streams (SplitMix64).

Every Monte Carlo trial draws from its own stream, seeded by mixing the
master seed with the trial index.  Results therefore do not depend on how
trials are scheduled across workers.  The compiled kernel in kernels.py
implements the identical sequence on uint64; the two must stay in sync
draw for draw.
"""

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

INV_2_53 = 1.0 / 9007199254740992.0  # 2**-53


def mix64(z):
    """SplitMix64 finalizer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def stream_state(master_seed, trial):
    """Initial state of one trial's private stream."""
    return mix64(mix64(master_seed) + GOLDEN * (trial + 1))


class Stream:
    """Sequential SplitMix64 stream; Python twin of the kernel RNG."""

    __slots__ = ("state",)

    def __init__(self, master_seed, trial=0):
        self.state = stream_state(master_seed, trial)

    def next_u64(self):
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def uniform(self):
        # 53-bit mantissa draw in [0, 1)
        return (self.next_u64() >> 11) * INV_2_53

    def randbelow(self, m):
        # modulo bias is about m / 2**64, far below any tolerance used here
        return self.next_u64() % m
