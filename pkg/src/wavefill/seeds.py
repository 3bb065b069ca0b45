"""Deterministic seed derivation for reproducible experiment fan-out.

A master seed plus a tuple of integer stream labels maps to a 64-bit
child seed through a splitmix64 chain:

    state = master
    for part in parts:
        state = splitmix64(state XOR (part * GOLDEN mod 2^64))

The derivation is order-sensitive, so (rate, rep) and (rep, rate) give
unrelated streams. Manifests record the master seed and this scheme;
replaying any repetition only needs the logged child seed.
"""

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One splitmix64 output step (Steele, Lea, Flood 2014)."""
    x = (x + GOLDEN) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def derive_seed(master: int, *parts: int) -> int:
    """Derive a child seed from a master seed and integer stream labels."""
    state = master & MASK64
    for part in parts:
        state = splitmix64(state ^ ((part * GOLDEN) & MASK64))
    return state


def encode_fraction(x: float) -> int:
    """Stable integer label for a fractional quantity (e.g. a rate)."""
    return int(round(x * 1_000_000))
