"""Counter-based deterministic random stream.

Every random decision in a run is a pure function of
``(seed, node, cycle, draw)``, so identical configurations replay
identical traffic regardless of execution order, engine implementation
or host platform.  The mixer is the splitmix64 finalizer chained over
the key components; all arithmetic is modulo 2**64 to match the C
implementation bit for bit.
"""
from __future__ import annotations

MASK64 = (1 << 64) - 1

_GOLDEN = 0x9E3779B97F4A7C15
_MUL_NODE = 0x9E3779B185EBCA87
_MUL_CYCLE = 0xC2B2AE3D27D4EB4F
_MUL_DRAW = 0x165667B19E3779F9


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def rng_u64(seed: int, node: int, cycle: int, draw: int) -> int:
    """Uniform 64-bit value for one decision point."""
    h = mix64((seed + _GOLDEN) & MASK64)
    h = mix64(h ^ ((node * _MUL_NODE) & MASK64))
    h = mix64(h ^ ((cycle * _MUL_CYCLE) & MASK64))
    h = mix64(h ^ ((draw * _MUL_DRAW) & MASK64))
    return h


def bernoulli_threshold(rate: float) -> tuple[int, bool]:
    """Map a probability to a (threshold, always) pair.

    An event fires when ``always`` or ``rng_u64(...) < threshold``.
    Rate 0 can never fire (threshold 0 is below every unsigned draw)
    and rate >= 1 always fires, without relying on float rounding.
    """
    if rate <= 0.0:
        return 0, False
    if rate >= 1.0:
        return 0, True
    return int(rate * 2.0**64), False
