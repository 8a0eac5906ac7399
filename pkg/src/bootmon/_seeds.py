"""Deterministic seed derivation for benchmark cells and bootstrap replicas.

Every randomized unit of work (a bootstrap replica, a benchmark cell, a
synthetic dataset) gets its own integer seed derived from a master seed and
a tuple of tokens via a splitmix64-style hash. Derivation is pure integer
arithmetic, so identical inputs give identical seeds on every platform and
under any scheduling of the work.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _mix(z: int) -> int:
    """splitmix64 finalizer."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _fnv1a(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def derive_seed(master: int, *tokens: object) -> int:
    """Derive a 63-bit seed from ``master`` and a sequence of tokens.

    Tokens are folded in order through FNV-1a on their string form, mixing
    the running state with splitmix64 after each. Subsets of a benchmark
    therefore reproduce the corresponding cells of a full run exactly.
    """
    state = _mix((int(master) + _GOLDEN) & _MASK64)
    for tok in tokens:
        state = _mix(state ^ _fnv1a(str(tok).encode("utf-8")))
    return state & ((1 << 63) - 1)
