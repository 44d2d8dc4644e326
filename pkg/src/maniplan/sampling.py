"""Deterministic low-discrepancy configuration sampling.

Joint-space samples come from a Halton sequence: one prime base per joint,
with the radical inverse of a shared, monotonically advancing index.  A run
is reseeded only by choosing a different ``seed_offset``; there is no hidden
RNG state anywhere in the sampler.
"""

from __future__ import annotations

import numpy as np

__all__ = ["first_primes", "radical_inverse", "HaltonState",
           "trial_seed_offset", "TRIAL_SEED_STRIDE"]

# Offset between consecutive trial streams: trial k uses seed_offset
# base + k * TRIAL_SEED_STRIDE so trials never share index ranges in practice.
TRIAL_SEED_STRIDE = 10_000


def first_primes(n: int) -> list[int]:
    """Return the first ``n`` primes (Halton bases, one per joint)."""
    primes: list[int] = []
    candidate = 2
    while len(primes) < n:
        if all(candidate % p for p in primes):
            primes.append(candidate)
        candidate += 1
    return primes


def radical_inverse(index: int, base: int) -> float:
    """Digit-reversed fraction of ``index`` in ``base``; in (0, 1) for index >= 1."""
    f = 0.0
    scale = 1.0 / base
    i = index
    while i > 0:
        f += (i % base) * scale
        scale /= base
        i //= base
    return f


class HaltonState:
    """Halton stream over a fixed-dimension joint space.

    The counter starts at 1 (index 0 maps to the degenerate all-zero point)
    and every draw advances it by one.  ``seed_offset`` shifts the whole
    sequence; two states with the same offset produce identical samples.
    """

    def __init__(self, dim: int, seed_offset: int = 0):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        if seed_offset < 0:
            raise ValueError("seed_offset must be >= 0")
        self.bases = first_primes(dim)
        self.index = 1
        self.seed_offset = seed_offset

    @property
    def dim(self) -> int:
        return len(self.bases)

    def next_unit(self) -> np.ndarray:
        """Next point in the open unit cube; advances the counter."""
        i = self.index + self.seed_offset
        u = np.array([radical_inverse(i, b) for b in self.bases])
        self.index += 1
        return u

    def next_sample(self, limits: np.ndarray) -> np.ndarray:
        """Next joint vector, affinely mapped into per-joint [lo, hi] limits.

        ``limits`` is a (dim, 2) array of [lo, hi] rows.
        """
        limits = np.asarray(limits, dtype=float)
        if limits.shape != (self.dim, 2):
            raise ValueError(f"limits must have shape ({self.dim}, 2)")
        u = self.next_unit()
        return limits[:, 0] + (limits[:, 1] - limits[:, 0]) * u


def trial_seed_offset(base: int, trial_index: int) -> int:
    """Per-trial reseeding policy: decorrelated but fully deterministic."""
    return base + trial_index * TRIAL_SEED_STRIDE
