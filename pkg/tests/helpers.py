"""Shared test utilities."""

from __future__ import annotations

import numpy as np


def circ_dist(a, b, modulus: float = 1.0):
    """Shortest circular distance between a and b on [0, modulus)."""
    d = np.abs(np.asarray(a) - np.asarray(b)) % modulus
    return np.minimum(d, modulus - d)


def pair_frequencies(est: np.ndarray, true: np.ndarray) -> np.ndarray:
    """Greedy nearest-circular-distance pairing of estimated to true tones.

    Sorting both lists and zipping them breaks at the 0/1 wraparound
    (0.9999 and 0.0001 are 2e-4 apart, not 1), so pairing must use the
    circular metric. Returns the circular error per true tone.
    """
    est = list(np.asarray(est, dtype=float))
    errs = np.full(len(true), np.nan)
    for i, f in enumerate(true):
        if not est:
            break
        d = circ_dist(np.array(est), f)
        j = int(np.argmin(d))
        errs[i] = d[j]
        est.pop(j)
    return errs


def pair_components(est: np.ndarray, true: np.ndarray) -> list[tuple[int, int]]:
    """Greedy circular pairing returning (true_index, est_index) tuples.

    Same metric as pair_frequencies but keeps the index mapping so callers
    can compare per-component attributes (amplitudes, powers) after pairing.
    """
    est = np.asarray(est, dtype=float)
    remaining = list(range(len(est)))
    pairs = []
    for i, f in enumerate(true):
        if not remaining:
            break
        d = circ_dist(est[remaining], f)
        j = int(np.argmin(d))
        pairs.append((i, remaining.pop(j)))
    return pairs
