"""Exhaustive enumeration of symmetric circulant connection sets."""

from __future__ import annotations

import math
import os

# The full n <= 32 sweep covers about 2e5 graphs and takes several minutes;
# it runs when GLOBALSUM_FULL_SWEEP=1, otherwise n stops at 24.
FULL_SWEEP = os.environ.get("GLOBALSUM_FULL_SWEEP", "") not in ("", "0")
MAX_CIRCULANT_N = 32 if FULL_SWEEP else 24


def symmetric_connection_sets(n: int, connected_only: bool = False):
    """Every nonempty ``S`` with ``S = -S`` in ``Z_n \\ {0}``, as sorted tuples."""
    half = n // 2
    for mask in range(1, 1 << half):
        base = [i + 1 for i in range(half) if mask >> i & 1]
        if connected_only and math.gcd(n, *base) != 1:
            continue
        yield tuple(sorted(set(base) | {n - s for s in base}))
