"""Shared test helpers and the independent transport oracle."""

from functools import lru_cache


def emd_bruteforce(eta, gamma, cost):
    """Exact minimal transport work by dynamic programming over flow rows.

    Independent of the successive-shortest-path solver: enumerates row
    fills against remaining column capacities with memoisation, entirely
    in exact arithmetic.
    """
    n = len(eta)

    def row_fills(amount, caps):
        if len(caps) == 1:
            if amount <= caps[0]:
                yield (amount,)
            return
        for first in range(min(amount, caps[0]) + 1):
            for rest in row_fills(amount - first, caps[1:]):
                yield (first,) + rest

    @lru_cache(maxsize=None)
    def best(i, remaining):
        if i == n:
            return 0
        out = None
        for fill in row_fills(eta[i], remaining):
            here = sum(f * cost[i][j] for j, f in enumerate(fill) if f)
            total = here + best(i + 1, tuple(r - f for r, f in zip(remaining, fill)))
            if out is None or total < out:
                out = total
        return out

    return best(0, tuple(gamma))
