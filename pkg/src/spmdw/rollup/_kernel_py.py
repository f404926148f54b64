"""Pure-Python rollup kernels: reference implementation and fallback.

Both kernels accumulate in fact-array order, so the compiled twin produces
bit-identical floating point results.
"""

from __future__ import annotations

NO_FLOOR = 127  # sentinel above every status rank


def rollup_filtered(anc, values, statuses, target_idx, min_rank):
    """Sum/count/status-floor of facts whose mapped ancestor equals target.

    anc, values, statuses are parallel arrays; facts with status rank below
    min_rank are skipped. Returns (total, count, floor_rank).
    """
    total = 0.0
    count = 0
    floor = NO_FLOOR
    for i in range(len(values)):
        if anc[i] == target_idx and statuses[i] >= min_rank:
            total += values[i]
            count += 1
            if statuses[i] < floor:
                floor = statuses[i]
    return total, count, floor


def rollup_grouped(anc, values, statuses, n_groups, min_rank):
    """One pass computing rollup_filtered for every group id in [0, n_groups).

    Facts mapped to a negative group id are skipped. Returns parallel lists
    (sums, counts, floors) of length n_groups.
    """
    sums = [0.0] * n_groups
    counts = [0] * n_groups
    floors = [NO_FLOOR] * n_groups
    for i in range(len(values)):
        g = anc[i]
        if 0 <= g < n_groups and statuses[i] >= min_rank:
            sums[g] += values[i]
            counts[g] += 1
            if statuses[i] < floors[g]:
                floors[g] = statuses[i]
    return sums, counts, floors
