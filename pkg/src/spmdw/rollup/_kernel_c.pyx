# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled rollup kernels; semantics identical to _kernel_py.

Accumulation order matches the pure kernel exactly (single forward pass),
so float results are bit-identical between backends.
"""

import array

cdef int NO_FLOOR = 127


def rollup_filtered(const int[:] anc, const double[:] values,
                    const signed char[:] statuses, int target_idx, int min_rank):
    cdef double total = 0.0
    cdef long long count = 0
    cdef int floor = NO_FLOOR
    cdef Py_ssize_t i, n = values.shape[0]
    for i in range(n):
        if anc[i] == target_idx and statuses[i] >= min_rank:
            total += values[i]
            count += 1
            if statuses[i] < floor:
                floor = statuses[i]
    return total, count, floor


def rollup_grouped(const int[:] anc, const double[:] values,
                   const signed char[:] statuses, Py_ssize_t n_groups, int min_rank):
    cdef Py_ssize_t i, n = values.shape[0]
    cdef long long g

    if n_groups == 0:
        return [], [], []

    sums_buf = array.array("d", bytes(8 * n_groups))
    counts_buf = array.array("q", bytes(8 * n_groups))
    floors_buf = array.array("i", [NO_FLOOR]) * n_groups
    cdef double[::1] csums = sums_buf
    cdef long long[::1] ccounts = counts_buf
    cdef int[::1] cfloors = floors_buf

    for i in range(n):
        g = anc[i]
        if 0 <= g < n_groups and statuses[i] >= min_rank:
            csums[g] += values[i]
            ccounts[g] += 1
            if statuses[i] < cfloors[g]:
                cfloors[g] = statuses[i]

    return list(sums_buf), list(counts_buf), list(floors_buf)
