# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel for the sorted-L1 proximal operator.

Pool-adjacent-violators pass over a block stack: O(p) after sorting,
called once per proximal-gradient iteration, hence the hot loop.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def decreasing_nonneg_projection(cnp.ndarray[cnp.float64_t, ndim=1] z not None):
    """Least-squares projection of z onto {u_1 >= u_2 >= ... >= u_p >= 0}.

    z is the descending-sorted magnitude vector already shifted by the
    penalty weights; the clip at zero commutes with the monotone pooling.
    """
    cdef Py_ssize_t p = z.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(p, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sums = np.empty(p, dtype=np.float64)
    cdef cnp.ndarray[cnp.npy_intp, ndim=1] cnts = np.empty(p, dtype=np.intp)
    cdef Py_ssize_t k = 0, j, b, pos, c
    cdef double m
    if p == 0:
        return out
    for j in range(p):
        sums[k] = z[j]
        cnts[k] = 1
        while k > 0 and sums[k - 1] * cnts[k] <= sums[k] * cnts[k - 1]:
            sums[k - 1] += sums[k]
            cnts[k - 1] += cnts[k]
            k -= 1
        k += 1
    pos = 0
    for b in range(k):
        m = sums[b] / cnts[b]
        if m < 0.0:
            m = 0.0
        for c in range(cnts[b]):
            out[pos] = m
            pos += 1
    return out
