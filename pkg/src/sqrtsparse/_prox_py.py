"""Pure-numpy fallback for the sorted-L1 prox kernel.

Same contract as the compiled module; the block stack is kept in
preallocated arrays, but the pooling loop runs in the interpreter.
"""

import numpy as np


def decreasing_nonneg_projection(z: np.ndarray) -> np.ndarray:
    """Least-squares projection of z onto {u_1 >= u_2 >= ... >= u_p >= 0}."""
    p = z.shape[0]
    out = np.empty(p)
    sums = np.empty(p)
    cnts = np.empty(p, dtype=np.intp)
    k = 0
    for j in range(p):
        sums[k] = z[j]
        cnts[k] = 1
        # merge while block means violate the decreasing order
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
        out[pos:pos + cnts[b]] = m
        pos += cnts[b]
    return out
