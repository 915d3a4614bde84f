"""Compiled inner loops for batched Lepski decisions.

Both kernels walk each neighbour path once.  Robustness thresholds are
processed in ascending order: threshold ``j`` is exited at the first ``r``
whose running maximum of ``N_r^2 / (g^2 r)`` exceeds ``sigma_j^2``, which is
the same first-exit rule (and the same floating point operations) as the
vectorised numpy path.
"""

from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def tree_errors(ordered_y, ordered_leaf, tau_num, grid_n, thr, y):
    """Calibration error counts for a batch of integer tau vectors.

    Parameters
    ----------
    ordered_y : int64 (m, n)
        Reference labels along each query's neighbour order.
    ordered_leaf : int64 (m, n)
        0-based leaf of each reference point along the same order.
    tau_num : int64 (B, L)
    grid_n : int
    thr : float64 (S,)
        Squared robustness levels, ascending.
    y : int64 (m,)
        Calibration labels.

    Returns
    -------
    int64 (B, S)
    """
    B = tau_num.shape[0]
    m, n = ordered_y.shape
    S = thr.shape[0]
    g2 = float(grid_n) * float(grid_n)
    out = np.zeros((B, S), dtype=np.int64)
    for b in range(B):
        for i in range(m):
            N = 0
            M = 0.0
            j = 0
            yi = y[i]
            for p in range(n):
                N += grid_n * ordered_y[i, p] - tau_num[b, ordered_leaf[i, p]]
                if p == n - 1:
                    break
                Nf = float(N)
                stat = Nf * Nf / (g2 * float(p + 1))
                if stat > M:
                    M = stat
                    lab = 1 if N >= 0 else 0
                    while j < S and M > thr[j]:
                        if lab != yi:
                            out[b, j] += 1
                        j += 1
                    if j == S:
                        break
            if j < S:
                lab = 1 if N >= 0 else 0
                if lab != yi:
                    for jj in range(j, S):
                        out[b, jj] += 1
    return out


@numba.njit(cache=True, nogil=True)
def first_exit(N, grid_n, thr):
    """Lepski ``k`` and label for each row of integer numerators ``N`` (R, n).

    Returns ``(khat, labels)`` of shape (R, S).
    """
    R, n = N.shape
    S = thr.shape[0]
    g2 = float(grid_n) * float(grid_n)
    khat = np.empty((R, S), dtype=np.int64)
    lab = np.empty((R, S), dtype=np.int8)
    for i in range(R):
        M = 0.0
        j = 0
        for p in range(n - 1):
            Nf = float(N[i, p])
            stat = Nf * Nf / (g2 * float(p + 1))
            if stat > M:
                M = stat
                while j < S and M > thr[j]:
                    khat[i, j] = p + 1
                    lab[i, j] = 1 if N[i, p] >= 0 else 0
                    j += 1
                if j == S:
                    break
        for jj in range(j, S):
            khat[i, jj] = n
            lab[i, jj] = 1 if N[i, n - 1] >= 0 else 0
    return khat, lab
