"""Hot numeric kernels, each with a numba path and a pure-numpy path.

The public names (``qn_gap``, ``umcd_reweighted``, ``qn_gap_batch``,
``umcd_batch``) are bound to the numba versions when
:data:`latiso._accel.NUMBA_ENABLED` is true and to the numpy versions
otherwise. Both variants are importable explicitly for benchmarking and for
cross-checking in the test suite.

Conventions shared by every kernel:

* ``qn_gap`` returns the ``k``-th smallest (1-based) value of
  ``|x_i - x_j|, i < j``; scaling to a Qn estimate happens in
  :mod:`latiso.robust.scale`.
* univariate MCD kernels return ``(location, variance, n_weighted, status)``
  where ``status`` is 0 (ok), 1 (zero raw variance) or 2 (fewer than two
  points kept by reweighting).
* batch kernels take per-block samples for two orientations as flat arrays
  with offsets; row ``b`` of ``masks`` picks orientation 1 for each block.
"""

import numpy as np

from ._accel import NUMBA_ENABLED, njit

UMCD_OK = 0
UMCD_DEGENERATE = 1
UMCD_TOO_FEW = 2


# ---------------------------------------------------------------------------
# Qn order statistic
# ---------------------------------------------------------------------------

def _qn_gap_sorted_py(y, k):
    n = y.shape[0]
    lo = np.empty(n, np.int64)
    hi = np.empty(n, np.int64)
    for i in range(n):
        lo[i] = i + 1
        hi[i] = n - 1
    meds = np.empty(n)
    wts = np.empty(n, np.int64)
    p = np.empty(n, np.int64)
    q = np.empty(n, np.int64)
    while True:
        total = 0
        for i in range(n):
            if hi[i] >= lo[i]:
                total += hi[i] - lo[i] + 1
        if total <= n + 16:
            below = 0
            for i in range(n):
                below += lo[i] - i - 1
            buf = np.empty(total)
            m = 0
            for i in range(n):
                for j in range(lo[i], hi[i] + 1):
                    buf[m] = y[j] - y[i]
                    m += 1
            buf.sort()
            return buf[k - below - 1]

        # weighted median of the row medians of the remaining candidates
        m = 0
        for i in range(n):
            if hi[i] >= lo[i]:
                meds[m] = y[(lo[i] + hi[i]) // 2] - y[i]
                wts[m] = hi[i] - lo[i] + 1
                m += 1
        order = np.argsort(meds[:m])
        acc = 0
        pivot = meds[order[m - 1]]
        for t in range(m):
            acc += wts[order[t]]
            if 2 * acc >= total:
                pivot = meds[order[t]]
                break

        n_less = 0
        j = 1
        for i in range(n):
            if j < i + 1:
                j = i + 1
            while j < n and y[j] - y[i] < pivot:
                j += 1
            p[i] = j
            n_less += j - i - 1
        n_leq = 0
        j = 1
        for i in range(n):
            if j < i + 1:
                j = i + 1
            while j < n and y[j] - y[i] <= pivot:
                j += 1
            q[i] = j
            n_leq += j - i - 1

        if n_less < k <= n_leq:
            return pivot
        if k <= n_less:
            for i in range(n):
                if p[i] - 1 < hi[i]:
                    hi[i] = p[i] - 1
        else:
            for i in range(n):
                if q[i] > lo[i]:
                    lo[i] = q[i]


_qn_gap_sorted_nb = njit(_qn_gap_sorted_py)


def qn_gap_numba(x, k):
    """k-th smallest pairwise gap via row-bounded selection, O(n log n)."""
    y = np.sort(np.asarray(x, dtype=np.float64))
    return float(_qn_gap_sorted_nb(y, int(k)))


def qn_gap_numpy(x, k):
    """k-th smallest pairwise gap by materialising all n(n-1)/2 gaps."""
    y = np.sort(np.asarray(x, dtype=np.float64))
    i, j = np.triu_indices(y.shape[0], k=1)
    gaps = y[j] - y[i]
    return float(np.partition(gaps, k - 1)[k - 1])


# ---------------------------------------------------------------------------
# Exact univariate MCD with reweighting
# ---------------------------------------------------------------------------

def _umcd_reweighted_py(x, k, c_raw, cutoff, c_rew):
    n = x.shape[0]
    ys = np.sort(x)
    center = ys[n // 2]
    cs1 = np.zeros(n + 1)
    cs2 = np.zeros(n + 1)
    for i in range(n):
        d = ys[i] - center
        cs1[i + 1] = cs1[i] + d
        cs2[i + 1] = cs2[i] + d * d
    best = np.inf
    best_t = 0
    for t in range(n - k + 1):
        s1 = cs1[t + k] - cs1[t]
        s2 = cs2[t + k] - cs2[t]
        v = s2 - s1 * s1 / k
        if v < best:
            best = v
            best_t = t
    m = 0.0
    for i in range(best_t, best_t + k):
        m += ys[i]
    m /= k
    v = 0.0
    for i in range(best_t, best_t + k):
        v += (ys[i] - m) * (ys[i] - m)
    v /= k - 1
    if v <= 0.0:
        return m, 0.0, k, 1
    v_raw = v * c_raw
    mw = 0.0
    nw = 0
    for i in range(n):
        if (x[i] - m) * (x[i] - m) / v_raw <= cutoff:
            mw += x[i]
            nw += 1
    if nw < 2:
        return m, v_raw, nw, 2
    mw /= nw
    vw = 0.0
    for i in range(n):
        if (x[i] - m) * (x[i] - m) / v_raw <= cutoff:
            vw += (x[i] - mw) * (x[i] - mw)
    vw = vw / (nw - 1) * c_rew
    return mw, vw, nw, 0


_umcd_reweighted_nb = njit(_umcd_reweighted_py)


def umcd_reweighted_numba(x, k, c_raw, cutoff, c_rew):
    x = np.ascontiguousarray(x, dtype=np.float64)
    loc, var, nw, status = _umcd_reweighted_nb(x, int(k), float(c_raw), float(cutoff), float(c_rew))
    return float(loc), float(var), int(nw), int(status)


def umcd_reweighted_numpy(x, k, c_raw, cutoff, c_rew):
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    ys = np.sort(x)
    d = ys - ys[n // 2]
    cs1 = np.concatenate(([0.0], np.cumsum(d)))
    cs2 = np.concatenate(([0.0], np.cumsum(d * d)))
    s1 = cs1[k:] - cs1[: n - k + 1]
    s2 = cs2[k:] - cs2[: n - k + 1]
    t = int(np.argmin(s2 - s1 * s1 / k))
    window = ys[t : t + k]
    m = float(window.mean())
    v = float(((window - m) ** 2).sum() / (k - 1))
    if v <= 0.0:
        return m, 0.0, k, UMCD_DEGENERATE
    v_raw = v * c_raw
    keep = (x - m) ** 2 / v_raw <= cutoff
    nw = int(keep.sum())
    if nw < 2:
        return m, v_raw, nw, UMCD_TOO_FEW
    xw = x[keep]
    mw = float(xw.mean())
    vw = float(((xw - mw) ** 2).sum() / (nw - 1) * c_rew)
    return mw, vw, nw, UMCD_OK


# ---------------------------------------------------------------------------
# Batched kernels over block-rotation masks
# ---------------------------------------------------------------------------

def _gather(flat0, off0, flat1, off1, mask, buf):
    m = 0
    for j in range(mask.shape[0]):
        if mask[j]:
            src, a, b = flat1, off1[j], off1[j + 1]
        else:
            src, a, b = flat0, off0[j], off0[j + 1]
        for t in range(a, b):
            buf[m] = src[t]
            m += 1
    return m


_gather_nb = njit(_gather)


@njit
def _qn_gap_batch_nb(flat0, off0, flat1, off1, masks):
    n_rep = masks.shape[0]
    gaps = np.empty(n_rep)
    counts = np.empty(n_rep, np.int64)
    buf = np.empty(flat0.shape[0] + flat1.shape[0])
    for r in range(n_rep):
        m = _gather_nb(flat0, off0, flat1, off1, masks[r], buf)
        counts[r] = m
        if m < 2:
            gaps[r] = np.nan
            continue
        h = m // 2 + 1
        k = h * (h - 1) // 2
        y = np.sort(buf[:m])
        gaps[r] = _qn_gap_sorted_nb(y, k)
    return gaps, counts


@njit
def _umcd_batch_nb(flat0, off0, flat1, off1, masks, c_raw_by_n, cutoff, c_rew):
    n_rep = masks.shape[0]
    out = np.empty(n_rep)
    counts = np.empty(n_rep, np.int64)
    status = np.empty(n_rep, np.int64)
    buf = np.empty(flat0.shape[0] + flat1.shape[0])
    for r in range(n_rep):
        m = _gather_nb(flat0, off0, flat1, off1, masks[r], buf)
        counts[r] = m
        if m < 3:
            out[r] = np.nan
            status[r] = 2
            continue
        k = (m + 2) // 2
        loc, var, nw, st = _umcd_reweighted_nb(buf[:m].copy(), k, c_raw_by_n[m], cutoff, c_rew)
        out[r] = var
        status[r] = st
    return out, counts, status


def _concat_numpy(flat0, off0, flat1, off1, mask):
    parts = [
        flat1[off1[j] : off1[j + 1]] if mask[j] else flat0[off0[j] : off0[j + 1]]
        for j in range(mask.shape[0])
    ]
    return np.concatenate(parts) if parts else np.empty(0)


def qn_gap_batch_numba(flat0, off0, flat1, off1, masks):
    return _qn_gap_batch_nb(
        np.ascontiguousarray(flat0, np.float64),
        np.ascontiguousarray(off0, np.int64),
        np.ascontiguousarray(flat1, np.float64),
        np.ascontiguousarray(off1, np.int64),
        np.ascontiguousarray(masks, np.bool_),
    )


def qn_gap_batch_numpy(flat0, off0, flat1, off1, masks):
    n_rep = masks.shape[0]
    gaps = np.empty(n_rep)
    counts = np.empty(n_rep, np.int64)
    for r in range(n_rep):
        v = _concat_numpy(flat0, off0, flat1, off1, masks[r])
        m = v.shape[0]
        counts[r] = m
        if m < 2:
            gaps[r] = np.nan
            continue
        h = m // 2 + 1
        gaps[r] = qn_gap_numpy(v, h * (h - 1) // 2)
    return gaps, counts


def umcd_batch_numba(flat0, off0, flat1, off1, masks, c_raw_by_n, cutoff, c_rew):
    return _umcd_batch_nb(
        np.ascontiguousarray(flat0, np.float64),
        np.ascontiguousarray(off0, np.int64),
        np.ascontiguousarray(flat1, np.float64),
        np.ascontiguousarray(off1, np.int64),
        np.ascontiguousarray(masks, np.bool_),
        np.ascontiguousarray(c_raw_by_n, np.float64),
        float(cutoff),
        float(c_rew),
    )


def umcd_batch_numpy(flat0, off0, flat1, off1, masks, c_raw_by_n, cutoff, c_rew):
    n_rep = masks.shape[0]
    out = np.empty(n_rep)
    counts = np.empty(n_rep, np.int64)
    status = np.empty(n_rep, np.int64)
    for r in range(n_rep):
        v = _concat_numpy(flat0, off0, flat1, off1, masks[r])
        m = v.shape[0]
        counts[r] = m
        if m < 3:
            out[r], status[r] = np.nan, UMCD_TOO_FEW
            continue
        _, var, _, st = umcd_reweighted_numpy(v, (m + 2) // 2, c_raw_by_n[m], cutoff, c_rew)
        out[r], status[r] = var, st
    return out, counts, status


if NUMBA_ENABLED:
    qn_gap = qn_gap_numba
    umcd_reweighted = umcd_reweighted_numba
    qn_gap_batch = qn_gap_batch_numba
    umcd_batch = umcd_batch_numba
else:
    qn_gap = qn_gap_numpy
    umcd_reweighted = umcd_reweighted_numpy
    qn_gap_batch = qn_gap_batch_numpy
    umcd_batch = umcd_batch_numpy
