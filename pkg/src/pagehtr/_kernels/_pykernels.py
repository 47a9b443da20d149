"""Pure-Python/numpy versions of the compiled kernels.

Results are identical to ``_ckernels``; only speed differs.
"""

import numpy as np


def levenshtein(a, b):
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    row = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        prev, row[0] = row[0], i
        for j, cb in enumerate(b, 1):
            cur = row[j]
            row[j] = min(prev + (ca != cb), cur + 1, row[j - 1] + 1)
            prev = cur
    return row[-1]


def levenshtein_matrix(a, alen, b, blen, chunk=1 << 20):
    """All-pairs distances, vectorized over pairs of equal length combos."""
    a = np.asarray(a)
    b = np.asarray(b)
    alen = np.asarray(alen, dtype=np.int64)
    blen = np.asarray(blen, dtype=np.int64)
    out = np.empty((len(a), len(b)), dtype=np.int32)
    for la in np.unique(alen):
        ia = np.flatnonzero(alen == la)
        for lb in np.unique(blen):
            ib = np.flatnonzero(blen == lb)
            if la == 0 or lb == 0:
                out[np.ix_(ia, ib)] = max(la, lb)
                continue
            pa, pb = np.meshgrid(ia, ib, indexing="ij")
            pa, pb = pa.ravel(), pb.ravel()
            for s in range(0, len(pa), chunk):
                xa = a[pa[s:s + chunk], :la]
                xb = b[pb[s:s + chunk], :lb]
                out[pa[s:s + chunk], pb[s:s + chunk]] = _batch_dp(xa, xb)
    return out


def _batch_dp(xa, xb):
    n, la = xa.shape
    lb = xb.shape[1]
    row = np.tile(np.arange(lb + 1, dtype=np.int32), (n, 1))
    for i in range(1, la + 1):
        prev = row.copy()
        row[:, 0] = i
        sub = (xb != xa[:, i - 1:i]).astype(np.int32)
        for j in range(1, lb + 1):
            row[:, j] = np.minimum(np.minimum(prev[:, j - 1] + sub[:, j - 1], prev[:, j] + 1),
                                   row[:, j - 1] + 1)
    return row[:, lb]


def im2col(x, kh, kw, stride):
    B, C, H, W = x.shape
    Ho = (H - kh) // stride + 1
    Wo = (W - kw) // stride + 1
    out = np.empty((B, C, kh, kw, Ho, Wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i, j] = x[:, :, i:i + stride * (Ho - 1) + 1:stride, j:j + stride * (Wo - 1) + 1:stride]
    return out.reshape(B, C * kh * kw, Ho * Wo)


def col2im(cols, C, H, W, kh, kw, stride):
    B = cols.shape[0]
    Ho = (H - kh) // stride + 1
    Wo = (W - kw) // stride + 1
    cols = cols.reshape(B, C, kh, kw, Ho, Wo)
    out = np.zeros((B, C, H, W), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * (Ho - 1) + 1:stride, j:j + stride * (Wo - 1) + 1:stride] += cols[:, :, i, j]
    return out
