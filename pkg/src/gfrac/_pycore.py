"""Pure numpy versions of the compiled loops in ``_core``."""

import numpy as np


def resolvent_sum(c, q, lam):
    c = np.asarray(c, dtype=complex)
    q = np.asarray(q, dtype=complex)
    lam = np.asarray(lam, dtype=float)
    if c.shape != q.shape:
        raise ValueError("c and q must have the same shape")
    out = np.empty((c.shape[0], lam.size))
    mag = np.empty_like(out)
    # chunk over lambda to bound the T*K*J temporary
    step = max(1, 2**20 // max(1, c.size))
    for lo in range(0, lam.size, step):
        lj = lam[lo:lo + step]
        terms = c[:, :, None] / (q[:, :, None] + lj[None, None, :])
        out[:, lo:lo + step] = terms.real.sum(axis=1)
        mag[:, lo:lo + step] = np.abs(terms).sum(axis=1)
    return out, mag


def l1_march(a, lam, rhs, w, start):
    a = np.asarray(a, dtype=float)
    N = w.shape[0] - 1
    if rhs.shape != w.shape or lam.shape[0] != w.shape[1]:
        raise ValueError("shape mismatch in l1_march")
    if a.shape[0] < N:
        raise ValueError("need at least N weights")
    dw = np.zeros_like(w)
    dw[1:start + 1] = np.diff(w[:start + 1], axis=0)
    a0 = a[0]
    for n in range(start + 1, N + 1):
        h = a[n - 1:0:-1] @ dw[1:n] if n > 1 else 0.0
        w[n] = (a0 * w[n - 1] - h + rhs[n]) / (a0 + lam)
        dw[n] = w[n] - w[n - 1]
    return w
