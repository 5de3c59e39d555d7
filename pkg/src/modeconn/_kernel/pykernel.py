"""Pure numpy implementation of the hot kernels.

Semantics are shared with the compiled core in ``_core.pyx``: activation ids
are 0 (relu) and 1 (leaky relu with the given slope), loss ids are
0 (cross-entropy on logits) and 1 (half squared error).  The relu derivative
at exactly zero is 0; the leaky variant uses the slope there.
"""

from __future__ import annotations

import numpy as np

NAME = "python"


def _activate(z, act, slope):
    if act == 0:
        return np.maximum(z, 0.0)
    return np.where(z > 0.0, z, slope * z)


def _act_deriv_from_output(a, act, slope):
    if act == 0:
        return (a > 0.0).astype(np.float64)
    return np.where(a > 0.0, 1.0, slope)


def forward_logits(ws, bs, x, act, slope):
    """Network output rows for input rows x (no bias or activation at the top)."""
    a = x
    for l in range(len(ws) - 1):
        a = _activate(a @ ws[l] + bs[l], act, slope)
    return a @ ws[-1]


def _forward_acts(ws, bs, x, act, slope):
    acts = [x]
    for l in range(len(ws) - 1):
        acts.append(_activate(acts[-1] @ ws[l] + bs[l], act, slope))
    return acts


def _loss_delta(z, y, loss):
    n = z.shape[0]
    if loss == 0:
        zs = z - z.max(axis=1, keepdims=True)
        e = np.exp(zs)
        p = e / e.sum(axis=1, keepdims=True)
        return (p - y) / n
    return (z - y) / n


def grad_full(ws, bs, x, y, act, slope, loss):
    """Gradient of the mean loss over the given rows; returns (gws, gbs)."""
    depth = len(ws)
    acts = _forward_acts(ws, bs, x, act, slope)
    z = acts[-1] @ ws[-1]
    d = _loss_delta(z, y, loss)
    gws = [None] * depth
    gbs = [None] * (depth - 1)
    gws[depth - 1] = acts[depth - 1].T @ d
    for l in range(depth - 2, -1, -1):
        d = (d @ ws[l + 1].T) * _act_deriv_from_output(acts[l + 1], act, slope)
        gws[l] = acts[l].T @ d
        gbs[l] = d.sum(axis=0)
    return gws, gbs


def run_epoch(ws, bs, vws, vbs, x, y, order, batch, lr, mom, act, slope, loss):
    """One pass over x/y in the given order, updating weights in place.

    Mini-batches are consecutive slices of ``order``; the last one may be
    short.  Velocity update: v <- mom*v - lr*g, w <- w + v.
    """
    n = x.shape[0]
    for start in range(0, n, batch):
        idx = order[start:start + batch]
        gws, gbs = grad_full(ws, bs, x[idx], y[idx], act, slope, loss)
        for l in range(len(ws)):
            vws[l] *= mom
            vws[l] -= lr * gws[l]
            ws[l] += vws[l]
        for l in range(len(bs)):
            vbs[l] *= mom
            vbs[l] -= lr * gbs[l]
            bs[l] += vbs[l]
