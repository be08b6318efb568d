"""Reference sweeps for the nonlinear one-step solvers, on flat packed levels.

Level k of a recombining single-asset lattice occupies the slice
``[k(k+1)/2 : k(k+1)/2 + k + 1]`` of a flat array; the node index inside a
level is the number of up moves, so node j's children at the next level are
j (down) and j+1 (up).

The compiled extension mirrors these routines operation for operation.
Backward sweeps invert the exact one-interval wealth map branch by branch;
forward sweeps rerun the map from the extracted hedge and report the largest
disagreement between the two parents writing each interior node, which is a
replication failure measure.
"""
from __future__ import annotations

import numpy as np


def level_offset(k: int) -> int:
    return k * (k + 1) // 2


def pn_backward_1d(
    v_term: np.ndarray,
    prices: np.ndarray,
    flows: np.ndarray,
    fl: np.ndarray,
    fb: np.ndarray,
    fib: np.ndarray,
    adiv: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Backward sweep of the netted-shorts wealth map.

    Over one interval, wealth v holding money position s = z S in the asset
    becomes (with shorts netted into cash, longs funded at their own rate)

        w = v + s^-,
        v' = w^+ fl - w^- fb - s^- - s^+ (fib - 1) + z (dS + div) + flow.

    Given the child values the hedge z is fixed by the branch spread and the
    cash balance w is recovered by inverting the piecewise-linear map, which
    is strictly increasing whenever fl, fb > 0.

    Arguments: terminal values (n+1,), packed prices and per-node flows
    (levels 0..n), per-step factors fl, fb, fib and dividend coefficients
    adiv (n,).  Returns packed wealth values (levels 0..n) and packed hedge
    positions (levels 0..n-1).
    """
    n = fl.shape[0]
    v = np.empty(level_offset(n + 1))
    z = np.empty(level_offset(n))
    v[level_offset(n):] = v_term
    for k in range(n - 1, -1, -1):
        o0, o1, o2 = level_offset(k), level_offset(k + 1), level_offset(k + 2)
        sk = prices[o0:o1]
        sn = prices[o1:o2]
        p = v[o1:o2] - flows[o1:o2]
        zk = (p[1:] - p[:-1]) / (sn[1:] - sn[:-1])
        r = p[:-1] - zk * (sn[:-1] - sk + adiv[k] * sk)
        s_pos = zk * sk
        sp = np.maximum(s_pos, 0.0)
        sm = np.maximum(-s_pos, 0.0)
        rp = r + sm + sp * (fib[k] - 1.0)
        w = np.where(rp >= 0.0, rp / fl[k], rp / fb[k])
        v[o0:o1] = w - sm
        z[o0:o1] = zk
    return v, z


def pn_forward_1d(
    v0: float,
    z: np.ndarray,
    prices: np.ndarray,
    flows: np.ndarray,
    fl: np.ndarray,
    fb: np.ndarray,
    fib: np.ndarray,
    adiv: np.ndarray,
) -> tuple[np.ndarray, float]:
    """Forward rerun of the netted-shorts wealth map from the packed hedge.

    Children are written from their down-parent; the largest gap against the
    up-parent's value for the same node comes back as the scatter mismatch.
    """
    n = fl.shape[0]
    v = np.empty(level_offset(n + 1))
    v[0] = v0
    mismatch = 0.0
    for k in range(n):
        o0, o1, o2 = level_offset(k), level_offset(k + 1), level_offset(k + 2)
        vk = v[o0:o1]
        zk = z[o0:o1]
        sk = prices[o0:o1]
        sn = prices[o1:o2]
        s_pos = zk * sk
        sp = np.maximum(s_pos, 0.0)
        sm = np.maximum(-s_pos, 0.0)
        w = vk + sm
        base = (
            np.maximum(w, 0.0) * fl[k]
            - np.maximum(-w, 0.0) * fb[k]
            - sm
            - sp * (fib[k] - 1.0)
        )
        down = base + zk * (sn[:-1] - sk + adiv[k] * sk)
        up = base + zk * (sn[1:] - sk + adiv[k] * sk)
        if k:
            gap = float(np.max(np.abs(up[:-1] - down[1:])))
            if gap > mismatch:
                mismatch = gap
        child = np.empty(k + 2)
        child[: k + 1] = down
        child[k + 1] = up[k]
        v[o1:o2] = child + flows[o1:o2]
    return v, mismatch


def endo_backward_1d(
    y_term: np.ndarray,
    prices: np.ndarray,
    q: np.ndarray,
    disc_pos: np.ndarray,
    disc_neg: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Backward sweep for value-tracking collateral with two-sided haircuts.

    The one-step value is a discounted conditional expectation whose discount
    factor switches with the sign of the expectation (the haircut applied to
    the margin balance differs between the posting and holding side):

        e = q y_up + (1 - q) y_dn,
        y = disc_pos[k] e   if e > 0 else   disc_neg[k] e.

    Returns packed values (levels 0..n) and hedge positions (levels 0..n-1).
    """
    n = q.shape[0]
    y = np.empty(level_offset(n + 1))
    z = np.empty(level_offset(n))
    y[level_offset(n):] = y_term
    for k in range(n - 1, -1, -1):
        o0, o1, o2 = level_offset(k), level_offset(k + 1), level_offset(k + 2)
        yn = y[o1:o2]
        sn = prices[o1:o2]
        e = q[k] * yn[1:] + (1.0 - q[k]) * yn[:-1]
        y[o0:o1] = np.where(e > 0.0, disc_pos[k], disc_neg[k]) * e
        z[o0:o1] = (yn[1:] - yn[:-1]) / (sn[1:] - sn[:-1])
    return y, z


def endo_forward_1d(
    y0: float,
    z: np.ndarray,
    prices: np.ndarray,
    growth: np.ndarray,
    disc_pos: np.ndarray,
    disc_neg: np.ndarray,
) -> tuple[np.ndarray, float]:
    """Forward rerun of the haircut-collateral map from the packed hedge.

    ``growth[k]`` is the factor with q-mean price growth, so the hedge term
    z (S' - growth S) is conditionally centered.  Scatter mismatch as in
    :func:`pn_forward_1d`.
    """
    n = growth.shape[0]
    y = np.empty(level_offset(n + 1))
    y[0] = y0
    mismatch = 0.0
    for k in range(n):
        o0, o1, o2 = level_offset(k), level_offset(k + 1), level_offset(k + 2)
        yk = y[o0:o1]
        zk = z[o0:o1]
        sk = prices[o0:o1]
        sn = prices[o1:o2]
        grown = np.where(yk > 0.0, yk / disc_pos[k], yk / disc_neg[k])
        anchor = growth[k] * sk
        down = grown + zk * (sn[:-1] - anchor)
        up = grown + zk * (sn[1:] - anchor)
        if k:
            gap = float(np.max(np.abs(up[:-1] - down[1:])))
            if gap > mismatch:
                mismatch = gap
        y[o1:o1 + k + 1] = down
        y[o2 - 1] = up[k]
    return y, mismatch
