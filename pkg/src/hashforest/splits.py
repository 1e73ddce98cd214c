"""Entropy kernels for binary labels.

``best_thresholds`` scores every midpoint threshold of several numeric
columns at once and is shared by the tree learner and the InfoGain ranking.
Gains are in bits.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import xlogy

LN2 = math.log(2.0)
# gains at or below this are treated as "no information"
GAIN_EPS = 1e-12


def entropy_bits(positives, total):
    """Binary entropy, in bits, of ``positives`` ones among ``total`` labels."""
    positives = np.asarray(positives, dtype=float)
    total = np.asarray(total, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        h = (xlogy(total, total) - xlogy(positives, positives)
             - xlogy(total - positives, total - positives)) / (total * LN2)
    return np.where(total > 0, h, 0.0)


def best_thresholds(columns: np.ndarray, y: np.ndarray, min_leaf: int = 1):
    """Best ``value <= t`` split of each column of ``columns`` against ``y``.

    Returns ``(gains, thresholds)``, one entry per column.  Candidate
    thresholds are midpoints between consecutive distinct sorted values and
    both sides must keep at least ``min_leaf`` rows.  Among equal gains the
    smallest threshold wins.  Columns without a valid split get gain 0 and a
    NaN threshold.
    """
    n, k = columns.shape
    gains = np.zeros(k)
    thresholds = np.full(k, np.nan)
    lo, hi = min_leaf - 1, n - min_leaf  # rows r in [lo, hi) put r+1 points left
    if n < 2 or k == 0 or hi <= lo:
        return gains, thresholds

    order = np.argsort(columns, axis=0, kind="stable")
    xs = np.take_along_axis(columns, order, axis=0)
    ys = y[order]
    cum = np.cumsum(ys, axis=0)
    total_pos = int(cum[-1, 0])

    table = xlogy(np.arange(n + 1.0), np.arange(n + 1.0))
    n_left = np.arange(1, n)
    p_left = cum[:-1]
    p_right = total_pos - p_left
    n_right = n - n_left
    child = (table[n_left][:, None] - table[p_left] - table[n_left[:, None] - p_left]
             + table[n_right][:, None] - table[p_right] - table[n_right[:, None] - p_right])
    parent = table[n] - table[total_pos] - table[n - total_pos]
    gain = (parent - child) / (n * LN2)

    valid = xs[:-1] < xs[1:]
    valid[:lo] = False
    valid[hi:] = False
    gain = np.where(valid, gain, -np.inf)

    rows = np.argmax(gain, axis=0)
    cols = np.arange(k)
    best = gain[rows, cols]
    ok = np.isfinite(best)
    gains[ok] = np.maximum(best[ok], 0.0)
    left_val = xs[rows, cols]
    right_val = xs[np.minimum(rows + 1, n - 1), cols]
    mid = left_val + (right_val - left_val) / 2.0
    # a midpoint that rounds onto the right value would send it left
    mid = np.where(mid >= right_val, left_val, mid)
    thresholds[ok] = mid[ok]
    return gains, thresholds
