"""
Wilcoxon signed-rank test for paired samples.

Zero differences are dropped and |d| is ranked with average ranks for ties.
The two-sided p-value is exact for up to EXACT_MAX_N non-zero pairs (the
null distribution of W+ over all 2^n sign assignments, counted by
convolution) and otherwise uses the tie-corrected normal approximation
with a 0.5 continuity correction.
"""

from typing import Sequence, Tuple

import numpy as np
from scipy.stats import norm, rankdata

from app.state import WilcoxonResult

EXACT_MAX_N = 20


def _exact_p_value(doubled_ranks: np.ndarray, doubled_w: int) -> float:
    # Ranks are multiples of 0.5, so doubling keeps the arithmetic in integers.
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in doubled_ranks:
        r = int(r)
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    t = np.arange(total + 1)
    extreme = np.minimum(t, total - t) <= doubled_w
    return float(counts[extreme].sum() / counts.sum())


def _normal_p_value(ranks: np.ndarray, w: float) -> float:
    n = len(ranks)
    mean = n * (n + 1) / 4.0
    _, tie_sizes = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_sizes**3 - tie_sizes)) / 48.0
    z = (abs(w - mean) - 0.5) / np.sqrt(var)
    return float(min(1.0, 2.0 * norm.sf(z)))


def wilcoxon_signed_rank(pairs: Sequence[Tuple[float, float]]) -> WilcoxonResult:
    if len(pairs) == 0:
        raise ValueError("at least one pair is required")
    d = np.asarray([x - y for x, y in pairs], dtype=np.float64)
    d = d[d != 0]
    n = len(d)
    if n == 0:
        return WilcoxonResult(n_effective=0, w_plus=0.0, w_minus=0.0, statistic=0.0, p_value=1.0, method="degenerate")

    ranks = rankdata(np.abs(d), method="average")
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)

    if n <= EXACT_MAX_N:
        doubled = np.rint(ranks * 2).astype(np.int64)
        p = _exact_p_value(doubled, int(round(w * 2)))
        method = "exact"
    else:
        p = _normal_p_value(ranks, w)
        method = "normal"
    return WilcoxonResult(n_effective=n, w_plus=w_plus, w_minus=w_minus, statistic=w, p_value=p, method=method)
