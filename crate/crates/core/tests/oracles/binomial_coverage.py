"""Exact two-sided coverage of the binomial LR set by enumeration over X.

Independent of the crate: scipy pmf/cdf, xlogy for 0 log 0 = 0.
"""
import numpy as np
from scipy.special import xlogy
from scipy.stats import binom, chi2


def stat(x, y, n, m, corrected):
    if corrected:
        x = x + 0.5 * (x == 0) - 0.5 * (x == n)
        y = y + 0.5 * (y == 0) - 0.5 * (y == m)
    pxy, px, py = (x + y) / (n + m), x / n, y / m
    num = xlogy(x + y, pxy) + xlogy(n + m - x - y, 1 - pxy)
    den = xlogy(x, px) + xlogy(n - x, 1 - px) + xlogy(y, py) + xlogy(m - y, 1 - py)
    return max(0.0, -2 * (num - den))


def coverage(n, m, p, corrected, level=0.95):
    thr = chi2.ppf(level, 1)
    total = 0.0
    for x in range(n + 1):
        v = np.array([stat(x, y, n, m, corrected) for y in range(m + 1)])
        lo = hi = int(np.argmin(v))
        while lo > 0 and v[lo - 1] <= thr:
            lo -= 1
        while hi < m and v[hi + 1] <= thr:
            hi += 1
        total += binom.pmf(x, n, p) * (binom.cdf(hi, m, p) - binom.cdf(lo - 1, m, p))
    return total


if __name__ == "__main__":
    for args in [(15, 15, 0.05, False), (15, 15, 0.05, True), (50, 50, 0.1, False), (50, 50, 0.3, False), (50, 50, 0.5, False)]:
        print(args, repr(coverage(*args)))
