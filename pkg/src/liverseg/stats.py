"""Paired significance protocol: normality gate, then a one-sided test.

Per metric, the paired differences between two pipelines are first checked
for normality (Shapiro-Wilk). If normality is not rejected at the chosen
level, a one-sided paired Student t-test decides significance; otherwise a
one-sided Wilcoxon signed-rank test does. The Wilcoxon null distribution is
exact (full sign-pattern enumeration) up to n=25 and a continuity-corrected
normal approximation beyond.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import asin, erfc, exp, log, pi, sqrt

import numpy as np
from scipy.special import ndtri, stdtr

SHAPIRO_MIN_N = 3
SHAPIRO_MAX_N = 5000
WILCOXON_EXACT_MAX_N = 25

# Royston's polynomial fits for the order-statistic weights and for the
# normalizing transform of W (AS R94).
_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.5440, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)
_SMALL = 1e-19


def _poly(coeffs, x: float) -> float:
    return sum(c * x**i for i, c in enumerate(coeffs))


def _norm_sf(z: float) -> float:
    return 0.5 * erfc(z / sqrt(2.0))


def shapiro_wilk(xs) -> tuple[float, float]:
    """Shapiro-Wilk W and its p-value (Royston's AS R94 approximation)."""
    x = np.sort(np.asarray(xs, dtype=np.float64))
    n = len(x)
    if not SHAPIRO_MIN_N <= n <= SHAPIRO_MAX_N:
        raise ValueError(f"shapiro_wilk needs {SHAPIRO_MIN_N} <= n <= {SHAPIRO_MAX_N}, got {n}")
    if x[-1] == x[0]:
        raise ValueError("shapiro_wilk undefined for a zero-variance sample")

    if n == 3:
        a = np.array([-sqrt(0.5), 0.0, sqrt(0.5)])
    else:
        m = ndtri((np.arange(1, n + 1) - 0.375) / (n + 0.25))
        msq = float((m * m).sum())
        u = 1.0 / sqrt(n)
        a_n = m[-1] / sqrt(msq) + _poly(_C1, u)
        if n <= 5:
            phi = (msq - 2.0 * m[-1] ** 2) / (1.0 - 2.0 * a_n**2)
            a = m / sqrt(phi)
            a[-1], a[0] = a_n, -a_n
        else:
            a_n1 = m[-2] / sqrt(msq) + _poly(_C2, u)
            phi = (msq - 2.0 * m[-1] ** 2 - 2.0 * m[-2] ** 2) / (
                1.0 - 2.0 * a_n**2 - 2.0 * a_n1**2
            )
            a = m / sqrt(phi)
            a[-1], a[-2] = a_n, a_n1
            a[0], a[1] = -a_n, -a_n1

    ssq = float(((x - x.mean()) ** 2).sum())
    w = float((a * x).sum() ** 2 / ssq)
    w = min(w, 1.0)

    if n == 3:
        p = (6.0 / pi) * (asin(sqrt(w)) - asin(sqrt(0.75)))
        return w, min(max(p, 0.0), 1.0)
    y = log(max(1.0 - w, _SMALL))
    if n <= 11:
        gamma = _poly(_G, float(n))
        if y >= gamma:
            return w, 0.0
        y = -log(gamma - y)
        mu = _poly(_C3, float(n))
        sigma = exp(_poly(_C4, float(n)))
    else:
        ln_n = log(float(n))
        mu = _poly(_C5, ln_n)
        sigma = exp(_poly(_C6, ln_n))
    p = _norm_sf((y - mu) / sigma)
    return w, min(max(p, 0.0), 1.0)


def _signed_rank_setup(d) -> tuple[np.ndarray, np.ndarray, int]:
    """Drop zero differences and rank the absolute values (average ties)."""
    d = np.asarray(d, dtype=np.float64)
    nonzero = d[d != 0.0]
    n = len(nonzero)
    if n == 0:
        raise ValueError("wilcoxon undefined: all differences are zero")
    mag = np.abs(nonzero)
    order = np.argsort(mag, kind="stable")
    ranks = np.empty(n, dtype=np.float64)
    sorted_mag = mag[order]
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sorted_mag[j + 1] == sorted_mag[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return nonzero, ranks, n


def _exact_tail(doubled: np.ndarray, w2: int, direction: str, n: int) -> float:
    """Tail probability of the exact signed-rank null via subset-sum counts."""
    total = int(doubled.sum())
    counts = [0] * (total + 1)
    counts[0] = 1
    for r in doubled:
        r = int(r)
        for s in range(total, r - 1, -1):
            if counts[s - r]:
                counts[s] += counts[s - r]
    if direction == "greater":
        favorable = sum(counts[w2:])
    else:
        favorable = sum(counts[: w2 + 1])
    return favorable / (1 << n)


def wilcoxon_signed_rank(d, direction: str) -> float:
    """One-sided signed-rank p-value for paired differences.

    ``direction="greater"`` tests for a positive shift of the differences,
    ``"less"`` for a negative one. Zeros are dropped, tied magnitudes get
    average ranks; the null distribution is exact for n <= 25.
    """
    if direction not in ("greater", "less"):
        raise ValueError(f"direction must be 'greater' or 'less', got {direction!r}")
    nonzero, ranks, n = _signed_rank_setup(d)
    w_plus = float(ranks[nonzero > 0].sum())

    if n <= WILCOXON_EXACT_MAX_N:
        doubled = np.rint(2.0 * ranks).astype(np.int64)
        w2 = int(round(2.0 * w_plus))
        return _exact_tail(doubled, w2, direction, n)

    mu = n * (n + 1) / 4.0
    tie_term = 0.0
    _, tie_counts = np.unique(np.abs(nonzero), return_counts=True)
    for t in tie_counts:
        tie_term += t**3 - t
    sigma = sqrt(n * (n + 1) * (2 * n + 1) / 24.0 - tie_term / 48.0)
    if direction == "greater":
        z = (w_plus - mu - 0.5) / sigma
        return min(max(_norm_sf(z), 0.0), 1.0)
    z = (w_plus - mu + 0.5) / sigma
    return min(max(1.0 - _norm_sf(z), 0.0), 1.0)


def paired_t_test_one_sided(d, direction: str) -> float:
    """One-sided paired t-test on the differences (sample standard deviation)."""
    if direction not in ("greater", "less"):
        raise ValueError(f"direction must be 'greater' or 'less', got {direction!r}")
    d = np.asarray(d, dtype=np.float64)
    n = len(d)
    if n < 2:
        raise ValueError(f"t-test needs n >= 2, got {n}")
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        raise ValueError("t-test undefined for zero-variance differences")
    t = float(d.mean()) / (sd / sqrt(n))
    cdf = float(stdtr(n - 1, t))
    return 1.0 - cdf if direction == "greater" else cdf


@dataclass
class PairedSample:
    """Per-case values of one metric under two pipelines, with the
    hypothesized direction of pipeline A relative to B."""

    metric: str
    values_a: np.ndarray
    values_b: np.ndarray
    direction: str  # "greater": A > B; "less": A < B

    def __post_init__(self):
        self.values_a = np.asarray(self.values_a, dtype=np.float64)
        self.values_b = np.asarray(self.values_b, dtype=np.float64)
        if self.values_a.shape != self.values_b.shape or self.values_a.ndim != 1:
            raise ValueError("paired sample needs equal-length aligned 1-D values")
        if len(self.values_a) < 3:
            raise ValueError("paired sample needs at least 3 pairs")
        if self.direction not in ("greater", "less"):
            raise ValueError(f"direction must be 'greater' or 'less', got {self.direction!r}")

    @property
    def differences(self) -> np.ndarray:
        return self.values_a - self.values_b


@dataclass
class SignificanceResult:
    """One row of the significance report."""

    metric: str
    n: int
    direction: str
    shapiro_w: float | None
    shapiro_p: float | None
    test: str  # "t_test" | "wilcoxon" | "none"
    p_value: float | None
    significant: bool
    alpha: float
    degenerate: bool = False
    n_zero_diffs: int = 0


def run_significance_protocol(s: PairedSample, alpha: float = 0.05) -> SignificanceResult:
    """Normality-gated one-sided comparison of the two pipelines.

    Differences that pass Shapiro-Wilk at ``alpha`` go to the t-test, the
    rest to Wilcoxon. All-zero differences yield a degenerate,
    non-significant result; zero-variance non-zero differences cannot be
    normality-tested and route to Wilcoxon.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0,1), got {alpha}")
    d = s.differences
    n_zero = int((d == 0.0).sum())
    if n_zero == len(d):
        return SignificanceResult(
            metric=s.metric,
            n=len(d),
            direction=s.direction,
            shapiro_w=None,
            shapiro_p=None,
            test="none",
            p_value=None,
            significant=False,
            alpha=alpha,
            degenerate=True,
            n_zero_diffs=n_zero,
        )
    if float(d.max()) == float(d.min()):
        shapiro_w = shapiro_p = None
        test = "wilcoxon"
    else:
        shapiro_w, shapiro_p = shapiro_wilk(d)
        test = "t_test" if shapiro_p >= alpha else "wilcoxon"
    if test == "t_test":
        p = paired_t_test_one_sided(d, s.direction)
    else:
        p = wilcoxon_signed_rank(d, s.direction)
    return SignificanceResult(
        metric=s.metric,
        n=len(d),
        direction=s.direction,
        shapiro_w=shapiro_w,
        shapiro_p=shapiro_p,
        test=test,
        p_value=p,
        significant=p < alpha,
        alpha=alpha,
        degenerate=False,
        n_zero_diffs=n_zero,
    )
