"""Normality diagnostics for embedding vectors.

Each vector is a sample of D observations; the Shapiro-Wilk test decides
whether that sample looks normal, which in turn says whether Pearson (and
cosine) similarity is a sensible choice for it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import UndefinedCorrelationError
from .simcore import as_sample

HIST_BINS = 100
_SQRT2 = math.sqrt(2.0)

# Wichura (1988), algorithm AS 241 (PPND16): relative accuracy ~1e-16.
_A = (3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
      2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
      5.2264952788528545610e3)
_C = (1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
      3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
_E = (6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
      2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


def _horner(coefs, x):
    acc = 0.0
    for c in reversed(coefs):
        acc = acc * x + c
    return acc


def norm_ppf(p: float) -> float:
    """Inverse of the standard normal CDF."""
    p = float(p)
    if not 0.0 < p < 1.0:
        if p == 0.0:
            return -math.inf
        if p == 1.0:
            return math.inf
        raise ValueError(f"probability must lie in [0, 1], got {p}")
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * _horner(_A, r) / _horner(_B, r)
    r = p if q < 0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        val = _horner(_C, r) / _horner(_D, r)
    else:
        r -= 5.0
        val = _horner(_E, r) / _horner(_F, r)
    return -val if q < 0 else val


def norm_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / _SQRT2)


def norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / _SQRT2)


@dataclass(frozen=True)
class ShapiroResult:
    w_statistic: float
    p_value: float
    n: int


@dataclass(frozen=True)
class NormalityReport:
    total: int
    not_rejected: int
    alpha: float
    untestable: int = 0

    @property
    def proportion(self) -> float:
        return self.not_rejected / self.total if self.total else float("nan")

    def to_dict(self):
        return {"total": self.total, "not_rejected": self.not_rejected, "alpha": self.alpha,
                "proportion": self.proportion, "untestable": self.untestable}


# Royston (1995) AS R94 polynomial coefficients.
_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.5440, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)


@lru_cache(maxsize=64)
def _swilk_coefficients(n):
    """Lower-half Shapiro-Wilk weights a_1..a_{n//2} (positive, decreasing)."""
    half = n // 2
    if n == 3:
        a = np.array([math.sqrt(0.5)])
        a.flags.writeable = False
        return a
    m = np.array([norm_ppf((i - 0.375) / (n + 0.25)) for i in range(1, half + 1)])
    summ2 = 2.0 * float(np.dot(m, m))
    ssumm2 = math.sqrt(summ2)
    rsn = 1.0 / math.sqrt(n)
    a1 = _horner(_C1, rsn) - m[0] / ssumm2
    if n > 5:
        a2 = -m[1] / ssumm2 + _horner(_C2, rsn)
        fac = math.sqrt((summ2 - 2.0 * m[0] ** 2 - 2.0 * m[1] ** 2)
                        / (1.0 - 2.0 * a1 ** 2 - 2.0 * a2 ** 2))
        a = -m / fac
        a[1] = a2
    else:
        fac = math.sqrt((summ2 - 2.0 * m[0] ** 2) / (1.0 - 2.0 * a1 ** 2))
        a = -m / fac
    a[0] = a1
    a.flags.writeable = False
    return a


def shapiro_wilk(x) -> ShapiroResult:
    """Shapiro-Wilk W test using Royston's AS R94 approximations.

    Valid for 3 <= n <= 5000. Raises ``ValueError`` outside that range and
    :class:`UndefinedCorrelationError` for a constant sample.
    """
    a_in = np.asarray(x, dtype=np.float64)
    n = a_in.size
    if a_in.ndim != 1 or not 3 <= n <= 5000:
        raise ValueError(f"Shapiro-Wilk needs a 1-D sample with 3 <= n <= 5000, got {a_in.shape}")
    if not np.all(np.isfinite(a_in)):
        raise ValueError("sample contains non-finite values")
    xs = np.sort(a_in)
    span = xs[-1] - xs[0]
    if span == 0.0:
        raise UndefinedCorrelationError("Shapiro-Wilk undefined for a constant sample")

    half = _swilk_coefficients(n)
    coef = np.zeros(n)
    coef[:n // 2] = -half
    coef[n - n // 2:] = half[::-1]
    # W is the squared correlation between the ordered sample and the
    # weights; 1 - W is formed directly to keep precision when W ~ 1.
    ca = coef - coef.mean()
    cx = xs / span
    cx = cx - cx.mean()
    ssa = float(np.dot(ca, ca))
    ssx = float(np.dot(cx, cx))
    sax = float(np.dot(ca, cx))
    root = math.sqrt(ssa * ssx)
    w1 = (root - sax) * (root + sax) / (ssa * ssx)
    w = 1.0 - w1

    if n == 3:
        p = 6.0 / math.pi * (math.asin(math.sqrt(max(0.0, min(1.0, w)))) - math.pi / 3.0)
        return ShapiroResult(w, min(1.0, max(0.0, p)), n)
    if w1 <= 0.0:
        return ShapiroResult(w, 1.0, n)
    y = math.log(w1)
    if n <= 11:
        gamma = _horner(_G, n)
        if y >= gamma:
            return ShapiroResult(w, 1e-19, n)
        y = -math.log(gamma - y)
        mu = _horner(_C3, n)
        sigma = math.exp(_horner(_C4, n))
    else:
        ln = math.log(n)
        mu = _horner(_C5, ln)
        sigma = math.exp(_horner(_C6, ln))
    return ShapiroResult(w, norm_sf((y - mu) / sigma), n)


def normality_census(vectors: Iterable[Sequence[float]], alpha: float = 0.05) -> NormalityReport:
    """Count how many samples keep the normality null at level ``alpha``.

    Samples the test cannot handle (constant, or of unsupported size) are
    counted as ``untestable`` and left out of the proportion.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    total = kept = untestable = 0
    for v in vectors:
        try:
            res = shapiro_wilk(v)
        except (UndefinedCorrelationError, ValueError):
            untestable += 1
            continue
        total += 1
        if res.p_value >= alpha:
            kept += 1
    if total + untestable == 0:
        raise ValueError("normality census needs at least one vector")
    return NormalityReport(total=total, not_rejected=kept, alpha=alpha, untestable=untestable)


@dataclass(frozen=True)
class Histogram:
    counts: np.ndarray
    edges: np.ndarray

    def rows(self):
        for left, right, c in zip(self.edges[:-1], self.edges[1:], self.counts):
            yield float(left), float(right), int(c)


@dataclass(frozen=True)
class MeanCensus:
    histogram: Histogram
    exceeding: int
    total: int
    threshold: float

    @property
    def fraction(self) -> float:
        return self.exceeding / self.total

    def to_dict(self):
        return {"total": self.total, "exceeding": self.exceeding, "threshold": self.threshold,
                "fraction": self.fraction,
                "histogram": [{"bin_left": l, "bin_right": r, "count": c}
                              for l, r, c in self.histogram.rows()]}


def histogram(values, bins: int = HIST_BINS) -> Histogram:
    counts, edges = np.histogram(np.asarray(values, dtype=np.float64), bins=bins)
    return Histogram(counts, edges)


def census_of_means(means, threshold: float) -> MeanCensus:
    """Histogram a precomputed array of per-vector means."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    means = np.asarray(means, dtype=np.float64)
    if means.size == 0:
        raise ValueError("mean census needs at least one vector")
    exceeding = int(np.count_nonzero(np.abs(means) > threshold))
    return MeanCensus(histogram(means), exceeding, int(means.size), float(threshold))


def mean_census(table, threshold: float = 0.05) -> MeanCensus:
    """Distribution of per-vector means across a whole embedding table."""
    if len(table) == 0:
        raise ValueError("mean census needs a non-empty table")
    return census_of_means(table.vectors.mean(axis=1), threshold)


def standardize(x) -> np.ndarray:
    """Shift to mean 0 and scale to sample standard deviation 1 (n-1 denominator)."""
    a = as_sample(x)
    if np.ptp(a) == 0.0:
        raise UndefinedCorrelationError("cannot standardize a constant sample")
    return (a - a.mean()) / a.std(ddof=1)


def qq_points(x) -> np.ndarray:
    """Normal Q-Q plot data as an ``(n, 2)`` array of (theoretical, sample) quantiles.

    Plotting positions are ``(i - 0.5) / n``.
    """
    a = as_sample(x)
    n = a.size
    if n < 3:
        raise ValueError("Q-Q plot needs at least 3 values")
    sample = np.sort(standardize(a))
    theory = np.array([norm_ppf((i - 0.5) / n) for i in range(1, n + 1)])
    return np.column_stack([theory, sample])


def write_qq_csv(points, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["x", "y"])
    for tx, sy in points:
        w.writerow([repr(float(tx)), repr(float(sy))])


def write_histogram_csv(hist: Histogram, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["bin_left", "bin_right", "count"])
    for left, right, c in hist.rows():
        w.writerow([repr(left), repr(right), c])
