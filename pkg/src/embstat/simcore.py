"""Similarity measures between two equal-length samples.

An embedding of dimension D is treated as D scalar observations, so the
usual correlation coefficients apply directly. All functions accept any
1-D array-like of at least two finite reals and return Python floats.
"""

from __future__ import annotations

import enum
import math
import sys
from dataclasses import dataclass

import numpy as np

from .errors import UndefinedCorrelationError


class MeasureKind(str, enum.Enum):
    COS = "cos"
    PRS = "prs"
    SPR = "spr"
    KEN = "ken"
    APS = "aps"

    @classmethod
    def parse(cls, name) -> "MeasureKind":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            raise ValueError(
                f"unknown measure {name!r}; expected one of {[m.value for m in cls]}"
            ) from None

    @property
    def rank_based(self) -> bool:
        return self in (MeasureKind.SPR, MeasureKind.KEN, MeasureKind.APS)

    @property
    def label(self) -> str:
        return self.name


@dataclass(frozen=True)
class ApsParams:
    """APSynP knobs. ``top_n=None`` means ``min(100, n)``."""

    top_n: int | None = None
    power: float = 0.1

    def resolve_top_n(self, n):
        return min(100, n) if self.top_n is None else self.top_n


def as_sample(x, name="x") -> np.ndarray:
    """Validate and convert to a 1-D float64 array with n >= 2 finite values."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {a.shape}")
    if a.size < 2:
        raise ValueError(f"{name} needs at least 2 values, got {a.size}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


def _pair(x, y):
    a = as_sample(x, "x")
    b = as_sample(y, "y")
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} != {b.size}")
    return a, b


def _clip_unit(r):
    return max(-1.0, min(1.0, float(r)))


def mean(x) -> float:
    return float(np.mean(as_sample(x)))


def _norm_product(saa, sbb):
    # sqrt of the product keeps r(x, x) == 1 exact; split the roots on overflow
    prod = float(saa) * float(sbb)
    if math.isfinite(prod) and prod >= sys.float_info.min:
        return math.sqrt(prod)
    return math.sqrt(saa) * math.sqrt(sbb)


def _pearson(a, b):
    if np.ptp(a) == 0.0 or np.ptp(b) == 0.0:
        raise UndefinedCorrelationError("correlation undefined for a constant sample")
    da = a - a.mean()
    db = b - b.mean()
    return _clip_unit(np.dot(da, db) / _norm_product(np.dot(da, da), np.dot(db, db)))


def pearson(x, y) -> float:
    """Sample Pearson correlation coefficient."""
    a, b = _pair(x, y)
    return _pearson(a, b)


def cosine(x, y) -> float:
    a, b = _pair(x, y)
    saa, sbb = np.dot(a, a), np.dot(b, b)
    if saa == 0.0 or sbb == 0.0:
        raise ValueError("cosine similarity undefined for a zero vector")
    return _clip_unit(np.dot(a, b) / _norm_product(saa, sbb))


def _average_ranks(a):
    n = a.size
    order = np.argsort(a, kind="mergesort")
    s = a[order]
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    bounds = np.r_[starts, n]
    # 1-based average of positions start+1 .. end
    avg = 0.5 * (bounds[:-1] + 1 + bounds[1:])
    group = np.cumsum(np.r_[True, s[1:] != s[:-1]]) - 1
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = avg[group]
    return ranks


def rank(x) -> np.ndarray:
    """Fractional ranks in ``[1, n]``; tied values share their average rank."""
    return _average_ranks(as_sample(x))


def rank_rows(m) -> np.ndarray:
    """Average ranks computed independently along the last axis of a 2-D array."""
    m = np.asarray(m, dtype=np.float64)
    rows, n = m.shape
    order = np.argsort(m, axis=1, kind="mergesort")
    s = np.take_along_axis(m, order, axis=1)
    pos = np.broadcast_to(np.arange(n), (rows, n))
    new_group = np.ones((rows, n), dtype=bool)
    new_group[:, 1:] = s[:, 1:] != s[:, :-1]
    ends_group = np.ones((rows, n), dtype=bool)
    ends_group[:, :-1] = new_group[:, 1:]
    first = np.maximum.accumulate(np.where(new_group, pos, 0), axis=1)
    last = np.minimum.accumulate(np.where(ends_group, pos, n)[:, ::-1], axis=1)[:, ::-1]
    out = np.empty_like(s)
    np.put_along_axis(out, order, 0.5 * (first + last) + 1.0, axis=1)
    return out


def spearman(x, y) -> float:
    """Spearman's rho: Pearson correlation of the average ranks."""
    a, b = _pair(x, y)
    return _pearson(_average_ranks(a), _average_ranks(b))


def _tied_pairs(sorted_values):
    """Number of tied pairs in an already sorted sequence."""
    if len(sorted_values) < 2:
        return 0
    s = np.asarray(sorted_values)
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    sizes = np.diff(np.r_[starts, len(s)])
    return int(np.sum(sizes * (sizes - 1) // 2))


def count_inversions(seq) -> int:
    """Count pairs ``i < j`` with ``seq[i] > seq[j]`` by bottom-up merge sort.

    Equal elements are not inversions. ``seq`` is not modified.
    """
    src = list(seq)
    n = len(src)
    dst = [None] * n
    inversions = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if src[j] < src[i]:
                    dst[k] = src[j]
                    j += 1
                    inversions += mid - i
                else:
                    dst[k] = src[i]
                    i += 1
                k += 1
            if i < mid:
                dst[k:hi] = src[i:mid]
            elif j < hi:
                dst[k:hi] = src[j:hi]
        src, dst = dst, src
        width *= 2
    return inversions


def kendall_counts(x, y) -> tuple[int, int, int, int]:
    """Return ``(concordant - discordant, total pairs, x-tied pairs, y-tied pairs)``.

    O(n log n): sort by (x, y), count pairs tied in x and jointly tied, then
    count the discordant pairs as inversions of the y sequence.
    """
    a, b = _pair(x, y)
    n = a.size
    order = np.lexsort((b, a))
    xs = a[order]
    ys = b[order]
    total = n * (n - 1) // 2
    tied_x = _tied_pairs(xs)
    # jointly tied pairs: runs of equal (x, y) in lexicographic order
    same = np.r_[True, (xs[1:] != xs[:-1]) | (ys[1:] != ys[:-1])]
    starts = np.flatnonzero(same)
    sizes = np.diff(np.r_[starts, n])
    tied_xy = int(np.sum(sizes * (sizes - 1) // 2))
    tied_y = _tied_pairs(np.sort(ys, kind="mergesort"))
    discordant = count_inversions(ys.tolist())
    net = total - tied_x - tied_y + tied_xy - 2 * discordant
    return net, total, tied_x, tied_y


def tau_b(net, total, tied_x, tied_y) -> float:
    """Combine pair counts into Kendall's tau-b."""
    if tied_x == total or tied_y == total:
        raise UndefinedCorrelationError("Kendall's tau undefined: every pair is tied")
    return _clip_unit(net / math.sqrt((total - tied_x) * (total - tied_y)))


def kendall(x, y) -> float:
    """Kendall's tau-b (reduces to tau-a when there are no ties)."""
    return tau_b(*kendall_counts(x, y))


def apsynp(x, y, top_n: int | None = None, power: float = 0.1) -> float:
    """APSynP rank-overlap similarity.

    Components are ranked in descending order of value (average ranks on
    ties). Over the indices present in both samples' ``top_n`` components,
    sums ``1 / ((r_x**power + r_y**power) / 2)``. The top set is taken from a
    stable descending sort, so ties straddling the cut go to the lower index.
    """
    a, b = _pair(x, y)
    n = a.size
    if top_n is None:
        top_n = min(100, n)
    if not 1 <= top_n <= n:
        raise ValueError(f"top_n must be in [1, {n}], got {top_n}")
    if not power > 0:
        raise ValueError("power must be positive")
    ra = _average_ranks(-a)
    rb = _average_ranks(-b)
    top_a = np.argsort(-a, kind="stable")[:top_n]
    top_b = np.argsort(-b, kind="stable")[:top_n]
    shared = np.intersect1d(top_a, top_b, assume_unique=True)
    if shared.size == 0:
        return 0.0
    return float(np.sum(1.0 / ((ra[shared] ** power + rb[shared] ** power) / 2.0)))


def winsorize(x, lower_q: float, upper_q: float, method: str = "nearest") -> np.ndarray:
    """Clip values to the empirical ``lower_q`` and ``upper_q`` quantiles.

    ``method`` is passed to :func:`numpy.quantile`. The default picks an
    actual order statistic, which makes the operation idempotent;
    interpolating methods such as ``"linear"`` are not.
    """
    if not 0.0 <= lower_q < upper_q <= 1.0:
        raise ValueError(f"need 0 <= lower_q < upper_q <= 1, got ({lower_q}, {upper_q})")
    a = as_sample(x)
    lo, hi = np.quantile(a, [lower_q, upper_q], method=method)
    return np.clip(a, lo, hi)


def similarity(kind, x, y, aps_params: ApsParams | None = None) -> float:
    kind = MeasureKind.parse(kind)
    if kind is MeasureKind.COS:
        return cosine(x, y)
    if kind is MeasureKind.PRS:
        return pearson(x, y)
    if kind is MeasureKind.SPR:
        return spearman(x, y)
    if kind is MeasureKind.KEN:
        return kendall(x, y)
    params = aps_params or ApsParams()
    return apsynp(x, y, top_n=params.resolve_top_n(np.size(x)), power=params.power)
