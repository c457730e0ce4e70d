"""BCa bootstrap intervals for paired score differences.

Two similarity measures evaluated on the same benchmark items are compared
by resampling the items (gold score and both predictions jointly) and
building a bias-corrected and accelerated interval on the difference of
the two evaluation correlations.

Randomness comes from numpy's PCG64 generator seeded with the caller's
integer seed; resample indices are drawn up front in fixed-size blocks, so
results do not depend on how statistics are later evaluated.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateStatisticError, EmbstatError
from .normality import norm_cdf, norm_ppf
from .simcore import rank_rows

DEFAULT_RESAMPLES = 10_000
MIN_ITEMS = 10
# cap on index-matrix entries materialized at once
_BLOCK_ENTRIES = 2_000_000


@dataclass(frozen=True)
class PairedScoreDiff:
    """A statistic over a subset of evaluation items.

    ``statistic`` receives an integer index array. When ``vectorized`` is
    true it receives a 2-D array (one resample per row) and must return one
    value per row. Undefined values are signalled by NaN or by raising.
    """

    statistic: Callable[[np.ndarray], object]
    item_count: int
    vectorized: bool = False


@dataclass(frozen=True)
class BcaInterval:
    lower: float
    upper: float
    level: float
    resamples: int
    z0: float
    a: float
    seed: int | None = None
    estimate: float | None = None
    failures: int = 0

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError(f"lower {self.lower} > upper {self.upper}")
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must be in (0, 1)")

    def to_dict(self):
        return {"lower": self.lower, "upper": self.upper, "level": self.level,
                "resamples": self.resamples, "seed": self.seed, "z0": self.z0, "a": self.a,
                "estimate": self.estimate, "failures": self.failures}


class Verdict(str, enum.Enum):
    A_WINS = "A_wins"
    B_WINS = "B_wins"
    TIE = "tie"


def significance_verdict(interval: BcaInterval) -> Verdict:
    """A wins if the whole interval is above zero, B if below, else a tie."""
    if interval.lower > 0:
        return Verdict.A_WINS
    if interval.upper < 0:
        return Verdict.B_WINS
    return Verdict.TIE


def _block_rows(item_count):
    return max(1, _BLOCK_ENTRIES // max(1, item_count))


def iter_resample_blocks(item_count, resamples, seed):
    """Yield blocks of bootstrap index rows; concatenated they form the full draw."""
    rng = np.random.Generator(np.random.PCG64(seed))
    step = _block_rows(item_count)
    done = 0
    while done < resamples:
        rows = min(step, resamples - done)
        yield rng.integers(0, item_count, size=(rows, item_count))
        done += rows


def _scalar(statistic, idx):
    try:
        v = float(statistic(idx))
    except (EmbstatError, ValueError, ZeroDivisionError, FloatingPointError):
        return math.nan
    return v


def _evaluate_block(diff, block):
    if diff.vectorized:
        with np.errstate(all="ignore"):
            out = np.asarray(diff.statistic(block), dtype=np.float64).reshape(-1)
        if out.shape[0] != block.shape[0]:
            raise ValueError("vectorized statistic returned the wrong number of values")
        return out
    return np.array([_scalar(diff.statistic, row) for row in block])


def bootstrap_distribution(diff: PairedScoreDiff, resamples: int, seed: int,
                           threads: int = 1) -> np.ndarray:
    """Statistic on every resample, in draw order; NaN marks failures."""
    blocks = iter_resample_blocks(diff.item_count, resamples, seed)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: _evaluate_block(diff, b), blocks))
    else:
        parts = [_evaluate_block(diff, b) for b in blocks]
    return np.concatenate(parts)


def jackknife_values(diff: PairedScoreDiff) -> np.ndarray:
    n = diff.item_count
    full = np.arange(n)
    step = _block_rows(n)
    parts = []
    for start in range(0, n, step):
        stop = min(n, start + step)
        block = np.array([np.delete(full, i) for i in range(start, stop)])
        parts.append(_evaluate_block(diff, block))
    return np.concatenate(parts)


def acceleration(jack: np.ndarray) -> float:
    jack = jack[np.isfinite(jack)]
    if jack.size < 2:
        return 0.0
    d = jack.mean() - jack
    den = 6.0 * float(np.sum(d * d)) ** 1.5
    return float(np.sum(d ** 3) / den) if den > 0 else 0.0


def _order_statistic(sorted_stats, alpha):
    b = sorted_stats.size
    k = int(math.ceil(alpha * b - 1e-9)) - 1
    return float(sorted_stats[min(max(k, 0), b - 1)])


def _adjusted_alpha(z0, a, z):
    if math.isinf(z):
        return 0.0 if z < 0 else 1.0
    t = z0 + z
    den = 1.0 - a * t
    if den <= 0:
        return 1.0 if t > 0 else 0.0
    return norm_cdf(z0 + t / den)


def bca_endpoints(sorted_stats, z0, a, level):
    """Map the BCa-adjusted tail probabilities to order statistics."""
    tail = (1.0 - level) / 2.0
    lo = _adjusted_alpha(z0, a, norm_ppf(tail))
    hi = _adjusted_alpha(z0, a, norm_ppf(1.0 - tail))
    return _order_statistic(sorted_stats, lo), _order_statistic(sorted_stats, hi)


def percentile_interval(stats, level):
    s = np.sort(np.asarray(stats, dtype=np.float64))
    tail = (1.0 - level) / 2.0
    return _order_statistic(s, tail), _order_statistic(s, 1.0 - tail)


def bca_interval(diff: PairedScoreDiff, level: float = 0.95,
                 resamples: int = DEFAULT_RESAMPLES, seed: int = 0,
                 threads: int = 1) -> BcaInterval:
    """Bias-corrected and accelerated bootstrap interval (Efron, 1987).

    Parameters
    ----------
    diff : PairedScoreDiff
        Statistic over item indices, e.g. the difference of two evaluation
        correlations against the same gold scores.
    level : float
        Two-sided coverage, e.g. 0.95.
    resamples : int
        Number of bootstrap resamples.
    seed : int
        Seed for the PCG64 generator; identical inputs and seed give a
        bit-identical interval.

    Notes
    -----
    ``z0`` is the normal quantile of the fraction of resampled statistics
    strictly below the full-sample estimate, clipped to
    ``[1/(2B), 1 - 1/(2B)]`` so it stays finite. The acceleration comes from
    the skewness of the leave-one-out jackknife values. Endpoints are always
    order statistics of the bootstrap distribution.
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    if resamples < 1:
        raise ValueError("resamples must be positive")
    if diff.item_count < MIN_ITEMS:
        raise ValueError(f"BCa needs at least {MIN_ITEMS} items, got {diff.item_count}")

    full = np.arange(diff.item_count)
    estimate = float(_evaluate_block(diff, full[None, :])[0])
    if not math.isfinite(estimate):
        raise DegenerateStatisticError("statistic undefined on the full sample",
                                       failures=1, resamples=1)
    stats = bootstrap_distribution(diff, resamples, seed, threads=threads)
    ok = np.isfinite(stats)
    failures = int(stats.size - np.count_nonzero(ok))
    if failures * 2 > resamples:
        raise DegenerateStatisticError("statistic undefined on most resamples",
                                       failures=failures, resamples=resamples)
    stats = np.sort(stats[ok])
    b = stats.size

    if stats[0] == stats[-1]:
        c = float(stats[0])
        return BcaInterval(c, c, level, resamples, 0.0, 0.0, seed, estimate, failures)

    frac = np.count_nonzero(stats < estimate) / b
    frac = min(max(frac, 0.5 / b), 1.0 - 0.5 / b)
    z0 = norm_ppf(frac)
    a = acceleration(jackknife_values(diff))
    lower, upper = bca_endpoints(stats, z0, a, level)
    return BcaInterval(lower, upper, level, resamples, z0, a, seed, estimate, failures)


def _rowwise_pearson(u, v):
    du = u - u.mean(axis=1, keepdims=True)
    dv = v - v.mean(axis=1, keepdims=True)
    suu = np.einsum("ij,ij->i", du, du)
    svv = np.einsum("ij,ij->i", dv, dv)
    suv = np.einsum("ij,ij->i", du, dv)
    flat = (np.ptp(u, axis=1) == 0) | (np.ptp(v, axis=1) == 0)
    with np.errstate(all="ignore"):
        r = suv / (np.sqrt(suu) * np.sqrt(svv))
    r = np.clip(r, -1.0, 1.0)
    r[flat] = np.nan
    return r


def correlation_difference(gold, pred_a, pred_b, criterion: str = "pearson",
                           scale: float = 1.0) -> PairedScoreDiff:
    """``scale * (corr(gold, pred_a) - corr(gold, pred_b))`` over resampled items.

    ``criterion`` is ``"pearson"`` or ``"spearman"``; the result is vectorized.
    """
    gold = np.asarray(gold, dtype=np.float64)
    pred_a = np.asarray(pred_a, dtype=np.float64)
    pred_b = np.asarray(pred_b, dtype=np.float64)
    if not gold.shape == pred_a.shape == pred_b.shape or gold.ndim != 1:
        raise ValueError("gold and predictions must be 1-D arrays of equal length")
    if criterion not in ("pearson", "spearman"):
        raise ValueError(f"unknown criterion {criterion!r}")

    def stat(idx):
        g, pa, pb = gold[idx], pred_a[idx], pred_b[idx]
        if criterion == "spearman":
            g, pa, pb = rank_rows(g), rank_rows(pa), rank_rows(pb)
        return scale * (_rowwise_pearson(g, pa) - _rowwise_pearson(g, pb))

    return PairedScoreDiff(stat, gold.size, vectorized=True)
