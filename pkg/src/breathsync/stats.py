"""Box-plot summaries, one-way ANOVA, two-sample tests and outlier filtering.

p-values come from an in-house regularized incomplete beta function, so no
statistics package is needed at runtime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np


class DegenerateDataError(ValueError):
    pass


# ---------------------------------------------------------------- special functions

_FPMIN = 1e-300
_EPS = 1e-16


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for I_x(a, b), modified Lentz."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, 20000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)``."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if x <= 0:
        return 0.0
    if x >= 1:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_sf(f: float, d1: float, d2: float) -> float:
    """Survival function of the F distribution."""
    if math.isnan(f):
        return math.nan
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return betainc_reg(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))


def t_sf_two_sided(t: float, df: float) -> float:
    """``P(|T| >= |t|)`` for Student's t with ``df`` degrees of freedom."""
    if math.isnan(t):
        return math.nan
    if math.isinf(t):
        return 0.0
    return betainc_reg(df / 2.0, 0.5, df / (df + t * t))


def norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


# ---------------------------------------------------------------- result types


class PairwiseMethod(str, Enum):
    STUDENT_T = "student_t"
    WELCH_T = "welch_t"
    MANN_WHITNEY_U = "mann_whitney_u"


@dataclass(frozen=True)
class AnovaResult:
    f_stat: float
    p_value: float
    df_between: int
    df_within: int


@dataclass(frozen=True)
class PairwiseResult:
    statistic: float
    p_value: float
    method: PairwiseMethod
    df: float | None = None


@dataclass(frozen=True)
class BoxStats:
    median: float
    q1: float
    q3: float
    whisker_lo: float
    whisker_hi: float
    outliers: list[float] = field(default_factory=list)


# ---------------------------------------------------------------- tests


def _clean(x, name: str, min_n: int) -> np.ndarray:
    arr = np.asarray(x, dtype=float).ravel()
    arr = arr[np.isfinite(arr)]
    if arr.size < min_n:
        raise DegenerateDataError(f"{name} needs at least {min_n} finite values, got {arr.size}")
    return arr


def one_way_anova(groups: Sequence[Sequence[float]]) -> AnovaResult:
    """Classic between/within decomposition with an F-distribution p-value."""
    if len(groups) < 2:
        raise DegenerateDataError("ANOVA needs at least two groups")
    gs = [_clean(g, f"group {i}", 2) for i, g in enumerate(groups)]
    k = len(gs)
    n = sum(g.size for g in gs)
    grand = np.concatenate(gs).mean()
    ss_between = float(sum(g.size * (g.mean() - grand) ** 2 for g in gs))
    ss_within = float(sum(((g - g.mean()) ** 2).sum() for g in gs))
    dfb, dfw = k - 1, n - k
    if ss_within == 0:
        if ss_between == 0:
            raise DegenerateDataError("all values identical: F is undefined")
        return AnovaResult(math.inf, 0.0, dfb, dfw)
    f = (ss_between / dfb) / (ss_within / dfw)
    return AnovaResult(f, f_sf(f, dfb, dfw), dfb, dfw)


def independent_t(a, b, variant: str | PairwiseMethod = "student") -> PairwiseResult:
    """Two-sided independent-samples t-test (pooled or Welch)."""
    x, y = _clean(a, "a", 2), _clean(b, "b", 2)
    na, nb = x.size, y.size
    va, vb = x.var(ddof=1), y.var(ddof=1)
    diff = x.mean() - y.mean()
    welch = str(getattr(variant, "value", variant)) in ("welch", "welch_t")
    if welch:
        se2 = va / na + vb / nb
        method = PairwiseMethod.WELCH_T
        df = se2**2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1)) if se2 > 0 else na + nb - 2
    else:
        sp2 = ((na - 1) * va + (nb - 1) * vb) / (na + nb - 2)
        se2 = sp2 * (1 / na + 1 / nb)
        method = PairwiseMethod.STUDENT_T
        df = na + nb - 2
    if se2 == 0:
        if diff == 0:
            raise DegenerateDataError("both samples constant and equal: t is undefined")
        return PairwiseResult(math.copysign(math.inf, diff), 0.0, method, float(df))
    t = float(diff / math.sqrt(se2))
    return PairwiseResult(float(t), t_sf_two_sided(t, df), method, float(df))


def midranks(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """1-based ranks with ties averaged, plus the tie-group sizes."""
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(x.size)
    ties = []
    i = 0
    while i < xs.size:
        j = i
        while j + 1 < xs.size and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        ties.append(j - i + 1)
        i = j + 1
    return ranks, np.asarray(ties, dtype=float)


def mann_whitney_u(a, b, continuity: bool = True) -> PairwiseResult:
    """U of ``a`` (pairs with a > b, ties count 1/2); two-sided tie-corrected normal p."""
    x, y = _clean(a, "a", 1), _clean(b, "b", 1)
    na, nb = x.size, y.size
    n = na + nb
    ranks, ties = midranks(np.concatenate([x, y]))
    u = float(ranks[:na].sum() - na * (na + 1) / 2.0)
    mu = na * nb / 2.0
    tie_term = float(np.sum(ties**3 - ties)) / (n * (n - 1)) if n > 1 else 0.0
    var = na * nb / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return PairwiseResult(u, 1.0, PairwiseMethod.MANN_WHITNEY_U)
    dev = abs(u - mu) - (0.5 if continuity else 0.0)
    z = max(dev, 0.0) / math.sqrt(var)
    return PairwiseResult(u, min(1.0, 2.0 * norm_sf(z)), PairwiseMethod.MANN_WHITNEY_U)


def box_stats(x) -> BoxStats:
    """Median, quartiles (linear interpolation), 1.5 IQR whiskers and outliers."""
    arr = np.sort(_clean(x, "sample", 1))
    q1, med, q3 = (float(v) for v in np.quantile(arr, [0.25, 0.5, 0.75]))
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = arr[(arr >= lo_fence) & (arr <= hi_fence)]
    outliers = arr[(arr < lo_fence) | (arr > hi_fence)]
    return BoxStats(med, q1, q3, float(inside.min()), float(inside.max()),
                    [float(v) for v in outliers])


def z_outlier_filter(values, limit: float = 3.0) -> tuple[np.ndarray, np.ndarray]:
    """Single pass: drop values whose population z-score exceeds ``limit`` in magnitude."""
    arr = np.asarray(values, dtype=float)
    if arr.size < 2:
        raise DegenerateDataError("outlier filtering needs at least 2 values")
    sigma = arr.std()
    if sigma == 0:
        return arr.copy(), np.empty(0)
    z = (arr - arr.mean()) / sigma
    out = np.abs(z) > limit
    return arr[~out], arr[out]


def significance_stars(p: float) -> str:
    """Legend used under the result figures; blank above p = .1."""
    if math.isnan(p):
        return ""
    for limit, mark in ((1e-4, "****"), (1e-3, "***"), (1e-2, "**"), (0.05, "*"), (0.1, "ns")):
        if p <= limit:
            return mark
    return ""
