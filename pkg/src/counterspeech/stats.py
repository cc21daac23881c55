"""Two-sample significance machinery: Welch's t-test, bootstrap p-values,
nearest-rank percentiles.

The Student-t tail probability is computed from scratch via the regularized
incomplete beta function (continued fraction) so the test path carries no
heavyweight numerical dependency; accuracy target is 1e-10 against a
straight-line textbook oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .errors import DegenerateVarianceError, InsufficientDataError, InvalidInputError

_BETACF_MAX_ITER = 500
_BETACF_EPS = 1e-15
_BETACF_FPMIN = 1e-300

Tail = Literal["lower", "upper"]


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETACF_FPMIN:
        d = _BETACF_FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_FPMIN:
            d = _BETACF_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETACF_FPMIN:
            c = _BETACF_FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_FPMIN:
            d = _BETACF_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETACF_FPMIN:
            c = _BETACF_FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0.0 or b <= 0.0:
        raise InvalidInputError("beta parameters must be positive")
    if not 0.0 <= x <= 1.0:
        raise InvalidInputError("x must lie in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    # Use the CF on the side where it converges fast, mirror otherwise.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf(t: float, df: float) -> float:
    """One-sided survival P(T > t) for Student's t with df degrees of freedom."""
    if df <= 0.0:
        raise InvalidInputError("degrees of freedom must be positive")
    if math.isnan(t):
        return math.nan
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    x = df / (df + t * t)
    half_tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, x)
    return half_tail if t >= 0 else 1.0 - half_tail


@dataclass(frozen=True)
class WelchResult:
    t: float
    df: float
    p: float


def welch_t(sample_a: Sequence[float], sample_b: Sequence[float]) -> WelchResult:
    """Welch's unequal-variance two-sample t-test, two-sided.

    Degrees of freedom follow Welch-Satterthwaite; identical samples give
    t = 0 and p = 1.0 exactly, and the p-value is symmetric in the order of
    the two samples.
    """
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise InsufficientDataError("each sample needs at least 2 values")
    va = float(a.var(ddof=1))
    vb = float(b.var(ddof=1))
    if va == 0.0 and vb == 0.0:
        raise DegenerateVarianceError("both samples have zero variance")
    se2 = va / a.size + vb / b.size
    t = (float(a.mean()) - float(b.mean())) / math.sqrt(se2)
    df = se2 * se2 / (
        (va / a.size) ** 2 / (a.size - 1) + (vb / b.size) ** 2 / (b.size - 1)
    )
    p = 2.0 * student_t_sf(abs(t), df)
    return WelchResult(t=t, df=df, p=min(p, 1.0))


def bootstrap_p(
    control: Sequence[float],
    experimental_mean: float,
    resamples: int = 10_000,
    rng: np.random.Generator | int | None = None,
    tail: Tail = "lower",
) -> float:
    """Tail fraction of resampled control means relative to the observed mean.

    Draws `resamples` control-sized resamples with replacement, takes each
    mean, and returns the fraction that fall at or below (tail="lower") or
    at or above (tail="upper") `experimental_mean`. Deterministic for a
    fixed seed.
    """
    data = np.asarray(control, dtype=float)
    if data.size == 0:
        raise InsufficientDataError("control sample is empty")
    if resamples < 1:
        raise InvalidInputError("resamples must be >= 1")
    if tail not in ("lower", "upper"):
        raise InvalidInputError(f"unknown tail {tail!r}")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    n = data.size
    hits = 0
    # Chunked so 10^4 resamples of large groups stay memory-friendly.
    chunk = max(1, min(resamples, 2_000_000 // n))
    done = 0
    while done < resamples:
        take = min(chunk, resamples - done)
        idx = gen.integers(0, n, size=(take, n))
        means = data[idx].mean(axis=1)
        if tail == "lower":
            hits += int(np.count_nonzero(means <= experimental_mean))
        else:
            hits += int(np.count_nonzero(means >= experimental_mean))
        done += take
    return hits / resamples


_QUANTILE_KEYS = ("min", "p25", "p50", "p75", "max")


def nearest_rank_percentiles(values: Sequence[float]) -> dict[str, float]:
    """Min / 25 / 50 / 75 / max summary using the nearest-rank definition.

    The q-th percentile is the smallest element with at least q percent of
    the data at or below it; no interpolation between order statistics.
    """
    data = sorted(float(v) for v in values)
    if not data:
        raise InsufficientDataError("cannot summarize an empty sample")
    n = len(data)
    out: dict[str, float] = {"min": data[0], "max": data[-1]}
    for key, q in (("p25", 0.25), ("p50", 0.50), ("p75", 0.75)):
        rank = math.ceil(q * n)
        out[key] = data[max(rank, 1) - 1]
    return out
