"""Rank correlation and t-test machinery for the hypothesis report.

Self-contained significance computations: Spearman's rank correlation
with average-rank tie handling (exact permutation p for small samples, t
approximation otherwise), the two-sided one-sample t-test, and a
Student-t CDF built on the regularized incomplete beta function
evaluated by Lentz's continued fraction.  No external stats dependency;
scientific libraries appear only as oracles in the test suite.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NumericError

EXACT_LIMIT = 10           # n! permutations enumerated up to here
_CF_EPS = 1e-15
_CF_FPMIN = 1e-300
_CF_MAX_ITER = 500

STAR_LEVELS = ((0.001, "***"), (0.01, "**"), (0.05, "*"))


@dataclass(frozen=True)
class CorrelationResult:
    r_s: float
    p_value: float
    n: int
    method: str


@dataclass(frozen=True)
class TTestResult:
    t: float
    p_value: float
    mean: float
    sd: float
    n: int


def stars(p_value):
    """Significance marker: *** below .001, ** below .01, * below .05."""
    for threshold, mark in STAR_LEVELS:
        if p_value < threshold:
            return mark
    return ""


# ------------------------------------------------------- incomplete beta

def _betacf(a, b, x):
    """Lentz continued fraction for the incomplete beta integral."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_FPMIN:
        d = _CF_FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_FPMIN:
            d = _CF_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _CF_FPMIN:
            c = _CF_FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_FPMIN:
            d = _CF_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _CF_FPMIN:
            c = _CF_FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise NumericError("incomplete beta continued fraction did not converge",
                       iterations=_CF_MAX_ITER)


def regularized_incomplete_beta(a, b, x):
    """I_x(a, b), accurate to ~1e-14 over (0, 1)."""
    if a <= 0.0 or b <= 0.0:
        raise ContractError("incomplete beta requires a > 0 and b > 0")
    if not 0.0 <= x <= 1.0:
        raise ContractError(f"incomplete beta argument {x} outside [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log(1.0 - x))
    front = math.exp(ln_front)
    # the continued fraction converges fast only below the mean; use the
    # reflection I_x(a,b) = 1 - I_{1-x}(b,a) on the other side
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_cdf(t, df):
    """P(T <= t) for Student's t with df degrees of freedom."""
    if df < 1:
        raise ContractError(f"degrees of freedom must be >= 1, got {df}")
    t = float(t)
    if math.isnan(t):
        raise NumericError("t statistic is NaN")
    if math.isinf(t):
        return 1.0 if t > 0.0 else 0.0
    if t == 0.0:
        return 0.5
    tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))
    return 1.0 - tail if t > 0.0 else tail


# --------------------------------------------------------------- t-test

def ttest_from_summary(mean, sd, n, mu0=0.0):
    """Two-sided one-sample t-test from summary statistics."""
    if n < 2:
        raise ContractError(f"t-test needs n >= 2, got {n}")
    if not sd > 0.0:
        raise NumericError("t-test undefined: zero sample variance")
    t = (mean - mu0) / (sd / math.sqrt(n))
    p = 2.0 * (1.0 - student_t_cdf(abs(t), n - 1))
    return TTestResult(t=t, p_value=min(p, 1.0), mean=float(mean),
                       sd=float(sd), n=int(n))


def one_sample_ttest(values, mu0=0.0):
    """Two-sided one-sample t-test of the mean of ``values`` against mu0."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size < 2:
        raise ContractError(f"t-test needs n >= 2, got {values.size}")
    if not np.isfinite(values).all():
        raise NumericError("t-test input contains non-finite values")
    return ttest_from_summary(float(values.mean()),
                              float(values.std(ddof=1)),
                              values.size, mu0)


# ------------------------------------------------------------- Spearman

def average_ranks(values):
    """1-based ranks with tied values sharing their average rank."""
    values = np.asarray(values, dtype=np.float64).ravel()
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    ranks = np.empty(values.size)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _pearson(x, y):
    xc = x - x.mean()
    yc = y - y.mean()
    ssx = float(np.einsum("i,i->", xc, xc))
    ssy = float(np.einsum("i,i->", yc, yc))
    if ssx == 0.0 or ssy == 0.0:
        raise NumericError("correlation undefined: constant input")
    return float(np.einsum("i,i->", xc, yc)) / math.sqrt(ssx * ssy)


def _exact_permutation_p(x_ranks, y_ranks, r_obs):
    """Two-sided exact p: share of rank permutations with |r| >= |r_obs|."""
    n = x_ranks.size
    xc = x_ranks - x_ranks.mean()
    yc = y_ranks - y_ranks.mean()
    denom = math.sqrt(float(np.einsum("i,i->", xc, xc))
                      * float(np.einsum("i,i->", yc, yc)))
    threshold = abs(r_obs) - 1e-12
    perms = itertools.permutations(range(n))
    count = 0
    total = math.factorial(n)
    chunk = 200_000
    while True:
        block = np.array(list(itertools.islice(perms, chunk)), dtype=np.intp)
        if block.size == 0:
            break
        dots = np.einsum("mi,i->m", yc[block], xc)
        count += int(np.count_nonzero(np.abs(dots / denom) >= threshold))
    return count / total


def spearman_rho(x, y, method="auto"):
    """Spearman rank correlation with two-sided significance.

    method: "auto" enumerates all permutations exactly for n <= 10 and
    falls back to the t approximation (df = n-2) beyond; "exact" and
    "approx" force one or the other.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ContractError(f"length mismatch: {x.size} vs {y.size}")
    n = x.size
    if n < 3:
        raise ContractError(f"spearman needs n >= 3, got {n}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise NumericError("spearman input contains non-finite values")
    x_ranks = average_ranks(x)
    y_ranks = average_ranks(y)
    r = _pearson(x_ranks, y_ranks)
    r = min(1.0, max(-1.0, r))
    if method == "auto":
        method = "exact" if n <= EXACT_LIMIT else "approx"
    if method == "exact":
        if n > EXACT_LIMIT:
            raise ContractError(
                f"exact permutation p limited to n <= {EXACT_LIMIT}, got {n}")
        p = _exact_permutation_p(x_ranks, y_ranks, r)
    elif method == "approx":
        if 1.0 - r * r <= 1e-15:
            p = 0.0
        else:
            t = r * math.sqrt((n - 2) / (1.0 - r * r))
            p = 2.0 * (1.0 - student_t_cdf(abs(t), n - 2))
    else:
        raise ContractError(f"unknown p-value method {method!r}")
    return CorrelationResult(r_s=r, p_value=min(p, 1.0), n=n, method=method)
