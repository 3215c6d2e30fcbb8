"""Rank-based group comparisons for metric samples.

Kruskal-Wallis across basins, Dunn's pairwise z tests with Holm
adjustment, and Mann-Whitney U for two-group contrasts. Small samples
take exact enumeration paths; everything else uses the usual chi-square
and normal approximations with tie corrections.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc

EXACT_KW_MAX_N = 8
EXACT_MW_MAX_PRODUCT = 400


@dataclass(slots=True, frozen=True)
class SampleSummary:
    n: int
    mean: float
    sd: float
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float


@dataclass(slots=True, frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method: str
    df: int | None = None


@dataclass(slots=True, frozen=True)
class PairResult:
    group_a: str
    group_b: str
    statistic: float
    p_raw: float
    p_adjusted: float


def summarize(values) -> SampleSummary:
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        raise ValueError("empty sample")
    q1, med, q3 = (float(np.quantile(v, q)) for q in (0.25, 0.5, 0.75))
    sd = float(np.std(v, ddof=1)) if v.size > 1 else float("nan")
    return SampleSummary(
        int(v.size), float(np.mean(v)), sd, float(v.min()), q1, med, q3, float(v.max())
    )


def midranks(values) -> np.ndarray:
    """Ranks 1..n with ties sharing the average of their rank positions."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size, dtype=float)
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _tie_term(pooled: np.ndarray) -> float:
    """Sum of t^3 - t over tie groups."""
    _, counts = np.unique(pooled, return_counts=True)
    return float(np.sum(counts.astype(float) ** 3 - counts))


def chi_square_sf(x: float, df: int) -> float:
    if x <= 0.0:
        return 1.0
    return float(gammaincc(df / 2.0, x / 2.0))


def normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def _h_statistic(rank_sums, sizes, total_n: int, correction: float) -> float:
    h = 12.0 / (total_n * (total_n + 1)) * sum(
        rs * rs / sz for rs, sz in zip(rank_sums, sizes)
    ) - 3.0 * (total_n + 1)
    return h / correction


def kruskal_wallis(groups) -> TestResult:
    """H test over two or more groups of samples.

    With 8 or fewer observations in total the p-value is computed by
    enumerating every assignment of the pooled values to the group
    sizes; otherwise chi-square with k - 1 degrees of freedom.
    """
    data = [np.asarray(list(g), dtype=float) for g in groups]
    if len(data) < 2 or any(g.size == 0 for g in data):
        raise ValueError("need at least two non-empty groups")
    sizes = [int(g.size) for g in data]
    pooled = np.concatenate(data)
    n = int(pooled.size)
    correction = 1.0 - _tie_term(pooled) / (n**3 - n)
    df = len(data) - 1
    if correction == 0.0:
        # every observation identical
        return TestResult(0.0, 1.0, "degenerate", df)
    ranks = midranks(pooled)
    bounds = np.cumsum([0] + sizes)
    rank_sums = [float(ranks[bounds[i] : bounds[i + 1]].sum()) for i in range(len(sizes))]
    h = _h_statistic(rank_sums, sizes, n, correction)
    if n <= EXACT_KW_MAX_N:
        p = _exact_kw_p(ranks, sizes, n, correction, h)
        return TestResult(h, p, "exact", df)
    return TestResult(h, chi_square_sf(h, df), "asymptotic", df)


def _exact_kw_p(ranks, sizes, n, correction, h_obs) -> float:
    idx = list(range(n))
    count = 0
    total = 0

    def assign(remaining, gi, rank_sums):
        nonlocal count, total
        if gi == len(sizes) - 1:
            last = sum(ranks[i] for i in remaining)
            h = _h_statistic(rank_sums + [last], sizes, n, correction)
            total += 1
            if h >= h_obs - 1e-12:
                count += 1
            return
        for combo in itertools.combinations(remaining, sizes[gi]):
            rest = [i for i in remaining if i not in set(combo)]
            assign(rest, gi + 1, rank_sums + [sum(ranks[i] for i in combo)])

    assign(idx, 0, [])
    return count / total


def dunn_posthoc(groups: dict[str, list[float]], *, adjust: str = "holm") -> list[PairResult]:
    """Pairwise z comparisons of mean ranks after a Kruskal-Wallis test.

    groups maps label to sample; pairs come out in the label order given.
    adjust is one of holm, bonferroni, none.
    """
    if adjust not in ("holm", "bonferroni", "none"):
        raise ValueError(f"unknown adjustment {adjust!r}")
    labels = list(groups)
    data = [np.asarray(groups[lab], dtype=float) for lab in labels]
    if len(labels) < 2 or any(g.size == 0 for g in data):
        raise ValueError("need at least two non-empty groups")
    sizes = [int(g.size) for g in data]
    pooled = np.concatenate(data)
    n = int(pooled.size)
    ranks = midranks(pooled)
    bounds = np.cumsum([0] + sizes)
    mean_ranks = [float(ranks[bounds[i] : bounds[i + 1]].mean()) for i in range(len(sizes))]
    var_base = n * (n + 1) / 12.0 - _tie_term(pooled) / (12.0 * (n - 1))
    pairs = []
    raw = []
    for i, j in itertools.combinations(range(len(labels)), 2):
        se = math.sqrt(var_base * (1.0 / sizes[i] + 1.0 / sizes[j]))
        z = (mean_ranks[i] - mean_ranks[j]) / se if se > 0.0 else 0.0
        p = min(1.0, 2.0 * normal_sf(abs(z)))
        pairs.append((labels[i], labels[j], z))
        raw.append(p)
    adjusted = adjust_pvalues(raw, method=adjust)
    return [
        PairResult(a, b, z, p, q)
        for (a, b, z), p, q in zip(pairs, raw, adjusted)
    ]


def adjust_pvalues(pvalues, *, method: str = "holm") -> list[float]:
    m = len(pvalues)
    if method == "none" or m == 0:
        return [float(p) for p in pvalues]
    if method == "bonferroni":
        return [min(1.0, m * float(p)) for p in pvalues]
    if method != "holm":
        raise ValueError(f"unknown adjustment {method!r}")
    order = sorted(range(m), key=lambda i: pvalues[i])
    out = [0.0] * m
    running = 0.0
    for pos, i in enumerate(order):
        running = max(running, min(1.0, (m - pos) * float(pvalues[i])))
        out[i] = running
    return out


def _u_counts(m: int, n: int) -> list[int]:
    """Distribution of the U statistic for tie-free samples of size m, n.

    counts[u] is the number of the C(m + n, m) equally likely rank
    assignments with U = u. Exact integer arithmetic throughout.
    """
    table: dict[tuple[int, int], list[int]] = {}
    for i in range(m + 1):
        for j in range(n + 1):
            if i == 0 or j == 0:
                table[(i, j)] = [1]
                continue
            shifted = table[(i - 1, j)]
            kept = table[(i, j - 1)]
            c = [0] * (i * j + 1)
            for u, cnt in enumerate(shifted):
                c[u + j] += cnt
            for u, cnt in enumerate(kept):
                c[u] += cnt
            table[(i, j)] = c
    return table[(m, n)]


def mann_whitney(x, y) -> TestResult:
    """Two-sided Mann-Whitney U test, U = min(U_x, U_y).

    Tie-free samples with n_x * n_y small enough get the exact
    permutation distribution; otherwise a normal approximation with tie
    correction and a 0.5 continuity correction.
    """
    xv = np.asarray(list(x), dtype=float)
    yv = np.asarray(list(y), dtype=float)
    if xv.size == 0 or yv.size == 0:
        raise ValueError("need two non-empty samples")
    nx, ny = int(xv.size), int(yv.size)
    pooled = np.concatenate([xv, yv])
    ranks = midranks(pooled)
    rx = float(ranks[:nx].sum())
    ux = rx - nx * (nx + 1) / 2.0
    uy = nx * ny - ux
    u = min(ux, uy)
    tie_sum = _tie_term(pooled)
    if tie_sum == 0.0 and nx * ny <= EXACT_MW_MAX_PRODUCT:
        counts = _u_counts(nx, ny)
        total = sum(counts)
        ui = int(round(u))
        lower = sum(counts[: ui + 1])
        upper = sum(counts[nx * ny - ui :])
        p = min(1.0, (lower + upper) / total)
        return TestResult(u, p, "exact")
    n = nx + ny
    mean = nx * ny / 2.0
    var = nx * ny / 12.0 * ((n + 1) - tie_sum / (n * (n - 1)))
    if var <= 0.0:
        return TestResult(u, 1.0, "degenerate")
    z = (u - mean + 0.5) / math.sqrt(var)
    p = min(1.0, 2.0 * normal_sf(-z))
    return TestResult(u, p, "asymptotic")
