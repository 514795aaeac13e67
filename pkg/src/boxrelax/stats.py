"""Empirical summaries of trial campaigns and their comparison to theory.

Turns raw error counts into the objects the predictions speak about: the
empirical PMF of the error-bit count, its total variation distance to the
predicted Poisson law, the perfect-recovery probability with a Wilson score
interval, and the near-independence diagnostic for bit-error indicators.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .theory import poisson_pmf

# two-sided 95% normal quantile used by every Wilson interval here
_Z95 = 1.959963984540054

SUMMARIES_CSV_HEADER = (
    "grid_index,trials_used,mean_ne,ber_mean,p_correct_hat,ci_lo,ci_hi,"
    "tv_to_poisson,lambda_p_used,pairwise_error_corr"
)


@dataclass
class EmpiricalSummary:
    """Aggregated view of one grid point's converged trials."""

    grid_index: int
    trials_used: int
    pmf: dict[int, float]
    mean_ne: float
    ber_mean: float
    p_correct_hat: float
    p_correct_ci: tuple[float, float]
    tv_to_poisson: float
    lambda_p_used: float
    pairwise_error_corr: float


def _check_counts(ne_values) -> list[int]:
    seq = list(ne_values)
    if not seq:
        raise ValueError("need at least one error count")
    out = []
    for v in seq:
        if int(v) != v or v < 0:
            raise ValueError(f"error counts must be nonnegative integers, got {v!r}")
        out.append(int(v))
    return out


def empirical_pmf(ne_values) -> dict[int, float]:
    """Observed frequencies of the error-bit count, support = observed values."""
    seq = _check_counts(ne_values)
    total = len(seq)
    return {k: c / total for k, c in sorted(Counter(seq).items())}


def tv_distance_to_poisson(pmf: dict, lam: float) -> float:
    """Half L1 distance between a discrete law and Poisson(lam).

    Explicit terms run to K = max(observed, lam + 12 sqrt(lam) + 30); the
    Poisson mass beyond K enters through normalisation, so nothing is
    silently truncated and the result is exact to ~1e-12.
    """
    lam = float(lam)
    if not (math.isfinite(lam) and lam >= 0.0):
        raise ValueError(f"lambda must be nonnegative and finite, got {lam!r}")
    if not pmf:
        raise ValueError("pmf must be nonempty")
    clean = {}
    for k, q in pmf.items():
        if int(k) != k or k < 0:
            raise ValueError(f"pmf support must be nonnegative integers, got {k!r}")
        q = float(q)
        if not (0.0 <= q <= 1.0 + 1.0e-12):
            raise ValueError(f"pmf values must lie in [0, 1], got {q!r}")
        clean[int(k)] = q
    mass = sum(clean.values())
    if abs(mass - 1.0) > 1.0e-9:
        raise ValueError(f"pmf must sum to 1, got {mass!r}")
    k_cap = max(max(clean), int(math.ceil(lam + 12.0 * math.sqrt(lam) + 30.0)))
    total = 0.0
    poisson_mass = 0.0
    for k in range(k_cap + 1):
        pk = poisson_pmf(lam, k)
        poisson_mass += pk
        total += abs(clean.get(k, 0.0) - pk)
    total += max(1.0 - poisson_mass, 0.0)
    return min(0.5 * total, 1.0)


def wilson_interval(successes: int, total: int, z: float = _Z95) -> tuple[float, float]:
    """Wilson score interval; stays inside [0,1] and contains the point estimate."""
    if int(total) != total or total < 1:
        raise ValueError(f"total must be a positive integer, got {total!r}")
    if int(successes) != successes or not 0 <= successes <= total:
        raise ValueError(f"successes must lie in [0, {total}], got {successes!r}")
    n = int(total)
    p_hat = successes / n
    denom = 1.0 + z * z / n
    center = (p_hat + z * z / (2.0 * n)) / denom
    half = z * math.sqrt(p_hat * (1.0 - p_hat) / n + z * z / (4.0 * n * n)) / denom
    # the degenerate counts hit the boundary exactly; keep fp noise out
    lo = 0.0 if successes == 0 else max(center - half, 0.0)
    hi = 1.0 if successes == n else min(center + half, 1.0)
    return lo, hi


def success_probability(ne_values) -> tuple[float, float, float]:
    """Fraction of perfect recoveries with its 95% Wilson interval."""
    seq = _check_counts(ne_values)
    zeros = sum(1 for v in seq if v == 0)
    lo, hi = wilson_interval(zeros, len(seq))
    return zeros / len(seq), lo, hi


def pairwise_error_correlation(bit_error_matrix) -> float:
    """Mean pairwise Pearson correlation of bit-error indicators.

    Rows are trials, columns sampled coordinates. Degenerate (constant)
    columns are skipped; if no pair survives the estimate is undefined and a
    ValueError is raised.
    """
    m = np.asarray(bit_error_matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("bit_error_matrix must be 2-dimensional")
    trials, coords = m.shape
    if coords < 2:
        raise ValueError("need at least 2 coordinates")
    if trials < 30:
        raise ValueError("need at least 30 trials")
    keep = m.std(axis=0) > 0.0
    if int(keep.sum()) < 2:
        raise ValueError("all coordinate pairs are degenerate")
    corr = np.corrcoef(m[:, keep], rowvar=False)
    iu = np.triu_indices(corr.shape[0], k=1)
    return float(np.mean(corr[iu]))


def binomial_reference_pmf(p: int, q: float) -> dict[int, float]:
    """Binomial(p, q) PMF; the small-numbers baseline for the Poisson collapse.

    Evaluated by the overflow-free recurrence around the mode (ratios between
    neighbouring masses are exact rationals times q/(1-q)) and normalised by
    the accumulated total. Direct log-space gamma differences carry ~1e-11
    relative noise at p = 1e4, which would break the exact-normalisation
    contract.
    """
    if int(p) != p or p < 1:
        raise ValueError(f"p must be a positive integer, got {p!r}")
    p = int(p)
    q = float(q)
    if not (0.0 <= q <= 1.0):
        raise ValueError(f"q must lie in [0, 1], got {q!r}")
    if q == 0.0:
        return {0: 1.0}
    if q == 1.0:
        return {p: 1.0}
    ratio = q / (1.0 - q)
    u = np.zeros(p + 1)
    mode = min(p, int(math.floor((p + 1) * q)))
    u[mode] = 1.0
    for k in range(mode, 0, -1):
        u[k - 1] = u[k] * k / ((p - k + 1.0) * ratio)
    for k in range(mode, p):
        u[k + 1] = u[k] * (p - k) / (k + 1.0) * ratio
    total = math.fsum(u)
    return {k: float(u[k] / total) for k in range(p + 1)}


def summarize_trials(
    grid_index: int,
    ne_values,
    p: int,
    lambda_p: float,
    bit_error_matrix=None,
) -> EmpiricalSummary:
    """Build the per-grid-point summary from converged trials."""
    seq = _check_counts(ne_values)
    pmf = empirical_pmf(seq)
    p_hat, lo, hi = success_probability(seq)
    corr = math.nan
    if bit_error_matrix is not None:
        try:
            corr = pairwise_error_correlation(bit_error_matrix)
        except ValueError:
            corr = math.nan  # e.g. zero errors everywhere at this grid point
    return EmpiricalSummary(
        grid_index=int(grid_index),
        trials_used=len(seq),
        pmf=pmf,
        mean_ne=float(np.mean(seq)),
        ber_mean=float(np.mean(seq)) / int(p),
        p_correct_hat=p_hat,
        p_correct_ci=(lo, hi),
        tv_to_poisson=tv_distance_to_poisson(pmf, lambda_p),
        lambda_p_used=float(lambda_p),
        pairwise_error_corr=corr,
    )


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def summaries_to_csv(summaries) -> str:
    lines = [SUMMARIES_CSV_HEADER]
    for s in summaries:
        lines.append(
            ",".join(
                [
                    str(s.grid_index),
                    str(s.trials_used),
                    _fmt(s.mean_ne),
                    _fmt(s.ber_mean),
                    _fmt(s.p_correct_hat),
                    _fmt(s.p_correct_ci[0]),
                    _fmt(s.p_correct_ci[1]),
                    _fmt(s.tv_to_poisson),
                    _fmt(s.lambda_p_used),
                    _fmt(s.pairwise_error_corr),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def summaries_to_json(summaries) -> str:
    payload = []
    for s in summaries:
        payload.append(
            {
                "grid_index": s.grid_index,
                "trials_used": s.trials_used,
                "pmf": {str(k): v for k, v in s.pmf.items()},
                "mean_ne": s.mean_ne,
                "ber_mean": s.ber_mean,
                "p_correct_hat": s.p_correct_hat,
                "p_correct_ci": list(s.p_correct_ci),
                "tv_to_poisson": s.tv_to_poisson,
                "lambda_p_used": s.lambda_p_used,
                "pairwise_error_corr": None
                if math.isnan(s.pairwise_error_corr)
                else s.pairwise_error_corr,
            }
        )
    return json.dumps(payload, indent=2) + "\n"
