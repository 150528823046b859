"""Paired sign test and unpaired common language effect size."""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DataError, MathDomainError


@dataclass
class SignTestResult:
    p_value: float
    n_effective: int
    n_positive: int

    def to_dict(self) -> dict:
        return {
            "p_value": self.p_value,
            "n_effective": self.n_effective,
            "n_positive": self.n_positive,
        }


def _binomial_tail(n: int, k_from: int, k_to: int) -> Fraction:
    total = sum(math.comb(n, k) for k in range(k_from, k_to + 1))
    return Fraction(total, 2**n)


def sign_test(paired_diffs, alternative: str = "greater") -> SignTestResult:
    """Exact sign test on paired differences; ties are dropped.

    One-sided p-values are exact binomial tails under Bin(n, 1/2), so they
    are dyadic rationals k/2^n; the two-sided p doubles the smaller tail.
    """
    diffs = np.asarray(list(paired_diffs), dtype=np.float64)
    if diffs.size == 0:
        raise DataError("empty difference list")
    n_positive = int(np.sum(diffs > 0))
    n_negative = int(np.sum(diffs < 0))
    n = n_positive + n_negative
    if n == 0:
        raise MathDomainError("all paired differences are ties")
    if alternative == "greater":
        p = _binomial_tail(n, n_positive, n)
    elif alternative == "less":
        p = _binomial_tail(n, 0, n_positive)
    elif alternative == "two_sided":
        p = min(Fraction(1), 2 * min(_binomial_tail(n, n_positive, n),
                                     _binomial_tail(n, 0, n_positive)))
    else:
        raise DataError(f"unknown alternative {alternative!r}")
    return SignTestResult(p_value=float(p), n_effective=n, n_positive=n_positive)


def cles(scores_perturbed, scores_matching) -> float:
    """P(perturbed < matching) over all cross pairs; ties count one half."""
    a = np.asarray(list(scores_perturbed), dtype=np.float64)
    b = np.asarray(list(scores_matching), dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise DataError("empty score list")
    less = (a[:, None] < b[None, :]).sum()
    ties = (a[:, None] == b[None, :]).sum()
    return float((less + 0.5 * ties) / (a.size * b.size))


def significance_stars(p_value: float) -> int:
    """0-3 asterisks for significance at the 0.05 / 0.01 / 0.001 levels."""
    for stars, alpha in ((3, 0.001), (2, 0.01), (1, 0.05)):
        if p_value <= alpha:
            return stars
    return 0
