"""Closed-form accuracy model of the MaxLogHash estimator.

For two sets whose union has ``n`` elements and Jaccard similarity ``J``,
one register pair carries a *decisive* difference (the larger max log-rank
belongs to a unique item, which lies outside the intersection) with
probability ``alpha_n(n) * (1 - J)``.  The estimator divides the observed
count of such registers by ``k * ALPHA``; everything below follows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import DomainError

#: Normalising constant used by the estimator (limit of ``alpha_n``, 4 digits).
ALPHA = 0.7213

_TAIL_TOL = 1e-12


def alpha_n(n: int) -> float:
    """``n * sum_{j>=1} 2^-(j+1) * (1 - 2^-j)^(n-1)`` for ``n >= 2``.

    The series is summed until the remaining tail, bounded by
    ``n * 2^-(j+1)``, drops below 1e-12.  Term count grows like ``log2 n``.
    """
    if n < 2:
        raise DomainError(f"alpha_n needs a union of at least 2 elements, got n={n}")
    total = 0.0
    j = 1
    while True:
        p = 2.0**-j
        total += 0.5 * p * math.exp((n - 1) * math.log1p(-p))
        j += 1
        if n * 2.0 ** -(j + 1) < _TAIL_TOL:
            break
    return n * total


def alpha_n_closed_form(n: int) -> float:
    """Finite alternating-sum form of :func:`alpha_n`, exact for 2 <= n <= 50.

    Evaluated in rational arithmetic; used to cross-check the series.
    """
    if not 2 <= n <= 50:
        raise DomainError(f"closed form is restricted to 2 <= n <= 50, got n={n}")
    acc = Fraction(0)
    for l in range(n):
        sign = -1 if (n - l - 1) % 2 else 1
        acc += sign * Fraction(math.comb(n - 1, l), 2 ** (n - l) - 1)
    return float(Fraction(n, 2) * acc)


def beta_n(n: int) -> float:
    return alpha_n(n) / ALPHA


def _check_j(j: float) -> None:
    if not 0.0 <= j <= 1.0:
        raise DomainError(f"Jaccard similarity must be in [0, 1], got {j}")


def _check_k(k: int) -> None:
    if k < 1:
        raise DomainError(f"register count must be >= 1, got {k}")


def decisive_probability(n: int, j: float) -> float:
    """Probability that one register pair is decisive; 0 for a singleton union."""
    _check_j(j)
    if n < 1:
        raise DomainError(f"union cardinality must be >= 1, got {n}")
    if n == 1:
        return 0.0
    return alpha_n(n) * (1.0 - j)


def expected_bias(n: int, j: float) -> float:
    """``E[J_hat] - J = (1 - beta_n) (1 - J)``."""
    _check_j(j)
    return (1.0 - beta_n(n)) * (1.0 - j)


def variance(n: int, j: float, k: int) -> float:
    """Exact variance ``beta (1-J) (1/ALPHA - beta (1-J)) / k``."""
    _check_j(j)
    _check_k(k)
    b = beta_n(n) * (1.0 - j)
    return b * (1.0 / ALPHA - b) / k


def approx_variance(j: float, k: int) -> float:
    """:func:`variance` with ``beta = 1``, i.e. ``(1-J)(J + 0.3864)/k``."""
    _check_j(j)
    _check_k(k)
    return (1.0 - j) * (1.0 / ALPHA - (1.0 - j)) / k


def required_k(j: float, rmse_target: float) -> int:
    """Smallest register count whose approximate RMSE meets ``rmse_target``."""
    _check_j(j)
    if rmse_target <= 0:
        raise DomainError(f"rmse target must be positive, got {rmse_target}")
    need = (1.0 - j) * (1.0 / ALPHA - (1.0 - j)) / rmse_target**2
    return max(1, math.ceil(need))


def minhash_variance(j: float, k: int) -> float:
    """Variance of the MinHash estimator, ``J (1-J) / k``."""
    _check_j(j)
    _check_k(k)
    return j * (1.0 - j) / k


@dataclass(frozen=True)
class AccuracyModel:
    """Predicted accuracy for one (n, J, k) configuration."""

    n: int
    j: float
    k: int
    alpha: float = field(init=False)
    beta: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "alpha", alpha_n(self.n))
        object.__setattr__(self, "beta", self.alpha / ALPHA)

    @property
    def bias(self) -> float:
        return (1.0 - self.beta) * (1.0 - self.j)

    @property
    def variance(self) -> float:
        return variance(self.n, self.j, self.k)

    @property
    def rmse(self) -> float:
        return math.sqrt(self.variance + self.bias**2)
