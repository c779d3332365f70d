"""
Poisson law, Stein-equation solver and the Chen-Stein return-time bound.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import gammaln, pdtrc, xlogy

from reclab.core.config import config
from reclab.core.errors import EmptyRangeError, InvalidInputError, StabilityError
from reclab.models.schemas import ChenSteinBound
from reclab.services.symbolic import CountDistribution

logger = logging.getLogger(__name__)

SEAM_OVERLAP = 5


# ---------------------------------------------------------------------------
# Poisson law
# ---------------------------------------------------------------------------
def poisson_pmf(t: float, k: int) -> float:
    """e^-t t^k / k!, evaluated in log space."""
    if t < 0 or k < 0:
        raise InvalidInputError("Poisson pmf needs t >= 0 and k >= 0")
    return float(np.exp(xlogy(k, t) - t - gammaln(k + 1)))


def poisson_pmf_array(t: float, K: int) -> np.ndarray:
    ks = np.arange(K + 1)
    return np.exp(xlogy(ks, t) - t - gammaln(ks + 1))


def poisson_law(t: float, K: int) -> CountDistribution:
    """Poisson(t) on {0..K} with the tail P(X > K) lumped into overflow."""
    if t < 0 or K < 0:
        raise InvalidInputError("Poisson law needs t >= 0 and K >= 0")
    probs = tuple(float(p) for p in poisson_pmf_array(t, K))
    overflow = float(pdtrc(K, t))
    # E[X; X > K] = t P(X >= K)
    overflow_mean = t if K == 0 else t * float(pdtrc(K - 1, t))
    return CountDistribution(probs, overflow, overflow_mean)


def poisson_set_measure(t: float, E: Iterable[int]) -> float:
    return float(sum(poisson_pmf(t, k) for k in set(E)))


# ---------------------------------------------------------------------------
# Stein equation
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class SteinSolution:
    """
    Solution of t f(k+1) - k f(k) = 1_E(k) - nu_t(E) on 0..K, f(0) = 0.
    `f` holds f(0..K+1).
    """

    t: float
    E: frozenset[int]
    K: int
    f: tuple[float, ...]
    nu_E: float
    seam: int
    seam_mismatch: float

    def h(self, k: int) -> float:
        return (1.0 if k in self.E else 0.0) - self.nu_E

    def residual(self, k: int) -> float:
        return self.t * self.f[k + 1] - k * self.f[k] - self.h(k)

    def max_residual(self) -> float:
        return max(abs(self.residual(k)) for k in range(self.K + 1))

    def logsum_bounds_hold(self, tol: float = config.FLOAT_TOL) -> bool:
        """|f(k)| <= 1 for k <= t and |f(k)| <= (2 + t)/k for k > t."""
        for k in range(1, self.K + 2):
            bound = 1.0 if k <= self.t else (2.0 + self.t) / k
            if abs(self.f[k]) > bound + tol:
                return False
        return True

    def partial_sum(self, m: int) -> float:
        """sum_{k=1}^m |f(k)|."""
        if not 1 <= m <= self.K + 1:
            raise InvalidInputError(f"partial sum needs 1 <= m <= {self.K + 1}")
        return float(np.sum(np.abs(self.f[1 : m + 1])))

    def rows(self) -> list[tuple[int, float]]:
        return list(enumerate(self.f))


def partial_sum_bound(t: float, m: int) -> float:
    """m for m <= t, else t + (2 + t) log(m / t)."""
    if m <= t:
        return float(m)
    return t + (2.0 + t) * math.log(m / t)


def _indicator_gap(t: float, E: frozenset[int]):
    nu = poisson_set_measure(t, E)
    return nu, (lambda k: (1.0 if k in E else 0.0) - nu)


def stein_forward(t: float, E: Iterable[int], upto: int) -> list[float]:
    """f(0..upto) from f(k+1) = (k f(k) + h(k)) / t."""
    E = frozenset(E)
    _, h = _indicator_gap(t, E)
    f = [0.0]
    for k in range(upto):
        f.append((k * f[k] + h(k)) / t)
    return f


def _tail_ratio(t: float, k: int) -> float:
    """P(X >= k) / (t P(X = k-1)) = sum_{j>=1} prod_{i=1}^j t/(k-1+i) / t."""
    total, term, j = 0.0, 1.0, 1
    while True:
        term *= t / (k - 1 + j)
        total += term
        if term <= 1e-18 * total:
            break
        j += 1
    return total / t


def stein_backward(t: float, E: Iterable[int], start: int, downto: int) -> dict[int, float]:
    """
    f(downto..start) from the tail series at `start` (start > max E), then
    f(k) = (t f(k+1) - h(k)) / k downward.
    """
    E = frozenset(E)
    if E and start <= max(E):
        raise InvalidInputError("backward recursion must start beyond the target set")
    if start <= t:
        raise InvalidInputError("backward recursion must start beyond t")
    nu, h = _indicator_gap(t, E)
    # beyond max E the gap h is the constant -nu
    f = {start: nu * _tail_ratio(t, start)}
    for k in range(start - 1, max(downto, 1) - 1, -1):
        f[k] = (t * f[k + 1] - h(k)) / k
    return f


def stein_solve(t: float, E: Iterable[int], K: int | None = None) -> SteinSolution:
    """Hybrid recursion: forward up to ceil(t), backward tail series beyond it."""
    if not t > 0:
        raise InvalidInputError("t must be positive")
    E = frozenset(E)
    if any(k < 0 for k in E):
        raise InvalidInputError("target set must hold non-negative integers")
    K = max(E, default=0) if K is None else K
    if E and max(E) > K:
        raise InvalidInputError(f"target set exceeds the table range 0..{K}")

    seam = math.ceil(t)
    start = max(K + 1, seam + SEAM_OVERLAP + 1, max(E, default=0) + 1)
    forward = stein_forward(t, E, seam + SEAM_OVERLAP)
    backward = stein_backward(t, E, start, max(seam - SEAM_OVERLAP, 1))

    window = range(max(seam - SEAM_OVERLAP, 1), seam + SEAM_OVERLAP + 1)
    mismatch = max(abs(forward[k] - backward[k]) for k in window)
    if mismatch > config.STEIN_TOL:
        raise StabilityError(f"Stein seam mismatch {mismatch:.3e} at t={t}")

    f = [forward[k] if k <= seam else backward[k] for k in range(K + 2)]
    nu, _ = _indicator_gap(t, E)
    logger.debug("stein t=%s |E|=%d K=%d seam mismatch %.2e", t, len(E), K, mismatch)
    return SteinSolution(t=t, E=E, K=K, f=tuple(f), nu_E=nu, seam=seam, seam_mismatch=mismatch)


def stein_operator(t: float, f: Sequence[float], k: int) -> float:
    """(S f)(k) = t f(k+1) - k f(k), with f = 0 beyond its table."""
    nxt = f[k + 1] if k + 1 < len(f) else 0.0
    cur = f[k] if k < len(f) else 0.0
    return t * nxt - k * cur


def stein_expectation(t: float, f: Sequence[float]) -> float:
    """E[(S f)(X)] for X ~ Poisson(t) and f supported on its table."""
    pmf = poisson_pmf_array(t, len(f))
    return float(sum(pmf[k] * stein_operator(t, f, k) for k in range(len(f) + 1)))


# ---------------------------------------------------------------------------
# Total variation
# ---------------------------------------------------------------------------
def _common_cap(p: CountDistribution, q: CountDistribution) -> int:
    low, high = sorted((p, q), key=lambda d: d.cap)
    if low.overflow == 0:
        return high.cap
    return low.cap


def tv_distance(p: CountDistribution, q: CountDistribution):
    """(1/2) sum_k |p(k) - q(k)| over p(0..K) and the overflow cell."""
    p.check_normalized()
    q.check_normalized()
    K = _common_cap(p, q)
    left, right = p.recap(K).cells(), q.recap(K).cells()
    if p.is_exact and q.is_exact:
        return sum((abs(a - b) for a, b in zip(left, right)), start=Fraction(0)) / 2
    gap = 0.5 * sum(abs(float(a) - float(b)) for a, b in zip(left, right))
    return min(gap, 1.0)


# ---------------------------------------------------------------------------
# Chen-Stein bound
# ---------------------------------------------------------------------------
def chen_stein_bound(
    muA: float,
    tauA: int,
    alpha_fn: Callable[[int], float],
    short_return_fn: Callable[[int], float],
    m: int,
) -> ChenSteinBound:
    """
    min over tau(A) < delta < m of
    (alpha(delta)/mu(A) + delta mu(A) + P_A(tau_A <= delta)) (t + log m),
    with the unknown constant C1 set to 1.
    """
    if not 0 < muA < 1:
        raise InvalidInputError("mu(A) must lie in (0, 1)")
    if tauA < 1:
        raise InvalidInputError("tau(A) must be at least 1")
    if m <= tauA + 1:
        raise EmptyRangeError(f"no gap with tau(A)={tauA} < delta < m={m}")

    t = m * muA
    log_factor = t + math.log(m)
    span = m - tauA - 1
    use_envelope = span > config.CHEN_STEIN_FULL_SCAN

    best = math.inf
    best_delta = tauA + 1
    best_terms = (0.0, 0.0, 0.0)
    scanned = 0
    truncated = False
    for delta in range(tauA + 1, m):
        scanned += 1
        alpha_term = alpha_fn(delta) / muA
        gap_term = delta * muA
        short_term = short_return_fn(delta)
        value = alpha_term + gap_term + short_term
        if value < best:
            best, best_delta, best_terms = value, delta, (alpha_term, gap_term, short_term)
        elif use_envelope and gap_term + short_term >= best:
            # no later gap can beat best
            truncated = delta < m - 1
            break
    if truncated:
        logger.warning("Chen-Stein scan stopped by the envelope after %d of %d gaps", scanned, span)

    return ChenSteinBound(
        mu_a=muA,
        tau_a=tauA,
        m=m,
        t=t,
        delta_star=best_delta,
        value=best * log_factor,
        alpha_term=best_terms[0],
        gap_term=best_terms[1],
        short_return_term=best_terms[2],
        log_factor=log_factor,
        scanned=scanned,
        truncated=truncated,
    )
