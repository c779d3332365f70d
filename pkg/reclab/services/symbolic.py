"""
Exact combinatorics and probability on Markov shifts.

Cylinder sets, Hamming clusters, set periods, hitting-count laws and
mixing coefficients. Every quantity has an exact-rational mode used as the
ground-truth oracle for the Monte Carlo harness.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.special import xlogy

from reclab.core.config import config
from reclab.core.errors import (
    BudgetExceededError,
    InvalidInputError,
    UndefinedConditionalError,
)
from reclab.services.systems import MarkovShift, Scalar

logger = logging.getLogger(__name__)


def as_fraction(value: Scalar | int | str) -> Fraction:
    """Decimal floats are read through their repr, so 0.3 becomes 3/10."""
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


def default_count_cap(t: float) -> int:
    return max(config.MIN_COUNT_CAP, math.ceil(config.COUNT_CAP_FACTOR * t))


# ---------------------------------------------------------------------------
# Cylinder sets
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class CylinderSet:
    """A union of admissible n-cylinders, stored as sorted words."""

    shift: MarkovShift
    words: tuple[str, ...]

    @classmethod
    def of(cls, shift: MarkovShift, words: Iterable[str]) -> "CylinderSet":
        words = tuple(words)
        if not words:
            raise InvalidInputError("a cylinder set needs at least one word")
        if len(set(words)) != len(words):
            raise InvalidInputError("cylinder set contains duplicate words")
        n = len(words[0])
        if n < 1 or any(len(w) != n for w in words):
            raise InvalidInputError("all words of a cylinder set must share one length n >= 1")
        for w in words:
            if not shift.is_admissible(w):
                raise InvalidInputError(f"word {w!r} is not admissible")
        return cls(shift=shift, words=tuple(sorted(words)))

    @property
    def n(self) -> int:
        return len(self.words[0])

    def codes(self) -> list[tuple[int, ...]]:
        return [self.shift.encode(w) for w in self.words]

    def index_codes(self) -> NDArray[np.int64]:
        """Each word as its base-s integer code."""
        s = self.shift.size
        return np.array(
            [sum(c * s ** (self.n - 1 - i) for i, c in enumerate(code)) for code in self.codes()],
            dtype=np.int64,
        )

    def to_text(self) -> str:
        return "\n".join(self.words)

    @classmethod
    def from_text(cls, shift: MarkovShift, text: str) -> "CylinderSet":
        return cls.of(shift, [line.strip() for line in text.splitlines() if line.strip()])


# ---------------------------------------------------------------------------
# Count distributions
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class CountDistribution:
    """
    Law on {0..K} plus a lumped overflow cell for values above K.
    overflow_mean is E[W; W > K], so `mean` is exact despite the lumping.
    """

    probs: tuple[Scalar, ...]
    overflow: Scalar = 0.0
    overflow_mean: Scalar = 0.0

    def __post_init__(self) -> None:
        if not self.probs:
            raise InvalidInputError("a count distribution needs at least one cell")
        if any(p < 0 for p in self.probs) or self.overflow < 0:
            raise InvalidInputError("probabilities must be non-negative")

    @property
    def cap(self) -> int:
        return len(self.probs) - 1

    @property
    def is_exact(self) -> bool:
        cells = (*self.probs, self.overflow, self.overflow_mean)
        return all(isinstance(p, (Fraction, int)) for p in cells)

    @property
    def total(self) -> Scalar:
        return sum(self.probs, start=self.overflow * 0) + self.overflow

    @property
    def mean(self) -> Scalar:
        return sum((k * p for k, p in enumerate(self.probs)), start=self.overflow_mean * 0) + self.overflow_mean

    def is_normalized(self) -> bool:
        if self.is_exact:
            return self.total == 1
        return abs(float(self.total) - 1.0) <= config.FLOAT_TOL

    def check_normalized(self) -> None:
        if not self.is_normalized():
            raise InvalidInputError(f"distribution has total mass {self.total}, not 1")

    def mass(self, k: int) -> Scalar:
        return self.probs[k] if 0 <= k <= self.cap else self.probs[0] * 0

    def cells(self) -> list[Scalar]:
        """p(0), ..., p(K), p(>K)."""
        return [*self.probs, self.overflow]

    def recap(self, K: int) -> "CountDistribution":
        """Same law on {0..K}; lower caps move mass into the overflow cell."""
        if K >= self.cap:
            zero = self.probs[0] * 0
            return CountDistribution(self.probs + (zero,) * (K - self.cap), self.overflow, self.overflow_mean)
        moved = self.probs[K + 1 :]
        overflow = sum(moved, start=self.overflow)
        overflow_mean = sum((k * p for k, p in enumerate(moved, start=K + 1)), start=self.overflow_mean)
        return CountDistribution(self.probs[: K + 1], overflow, overflow_mean)

    def as_floats(self) -> "CountDistribution":
        return CountDistribution(
            tuple(float(p) for p in self.probs), float(self.overflow), float(self.overflow_mean)
        )

    @classmethod
    def point_mass(cls, k: int, K: int | None = None, exact: bool = True) -> "CountDistribution":
        K = k if K is None else K
        one, zero = (Fraction(1), Fraction(0)) if exact else (1.0, 0.0)
        if k > K:
            return cls((zero,) * (K + 1), one, one * k)
        return cls(tuple(one if i == k else zero for i in range(K + 1)), zero, zero)

    @classmethod
    def from_counts(cls, counts: NDArray[np.int64], overflow_sum: int, K: int) -> "CountDistribution":
        """Empirical law from a histogram of length K + 2 (last cell = overflow)."""
        trials = int(counts.sum())
        if trials == 0:
            raise InvalidInputError("empirical law needs at least one trial")
        probs = tuple(float(c) / trials for c in counts[: K + 1])
        return cls(probs, float(counts[K + 1]) / trials, float(overflow_sum) / trials)


# ---------------------------------------------------------------------------
# Measures, periods, Hamming clusters
# ---------------------------------------------------------------------------
def cylinder_measure(shift: MarkovShift, cyl: CylinderSet, exact: bool | None = None) -> Scalar:
    """mu(A) as the sum of pi_{w0} * prod P(w_i, w_{i+1}) over the words of A."""
    exact = shift.is_rational if exact is None else exact
    if cyl.shift is not shift:
        for w in cyl.words:
            if not shift.is_admissible(w):
                raise InvalidInputError(f"word {w!r} is not admissible")
    zero = Fraction(0) if exact else 0.0
    return sum((shift.word_measure(code, exact) for code in cyl.codes()), start=zero)


def _reachability_powers(shift: MarkovShift, steps: int) -> list[NDArray[np.bool_]]:
    """reach[j][a, b]: an allowed path of exactly j transitions joins a to b."""
    step = shift.allowed.astype(np.int64)
    reach = [np.eye(shift.size, dtype=bool)]
    current = np.eye(shift.size, dtype=np.int64)
    for _ in range(steps):
        current = ((current @ step) > 0).astype(np.int64)
        reach.append(current.astype(bool))
    return reach


def period(shift: MarkovShift, cyl: CylinderSet) -> int:
    """
    tau(A) = min{k >= 1 : T^-k A and A intersect}. For k < n the two words
    overlap; for k >= n they are joined by an allowed path of k - n + 1 steps.
    """
    n = cyl.n
    bound = n + shift.k0
    firsts = {w[0] for w in cyl.words}
    lasts = {w[-1] for w in cyl.words}
    reach = _reachability_powers(shift, bound - n + 1)
    for k in range(1, bound + 1):
        if k < n:
            suffixes = {w[k:] for w in cyl.words}
            if any(w[: n - k] in suffixes for w in cyl.words):
                return k
        else:
            hops = reach[k - n + 1]
            if any(hops[shift.alphabet.index(a), shift.alphabet.index(b)] for a in lasts for b in firsts):
                return k
    # primitive chains always return by n + k0
    raise InvalidInputError("period search exhausted; transition graph is not primitive")


def hamming_distance(w1: str, w2: str) -> Fraction:
    if len(w1) != len(w2):
        raise InvalidInputError(f"words have different lengths {len(w1)} and {len(w2)}")
    if not w1:
        raise InvalidInputError("Hamming distance needs non-empty words")
    return Fraction(sum(a != b for a, b in zip(w1, w2)), len(w1))


def _check_beta(beta: Scalar) -> Fraction:
    beta = as_fraction(beta)
    if not 0 <= beta <= 1:
        raise InvalidInputError(f"beta must lie in [0, 1], got {beta}")
    return beta


def max_mismatches(n: int, beta: Scalar) -> int:
    """Largest mismatch count c with c/n < beta (0 when beta = 0)."""
    bound = _check_beta(beta) * n
    return max(math.ceil(bound) - 1, 0)


def hamming_cluster(shift: MarkovShift, center: str, beta: Scalar) -> CylinderSet:
    """
    All admissible words w with d_H(center, w) < beta. The center itself is
    always a member, so beta = 0 gives {center}.
    """
    if not shift.is_admissible(center):
        raise InvalidInputError(f"center {center!r} is not admissible")
    n = len(center)
    radius = max_mismatches(n, beta)
    candidates = sum(math.comb(n, c) * (shift.size - 1) ** c for c in range(radius + 1))
    if candidates > config.CLUSTER_BUDGET:
        raise BudgetExceededError("hamming cluster enumeration", candidates, config.CLUSTER_BUDGET)

    words: list[str] = []
    for c in range(radius + 1):
        for positions in itertools.combinations(range(n), c):
            choices = [[a for a in shift.alphabet if a != center[p]] for p in positions]
            for symbols in itertools.product(*choices):
                word = list(center)
                for p, a in zip(positions, symbols):
                    word[p] = a
                candidate = "".join(word)
                if shift.is_admissible(candidate):
                    words.append(candidate)
    logger.debug("cluster of %r at beta=%s: %d of %d candidates", center, beta, len(words), candidates)
    return CylinderSet.of(shift, words)


def lambda_bound(n: int, s: int, beta: Scalar) -> int:
    """sum_{m <= floor(n beta)} s^m C(n, m)."""
    if n < 1 or s < 2:
        raise InvalidInputError("lambda bound needs n >= 1 and s >= 2")
    top = math.floor(_check_beta(beta) * n)
    return sum(s**m * math.comb(n, m) for m in range(top + 1))


def lambda_growth_rate(s: int, beta: Scalar) -> float:
    """Exponential rate beta log s + H(beta) (natural log) bounding log(lambda_n)/n."""
    b = float(_check_beta(beta))
    return float(b * math.log(s) - xlogy(b, b) - xlogy(1.0 - b, 1.0 - b))


# ---------------------------------------------------------------------------
# Transfer DP
# ---------------------------------------------------------------------------
def _zeros(shape, exact: bool) -> NDArray:
    if exact:
        return np.full(shape, Fraction(0), dtype=object)
    return np.zeros(shape, dtype=np.float64)


def _window_measures(shift: MarkovShift, length: int, exact: bool) -> NDArray:
    """mu of every word of the given length, indexed by base-s code."""
    P, pi = shift.matrices(exact)
    mu = np.array(pi, dtype=object if exact else np.float64)
    s = shift.size
    for _ in range(length - 1):
        last = np.arange(len(mu)) % s
        mu = (mu[:, None] * P[last, :]).reshape(-1)
    return mu


def _append_symbol(table: NDArray, s: int, window: int, c: int, out: NDArray) -> None:
    """
    Move mass from windows i = a*s^(window-1) + b to j = b*s + c.
    `table` holds the already-weighted mass; its first axis indexes i.
    """
    tail = table.reshape(s, s ** (window - 1), *table.shape[1:]).sum(axis=0)
    out.reshape(s ** (window - 1), s, *table.shape[1:])[:, c] += tail


def exact_hit_distribution(
    shift: MarkovShift,
    cyl: CylinderSet,
    m: int,
    K: int | None = None,
    exact: bool | None = None,
) -> CountDistribution:
    """
    Law of W_{A,m} = sum_{j=1}^m 1_A(T^j x) for x ~ mu.

    Transfer DP over (last max(n-1, 1) symbols, running count); counts above
    K go to the overflow cell, whose conditional mean is tracked exactly.
    """
    if m < 0:
        raise InvalidInputError("m must be non-negative")
    exact = shift.is_rational if exact is None else exact
    if K is None:
        K = default_count_cap(m * float(cylinder_measure(shift, cyl, exact=False)))
    if K < 0:
        raise InvalidInputError("count cap must be non-negative")
    if m == 0:
        return CountDistribution.point_mass(0, K, exact)

    s, n = shift.size, cyl.n
    window = max(n - 1, 1)
    cap = min(K, m)
    work = s**window * m * (cap + 2)
    if work > config.DP_BUDGET:
        raise BudgetExceededError("hitting-count DP", work, config.DP_BUDGET)

    P, _ = shift.matrices(exact)
    codes = cyl.index_codes()
    states = np.arange(s**window)
    last = states % s
    # hit[i, c]: appending c to window i completes a word of A
    if n == 1:
        hit = np.broadcast_to(np.isin(np.arange(s), codes), (len(states), s))
    else:
        hit = np.isin(states[:, None] * s + np.arange(s)[None, :], codes)

    dist = _zeros((len(states), cap + 2), exact)
    tail_mean = _zeros(len(states), exact)
    steps = m
    if n == 1:
        # the first visit is decided by x_1 itself
        _, pi = shift.matrices(exact)
        first_hit = hit[0]
        for a in range(s):
            column = min(int(first_hit[a]), cap + 1)
            dist[a, column] = pi[a]
            if first_hit[a] and cap == 0:
                tail_mean[a] = pi[a]
        steps = m - 1
    else:
        dist[:, 0] = _window_measures(shift, window, exact)

    for _ in range(steps):
        new_dist = _zeros(dist.shape, exact)
        new_mean = _zeros(tail_mean.shape, exact)
        for c in range(s):
            weight = P[last, c]
            moved = dist * weight[:, None]
            moved_mean = tail_mean * weight
            h = hit[:, c]
            if h.any():
                bumped = moved[h]
                shifted = _zeros(bumped.shape, exact)
                shifted[:, 1:] = bumped[:, :-1]
                shifted[:, cap + 1] += bumped[:, cap + 1]
                moved_mean[h] += bumped[:, cap] * (cap + 1) + bumped[:, cap + 1]
                moved[h] = shifted
            _append_symbol(moved, s, window, c, new_dist)
            _append_symbol(moved_mean, s, window, c, new_mean)
        dist, tail_mean = new_dist, new_mean

    column_mass = dist.sum(axis=0)
    if exact:
        probs = tuple(Fraction(p) for p in column_mass[: cap + 1])
        result = CountDistribution(probs, Fraction(column_mass[cap + 1]), Fraction(tail_mean.sum()))
    else:
        probs = tuple(float(p) for p in column_mass[: cap + 1])
        result = CountDistribution(probs, float(column_mass[cap + 1]), float(tail_mean.sum()))
    logger.debug("hit law for n=%d m=%d: cap=%d, overflow=%s", n, m, K, result.overflow)
    return result.recap(K)


def short_return_curve(
    shift: MarkovShift,
    cyl: CylinderSet,
    delta_max: int,
    exact: bool | None = None,
) -> list[Scalar]:
    """P_A(tau_A <= delta) for delta = 0..delta_max, from one absorbing DP."""
    if delta_max < 0:
        raise InvalidInputError("delta must be non-negative")
    exact = shift.is_rational if exact is None else exact
    mu_a = cylinder_measure(shift, cyl, exact)
    if mu_a == 0:
        raise UndefinedConditionalError("P_A is undefined because mu(A) = 0")

    s, n = shift.size, cyl.n
    work = s ** (n + 1) * delta_max
    if work > config.DP_BUDGET:
        raise BudgetExceededError("short-return DP", work, config.DP_BUDGET)

    P, _ = shift.matrices(exact)
    codes = cyl.index_codes()
    mu_words = _window_measures(shift, n, exact)
    alive = _zeros(s**n, exact)
    alive[codes] = mu_words[codes]
    last = np.arange(s**n) % s

    zero = Fraction(0) if exact else 0.0
    curve: list[Scalar] = [zero]
    absorbed = zero
    for _ in range(delta_max):
        nxt = _zeros(s**n, exact)
        for c in range(s):
            _append_symbol(alive * P[last, c], s, n, c, nxt)
        absorbed = absorbed + nxt[codes].sum()
        nxt[codes] = zero
        alive = nxt
        curve.append(absorbed / mu_a)
    return curve if exact else [float(v) for v in curve]


def short_return_prob(shift: MarkovShift, cyl: CylinderSet, delta: int, exact: bool | None = None) -> Scalar:
    """P_A(tau_A <= delta) = mu(A and {tau_A <= delta}) / mu(A)."""
    return short_return_curve(shift, cyl, delta, exact)[delta]


# ---------------------------------------------------------------------------
# Mixing coefficients
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class MixingBracket:
    lower: float
    upper: float
    exact: bool


def _matrix_power(P: NDArray, power: int) -> NDArray:
    result = np.identity(P.shape[0], dtype=P.dtype)
    if P.dtype == object:
        result = np.array([[Fraction(int(i == j)) for j in range(P.shape[0])] for i in range(P.shape[0])], dtype=object)
    for _ in range(power):
        result = result.dot(P)
    return result


def covariance_cells(shift: MarkovShift, k: int, exact: bool = False) -> NDArray:
    """
    c[a, b] = mu([..a] and T^-(n+k)[b..]) - mu([..a]) mu([b..]).

    For words u of length n and v of length L the covariance
    mu(u) mu(v) (P^{k+1}[u_last, v_0] / pi_{v_0} - 1) depends on u only
    through its last symbol and on v only through its first, so rows and
    columns of the word-level table merge into these s x s symbol cells.
    """
    P, pi = shift.matrices(exact)
    Pk = _matrix_power(P, k + 1)
    return pi[:, None] * Pk - pi[:, None] * pi[None, :]


def _best_rectangle(cells: NDArray, rows: Sequence[int]) -> float:
    columns = cells[list(rows)].sum(axis=0)
    positive = sum(v for v in columns if v > 0)
    negative = -sum(v for v in columns if v < 0)
    return max(positive, negative)


def _alpha_exact(cells: NDArray) -> float:
    size = cells.shape[0]
    best = 0
    for r in range(1, size + 1):
        for rows in itertools.combinations(range(size), r):
            best = max(best, _best_rectangle(cells, rows))
    return best


def _alpha_greedy(cells: NDArray) -> float:
    """Alternate best columns / best rows from every single-row start."""
    size = cells.shape[0]
    best = 0.0
    for sign in (1.0, -1.0):
        signed = sign * cells
        for start in range(size):
            rows = {start}
            for _ in range(size):
                columns = signed[sorted(rows)].sum(axis=0) > 0
                if not columns.any():
                    break
                new_rows = {a for a in range(size) if signed[a, columns].sum() > 0}
                if not new_rows or new_rows == rows:
                    break
                rows = new_rows
            best = max(best, _best_rectangle(cells, sorted(rows)))
    return best


def mixing_coefficient(shift: MarkovShift, n: int, L: int, k: int, kind: str) -> MixingBracket:
    """
    alpha(k) = sup |mu(A and T^-(n+k) B) - mu(A) mu(B)| over A in sigma(A^n),
    B in sigma(A^L); phi(k) is the same supremum of the gap divided by mu(B).
    """
    if n < 1 or L < 1 or k < 0:
        raise InvalidInputError("mixing needs n >= 1, L >= 1 and k >= 0")
    if kind not in ("alpha", "phi"):
        raise InvalidInputError(f"unknown mixing kind {kind!r}")
    exact_arith = shift.is_rational
    cells = covariance_cells(shift, k, exact_arith)
    _, pi = shift.matrices(exact_arith)

    if kind == "phi":
        # for fixed A the ratio is maximized by a single first symbol of B
        ratios = []
        for b in range(shift.size):
            column = cells[:, b]
            positive = sum(v for v in column if v > 0)
            negative = -sum(v for v in column if v < 0)
            ratios.append(max(positive, negative) / pi[b])
        value = float(max(ratios))
        return MixingBracket(value, value, True)

    if shift.size <= config.MIXING_EXACT_CELLS:
        value = float(_alpha_exact(cells))
        return MixingBracket(value, value, True)

    if shift.size > config.MIXING_CELL_BUDGET:
        raise BudgetExceededError("mixing cell table", shift.size, config.MIXING_CELL_BUDGET)
    float_cells = cells.astype(np.float64)
    lower = _alpha_greedy(float_cells)
    upper = max(float(float_cells[float_cells > 0].sum()), float(-float_cells[float_cells < 0].sum()))
    logger.warning("alpha(%d) bracketed in [%.3e, %.3e]: %d cells exceed exact enumeration", k, lower, upper, shift.size)
    return MixingBracket(lower, upper, False)


def alpha_curve(shift: MarkovShift, k_max: int) -> NDArray[np.float64]:
    """alpha(k) for k = 0..k_max in float arithmetic (upper bracket past exact enumeration)."""
    if k_max < 0:
        raise InvalidInputError("k_max must be non-negative")
    if shift.size > config.MIXING_CELL_BUDGET:
        raise BudgetExceededError("mixing cell table", shift.size, config.MIXING_CELL_BUDGET)
    out = np.zeros(k_max + 1, dtype=np.float64)
    if shift.is_iid:
        return out
    outer = np.outer(shift.pi, shift.pi)
    power = shift.P.copy()
    for k in range(k_max + 1):
        cells = shift.pi[:, None] * power - outer
        if shift.size <= config.MIXING_EXACT_CELLS:
            out[k] = float(_alpha_exact(cells))
        else:
            out[k] = max(float(cells[cells > 0].sum()), float(-cells[cells < 0].sum()))
        power = power @ shift.P
    return out
