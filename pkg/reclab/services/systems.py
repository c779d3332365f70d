"""
Measure-preserving systems (T, mu): circle/interval maps with their
invariant measures, and finite-alphabet Markov shifts.

Two point representations exist for the doubling and tent maps:
  • plain scalars (float or Fraction), iterated with the map's formula;
  • BinaryExpansion, a digit string whose shifted 53-digit windows give
    the true orbit. Lebesgue-random orbits of any length are drawn this way,
    since a double-precision orbit of 2x mod 1 reaches 0 within 53 steps.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Sequence, Union

import numpy as np
from numpy.typing import NDArray

from reclab.core.config import config
from reclab.core.errors import DomainError, InvalidInputError

logger = logging.getLogger(__name__)

Scalar = Union[float, Fraction]
Seed = Union[int, np.random.SeedSequence, np.random.Generator]

_LN2 = math.log(2.0)
_WINDOW_WEIGHTS = 2.0 ** -np.arange(1, config.MANTISSA_BITS + 1)
_ALL_ONES = 1.0 - 2.0 ** -config.MANTISSA_BITS


class SystemKind(str, Enum):
    doubling = "doubling"
    tent = "tent"
    gauss = "gauss"


# ---------------------------------------------------------------------------
# Binary expansions
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class BinaryExpansion:
    """
    The point x = sum_i bits[i-1] * 2**-i.

    Holds enough digits for `horizon` orbit values (each value reads a
    53-digit window, so it is exact up to 2**-53).
    """

    bits: NDArray[np.uint8]

    def __post_init__(self) -> None:
        if self.bits.ndim != 1 or len(self.bits) < config.MANTISSA_BITS:
            raise InvalidInputError(
                f"a binary expansion needs at least {config.MANTISSA_BITS} digits"
            )

    @property
    def horizon(self) -> int:
        return len(self.bits) - config.MANTISSA_BITS + 1

    def value(self) -> float:
        return float(self.bits[: config.MANTISSA_BITS] @ _WINDOW_WEIGHTS)


def _window_values(bits: NDArray[np.uint8], count: int) -> NDArray[np.float64]:
    # out[j] = 0.bits[j]bits[j+1]...bits[j+52]; every partial sum is a dyadic
    # with at most 53 significant digits, so the result is exact.
    span = bits[: count + config.MANTISSA_BITS - 1].astype(np.float64)
    return np.correlate(span, _WINDOW_WEIGHTS, mode="valid")


# ---------------------------------------------------------------------------
# Metric systems
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class MetricSystem:
    kind: SystemKind

    @property
    def name(self) -> str:
        return self.kind.value

    @property
    def entropy(self) -> float:
        """Metric entropy h(mu) of the invariant measure (natural log)."""
        if self.kind is SystemKind.gauss:
            return math.pi**2 / (6.0 * _LN2)
        return _LN2

    @property
    def supports_expansions(self) -> bool:
        return self.kind in (SystemKind.doubling, SystemKind.tent)

    # -------------------- domain and map -------------------- #

    def in_domain(self, x: Scalar) -> bool:
        if self.kind is SystemKind.doubling:
            return 0 <= x < 1
        return 0 <= x <= 1

    def check_point(self, x: Scalar) -> None:
        if not self.in_domain(x):
            raise DomainError(f"{x!r} is outside the domain of the {self.name} map")

    def step(self, x: Scalar) -> Scalar:
        self.check_point(x)
        if self.kind is SystemKind.doubling:
            return (2 * x) % 1
        if self.kind is SystemKind.tent:
            return 2 * x if x < Fraction(1, 2) else 2 * (1 - x)
        if x == 0:
            raise DomainError("the Gauss map is undefined at 0")
        inv = 1 / x
        if isinstance(inv, float) and not math.isfinite(inv):
            raise DomainError(f"1/x overflows at x={x!r}")
        return inv % 1

    def step_array(self, xs: NDArray[np.float64]) -> NDArray[np.float64]:
        if self.kind is SystemKind.doubling:
            return np.mod(2.0 * xs, 1.0)
        if self.kind is SystemKind.tent:
            return np.where(xs < 0.5, 2.0 * xs, 2.0 * (1.0 - xs))
        if np.any(xs == 0.0):
            raise DomainError("the Gauss map is undefined at 0")
        return np.mod(1.0 / xs, 1.0)

    def distance(self, x: Scalar, y: Scalar) -> Scalar:
        gap = abs(x - y)
        if self.kind is SystemKind.doubling:
            gap = gap % 1
            return min(gap, 1 - gap)
        return gap

    def distance_array(self, xs: NDArray[np.float64], y: float) -> NDArray[np.float64]:
        gap = np.abs(xs - y)
        if self.kind is SystemKind.doubling:
            gap = np.mod(gap, 1.0)
            return np.minimum(gap, 1.0 - gap)
        return gap

    # -------------------- invariant measure -------------------- #

    def cdf(self, x: float) -> float:
        """Distribution function of the invariant measure on [0, 1]."""
        x = min(max(x, 0.0), 1.0)
        if self.kind is SystemKind.gauss:
            return math.log2(1.0 + x)
        return x

    def interval_measure(self, a: float, b: float) -> float:
        """Invariant measure of the interval (a, b), clipped to the unit interval."""
        if b <= a:
            return 0.0
        return self.cdf(b) - self.cdf(a)

    def sample(self, rng: np.random.Generator, size: int) -> NDArray[np.float64]:
        """Exact draws from the invariant measure."""
        if self.kind is SystemKind.gauss:
            # inverse CDF; u is kept off 0 so the sample never hits the singular point
            u = rng.uniform(np.nextafter(0.0, 1.0), 1.0, size)
            return np.exp2(u) - 1.0
        return rng.random(size)

    def sample_point(self, rng: np.random.Generator, horizon: int) -> BinaryExpansion | float:
        """A mu-random point whose orbit is available for `horizon` values."""
        if self.supports_expansions:
            digits = rng.integers(0, 2, size=horizon + config.MANTISSA_BITS - 1, dtype=np.uint8)
            return BinaryExpansion(digits)
        return float(self.sample(rng, 1)[0])

    # -------------------- expansions -------------------- #

    def shift_expansion(self, x: BinaryExpansion, k: int) -> BinaryExpansion:
        if not self.supports_expansions:
            raise DomainError(f"binary expansions are not a point model for the {self.name} map")
        if len(x.bits) - k < config.MANTISSA_BITS:
            raise DomainError(f"expansion too short to iterate {k} times")
        if k == 0:
            return x
        tail = x.bits[k:]
        if self.kind is SystemKind.tent:
            # digits of T^k x are b_{k+i} xor b_k
            tail = tail ^ x.bits[k - 1]
        return BinaryExpansion(np.ascontiguousarray(tail))

    def expansion_orbit(self, x: BinaryExpansion, n: int, start: int = 0) -> NDArray[np.float64]:
        """Orbit values T^start x, ..., T^{start+n-1} x."""
        if not self.supports_expansions:
            raise DomainError(f"binary expansions are not a point model for the {self.name} map")
        if start + n > x.horizon:
            raise DomainError(f"expansion holds {x.horizon} orbit values, {start + n} requested")
        values = _window_values(x.bits[start:], n)
        if self.kind is SystemKind.tent:
            # T^j x reads the complemented window when b_j = 1 (b_0 = 0)
            parity = np.zeros(n, dtype=bool)
            lo = max(start, 1)
            parity[lo - start :] = x.bits[lo - 1 : start + n - 1].astype(bool)
            values = np.where(parity, _ALL_ONES - values, values)
        return values

    def orbit_values(self, x: Scalar | BinaryExpansion, n: int) -> NDArray[np.float64]:
        """Orbit (x, Tx, ..., T^{n-1}x) as floats."""
        if isinstance(x, BinaryExpansion):
            return self.expansion_orbit(x, n)
        out = np.empty(n, dtype=np.float64)
        point = x
        for k in range(n):
            out[k] = float(point)
            if k + 1 < n:
                point = self.step(point)
        return out


# ---------------------------------------------------------------------------
# Markov shifts
# ---------------------------------------------------------------------------
Entry = Union[Fraction, int, str, float]


def _as_matrix(rows: Sequence[Sequence[Entry]] | NDArray) -> tuple[NDArray, bool]:
    """Convert rows to an object array of Fractions (exact) or a float array."""
    entries = [list(r) for r in rows]
    if not entries or any(len(r) != len(entries) for r in entries):
        raise InvalidInputError("transition matrix must be square and non-empty")
    exact = all(isinstance(v, (Fraction, int, str)) for r in entries for v in r)
    if exact:
        try:
            matrix = np.array([[Fraction(v) for v in r] for r in entries], dtype=object)
        except (ValueError, ZeroDivisionError) as e:
            raise InvalidInputError(f"invalid matrix entry: {e}")
        return matrix, True
    return np.asarray(entries, dtype=np.float64), False


def _check_stochastic(P: NDArray, exact: bool) -> None:
    if any(v < 0 for v in P.flat):
        raise InvalidInputError("transition probabilities must be non-negative")
    for i, row in enumerate(P):
        total = sum(row)
        if (exact and total != 1) or (not exact and abs(total - 1.0) > config.FLOAT_TOL):
            raise InvalidInputError(f"row {i} of the transition matrix sums to {total}, not 1")


def _is_irreducible(support: NDArray[np.bool_]) -> bool:
    size = support.shape[0]
    for start in range(size):
        seen = {start}
        frontier = [start]
        while frontier:
            i = frontier.pop()
            for j in np.flatnonzero(support[i]):
                if j not in seen:
                    seen.add(int(j))
                    frontier.append(int(j))
        if len(seen) < size:
            return False
    return True


def primitivity_index(support: NDArray[np.bool_]) -> int:
    """Smallest k with support^k entrywise positive (Wielandt bound (s-1)^2 + 1)."""
    size = support.shape[0]
    step = support.astype(np.int64)
    power = step.copy()
    for k in range(1, (size - 1) ** 2 + 2):
        if np.all(power > 0):
            return k
        power = ((power @ step) > 0).astype(np.int64)
    raise InvalidInputError("transition graph is periodic (no positive matrix power)")


def _gth(P: NDArray) -> NDArray:
    """Grassmann-Taksar-Heyman elimination for a row-stochastic matrix."""
    A = P.copy()
    size = A.shape[0]
    for n in range(size - 1, 0, -1):
        s = sum(A[n, :n])
        if s == 0:
            raise InvalidInputError("transition matrix is reducible")
        A[:n, n] = A[:n, n] / s
        A[:n, :n] = A[:n, :n] + np.outer(A[:n, n], A[n, :n])
    pi = np.empty(size, dtype=A.dtype)
    pi[0] = A[0, 0] * 0 + 1
    for j in range(1, size):
        pi[j] = sum(pi[i] * A[i, j] for i in range(j))
    return pi / sum(pi)


def stationary_distribution(rows: Sequence[Sequence[Entry]] | NDArray) -> NDArray:
    """
    Stationary vector pi of a row-stochastic irreducible matrix.

    Returns an object array of Fractions when every entry is rational
    (Fraction, int or str), otherwise a float array with residual below 1e-12.
    """
    P, exact = _as_matrix(rows)
    _check_stochastic(P, exact)
    support = np.array([[v > 0 for v in r] for r in P], dtype=bool)
    if not _is_irreducible(support):
        raise InvalidInputError("transition matrix is reducible")

    pi = _gth(P)
    residual = P.T.dot(pi) - pi
    if exact:
        if any(r != 0 for r in residual):
            raise InvalidInputError("stationary solve left a non-zero residual")
    elif float(np.max(np.abs(residual))) >= config.FLOAT_TOL:
        raise InvalidInputError(f"stationary residual {np.max(np.abs(residual)):.3e} too large")
    return pi


@dataclass(frozen=True, eq=False)
class MarkovShift:
    """
    One-sided shift on words over `alphabet` with a stationary Markov measure.
    Bernoulli shifts are the case of identical rows.
    """

    alphabet: str
    allowed: NDArray[np.bool_]
    P: NDArray[np.float64]
    pi: NDArray[np.float64]
    k0: int
    P_exact: NDArray | None = None
    pi_exact: NDArray | None = None
    name: str = "markov"

    @classmethod
    def from_matrix(
        cls,
        rows: Sequence[Sequence[Entry]] | NDArray,
        alphabet: str | None = None,
        allowed: Sequence[Sequence[int]] | NDArray | None = None,
        name: str = "markov",
    ) -> "MarkovShift":
        P, exact = _as_matrix(rows)
        size = P.shape[0]
        if size < 2:
            raise InvalidInputError("alphabet must have at least 2 symbols")
        alphabet = alphabet or "0123456789abcdefghijklmnopqrstuvwxyz"[:size]
        if len(alphabet) != size or len(set(alphabet)) != size:
            raise InvalidInputError(f"alphabet {alphabet!r} does not match {size} states")

        pi = stationary_distribution(P)
        support = np.array([[v > 0 for v in r] for r in P], dtype=bool)
        if allowed is None:
            allowed_arr = support
        else:
            allowed_arr = np.asarray(allowed, dtype=bool)
            if allowed_arr.shape != support.shape or np.any(support & ~allowed_arr):
                raise InvalidInputError("transition probabilities must be supported on allowed transitions")
        k0 = primitivity_index(support)

        return cls(
            alphabet=alphabet,
            allowed=allowed_arr,
            P=P.astype(np.float64),
            pi=pi.astype(np.float64),
            k0=k0,
            P_exact=P if exact else None,
            pi_exact=pi if exact else None,
            name=name,
        )

    @property
    def size(self) -> int:
        return len(self.alphabet)

    @property
    def is_rational(self) -> bool:
        return self.P_exact is not None

    @property
    def is_iid(self) -> bool:
        return bool(np.all(self.P == self.P[0]))

    @property
    def entropy(self) -> float:
        """Entropy rate -sum pi_i P_ij log P_ij (natural log)."""
        logs = np.log(np.where(self.P > 0, self.P, 1.0))
        return float(-np.sum(self.pi[:, None] * self.P * logs))

    def matrices(self, exact: bool) -> tuple[NDArray, NDArray]:
        if exact:
            if not self.is_rational:
                raise InvalidInputError("exact arithmetic needs a rational transition matrix")
            return self.P_exact, self.pi_exact  # type: ignore[return-value]
        return self.P, self.pi

    # -------------------- words -------------------- #

    def encode(self, word: str) -> tuple[int, ...]:
        try:
            return tuple(self.alphabet.index(c) for c in word)
        except ValueError:
            raise InvalidInputError(f"word {word!r} uses symbols outside {self.alphabet!r}")

    def decode(self, codes: Sequence[int]) -> str:
        return "".join(self.alphabet[int(c)] for c in codes)

    def is_admissible(self, word: str) -> bool:
        codes = self.encode(word)
        return all(self.allowed[a, b] for a, b in zip(codes, codes[1:]))

    def check_word(self, word: str) -> tuple[int, ...]:
        try:
            codes = self.encode(word)
        except InvalidInputError as e:
            raise DomainError(str(e))
        if not all(self.allowed[a, b] for a, b in zip(codes, codes[1:])):
            raise DomainError(f"word {word!r} contains a forbidden transition")
        return codes

    def word_measure(self, codes: Sequence[int], exact: bool) -> Scalar:
        """mu of the cylinder [codes] (empty word has measure 1)."""
        P, pi = self.matrices(exact)
        if not codes:
            return Fraction(1) if exact else 1.0
        value = pi[codes[0]]
        for a, b in zip(codes, codes[1:]):
            value = value * P[a, b]
        return value if exact else float(value)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------
System = Union[MetricSystem, MarkovShift]


def iterate(system: System, point, k: int):
    """T^k(point); for shifts the point is a word and T drops its first symbol."""
    if k < 0:
        raise InvalidInputError("k must be non-negative")
    if isinstance(system, MarkovShift):
        system.check_word(point)
        if k > len(point):
            raise DomainError(f"cannot shift a word of length {len(point)} by {k}")
        return point[k:]
    if isinstance(point, BinaryExpansion):
        return system.shift_expansion(point, k)
    for _ in range(k):
        point = system.step(point)
    system.check_point(point)
    return point


def orbit(system: System, point, n: int):
    """
    (point, T point, ..., T^{n-1} point). Scalars and words give a tuple;
    binary expansions give the float orbit values.
    """
    if n < 1:
        raise InvalidInputError("orbit length must be at least 1")
    if isinstance(system, MarkovShift):
        system.check_word(point)
        if n - 1 > len(point):
            raise DomainError(f"cannot shift a word of length {len(point)} by {n - 1}")
        return tuple(point[j:] for j in range(n))
    if isinstance(point, BinaryExpansion):
        return system.orbit_values(point, n)
    out = [point]
    for _ in range(n - 1):
        out.append(system.step(out[-1]))
    system.check_point(point)
    return tuple(out)


def make_rng(seed: Seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_code_matrix(shift: MarkovShift, rng: np.random.Generator, rows: int, length: int) -> NDArray[np.int64]:
    """`rows` independent stationary symbol sequences as integer codes."""
    u = rng.random((rows, length))
    last = shift.size - 1
    cum_pi = np.cumsum(shift.pi)
    cum_pi[-1] = 1.0
    if shift.is_iid:
        return np.minimum(np.searchsorted(cum_pi, u, side="right"), last)

    cum_rows = np.cumsum(shift.P, axis=1)
    cum_rows[:, -1] = 1.0
    # successors[a, r, i]: the symbol drawn at (r, i) when the previous one is a
    successors = np.minimum(
        np.stack([np.searchsorted(cum_rows[a], u, side="right") for a in range(shift.size)]),
        last,
    )
    codes = np.empty((rows, length), dtype=np.int64)
    codes[:, 0] = np.minimum(np.searchsorted(cum_pi, u[:, 0], side="right"), last)
    index = np.arange(rows)
    for i in range(1, length):
        codes[:, i] = successors[codes[:, i - 1], index, i]
    return codes


def sample_codes(shift: MarkovShift, rng: np.random.Generator, length: int) -> NDArray[np.int64]:
    """Stationary symbol sequence as integer codes."""
    return sample_code_matrix(shift, rng, 1, length)[0]


def sample_stationary(shift: MarkovShift, seed: Seed, length: int) -> str:
    """A word of the given length drawn from the stationary Markov measure."""
    if length < 1:
        raise InvalidInputError("length must be at least 1")
    return shift.decode(sample_codes(shift, make_rng(seed), length))


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------
def doubling_map() -> MetricSystem:
    return MetricSystem(SystemKind.doubling)


def tent_map() -> MetricSystem:
    return MetricSystem(SystemKind.tent)


def gauss_map() -> MetricSystem:
    return MetricSystem(SystemKind.gauss)


def bernoulli_shift(probs: Sequence[Entry], alphabet: str | None = None, name: str = "bernoulli") -> MarkovShift:
    return MarkovShift.from_matrix([list(probs) for _ in probs], alphabet=alphabet, name=name)


def fair_coin() -> MarkovShift:
    return bernoulli_shift([Fraction(1, 2), Fraction(1, 2)], alphabet="01", name="fair-coin")


def full_shift(size: int, alphabet: str | None = None) -> MarkovShift:
    return bernoulli_shift([Fraction(1, size)] * size, alphabet=alphabet, name="full-shift")


def golden_mean_shift() -> MarkovShift:
    """Binary subshift forbidding "11", with uniform branching after a 0."""
    return MarkovShift.from_matrix(
        [[Fraction(1, 2), Fraction(1, 2)], [Fraction(1), Fraction(0)]],
        alphabet="01",
        allowed=[[1, 1], [1, 0]],
        name="golden-mean",
    )
