"""
Bowen-ball geometry and statistics.

B_{eps,n}(x) = {y : d(T^k x, T^k y) < eps for 0 <= k < n}. On the doubling
map with eps < 1/2 the ball is a finite union of open arcs with dyadic or
rational endpoints, so its measure, period and cylinder approximations are
computed exactly with Fractions. Other systems use Monte Carlo.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterator, Optional

import numpy as np
from numpy.typing import NDArray

from reclab.core.config import config
from reclab.core.errors import DomainError, InvalidInputError
from reclab.services.symbolic import as_fraction
from reclab.services.systems import BinaryExpansion, MetricSystem, Scalar, SystemKind

logger = logging.getLogger(__name__)

Interval = tuple[Fraction, Fraction]
Point = Scalar | BinaryExpansion


# ---------------------------------------------------------------------------
# Balls
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class BowenBall:
    system: MetricSystem
    center: Point
    eps: Scalar
    n: int

    def __post_init__(self) -> None:
        if not self.eps > 0:
            raise InvalidInputError("eps must be positive")
        if self.n < 1:
            raise InvalidInputError("ball length n must be at least 1")
        if not isinstance(self.center, BinaryExpansion):
            self.system.check_point(self.center)

    @cached_property
    def center_orbit(self) -> NDArray[np.float64]:
        return self.system.orbit_values(self.center, self.n)

    @property
    def has_exact_backend(self) -> bool:
        """
        Exact arcs cover the doubling map for eps < 1/2 and n <= MAX_DYADIC_DEPTH.

        The range deliberately extends past eps < 1/4: below 1/2 an arc of the
        circle never meets itself, so the arc propagation stays exact; below 1/4
        the ball is additionally the single arc of radius eps 2^-(n-1).
        """
        return (
            self.system.kind is SystemKind.doubling
            and self.eps < Fraction(1, 2)
            and self.n <= config.MAX_DYADIC_DEPTH
        )

    def exact_center_orbit(self) -> list[Fraction]:
        if isinstance(self.center, BinaryExpansion):
            return [Fraction(float(v)) for v in self.center_orbit]
        point = Fraction(self.center)
        out = [point]
        for _ in range(self.n - 1):
            point = self.system.step(point)
            out.append(point)
        return out

    def with_length(self, n: int) -> "BowenBall":
        return BowenBall(self.system, self.center, self.eps, n)

    def with_radius(self, eps: Scalar) -> "BowenBall":
        return BowenBall(self.system, self.center, eps, self.n)


@dataclass(frozen=True)
class MeasureEstimate:
    estimate: float
    stderr: float
    exact: bool
    value: Optional[Fraction] = None


@dataclass(frozen=True)
class PeriodBracket:
    lower: int
    upper: Optional[int]
    certified: bool


@dataclass(frozen=True)
class EntropyEstimate:
    brin_katok: float
    varandas: Optional[float]
    recurrence: Optional[int]
    measure: float


def contains(ball: BowenBall, y: Point) -> bool:
    """True iff every one of the n orbit distances is strictly below eps."""
    if not isinstance(y, BinaryExpansion):
        ball.system.check_point(y)
    if isinstance(y, BinaryExpansion) or isinstance(ball.center, BinaryExpansion):
        ys = ball.system.orbit_values(y, ball.n)
        eps = float(ball.eps)
        return all(ball.system.distance(a, b) < eps for a, b in zip(ys, ball.center_orbit))
    x, point = ball.center, y
    for k in range(ball.n):
        if not ball.system.distance(x, point) < ball.eps:
            return False
        if k + 1 < ball.n:
            x, point = ball.system.step(x), ball.system.step(point)
    return True


def contains_array(ball: BowenBall, ys: NDArray[np.float64]) -> NDArray[np.bool_]:
    """Vectorized membership of float points (pseudo-orbits)."""
    eps = float(ball.eps)
    inside = np.ones(len(ys), dtype=bool)
    points = ys
    for k, c in enumerate(ball.center_orbit):
        inside &= ball.system.distance_array(points, float(c)) < eps
        if ball.system.kind is SystemKind.gauss:
            inside &= points > 0.0
        if k + 1 < ball.n:
            points = ball.system.step_array(np.where(inside, points, 0.5))
    return inside


def entry_mask(
    system: MetricSystem,
    values: NDArray[np.float64],
    center_orbit: NDArray[np.float64],
    eps: float,
) -> NDArray[np.bool_]:
    """mask[j]: T^j y lies in the ball, given the orbit values of y."""
    n = len(center_orbit)
    span = len(values) - n + 1
    if span <= 0:
        return np.zeros(0, dtype=bool)
    mask = np.ones(span, dtype=bool)
    for i, c in enumerate(center_orbit):
        mask &= system.distance_array(values[i : i + span], float(c)) < eps
    return mask


# ---------------------------------------------------------------------------
# Exact arc arithmetic on the circle
# ---------------------------------------------------------------------------
def _merge(intervals: list[Interval]) -> list[Interval]:
    """Sort and merge overlapping or touching open intervals."""
    out: list[Interval] = []
    for a, b in sorted(i for i in intervals if i[0] < i[1]):
        if out and a <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return out


def _arc(center: Fraction, radius: Fraction) -> list[Interval]:
    if radius >= Fraction(1, 2):
        return [(Fraction(0), Fraction(1))]
    a, b = center - radius, center + radius
    if a < 0:
        return [(Fraction(0), b), (a + 1, Fraction(1))]
    if b > 1:
        return [(Fraction(0), b - 1), (a, Fraction(1))]
    return [(a, b)]


def _intersect(left: list[Interval], right: list[Interval]) -> list[Interval]:
    out = []
    for a, b in left:
        for c, d in right:
            lo, hi = max(a, c), min(b, d)
            if lo < hi:
                out.append((lo, hi))
    return _merge(out)


def _preimage(intervals: list[Interval]) -> list[Interval]:
    out = []
    for a, b in intervals:
        out.append((a / 2, b / 2))
        out.append(((a + 1) / 2, (b + 1) / 2))
    return _merge(out)


def _image(intervals: list[Interval]) -> list[Interval]:
    out: list[Interval] = []
    for a, b in intervals:
        if b - a >= Fraction(1, 2):
            return [(Fraction(0), Fraction(1))]
        lo, hi = 2 * a, 2 * b
        if hi <= 1:
            out.append((lo, hi))
        elif lo >= 1:
            out.append((lo - 1, hi - 1))
        else:
            out.extend([(lo, Fraction(1)), (Fraction(0), hi - 1)])
    return _merge(out)


def _length(intervals: list[Interval]) -> Fraction:
    return sum((b - a for a, b in intervals), start=Fraction(0))


def _require_exact(ball: BowenBall) -> None:
    if ball.system.kind is not SystemKind.doubling:
        raise InvalidInputError(f"the exact backend covers the doubling map only, not {ball.system.name}")
    if not ball.eps < Fraction(1, 2):
        raise InvalidInputError("eps too large for the exact backend (needs eps < 1/2)")
    if ball.n > config.MAX_DYADIC_DEPTH:
        raise InvalidInputError(f"n={ball.n} exceeds the precision budget {config.MAX_DYADIC_DEPTH}")


def ball_set(ball: BowenBall) -> list[Interval]:
    """
    The doubling-map ball as disjoint open arcs, by backward propagation
    S_{n-1} = arc(c_{n-1}), S_k = arc(c_k) and T^-1 S_{k+1}.
    """
    _require_exact(ball)
    eps = as_fraction(ball.eps)
    orbit = ball.exact_center_orbit()
    current = _merge(_arc(orbit[-1], eps))
    for c in reversed(orbit[:-1]):
        current = _intersect(_merge(_arc(c, eps)), _preimage(current))
    return current


# ---------------------------------------------------------------------------
# Measure and period
# ---------------------------------------------------------------------------
def _chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk,)))


def ball_measure(
    ball: BowenBall,
    method: str = "exact",
    samples: int | None = None,
    seed: int = 0,
) -> MeasureEstimate:
    """mu(B) exactly on the doubling map, or by hit frequency of mu-samples."""
    if method == "exact":
        value = _length(ball_set(ball))
        return MeasureEstimate(float(value), 0.0, True, value)
    if method != "monte_carlo":
        raise InvalidInputError(f"unknown measure method {method!r}")

    samples = config.MC_SAMPLES if samples is None else samples
    if samples <= 0:
        raise InvalidInputError("Monte Carlo needs at least one sample")
    hits = 0
    for chunk, start in enumerate(range(0, samples, config.MC_CHUNK)):
        size = min(config.MC_CHUNK, samples - start)
        ys = ball.system.sample(_chunk_rng(seed, chunk), size)
        hits += int(contains_array(ball, ys).sum())
    p = hits / samples
    return MeasureEstimate(p, math.sqrt(p * (1.0 - p) / samples), False)


def ball_period(
    ball: BowenBall,
    method: str = "exact",
    samples: int = 1000,
    seed: int = 0,
    cap: int | None = None,
) -> PeriodBracket:
    """
    tau(B) = min{k >= 1 : T^k B meets B}. The exact backend iterates forward
    images of the arcs; sampled mode only certifies an upper bound.
    """
    if method == "exact":
        arcs = ball_set(ball)
        image = arcs
        k = 0
        while True:
            k += 1
            image = _image(image)
            if _intersect(image, arcs):
                return PeriodBracket(k, k, True)

    if method != "sampled":
        raise InvalidInputError(f"unknown period method {method!r}")
    cap = cap or 4 * ball.n + 64
    if isinstance(ball.center, BinaryExpansion):
        cap = min(cap, ball.center.horizon - ball.n)
    upper = recurrence_time(ball.system, ball.center, ball.eps, ball.n, cap)
    ys = _sample_inside(ball, samples, seed)
    for y in ys:
        try:
            blocks = _orbit_blocks(ball.system, float(y), cap + ball.n)
            hit = _first_entry(ball.system, blocks, ball.center_orbit, float(ball.eps), 1, cap)
        except DomainError:
            continue
        if hit is not None and (upper is None or hit < upper):
            upper = hit
    logger.warning("sampled period of the ball is uncertified below (upper=%s)", upper)
    return PeriodBracket(1, upper, False)


def _sample_inside(ball: BowenBall, samples: int, seed: int) -> NDArray[np.float64]:
    """Points of the ball drawn around the center at the linearized ball radius."""
    system = ball.system
    orbit = ball.center_orbit
    if system.kind is SystemKind.gauss:
        stretch = float(np.prod(1.0 / np.maximum(orbit[:-1], 1e-300) ** 2))
    else:
        stretch = 2.0 ** (ball.n - 1)
    radius = float(ball.eps) / max(stretch, 1.0)
    rng = _chunk_rng(seed, 0)
    ys = orbit[0] + rng.uniform(-radius, radius, samples)
    if system.kind is SystemKind.doubling:
        ys = np.mod(ys, 1.0)
    else:
        ys = ys[(ys > 0.0) & (ys <= 1.0)]
    return ys[contains_array(ball, ys)]


# ---------------------------------------------------------------------------
# Recurrence and entropy
# ---------------------------------------------------------------------------
def _orbit_blocks(system: MetricSystem, x: Point, total: int) -> Iterator[NDArray[np.float64]]:
    block = config.RECURRENCE_CHUNK
    if isinstance(x, BinaryExpansion):
        for start in range(0, total, block):
            yield system.expansion_orbit(x, min(block, total - start), start)
        return
    point = x
    produced = 0
    while produced < total:
        size = min(block, total - produced)
        out = np.empty(size, dtype=np.float64)
        for i in range(size):
            out[i] = float(point)
            if produced + i + 1 < total:
                point = system.step(point)
        produced += size
        yield out


def _first_entry(
    system: MetricSystem,
    blocks: Iterator[NDArray[np.float64]],
    center_orbit: NDArray[np.float64],
    eps: float,
    start: int,
    cap: int,
) -> Optional[int]:
    """Smallest j in [start, cap] with T^j y in the ball, scanning block by block."""
    n = len(center_orbit)
    buffer = np.zeros(0, dtype=np.float64)
    offset = 0
    for block in blocks:
        buffer = np.concatenate([buffer, block])
        mask = entry_mask(system, buffer, center_orbit, eps)
        if len(mask):
            js = offset + np.flatnonzero(mask)
            js = js[(js >= start) & (js <= cap)]
            if js.size:
                return int(js[0])
            buffer = buffer[len(mask) :]
            offset += len(mask)
    return None


def recurrence_time(system: MetricSystem, x: Point, eps: Scalar, n: int, cap: int) -> Optional[int]:
    """R_{eps,n}(x) = min{j >= 1 : T^j x in B_{eps,n}(x)}, or None past cap."""
    if cap < 1:
        raise InvalidInputError("cap must be at least 1")
    if n < 1:
        raise InvalidInputError("n must be at least 1")
    if isinstance(x, BinaryExpansion):
        if cap + n > x.horizon:
            raise InvalidInputError(f"expansion covers {x.horizon} orbit values, the scan needs {cap + n}")
    else:
        system.check_point(x)
    center_orbit = system.orbit_values(x, n)
    try:
        return _first_entry(system, _orbit_blocks(system, x, cap + n), center_orbit, float(eps), 1, cap)
    except DomainError:
        # the orbit left the domain (exact rational point of the Gauss map)
        logger.debug("orbit of %r left the domain before returning", x)
        return None


def entropy_estimates(
    system: MetricSystem,
    x: Point,
    eps: Scalar,
    n: int,
    measure_method: str = "exact",
    cap: int = 1 << 20,
    samples: int | None = None,
    seed: int = 0,
) -> EntropyEstimate:
    """Brin-Katok (1/n)|log mu(B)| and recurrence (1/n) log R, natural logs."""
    ball = BowenBall(system, x, eps, n)
    measure = ball_measure(ball, measure_method, samples, seed).estimate
    if measure <= 0.0:
        raise InvalidInputError("ball measure estimate is zero; raise the sample count")
    recurrence = recurrence_time(system, x, eps, n, cap)
    varandas = math.log(recurrence) / n if recurrence is not None else None
    return EntropyEstimate(abs(math.log(measure)) / n, varandas, recurrence, measure)


# ---------------------------------------------------------------------------
# Regularity of balls
# ---------------------------------------------------------------------------
def metric_ball_measure(system: MetricSystem, x: Scalar, r: Scalar) -> float:
    """mu{y : d(x, y) < r}."""
    system.check_point(x)
    r = float(r)
    if r <= 0:
        return 0.0
    if system.kind is SystemKind.doubling:
        return min(2.0 * r, 1.0)
    x = float(x)
    return system.interval_measure(x - r, x + r)


def annulus_ratio(system: MetricSystem, x: Scalar, eps: Scalar, delta: Scalar) -> float:
    """(mu B(x, eps+delta) - mu B(x, eps-delta)) / mu B(x, eps)."""
    if not 0 <= delta <= eps:
        raise InvalidInputError("annulus needs 0 <= delta <= eps")
    inner = metric_ball_measure(system, x, eps - delta)
    outer = metric_ball_measure(system, x, eps + delta)
    return (outer - inner) / metric_ball_measure(system, x, eps)


# ---------------------------------------------------------------------------
# Cylinder approximations (dyadic partition)
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class CylinderApproximation:
    """
    Depth-N dyadic cylinders against a doubling-map ball. Inner cylinders lie
    in the ball up to measure zero; boundary ones meet it without lying in it.
    """

    n: int
    N: int
    mu_ball: Fraction
    inner_ranges: tuple[tuple[int, int], ...]
    boundary_ranges: tuple[tuple[int, int], ...]
    inner_words: Optional[tuple[str, ...]] = None
    boundary_words: Optional[tuple[str, ...]] = None

    @property
    def inner_count(self) -> int:
        return sum(hi - lo for lo, hi in self.inner_ranges)

    @property
    def boundary_count(self) -> int:
        return sum(hi - lo for lo, hi in self.boundary_ranges)

    @property
    def outer_count(self) -> int:
        return self.inner_count + self.boundary_count

    @property
    def outer_words(self) -> Optional[tuple[str, ...]]:
        if self.inner_words is None or self.boundary_words is None:
            return None
        return tuple(sorted(self.inner_words + self.boundary_words))

    @property
    def mu_inner(self) -> Fraction:
        return Fraction(self.inner_count, 2**self.N)

    @property
    def mu_boundary(self) -> Fraction:
        return Fraction(self.boundary_count, 2**self.N)

    @property
    def theta_hat(self) -> Fraction:
        return self.mu_boundary / self.mu_ball

    def hit_gap_bound(self, t: float) -> float:
        """2 t theta_hat, the gap between the hit laws of B and its inner union."""
        return 2.0 * t * float(self.theta_hat)

    def inner_mask(self, ys: NDArray[np.float64]) -> NDArray[np.bool_]:
        """Membership of float points in the inner union."""
        index = np.floor(ys * 2.0**self.N).astype(np.int64)
        inside = np.zeros(len(ys), dtype=bool)
        for lo, hi in self.inner_ranges:
            inside |= (index >= lo) & (index < hi)
        return inside


def _index_ranges(intervals: list[Interval], depth: int) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    """(outer, inner) half-open index ranges of depth-`depth` dyadic cylinders."""
    scale = 2**depth
    outer, inner = [], []
    for a, b in _merge(intervals):
        lo, hi = math.floor(a * scale), math.ceil(b * scale)
        outer.append((lo, hi))
        ilo, ihi = math.ceil(a * scale), math.floor(b * scale)
        if ilo < ihi:
            inner.append((ilo, ihi))
    return _merge_ranges(outer), _merge_ranges(inner)


def _merge_ranges(ranges: list[tuple[int, int]]) -> list[tuple[int, int]]:
    out: list[tuple[int, int]] = []
    for lo, hi in sorted(ranges):
        if out and lo <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], hi))
        else:
            out.append((lo, hi))
    return out


def _subtract_ranges(outer: list[tuple[int, int]], inner: list[tuple[int, int]]) -> list[tuple[int, int]]:
    out = []
    for lo, hi in outer:
        cursor = lo
        for ilo, ihi in inner:
            if ihi <= cursor or ilo >= hi:
                continue
            if ilo > cursor:
                out.append((cursor, ilo))
            cursor = max(cursor, ihi)
        if cursor < hi:
            out.append((cursor, hi))
    return out


def _check_depth(depth: int) -> None:
    if not 1 <= depth <= config.MAX_DYADIC_DEPTH:
        raise InvalidInputError(f"depth {depth} outside the precision budget 1..{config.MAX_DYADIC_DEPTH}")


def _words(ranges: list[tuple[int, int]], depth: int) -> tuple[str, ...]:
    return tuple(format(i, f"0{depth}b") for lo, hi in ranges for i in range(lo, hi))


def cylinder_approximation(ball: BowenBall, N: int) -> CylinderApproximation:
    """Classify the depth-N dyadic cylinders meeting the ball as inner or boundary."""
    if N < ball.n:
        raise InvalidInputError(f"approximation depth N={N} must be at least n={ball.n}")
    _check_depth(N)
    arcs = ball_set(ball)
    outer, inner = _index_ranges(arcs, N)
    boundary = _subtract_ranges(outer, inner)
    outer_count = sum(hi - lo for lo, hi in outer)

    inner_words = boundary_words = None
    if outer_count <= config.WORD_BUDGET:
        inner_words, boundary_words = _words(inner, N), _words(boundary, N)
    else:
        logger.info("%d cylinders at depth %d exceed the word budget; reporting ranges only", outer_count, N)
    return CylinderApproximation(
        n=ball.n,
        N=N,
        mu_ball=_length(arcs),
        inner_ranges=tuple(inner),
        boundary_ranges=tuple(boundary),
        inner_words=inner_words,
        boundary_words=boundary_words,
    )


def count_intersecting_cylinders(ball: BowenBall, depth: int) -> int:
    """Number of depth-`depth` dyadic cylinders meeting the ball."""
    _check_depth(depth)
    outer, _ = _index_ranges(ball_set(ball), depth)
    return sum(hi - lo for lo, hi in outer)
