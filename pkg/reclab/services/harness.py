"""
Seeded Monte Carlo experiment engine.

Samples x ~ mu, counts visits W_{A,m}(x) = sum_{j=1}^m 1_A(T^j x) to a
cylinder set or a Bowen ball, and compares the empirical law with the exact
DP oracle and with Poisson(t).

Trials run in fixed-size blocks; block b of stream c draws from
SeedSequence(master_seed, spawn_key=(0, c, b)). Workers take contiguous runs
of blocks and return integer tallies, so the report is identical for any
worker count.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import NDArray
from tqdm import tqdm

from reclab.core.config import config
from reclab.core.deps import build_system, require_metric, require_shift
from reclab.core.errors import BudgetExceededError, InvalidInputError
from reclab.models.schemas import (
    ApproximationComparison,
    CenterRecord,
    ChenSteinBound,
    DeviationRow,
    DistributionOut,
    ExperimentConfig,
    ExperimentReport,
    SummaryRow,
)
from reclab.services.bowen import (
    BowenBall,
    CylinderApproximation,
    ball_measure,
    ball_period,
    contains,
    cylinder_approximation,
    entry_mask,
)
from reclab.services.stein import chen_stein_bound, poisson_law, tv_distance
from reclab.services.symbolic import (
    CountDistribution,
    CylinderSet,
    alpha_curve,
    cylinder_measure,
    default_count_cap,
    exact_hit_distribution,
    period,
    short_return_curve,
)
from reclab.services.systems import (
    BinaryExpansion,
    MarkovShift,
    MetricSystem,
    SystemKind,
    iterate,
    sample_code_matrix,
)
from reclab.services.utils import CENTER_STREAM, TRIAL_STREAM, split_range, trial_rng

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Visit counting
# ---------------------------------------------------------------------------
def return_times(system, x, membership: Callable[[object], bool], m: int) -> list[int]:
    """The visit times j in [1, m] with membership(T^j x); j = 0 is never counted."""
    if m < 0:
        raise InvalidInputError("m must be non-negative")
    times = []
    point = x
    for j in range(1, m + 1):
        point = iterate(system, point, 1)
        if membership(point):
            times.append(j)
    return times


def count_visits(system, x, membership: Callable[[object], bool], m: int) -> int:
    """W_{A,m}(x) = #{1 <= j <= m : T^j x in A}."""
    return len(return_times(system, x, membership, m))


def cylinder_membership(cyl: CylinderSet) -> Callable[[str], bool]:
    words = set(cyl.words)
    return lambda w: w[: cyl.n] in words


def ball_membership(ball: BowenBall) -> Callable[[object], bool]:
    return lambda y: contains(ball, y)


# ---------------------------------------------------------------------------
# Trial blocks
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class _Plan:
    """Everything a worker needs to run a run of blocks; picklable."""

    experiment: ExperimentConfig
    m: int
    K: int
    stream: int = 0
    center_orbit: Optional[tuple[float, ...]] = None
    m_inner: int = 0
    approx: Optional[CylinderApproximation] = None


@dataclass
class _Tally:
    hist: NDArray[np.int64]
    overflow_sum: int = 0
    sum_sq: int = 0
    inner_hist: Optional[NDArray[np.int64]] = None
    inner_overflow_sum: int = 0

    @classmethod
    def empty(cls, K: int, with_inner: bool) -> "_Tally":
        inner = np.zeros(K + 2, dtype=np.int64) if with_inner else None
        return cls(np.zeros(K + 2, dtype=np.int64), inner_hist=inner)

    def add(self, other: "_Tally") -> None:
        self.hist += other.hist
        self.overflow_sum += other.overflow_sum
        self.sum_sq += other.sum_sq
        if self.inner_hist is not None and other.inner_hist is not None:
            self.inner_hist += other.inner_hist
            self.inner_overflow_sum += other.inner_overflow_sum


def _record(hist: NDArray[np.int64], counts: NDArray[np.int64], K: int) -> int:
    """Histogram counts with values above K in the last cell; returns their sum."""
    capped = np.minimum(counts, K + 1)
    hist += np.bincount(capped, minlength=K + 2)
    return int(counts[counts > K].sum())


def _word_codes(codes: NDArray[np.int64], n: int, s: int) -> NDArray[np.int64]:
    powers = s ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return sliding_window_view(codes, n, axis=1) @ powers


def _cylinder_block(plan: _Plan, shift: MarkovShift, rng: np.random.Generator, rows: int) -> NDArray[np.int64]:
    words = plan.experiment.target.words
    n = len(words[0])
    targets = CylinderSet.of(shift, words).index_codes()
    codes = sample_code_matrix(shift, rng, rows, plan.m + n)
    # windows starting at j = 1..m
    hits = np.isin(_word_codes(codes[:, 1:], n, shift.size), targets)
    return hits.sum(axis=1)


def _pseudo_orbits(system: MetricSystem, rng: np.random.Generator, rows: int, length: int) -> NDArray[np.float64]:
    out = np.empty((rows, length), dtype=np.float64)
    out[:, 0] = system.sample(rng, rows)
    for i in range(1, length):
        previous = out[:, i - 1]
        # exact zeros of the Gauss pseudo-orbit are float artifacts; restart them
        if system.kind is SystemKind.gauss:
            previous = np.where(previous == 0.0, 0.5, previous)
        out[:, i] = system.step_array(previous)
    return out


def _orbit_rows(system: MetricSystem, rng: np.random.Generator, rows: int, length: int) -> Iterator[NDArray[np.float64]]:
    """One orbit per trial, drawn and yielded row by row."""
    if not system.supports_expansions:
        yield from _pseudo_orbits(system, rng, rows, length)
        return
    for _ in range(rows):
        bits = rng.integers(0, 2, size=length + config.MANTISSA_BITS - 1, dtype=np.uint8)
        yield system.expansion_orbit(BinaryExpansion(bits), length)


def _check_orbit_budget(trials: int, length: int, spent: int = 0) -> int:
    """Orbit points sampled so far plus `trials` orbits of `length`; raises past ORBIT_BUDGET."""
    needed = spent + trials * length
    if needed > config.ORBIT_BUDGET:
        raise BudgetExceededError(f"sampling {trials} orbits of length {length}", needed, config.ORBIT_BUDGET)
    return needed


def _run_blocks(plan: _Plan, blocks: range) -> _Tally:
    cfg = plan.experiment
    system = build_system(cfg.system)
    with_inner = plan.m_inner > 0
    tally = _Tally.empty(plan.K, with_inner)
    target = cfg.target
    for block in blocks:
        # seeded per block rather than per trial: trial i is row i % TRIAL_BLOCK of
        # block i // TRIAL_BLOCK, so its draws still depend only on (seed, stream, i)
        rng = trial_rng(cfg.seed, TRIAL_STREAM, plan.stream, block)
        rows = min(config.TRIAL_BLOCK, cfg.trials - block * config.TRIAL_BLOCK)
        if target.kind == "cylinder":
            counts = _cylinder_block(plan, require_shift(system), rng, rows)
        else:
            metric = require_metric(system)
            n = target.n or 1
            length = max(plan.m, plan.m_inner) + n
            center = np.asarray(plan.center_orbit)
            counts = np.empty(rows, dtype=np.int64)
            inner_counts = np.empty(rows, dtype=np.int64)
            for r, values in enumerate(_orbit_rows(metric, rng, rows, length)):
                mask = entry_mask(metric, values[1:], center, float(target.eps))
                counts[r] = int(mask[: plan.m].sum())
                if with_inner:
                    inner_counts[r] = int(plan.approx.inner_mask(values[1 : plan.m_inner + 1]).sum())
            if with_inner:
                tally.inner_overflow_sum += _record(tally.inner_hist, inner_counts, plan.K)
        tally.overflow_sum += _record(tally.hist, counts, plan.K)
        tally.sum_sq += int((counts.astype(np.int64) ** 2).sum())
    return tally


def _execute(plan: _Plan, workers: int, progress: bool = False) -> _Tally:
    blocks = math.ceil(plan.experiment.trials / config.TRIAL_BLOCK)
    shards = split_range(blocks, workers)
    total = _Tally.empty(plan.K, plan.m_inner > 0)
    logger.info("running %d trials in %d blocks over %d shard(s)", plan.experiment.trials, blocks, len(shards))
    if len(shards) == 1:
        chunks = split_range(blocks, blocks)
        for chunk in tqdm(chunks, desc="trials", disable=not progress):
            total.add(_run_blocks(plan, chunk))
        return total
    with ProcessPoolExecutor(max_workers=len(shards)) as pool:
        futures = [pool.submit(_run_blocks, plan, shard) for shard in shards]
        # merge in shard order; integer addition keeps the result exact
        for future in tqdm(futures, desc="shards", disable=not progress):
            total.add(future.result())
    return total


def _empirical(hist: NDArray[np.int64], overflow_sum: int, K: int) -> CountDistribution:
    return CountDistribution.from_counts(hist, overflow_sum, K)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------
def _dist_out(dist: CountDistribution) -> DistributionOut:
    d = dist.as_floats()
    return DistributionOut(probs=list(d.probs), overflow=d.overflow, overflow_mean=d.overflow_mean)


def _deviations(
    empirical: CountDistribution,
    exact: Optional[CountDistribution],
    poisson: CountDistribution,
    trials: int,
) -> list[DeviationRow]:
    rows = []
    for k in range(empirical.cap + 1):
        emp = float(empirical.mass(k))
        pois = float(poisson.mass(k))
        ref = float(exact.mass(k)) if exact is not None else pois
        sigma = math.sqrt(ref * (1.0 - ref) / trials)
        if sigma > 0:
            z = (emp - ref) / sigma
        else:
            z = 0.0 if emp == ref else math.inf
        rows.append(
            DeviationRow(k=k, emp=emp, exact=None if exact is None else float(exact.mass(k)), poisson=pois, sigma=sigma, z=z)
        )
    return rows


def _m_from(t: float, mu_hat: float) -> int:
    if mu_hat <= 0:
        raise InvalidInputError("target measure estimate is zero")
    m = round(t / mu_hat)
    if m < 1:
        raise InvalidInputError(f"t={t} is too small for a target of measure {mu_hat:.3e} (m rounds to 0)")
    return m


def exact_oracle(shift: MarkovShift, cyl: CylinderSet, m: int, K: int) -> CountDistribution:
    """Law of W_{A,m} from the transfer DP; rational when the shift is and the work is small."""
    window = max(cyl.n - 1, 1)
    work = shift.size**window * m * (min(K, m) + 2)
    exact = shift.is_rational and work <= config.EXACT_DP_LIMIT
    if shift.is_rational and not exact:
        logger.warning("oracle work %d exceeds %d, using the float DP", work, config.EXACT_DP_LIMIT)
    return exact_hit_distribution(shift, cyl, m, K, exact=exact)


def cylinder_chen_stein(shift: MarkovShift, cyl: CylinderSet, mu: float, tau: int, m: int) -> Optional[ChenSteinBound]:
    if m <= tau + 1:
        logger.info("no Chen-Stein bound: m=%d leaves no gap above tau=%d", m, tau)
        return None
    try:
        alphas = alpha_curve(shift, m)
        returns = short_return_curve(shift, cyl, m - 1, exact=False)
    except BudgetExceededError as e:
        logger.warning("no Chen-Stein bound: %s", e)
        return None
    return chen_stein_bound(mu, tau, lambda d: float(alphas[d]), lambda d: float(returns[d]), m)


def _finish(
    cfg: ExperimentConfig,
    m: int,
    mu_hat: float,
    K: int,
    tally: _Tally,
    exact: Optional[CountDistribution],
    **extra,
) -> ExperimentReport:
    empirical = _empirical(tally.hist, tally.overflow_sum, K)
    poisson = poisson_law(cfg.t, K)
    trials = cfg.trials
    mean = float(empirical.mean)
    variance = max(tally.sum_sq / trials - mean**2, 0.0)
    return ExperimentReport(
        experiment=cfg,
        m=m,
        mu_hat=mu_hat,
        K=K,
        empirical=_dist_out(empirical),
        exact=_dist_out(exact) if exact is not None else None,
        poisson=_dist_out(poisson),
        tv_emp_poisson=float(tv_distance(empirical, poisson)),
        tv_exact_poisson=float(tv_distance(exact.as_floats(), poisson)) if exact is not None else None,
        tv_emp_exact=float(tv_distance(empirical, exact.as_floats())) if exact is not None else None,
        deviations=_deviations(empirical, exact, poisson, trials),
        mean_emp=mean,
        mean_stderr=math.sqrt(variance / trials),
        mean_expected=m * mu_hat,
        **extra,
    )


def _run_cylinder(cfg: ExperimentConfig, K: int, progress: bool) -> ExperimentReport:
    shift = require_shift(build_system(cfg.system))
    cyl = CylinderSet.of(shift, cfg.target.words)
    if cyl.n * math.log2(shift.size) > 62:
        raise InvalidInputError(f"word length {cyl.n} is too long for integer window codes")
    mu = float(cylinder_measure(shift, cyl, exact=False))
    m = _m_from(cfg.t, mu)
    logger.info("cylinder target n=%d: mu=%.6e m=%d", cyl.n, mu, m)
    _check_orbit_budget(cfg.trials, m + cyl.n)
    exact = exact_oracle(shift, cyl, m, K)
    tau = period(shift, cyl)
    tally = _execute(_Plan(cfg, m, K), cfg.workers, progress)
    return _finish(cfg, m, mu, K, tally, exact, period=tau, chen_stein=cylinder_chen_stein(shift, cyl, mu, tau, m))


def _ball_mu(ball: BowenBall, seed: int) -> float:
    method = "exact" if ball.has_exact_backend else "monte_carlo"
    return ball_measure(ball, method, seed=seed).estimate


def _run_ball_fixed(cfg: ExperimentConfig, K: int, progress: bool) -> ExperimentReport:
    system = require_metric(build_system(cfg.system))
    target = cfg.target
    ball = BowenBall(system, target.center, target.eps, target.n)
    mu = _ball_mu(ball, cfg.seed)
    m = _m_from(cfg.t, mu)
    logger.info("ball target n=%d eps=%s center=%s: mu=%.6e m=%d", ball.n, ball.eps, ball.center, mu, m)

    plan = _Plan(cfg, m, K, center_orbit=tuple(float(v) for v in ball.center_orbit))
    approx: Optional[CylinderApproximation] = None
    if target.approximation_depth is not None:
        approx = cylinder_approximation(ball, target.approximation_depth)
        if approx.mu_inner == 0:
            raise InvalidInputError(f"no depth-{approx.N} cylinder lies inside the ball")
        plan = _Plan(
            cfg,
            m,
            K,
            center_orbit=plan.center_orbit,
            m_inner=_m_from(cfg.t, float(approx.mu_inner)),
            approx=approx,
        )
    _check_orbit_budget(cfg.trials, max(m, plan.m_inner) + ball.n)
    tally = _execute(plan, cfg.workers, progress)

    extra = {}
    if ball.has_exact_backend:
        extra["period"] = ball_period(ball).lower
    if approx is not None:
        inner = _empirical(tally.inner_hist, tally.inner_overflow_sum, K)
        outer = _empirical(tally.hist, tally.overflow_sum, K)
        gap = max(abs(a - b) for a, b in zip(outer.cells(), inner.cells()))
        extra["approximation"] = ApproximationComparison(
            N=approx.N,
            mu_inner=float(approx.mu_inner),
            m_inner=plan.m_inner,
            theta_hat=float(approx.theta_hat),
            hit_gap_bound=approx.hit_gap_bound(cfg.t),
            max_gap=float(gap),
            inner_empirical=_dist_out(inner),
        )
    return _finish(cfg, m, mu, K, tally, None, **extra)


def _run_ball_resampled(cfg: ExperimentConfig, K: int, progress: bool) -> ExperimentReport:
    """Quenched design: per center, mu and m are recomputed and `trials` orbits run."""
    system = require_metric(build_system(cfg.system))
    target = cfg.target
    total = _Tally.empty(K, False)
    records = []
    ms, mus = [], []
    spent = 0
    for c in range(cfg.centers):
        center = float(system.sample(trial_rng(cfg.seed, CENTER_STREAM, c), 1)[0])
        ball = BowenBall(system, center, target.eps, target.n)
        mu = _ball_mu(ball, cfg.seed)
        m = _m_from(cfg.t, mu)
        spent = _check_orbit_budget(cfg.trials, m + ball.n, spent)
        plan = _Plan(cfg, m, K, stream=c, center_orbit=tuple(float(v) for v in ball.center_orbit))
        tally = _execute(plan, cfg.workers, progress)
        total.add(tally)
        mean = float(_empirical(tally.hist, tally.overflow_sum, K).mean)
        records.append(CenterRecord(center=center, mu_hat=mu, m=m, mean=mean))
        ms.append(m)
        mus.append(mu)
        logger.info("center %d/%d at %.6f: mu=%.3e m=%d", c + 1, cfg.centers, center, mu, m)

    # pooled over centers; trials counts every center's orbits
    pooled = cfg.model_copy(update={"trials": cfg.trials * cfg.centers})
    report = _finish(pooled, round(float(np.mean(ms))), float(np.mean(mus)), K, total, None, centers=records)
    report.experiment = cfg
    report.mean_expected = float(np.mean([r.m * r.mu_hat for r in records]))
    return report


def run_experiment(cfg: ExperimentConfig, progress: bool = False) -> ExperimentReport:
    """Empirical law of W_{A,m} with m = round(t / mu(A)), against Poisson(t) and the exact oracle."""
    K = cfg.K if cfg.K is not None else default_count_cap(cfg.t)
    target = cfg.target
    if target.kind == "cylinder":
        return _run_cylinder(cfg, K, progress)
    if cfg.system.is_metric is False:
        raise InvalidInputError("ball targets need a metric system")
    if target.center is None:
        return _run_ball_resampled(cfg, K, progress)
    return _run_ball_fixed(cfg, K, progress)


def compare_to_poisson(report: ExperimentReport) -> SummaryRow:
    """Summary row: TVs to Poisson(t), the largest |z| and the Chen-Stein value."""
    target = report.experiment.target
    n = target.n if target.kind == "ball" else len(target.words[0])
    finite = [abs(d.z) for d in report.deviations if math.isfinite(d.z)]
    infinite = any(not math.isfinite(d.z) for d in report.deviations)
    return SummaryRow(
        n=n,
        m=report.m,
        mu_hat=report.mu_hat,
        t=report.experiment.t,
        tv_emp_poisson=report.tv_emp_poisson,
        tv_exact_poisson=report.tv_exact_poisson,
        max_z=math.inf if infinite else max(finite, default=0.0),
        chen_stein_value=report.chen_stein.value if report.chen_stein is not None else None,
    )


def bootstrap_empirical(dist: CountDistribution, trials: int, rng: np.random.Generator) -> CountDistribution:
    """Empirical law of `trials` draws from dist (overflow draws keep dist's mean above K)."""
    cells = np.array([float(p) for p in dist.cells()])
    counts = rng.multinomial(trials, cells / cells.sum())
    over = float(dist.overflow)
    overflow_sum = int(round(counts[-1] * float(dist.overflow_mean) / over)) if over > 0 else 0
    return CountDistribution.from_counts(counts.astype(np.int64), overflow_sum, dist.cap)
