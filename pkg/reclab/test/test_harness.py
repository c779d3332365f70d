import math
from fractions import Fraction

import numpy as np
import pytest
from pydantic import ValidationError

from reclab.core.config import config
from reclab.core.errors import BudgetExceededError, InvalidInputError
from reclab.models.schemas import ExperimentConfig, SystemDescriptor, TargetDescriptor
from reclab.services.harness import (
    bootstrap_empirical,
    compare_to_poisson,
    count_visits,
    cylinder_chen_stein,
    cylinder_membership,
    exact_oracle,
    return_times,
    run_experiment,
)
from reclab.services.symbolic import CylinderSet
from reclab.services.systems import doubling_map, fair_coin, golden_mean_shift


def _cylinder_config(words, system="fair-coin", **overrides) -> ExperimentConfig:
    values = {
        "system": SystemDescriptor(kind=system),
        "target": TargetDescriptor(kind="cylinder", words=words),
        "t": 1.0,
        "trials": 2000,
        "seed": 1,
    }
    values.update(overrides)
    return ExperimentConfig(**values)


def _ball_config(center, **overrides) -> ExperimentConfig:
    target = {"kind": "ball", "eps": 0.1, "n": 3, "center": center}
    target.update(overrides.pop("target", {}))
    values = {
        "system": SystemDescriptor(kind="doubling"),
        "target": TargetDescriptor(**target),
        "t": 1.0,
        "trials": 1000,
        "seed": 2,
    }
    values.update(overrides)
    return ExperimentConfig(**values)


# ---------------------------------------------------------------------------
# Visit counting
# ---------------------------------------------------------------------------
def test_visits_of_a_periodic_orbit():
    T = doubling_map()
    near_third = lambda y: T.distance(y, Fraction(1, 3)) < 0.01
    assert return_times(T, Fraction(1, 3), near_third, 4) == [2, 4]
    assert count_visits(T, Fraction(1, 3), near_third, 4) == 2
    assert count_visits(T, Fraction(1, 3), near_third, 0) == 0


def test_visits_to_a_cylinder():
    coin = fair_coin()
    ones = cylinder_membership(CylinderSet.of(coin, ["1"]))
    # j = 0 is never counted
    assert return_times(coin, "0110110", ones, 5) == [1, 2, 4, 5]
    assert count_visits(coin, "0110110", ones, 5) == 4


def test_negative_horizon_is_rejected():
    with pytest.raises(InvalidInputError):
        count_visits(doubling_map(), 0.3, lambda y: True, -1)


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------
def test_oracle_is_rational_for_small_work():
    coin = fair_coin()
    dist = exact_oracle(coin, CylinderSet.of(coin, ["0001"]), 16, 32)
    assert dist.is_exact
    assert dist.mean == 1


def test_oracle_falls_back_to_floats(monkeypatch):
    from reclab.core.config import config

    monkeypatch.setattr(config, "EXACT_DP_LIMIT", 10)
    coin = fair_coin()
    dist = exact_oracle(coin, CylinderSet.of(coin, ["0001"]), 16, 32)
    assert not dist.is_exact
    assert dist.mean == pytest.approx(1.0)


def test_chen_stein_needs_room_above_the_period():
    gm = golden_mean_shift()
    cyl = CylinderSet.of(gm, ["0100"])
    assert cylinder_chen_stein(gm, cyl, 1 / 12, 3, 4) is None
    bound = cylinder_chen_stein(gm, cyl, 1 / 12, 3, 40)
    assert bound is not None
    assert 3 < bound.delta_star < 40


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------
def test_cylinder_experiment_matches_the_oracle():
    report = run_experiment(_cylinder_config(["0001"]))
    assert report.m == 16
    assert report.mu_hat == pytest.approx(1 / 16)
    assert report.period == 4
    assert report.exact is not None
    assert report.tv_emp_exact < 0.05
    assert report.mean_expected == pytest.approx(1.0)
    assert abs(report.mean_emp - 1.0) < 5 * report.mean_stderr
    assert report.chen_stein is not None
    assert sum(report.empirical.probs) + report.empirical.overflow == pytest.approx(1.0)


def test_experiments_are_reproducible_from_the_seed():
    first = run_experiment(_cylinder_config(["001"], system="golden-mean", trials=700))
    second = run_experiment(_cylinder_config(["010"], system="golden-mean", trials=700))
    again = run_experiment(_cylinder_config(["001"], system="golden-mean", trials=700))
    assert first.model_dump_json() == again.model_dump_json()
    assert first.empirical != second.empirical


def test_worker_count_does_not_change_the_report():
    serial = run_experiment(_cylinder_config(["0110"], trials=1300, workers=1))
    parallel = run_experiment(_cylinder_config(["0110"], trials=1300, workers=3))
    assert serial.model_dump_json() == parallel.model_dump_json()


def test_eight_workers_match_one():
    serial = run_experiment(_cylinder_config(["0110"], trials=2300, workers=1))
    parallel = run_experiment(_cylinder_config(["0110"], trials=2300, workers=8))
    assert serial.model_dump_json() == parallel.model_dump_json()


def test_large_cylinder_experiment_stays_near_the_oracle():
    trials = 100_000
    report = run_experiment(_cylinder_config(["0110"], trials=trials, seed=7))
    assert report.exact is not None
    assert abs(report.mean_emp - report.mean_expected) < 4 * report.mean_stderr
    assert report.tv_emp_exact < 0.01
    assert report.tv_emp_exact < 3 * math.sqrt(report.K / trials)


def test_ball_experiment_with_a_fixed_center():
    report = run_experiment(_ball_config(0.37, target={"approximation_depth": 10}))
    assert report.mu_hat == pytest.approx(0.05)
    assert report.m == 20
    assert report.period is not None
    assert report.exact is None
    assert report.tv_emp_poisson < 0.2
    approx = report.approximation
    assert approx is not None
    assert approx.N == 10
    assert 0 <= approx.theta_hat < 1


def test_ball_experiment_with_resampled_centers():
    report = run_experiment(_ball_config(None, trials=256, centers=3))
    assert len(report.centers) == 3
    assert report.experiment.trials == 256
    assert all(r.m >= 1 for r in report.centers)


def test_ball_orbits_over_the_budget_are_refused(monkeypatch):
    monkeypatch.setattr(config, "ORBIT_BUDGET", 1000)
    with pytest.raises(BudgetExceededError) as err:
        run_experiment(_ball_config(0.37))
    assert err.value.needed == 1000 * 23
    assert err.value.budget == 1000


def test_long_ball_orbits_fail_before_sampling():
    # m is about 1e7 here, far past the default budget
    cfg = _ball_config(0.37, trials=256, target={"n": 22})
    with pytest.raises(BudgetExceededError) as err:
        run_experiment(cfg)
    assert err.value.budget == config.ORBIT_BUDGET
    assert err.value.needed > config.ORBIT_BUDGET


def test_resampled_centers_share_one_orbit_budget(monkeypatch):
    # each center needs 256 * (20 + 3) points; the second one crosses the budget
    monkeypatch.setattr(config, "ORBIT_BUDGET", 10_000)
    with pytest.raises(BudgetExceededError) as err:
        run_experiment(_ball_config(None, trials=256, centers=3))
    assert err.value.needed == 2 * 256 * 23


def test_cylinder_orbits_over_the_budget_are_refused(monkeypatch):
    monkeypatch.setattr(config, "ORBIT_BUDGET", 100)
    with pytest.raises(BudgetExceededError):
        run_experiment(_cylinder_config(["0001"]))


def test_ball_targets_need_a_metric_system():
    cfg = ExperimentConfig(
        system=SystemDescriptor(kind="fair-coin"),
        target=TargetDescriptor(kind="ball", eps=0.1, n=3, center=0.2),
        t=1.0,
    )
    with pytest.raises(InvalidInputError):
        run_experiment(cfg)


def test_tiny_t_leaves_no_visits():
    with pytest.raises(InvalidInputError):
        run_experiment(_cylinder_config(["0001"], t=0.01))


def test_experiment_config_validation():
    with pytest.raises(ValidationError):
        _cylinder_config(["0001"], t=0.0)
    with pytest.raises(ValidationError):
        _cylinder_config(["0001"], trials=0)
    with pytest.raises(ValidationError):
        TargetDescriptor(kind="ball", eps=0.1)


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------
def test_summary_row():
    report = run_experiment(_cylinder_config(["0001"]))
    row = compare_to_poisson(report)
    assert row.n == 4
    assert row.m == 16
    assert row.tv_exact_poisson == pytest.approx(report.tv_exact_poisson)
    assert row.chen_stein_value == pytest.approx(report.chen_stein.value)
    assert row.max_z >= 0


def test_bootstrap_keeps_the_law():
    coin = fair_coin()
    exact = exact_oracle(coin, CylinderSet.of(coin, ["1"]), 3, 1)
    sample = bootstrap_empirical(exact, 20_000, np.random.default_rng(0))
    assert sample.cap == 1
    assert sample.is_normalized()
    assert sample.mass(0) == pytest.approx(1 / 8, abs=0.01)
    assert sample.mean == pytest.approx(1.5, abs=0.03)


def test_bootstrap_deviations_stay_within_four_sigma():
    coin = fair_coin()
    exact = exact_oracle(coin, CylinderSet.of(coin, ["01"]), 6, 6)
    p = np.array([float(c) for c in exact.cells()])
    trials = 20_000
    rng = np.random.default_rng(11)
    within = 0
    for _ in range(100):
        sample = bootstrap_empirical(exact, trials, rng)
        q = np.array([float(c) for c in sample.cells()])
        live = p > 0
        z = (q[live] - p[live]) / np.sqrt(p[live] * (1 - p[live]) / trials)
        within += int(np.abs(z).max() < 4)
    assert within >= 99
