import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from reclab.core.errors import BudgetExceededError, InvalidInputError
from reclab.services.symbolic import (
    CountDistribution,
    CylinderSet,
    alpha_curve,
    cylinder_measure,
    exact_hit_distribution,
    hamming_cluster,
    hamming_distance,
    lambda_bound,
    lambda_growth_rate,
    max_mismatches,
    mixing_coefficient,
    period,
    short_return_curve,
    short_return_prob,
)
from reclab.services.systems import MarkovShift, fair_coin, full_shift, golden_mean_shift, sample_code_matrix


def _brute_force_law(words: set[str], n: int, m: int) -> list[Fraction]:
    """Law of W_{A,m} for the fair coin by enumerating every sequence."""
    length = m + n
    seqs = (np.arange(2**length)[:, None] >> np.arange(length - 1, -1, -1)) & 1
    member = np.zeros(2**n, dtype=bool)
    for w in words:
        member[int(w, 2)] = True
    weights = 2 ** np.arange(n - 1, -1, -1)
    counts = np.zeros(2**length, dtype=np.int64)
    for j in range(1, m + 1):
        counts += member[seqs[:, j : j + n] @ weights]
    tally = np.bincount(counts, minlength=m + 1)
    return [Fraction(int(c), 2**length) for c in tally]


# ---------------------------------------------------------------------------
# Cylinders and periods
# ---------------------------------------------------------------------------
def test_cylinder_set_validation():
    coin = fair_coin()
    assert CylinderSet.of(coin, ["10", "01"]).words == ("01", "10")
    with pytest.raises(InvalidInputError):
        CylinderSet.of(coin, [])
    with pytest.raises(InvalidInputError):
        CylinderSet.of(coin, ["01", "01"])
    with pytest.raises(InvalidInputError):
        CylinderSet.of(coin, ["01", "011"])
    with pytest.raises(InvalidInputError):
        CylinderSet.of(golden_mean_shift(), ["11"])


def test_cylinder_text_round_trip():
    coin = fair_coin()
    cyl = CylinderSet.of(coin, ["011", "100"])
    assert CylinderSet.from_text(coin, cyl.to_text()) == cyl


def test_cylinder_measures():
    assert cylinder_measure(fair_coin(), CylinderSet.of(fair_coin(), ["0110"])) == Fraction(1, 16)
    gm = golden_mean_shift()
    assert cylinder_measure(gm, CylinderSet.of(gm, ["00", "01"])) == Fraction(2, 3)


@pytest.mark.parametrize(
    "words, expected",
    [(["0110"], 3), (["0001"], 4), (["1111"], 1), (["0101"], 2), (["01", "10"], 1)],
)
def test_period_of_fair_coin_cylinders(words, expected):
    coin = fair_coin()
    assert period(coin, CylinderSet.of(coin, words)) == expected


def test_period_respects_forbidden_transitions():
    gm = golden_mean_shift()
    assert period(gm, CylinderSet.of(gm, ["1"])) == 2
    assert period(gm, CylinderSet.of(gm, ["01"])) == 2


@pytest.mark.parametrize("shift, forbidden", [(fair_coin(), None), (golden_mean_shift(), "11")])
def test_period_is_bounded_by_the_primitivity_index(shift, forbidden):
    for n in (1, 2, 3):
        words = ["".join(w) for w in itertools.product(shift.alphabet, repeat=n)]
        words = [w for w in words if forbidden is None or forbidden not in w]
        for size in range(1, len(words) + 1):
            for subset in itertools.combinations(words, size):
                assert 1 <= period(shift, CylinderSet.of(shift, subset)) <= n + shift.k0


def test_single_word_period_is_the_shortest_self_overlap():
    shift = full_shift(2, alphabet="01")
    for n in range(1, 7):
        for w in map("".join, itertools.product("01", repeat=n)):
            overlap = next((p for p in range(1, n) if w[p:] == w[: n - p]), n)
            assert period(shift, CylinderSet.of(shift, [w])) == overlap


def test_full_shift_periods_on_letters():
    shift = full_shift(2, alphabet="ab")
    assert period(shift, CylinderSet.of(shift, ["ab"])) == 2
    assert period(shift, CylinderSet.of(shift, ["aaa"])) == 1


def test_chain_cylinder_measure_against_sampling():
    shift = MarkovShift.from_matrix(
        [[Fraction(7, 10), Fraction(3, 10)], [Fraction(6, 10), Fraction(4, 10)]], alphabet="ab"
    )
    cyl = CylinderSet.of(shift, ["ab"])
    assert cylinder_measure(shift, cyl) == Fraction(1, 5)
    rows = 1_000_000
    codes = sample_code_matrix(shift, np.random.default_rng(13), rows, 2)
    freq = np.mean((codes[:, 0] == 0) & (codes[:, 1] == 1))
    assert abs(freq - 0.2) < 4 * math.sqrt(0.2 * 0.8 / rows)


# ---------------------------------------------------------------------------
# Hamming clusters
# ---------------------------------------------------------------------------
def test_hamming_cluster_example():
    shift = full_shift(2)
    cluster = hamming_cluster(shift, "0000", 0.3)
    assert len(cluster.words) == 5
    assert lambda_bound(4, 2, 0.3) == 9
    assert max_mismatches(4, 0.3) == 1


def test_zero_radius_cluster_is_the_center():
    assert hamming_cluster(fair_coin(), "0110", 0).words == ("0110",)


def test_cluster_membership_is_strict():
    # d = 1/4 is not below beta = 1/4
    cluster = hamming_cluster(fair_coin(), "0000", Fraction(1, 4))
    assert cluster.words == ("0000",)
    assert hamming_distance("0000", "0001") == Fraction(1, 4)


def test_hamming_distance_examples():
    assert hamming_distance("0110", "0011") == Fraction(1, 2)
    assert hamming_distance("abc", "abc") == 0
    assert hamming_distance("ab", "ba") == 1
    with pytest.raises(InvalidInputError):
        hamming_distance("01", "011")


@pytest.mark.parametrize("s", [2, 3])
@pytest.mark.parametrize("beta", [0, 0.1, 0.25, 0.5])
def test_cluster_size_never_exceeds_lambda_bound(s, beta):
    shift = full_shift(s)
    for n in (1, 4, 7):
        center = shift.alphabet[0] * n
        assert len(hamming_cluster(shift, center, beta).words) <= lambda_bound(n, s, beta)


def test_cluster_budget(monkeypatch):
    from reclab.core.config import config

    monkeypatch.setattr(config, "CLUSTER_BUDGET", 10)
    with pytest.raises(BudgetExceededError):
        hamming_cluster(fair_coin(), "0" * 12, 0.5)


def test_lambda_growth_rate():
    assert lambda_growth_rate(2, 0.5) == pytest.approx(1.5 * math.log(2))
    assert lambda_growth_rate(3, 0) == 0.0
    # the binomial sum grows no faster than the rate
    n = 200
    assert math.log(lambda_bound(n, 2, 0.1)) / n <= lambda_growth_rate(2, 0.1) + 1e-12


# ---------------------------------------------------------------------------
# Count distributions
# ---------------------------------------------------------------------------
def test_recap_keeps_the_mean():
    dist = CountDistribution((Fraction(1, 4), Fraction(1, 4), Fraction(1, 4), Fraction(1, 4)))
    capped = dist.recap(1)
    assert capped.probs == (Fraction(1, 4), Fraction(1, 4))
    assert capped.overflow == Fraction(1, 2)
    assert capped.mean == dist.mean == Fraction(3, 2)
    assert capped.recap(3).cells() == [Fraction(1, 4), Fraction(1, 4), 0, 0, Fraction(1, 2)]


def test_empirical_law_from_counts():
    dist = CountDistribution.from_counts(np.array([2, 1, 1]), overflow_sum=5, K=1)
    assert dist.probs == (0.5, 0.25)
    assert dist.overflow == 0.25
    assert dist.mean == pytest.approx(0.25 + 5 / 4)
    assert dist.is_normalized()


def test_negative_masses_are_rejected():
    with pytest.raises(InvalidInputError):
        CountDistribution((0.5, -0.1))
    with pytest.raises(InvalidInputError):
        CountDistribution((0.5, 0.1)).check_normalized()


# ---------------------------------------------------------------------------
# Hitting-count DP
# ---------------------------------------------------------------------------
def test_single_symbol_gives_a_binomial_law():
    coin = fair_coin()
    dist = exact_hit_distribution(coin, CylinderSet.of(coin, ["1"]), 3, K=3)
    assert dist.probs == (Fraction(1, 8), Fraction(3, 8), Fraction(3, 8), Fraction(1, 8))
    assert dist.overflow == 0


@pytest.mark.parametrize("n", [1, 2, 3])
def test_dp_matches_enumeration_for_every_target(n):
    coin = fair_coin()
    words = ["".join(w) for w in itertools.product("01", repeat=n)]
    for size in range(1, len(words) + 1):
        for subset in itertools.combinations(words, size):
            cyl = CylinderSet.of(coin, subset)
            for m in range(0, 15 - n):
                dist = exact_hit_distribution(coin, cyl, m, K=m)
                assert dist.is_exact
                assert list(dist.probs) == _brute_force_law(set(subset), n, m)
                assert dist.overflow == 0
                assert dist.mean == m * Fraction(size, 2**n)


def test_dp_mean_identity_on_four_letter_words():
    coin = fair_coin()
    words = ["".join(w) for w in itertools.product("01", repeat=4)]
    rng = np.random.default_rng(2)
    targets = [[w] for w in words] + [list(p) for p in itertools.combinations(words, 2)]
    for _ in range(100):
        picked = rng.choice(words, size=int(rng.integers(1, 17)), replace=False)
        targets.append([str(w) for w in picked])
    for target in targets:
        cyl = CylinderSet.of(coin, target)
        for m in (1, 5, 12):
            dist = exact_hit_distribution(coin, cyl, m, K=2)
            assert dist.total == 1
            assert dist.mean == m * cylinder_measure(coin, cyl)


@pytest.mark.parametrize("K", [0, 1, 2, 10])
def test_dp_mean_is_exact_with_a_lumped_tail(K):
    coin = fair_coin()
    cyl = CylinderSet.of(coin, ["00", "01"])
    m = 9
    dist = exact_hit_distribution(coin, cyl, m, K=K)
    assert dist.cap == K
    assert dist.mean == m * cylinder_measure(coin, cyl)


def test_dp_on_golden_mean_matches_the_mean_identity():
    gm = golden_mean_shift()
    cyl = CylinderSet.of(gm, ["010"])
    dist = exact_hit_distribution(gm, cyl, 12)
    assert dist.total == 1
    assert dist.mean == 12 * cylinder_measure(gm, cyl)


def test_float_dp_agrees_with_rational_dp():
    coin = fair_coin()
    cyl = CylinderSet.of(coin, ["0110"])
    exact = exact_hit_distribution(coin, cyl, 20, K=6, exact=True)
    approx = exact_hit_distribution(coin, cyl, 20, K=6, exact=False)
    assert [float(p) for p in exact.cells()] == pytest.approx(approx.cells(), abs=1e-14)


def test_dp_budget(monkeypatch):
    from reclab.core.config import config

    monkeypatch.setattr(config, "DP_BUDGET", 100)
    coin = fair_coin()
    with pytest.raises(BudgetExceededError):
        exact_hit_distribution(coin, CylinderSet.of(coin, ["000000"]), 50)


# ---------------------------------------------------------------------------
# Short returns
# ---------------------------------------------------------------------------
def test_short_return_probabilities():
    coin = fair_coin()
    assert short_return_prob(coin, CylinderSet.of(coin, ["11"]), 1) == Fraction(1, 2)
    curve = short_return_curve(coin, CylinderSet.of(coin, ["01"]), 2)
    assert curve == [0, 0, Fraction(1, 4)]


def test_short_return_curve_is_monotone():
    gm = golden_mean_shift()
    curve = short_return_curve(gm, CylinderSet.of(gm, ["0100"]), 30)
    assert all(a <= b for a, b in zip(curve, curve[1:]))
    assert curve[-1] <= 1


# ---------------------------------------------------------------------------
# Mixing
# ---------------------------------------------------------------------------
def test_golden_mean_mixing_coefficients():
    gm = golden_mean_shift()
    for k in range(4):
        alpha = mixing_coefficient(gm, 2, 3, k, "alpha")
        phi = mixing_coefficient(gm, 2, 3, k, "phi")
        assert alpha.exact and phi.exact
        assert alpha.upper == pytest.approx(2 / 9 * 0.5 ** (k + 1))
        assert phi.upper == pytest.approx(2 / 3 * 0.5 ** (k + 1))


def test_symmetric_chain_mixing_decays_geometrically():
    # p = q = 0.3: second eigenvalue 0.4, |cov| = 0.4^(k+1) / 4 at lag k + 1
    shift = MarkovShift.from_matrix([[Fraction(7, 10), Fraction(3, 10)], [Fraction(3, 10), Fraction(7, 10)]])
    alphas = [mixing_coefficient(shift, 1, 1, k, "alpha").upper for k in range(1, 11)]
    assert alphas[0] == pytest.approx(0.04)
    assert alphas[2] == pytest.approx(0.0064)
    assert all(a >= b for a, b in zip(alphas, alphas[1:]))


def test_iid_shifts_are_independent():
    coin = fair_coin()
    assert mixing_coefficient(coin, 3, 3, 0, "alpha").upper == 0
    assert mixing_coefficient(coin, 3, 3, 0, "phi").upper == 0
    assert not alpha_curve(coin, 5).any()


def test_alpha_curve_matches_pointwise_values():
    gm = golden_mean_shift()
    curve = alpha_curve(gm, 6)
    for k in range(7):
        assert curve[k] == pytest.approx(mixing_coefficient(gm, 1, 1, k, "alpha").upper)


def test_large_alphabets_are_bracketed():
    rng = np.random.default_rng(4)
    rows = rng.dirichlet(np.ones(13), size=13)
    shift = MarkovShift.from_matrix(rows)
    bracket = mixing_coefficient(shift, 1, 1, 0, "alpha")
    assert not bracket.exact
    assert 0 <= bracket.lower <= bracket.upper


def test_unknown_mixing_kind():
    with pytest.raises(InvalidInputError):
        mixing_coefficient(fair_coin(), 1, 1, 0, "beta")
