import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trailmark import stats
from trailmark.errors import DegenerateData, LengthMismatch, NoMajority, OutOfRange

# -5..+5 -> 5-point scale as quoted in the scoring rules
QUOTED = {-5: -2, -4: -2, -3: -1, -2: -1, -1: 0, 0: 0, 1: 0, 2: 1, 3: 1, 4: 2, 5: 2}


@pytest.mark.parametrize("score, expected", sorted(QUOTED.items()))
def test_collapse_11_to_5(score, expected):
    assert stats.collapse_11_to_5(score) == expected


def test_collapse_11_to_5_properties():
    out = [stats.collapse_11_to_5(s) for s in range(-5, 6)]
    assert all(a <= b for a, b in zip(out, out[1:]))
    assert set(out) == {-2, -1, 0, 1, 2}
    for bad in (-6, 6, 0.5, True):
        with pytest.raises(OutOfRange):
            stats.collapse_11_to_5(bad)


def test_collapse_5_to_sign():
    assert [stats.collapse_5_to_sign(s) for s in (-2, -1, 0, 1, 2)] == ["-", "-", "0", "+", "+"]
    with pytest.raises(OutOfRange):
        stats.collapse_5_to_sign(3)


def test_majority_vote():
    assert stats.majority_vote(("0", "0", "+")) == "0"
    assert stats.majority_vote(("+", "+", "+")) == "+"
    with pytest.raises(NoMajority):
        stats.majority_vote(("-", "0", "+"))


@given(st.lists(st.sampled_from(["-", "0", "+"]), min_size=3, max_size=3))
def test_majority_vote_permutation_invariant(signs):
    results = set()
    for perm in itertools.permutations(signs):
        try:
            results.add(stats.majority_vote(perm))
        except NoMajority:
            results.add(None)
    assert len(results) == 1


def test_percent_agreement():
    assert stats.percent_agreement([("+", "+", "+")] * 4) == 1.0
    assert stats.percent_agreement([("0", "0", "+")]) == pytest.approx(1 / 3)
    panel = [("0", "0", "0")] * 38 + [("0", "0", "+")] * 12
    assert stats.percent_agreement(panel) == pytest.approx((38 + 12 / 3) / 50, abs=1e-12)
    assert stats.percent_agreement(panel) == pytest.approx(0.84, abs=1e-12)


def test_free_marginal_kappa():
    assert stats.free_marginal_kappa(0.85, 3) == pytest.approx(0.775, abs=1e-9)
    assert stats.free_marginal_kappa(1.0, 3) == 1.0
    assert stats.free_marginal_kappa(1 / 3, 3) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        stats.free_marginal_kappa(0.5, 1)


@given(st.floats(0, 1), st.floats(0, 1), st.integers(2, 10))
def test_kappa_increasing(p1, p2, q):
    if p2 - p1 > 1e-9:
        assert stats.free_marginal_kappa(p1, q) < stats.free_marginal_kappa(p2, q)


def test_midranks():
    assert stats.midranks([3, 1, 3, 2]).tolist() == [3.5, 1.0, 3.5, 2.0]


# --- Mann-Whitney -----------------------------------------------------------

def pairwise_u(a, b):
    return sum(1.0 if x > y else 0.5 if x == y else 0.0 for x in a for y in b)


def enumeration_p(a, b):
    """Two-sided exact p by listing every split of the pooled sample."""
    pooled = list(a) + list(b)
    n, n1 = len(pooled), len(a)
    centre = Fraction(n1 * len(b), 2)
    observed = abs(Fraction(pairwise_u(a, b)) - centre)
    extreme = 0
    for idx in itertools.combinations(range(n), n1):
        chosen = set(idx)
        xa = [pooled[i] for i in idx]
        xb = [pooled[i] for i in range(n) if i not in chosen]
        if abs(Fraction(pairwise_u(xa, xb)) - centre) >= observed:
            extreme += 1
    return extreme / math.comb(n, n1)


def test_u_fixture_separated():
    res = stats.mann_whitney([1, 2, 3], [4, 5, 6])
    assert res.U == 0 and res.method == "exact"
    assert res.p_two_sided == 0.1


def test_u_fixture_interleaved():
    res = stats.mann_whitney([1, 4], [2, 3])
    assert res.U == 2 and res.z == 0 and res.p_two_sided == 1.0


def test_u_all_tied():
    with pytest.raises(DegenerateData):
        stats.mann_whitney([1, 1], [1, 1])


def test_exact_matches_enumeration():
    rng = np.random.default_rng(2024)
    cases = 0
    for n1 in range(1, 7):
        for n2 in range(1, 7):
            for _ in range(30):
                a = rng.integers(0, 4, n1).tolist()
                b = rng.integers(0, 4, n2).tolist()
                if len(set(a + b)) == 1:
                    continue
                res = stats.mann_whitney(a, b, method="exact")
                assert res.U == pairwise_u(a, b)
                assert abs(res.p_two_sided - enumeration_p(a, b)) <= 1e-12, (a, b)
                cases += 1
    assert cases >= 1000


def test_normal_approximation_hand_values():
    # no ties: var = n1 n2 (n + 1) / 12
    a, b = list(range(10)), list(range(10, 20))
    res = stats.mann_whitney(a, b)
    assert res.method == "normal"
    z = (0 - 50) / math.sqrt(10 * 10 * 21 / 12)
    assert res.z == pytest.approx(z, abs=1e-12)
    assert res.p_two_sided == pytest.approx(math.erfc(abs(z) / math.sqrt(2)), abs=1e-15)


def test_normal_tie_correction():
    a, b = [1, 1, 2, 3, 3, 3, 4], [2, 2, 4, 5, 5, 6, 6]
    res = stats.mann_whitney(a, b, method="normal")
    n1 = n2 = 7
    n = 14
    ties = [2, 3, 3, 2, 2, 2]  # values 1,2,3,4,5,6 counts: 2,3,3,2,2,2
    var = n1 * n2 / 12 * ((n + 1) - sum(t ** 3 - t for t in ties) / (n * (n - 1)))
    assert res.U == pairwise_u(a, b)
    assert res.z == pytest.approx((res.U - 24.5) / math.sqrt(var), abs=1e-12)


int_lists = st.lists(st.integers(0, 5), min_size=1, max_size=9)


@settings(max_examples=80, deadline=None)
@given(int_lists, int_lists)
def test_u_symmetries(a, b):
    if len(set(a + b)) == 1:
        return
    ab = stats.mann_whitney(a, b)
    ba = stats.mann_whitney(b, a)
    assert ab.U + ba.U == len(a) * len(b)
    assert ab.z == pytest.approx(-ba.z, abs=1e-12)
    assert ab.p_two_sided == pytest.approx(ba.p_two_sided, abs=1e-12)


# --- contingency --------------------------------------------------------------

def table1_fixture():
    assignments = [1] * 26 + [2] * 20
    labels = ["0"] * 21 + ["+"] * 5 + ["0"] * 7 + ["+"] * 13
    return assignments, labels


def test_cross_tab_table1():
    ct = stats.cross_tab(*table1_fixture())
    assert ct.col_labels == ("0", "+")
    assert ct.col_totals.tolist() == [28, 18]
    assert ct.total == 46
    assert abs(ct.purity - 34 / 46) <= 1e-9


def test_cross_tab_trivial_and_errors():
    assert stats.cross_tab([0, 0, 0], ["+", "+", "+"]).purity == 1.0
    with pytest.raises(LengthMismatch):
        stats.cross_tab([0, 1], ["+"])


def test_cross_tab_random_labels_purity_at_least_half():
    rng = np.random.default_rng(7)
    for _ in range(50):
        labels = rng.permutation(["0"] * 10 + ["+"] * 10).tolist()
        assert stats.cross_tab([0] * 10 + [1] * 10, labels).purity >= 0.5


@given(st.lists(st.tuples(st.integers(0, 3), st.sampled_from(["-", "0", "+"])), min_size=1, max_size=40),
       st.permutations([0, 1, 2, 3]))
def test_cross_tab_sum_and_relabel(pairs, perm):
    a = [p[0] for p in pairs]
    lab = [p[1] for p in pairs]
    ct = stats.cross_tab(a, lab)
    assert ct.counts.sum() == len(pairs)
    assert stats.cross_tab([perm[x] for x in a], lab).purity == ct.purity
