from __future__ import annotations

import itertools
import math
import random

import gmpy2
import pytest
from gmpy2 import mpfr

from oracles import (
    OMEGA_KINDS,
    alpha_bruteforce,
    delta_bruteforce,
    golden_lambda,
    random_omega,
    unit_circle_tuples,
)
from simlin.brjuno import (
    OmegaSequence,
    alpha_seq,
    appendix_inequalities,
    b_trajectory,
    brjuno_report,
    certify_coefficients,
    counting_check,
    delta_map,
    delta_product,
    russmann_lemma_sides,
    series_partial_sum,
)
from simlin.errors import NonMonotoneOmega, NotNormalized, ThetaOutOfRange
from simlin.linearize import formal_linearize, sigma_normalize
from simlin.scalars import BigFloatField, ExactField
from simlin.series import Germ

E = ExactField()
B = BigFloatField()


def one_dim(field, N, lam, *terms):
    return Germ.from_terms(1, N, field, [[field.convert(lam)]], [(0, (d,), field.convert(v)) for d, v in terms])


# -- omega sequences and series -------------------------------------------------

def test_omega_rejects_increase_and_zero():
    with pytest.raises(NonMonotoneOmega):
        OmegaSequence.from_values([0.5, 0.6])
    with pytest.raises(NonMonotoneOmega):
        OmegaSequence.from_values([0.5, 0.0])


def test_omega_runs_cover_range():
    w = OmegaSequence.from_values([1, 1, 0.5, 0.5, 0.5, 0.25])
    assert list(w.runs(2, 6)) == [(2, 2, 1), (3, 5, 0.5), (6, 6, 0.25)]
    assert w(4) == 0.5
    with pytest.raises(IndexError):
        w(7)


def test_from_profile_copies_omega_two():
    w = OmegaSequence.from_profile({2: 0.5, 3: 0.25})
    assert w(1) == w(2) == 0.5 and w.length == 3


def test_omega_identically_one_gives_zero_sums():
    w = OmegaSequence.constant(1, 2**10)
    for v, t in (("B", 8), ("R", 1000), ("Gamma", 1000)):
        assert series_partial_sum(w, v, t) == 0


@pytest.mark.parametrize("c", ["0.5", "0.9", "0.01"])
def test_constant_omega_closed_forms(c):
    nu = 12
    K = 2 ** (nu + 1) - 1
    w = OmegaSequence.constant(mpfr(c), K + 1)
    L = -math.log(float(c))
    assert float(series_partial_sum(w, "Gamma", K)) == pytest.approx((1 - 1 / (K + 1)) * L, rel=1e-14)
    assert float(series_partial_sum(w, "B", nu)) == pytest.approx(2 * (1 - 2.0 ** (-nu - 1)) * L, rel=1e-14)
    r = float(series_partial_sum(w, "R", K))
    assert r == pytest.approx(sum(1 / k**2 for k in range(1, K + 1)) * L, rel=1e-13)


def test_long_runs_use_same_value_as_direct_sum():
    # one run long enough to take the trigamma path
    w = OmegaSequence([1, 3, 500], [mpfr("0.9"), mpfr("0.3"), mpfr("0.01")], 2000)
    direct = sum(-math.log(float(w(k))) / k**2 for k in range(1, 2001))
    assert float(series_partial_sum(w, "R", 2000)) == pytest.approx(direct, rel=1e-12)


def test_unknown_series_name():
    with pytest.raises(ValueError):
        series_partial_sum(OmegaSequence.constant(0.5, 4), "Q", 2)


def test_b_trajectory_is_cumulative():
    w = OmegaSequence.from_values([0.5] * 4 + [0.1] * 4)
    traj = b_trajectory(w, 2)
    steps = [-math.log(float(w(2 ** (v + 1)))) / 2**v for v in range(3)]
    assert [float(x) for x in traj] == pytest.approx(list(itertools.accumulate(steps)))


# -- inequality block ---------------------------------------------------------

@pytest.mark.parametrize("seed", range(24))
def test_left_pair_and_gamma_below_half_b(seed):
    rng = random.Random(seed)
    w = random_omega(rng, 2**13, OMEGA_KINDS[seed % 4])
    rep = appendix_inequalities(w, 12)
    for name in ("Gamma<=R", "R<=2Gamma", "Gamma<=B/2"):
        assert rep.checks[name][0], (name, rep.checks[name])


def test_right_inequality_holds_one_block_further():
    # B up to nu against Gamma summed through the next dyadic block
    for seed in range(40):
        w = random_omega(random.Random(seed), 2**14)
        nu = 12
        B_nu = b_trajectory(w, nu)[-1]
        G = series_partial_sum(w, "Gamma", 2 ** (nu + 2) - 1)
        assert B_nu / 2 <= 2 * G - gmpy2.log(1 / w(1)) + 1e-12


def test_constant_omega_misses_right_inequality_at_aligned_truncation():
    # B/2 = (1 - 2^-(nu+1)) L exceeds 2 Gamma_K - L = (1 - 2^-nu) L
    w = OmegaSequence.constant(mpfr("0.5"), 2**9)
    rep = appendix_inequalities(w, 8)
    ok, margin = rep.checks["B/2<=2Gamma-log(1/omega(1))"]
    assert not ok
    assert float(margin) == pytest.approx(-math.log(2) * 2.0**-9, rel=1e-12)


def test_omega_above_one_flagged():
    w = OmegaSequence.from_values([2.0] * 3 + [0.5] * 5)
    rep = appendix_inequalities(w, 1)
    assert not rep.omega_at_most_one


def test_inequality_needs_enough_omega():
    with pytest.raises(IndexError):
        appendix_inequalities(OmegaSequence.constant(0.5, 10), 4)


# -- Russmann lemma -------------------------------------------------------------

def _random_Omega(rng):
    a, b = rng.uniform(0.1, 2.0), rng.uniform(0.0, 3.0)
    return lambda k: mpfr(1 + b) * mpfr(k) ** a


@pytest.mark.xfail(strict=True, reason="stated inequality is off by a factor up to 4")
def test_russmann_lemma_as_stated():
    Omega = lambda k: mpfr(5)  # noqa: E731
    lhs, rhs = russmann_lemma_sides(Omega, 1, 8)
    assert lhs <= rhs


@pytest.mark.parametrize("seed", range(8))
def test_russmann_lemma_with_factor_four(seed):
    rng = random.Random(seed)
    Omega = _random_Omega(rng)
    lhs, rhs = russmann_lemma_sides(Omega, rng.randint(0, 3), 7)
    assert lhs <= 4 * rhs


# -- alpha and delta ------------------------------------------------------------

def test_alpha_matches_bruteforce():
    assert alpha_seq(12) == alpha_bruteforce(12)
    assert alpha_seq(8) == [1, 1, 3, 11, 45, 197, 903, 4279]


def test_alpha_nondecreasing_and_rejects_zero():
    a = alpha_seq(20)
    assert a[0] == 1 and all(x <= y for x, y in zip(a, a[1:]))
    with pytest.raises(ValueError):
        alpha_seq(0)


def test_delta_for_i():
    maj = delta_map([[E.i]], 10, E)
    with gmpy2.context(gmpy2.get_context(), precision=256):
        inv_sqrt2 = 1 / gmpy2.sqrt(mpfr(2))
    assert abs(maj.delta[(2,)].value - inv_sqrt2) < 1e-60
    assert abs(maj.delta[(3,)].value - mpfr("0.5")) < 1e-60
    assert maj.skipped == [(5,), (9,)]


@pytest.mark.parametrize("tuples", [
    [[(0, 1)]],
    [["1/2", (0, 1)]],
    [["3/4", "1/2"], [(0, 1), "-1/2"]],
    [[(3, 4), "1/3"]],
])
def test_delta_matches_partition_bruteforce(tuples):
    tuples = [[E.parse(list(map(str, x)) if isinstance(x, tuple) else x) for x in t] for t in tuples]
    maj = delta_map(tuples, 8, E)
    brute = delta_bruteforce(tuples, 8, E)
    assert set(brute) == set(maj.delta)
    for Q, v in brute.items():
        assert abs(maj.delta[Q].value - v) <= mpfr(2) ** -200 * v


def test_stored_decomposition_reproduces_delta():
    maj = delta_map([[E.parse("1/2"), E.i]], 7, E)
    for Q, entry in maj.delta.items():
        assert entry.factors[0] == Q
        degs = [sum(L) for L in entry.factors]
        assert degs[0] > max(degs[1:], default=0) and degs[1:] == sorted(degs[1:], reverse=True)
        assert abs(delta_product(entry, maj) - entry.value) <= mpfr(2) ** -200 * entry.value


# -- counting lemmas -------------------------------------------------------------

def test_counting_refuses_large_eigenvalues():
    maj = delta_map([[E.convert(2)]], 4, E)
    with pytest.raises(ThetaOutOfRange):
        counting_check(maj, [[E.convert(2)]], 2, 0, E)


@pytest.mark.parametrize("m", [2, 3, 4, 6, 8])
def test_counting_for_i(m):
    maj = delta_map([[E.i]], 10, E)
    assert counting_check(maj, [[E.i]], m, 0, E).violations == 0


@pytest.mark.parametrize("seed", range(4))
def test_counting_on_random_unit_circle_pairs(seed):
    tuples = unit_circle_tuples(B, random.Random(seed), 2, 1 + seed % 2)
    maj = delta_map(tuples, 8, B)
    for m in (2, 3, 4, 6, 8):
        for j in range(2):
            rep = counting_check(maj, tuples, m, j, B)
            assert rep.violations == 0


# -- coefficient certification ---------------------------------------------------

def test_linear_germ_certifies_trivially():
    g = one_dim(E, 6, "1/2")
    res = formal_linearize(g)
    rep = certify_coefficients(res, [g], delta_map([[E.parse("1/2")]], 6, E))
    assert rep.all_pass and all(r[1] == 0 for r in rep.rows)


def test_i_quadratic_certifies_with_zero_resonant_coefficients():
    g = one_dim(E, 10, (0, 1), (2, 1))
    res = formal_linearize(g, on_obstruction="continue")
    rep = certify_coefficients(res, [g], delta_map([[E.i]], 10, E))
    assert rep.all_pass
    assert [r[0] for r in rep.rows if r[2] is None] == [(5,), (9,)]


def test_golden_mean_certifies():
    lam = golden_lambda(B)
    g = Germ.from_terms(1, 10, B, [[lam]], [(0, (2,), B.one)])
    rep = certify_coefficients(formal_linearize(g), [g], delta_map([[lam]], 10, B))
    assert rep.all_pass and len(rep.rows) == 9


def test_unnormalized_input_rejected():
    g = one_dim(E, 4, (0, 1), (2, 3))
    with pytest.raises(NotNormalized):
        certify_coefficients(formal_linearize(g), [g], delta_map([[E.i]], 4, E))
    g2, _ = sigma_normalize(g)
    assert certify_coefficients(formal_linearize(g2), [g2], delta_map([[E.i]], 4, E)).all_pass


# -- report ---------------------------------------------------------------------

def test_golden_mean_b_partials_stay_bounded():
    rep = brjuno_report([[golden_lambda(B)]], B, 64, nu_max=12)
    bs = [float(b) for _, b in rep.b_partials]
    assert bs[-1] - bs[-4] < 0.05
    assert max(bs) < 3


def test_report_with_constant_override():
    rep = brjuno_report([[E.i]], E, 8, nu_max=3, omega_override=mpfr("0.5"))
    L = math.log(2)
    assert float(rep.b_partials[-1][1]) == pytest.approx(2 * (1 - 2.0**-4) * L)
    k, _, g = rep.rg_partials[-1]
    assert k == 15 and float(g) == pytest.approx((1 - 1 / 16) * L)
