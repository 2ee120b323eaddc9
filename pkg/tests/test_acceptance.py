"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py`` (the summary lines appear at the end
of the session) or ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import io
import itertools
import math
import random
import shutil
import sys
import time
from pathlib import Path

import gmpy2
import pytest
from gmpy2 import mpfr

from oracles import (
    alpha_bruteforce,
    commuting_germ,
    delta_bruteforce,
    golden_lambda,
    random_eigen,
    random_omega,
    roundtrip_fixture,
    rotation,
    unit_circle_tuples,
)
from simlin.brjuno import (
    OmegaSequence,
    alpha_seq,
    appendix_inequalities,
    certify_coefficients,
    counting_check,
    delta_map,
    delta_product,
    series_partial_sum,
)
from simlin.cli import run
from simlin.errors import NotJordanForm
from simlin.jordan import (
    check_form,
    commute_check,
    commuting_pair_not_jordanizable,
    jordan_pair_not_commuting,
    simultaneous_diagonalize,
)
from simlin.linearize import formal_linearize, sigma_normalize, simul_linearize_direct, simul_linearize_sequential
from simlin.resonance import OmegaVariant, omega_profile, resonant_support_check, sum_vs_max
from simlin.scalars import BigFloatField, ExactField
from simlin.series import Germ, germ_compose, max_coeff_difference

E = ExactField()
B = BigFloatField()  # 256 bits
FIXTURES = Path(__file__).parent / "fixtures"

RESULTS: dict[int, tuple[bool, str]] = {}


def verdict(k: int, problems: list[str], elapsed: float | None = None, budget: float | None = None, note: str = ""):
    if budget is not None and elapsed > budget:
        problems.append(f"runtime {elapsed:.1f}s > {budget:.0f}s")
    ok = not problems
    detail = "; ".join(problems[:5]) + (f" (+{len(problems) - 5} more)" if len(problems) > 5 else "")
    timing = "" if elapsed is None else f" [{elapsed:.2f}s]"
    line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}{timing} {note if ok else detail}".rstrip()
    RESULTS[k] = (ok, line)
    print(line)
    assert ok, line


def _err(a, b) -> float:
    return float(max_coeff_difference(a, b))


# -- 1, 2: roundtrip and ordering --------------------------------------------------

def _criterion1_fixtures(field):
    return [roundtrip_fixture(field, E, 1 + s % 3, 2, 10, seed=s) for s in range(50)]


def test_criterion_01_roundtrip():
    t0 = time.perf_counter()
    problems = []
    worst = 0.0
    for s, (phi, _, germs) in enumerate(_criterion1_fixtures(B)):
        for name, algo in (("sequential", simul_linearize_sequential), ("direct", simul_linearize_direct)):
            res = algo(germs)
            if not res.linearized:
                problems.append(f"seed {s} {name}: {res.status}")
                continue
            err = _err(res.phi, phi)
            worst = max(worst, err)
            if err > 1e-18:
                problems.append(f"seed {s} {name}: error {err:.2e}")
    for s, (phi, _, germs) in enumerate(_criterion1_fixtures(E)):
        for name, algo in (("sequential", simul_linearize_sequential), ("direct", simul_linearize_direct)):
            res = algo(germs)
            if res.phi != phi:
                problems.append(f"exact seed {s} {name}: phi differs")
    verdict(1, problems, time.perf_counter() - t0, 60, f"100 bigfloat + 100 exact solves, worst error {worst:.1e}")


def test_criterion_02_ordering():
    t0 = time.perf_counter()
    problems = []
    cases = [roundtrip_fixture(B, E, 1 + s % 3, 2, 10, seed=s) for s in range(10)]
    cases += [roundtrip_fixture(B, E, 1 + s % 3, 3, 8, seed=100 + s) for s in range(10)]
    orderings = 0
    for idx, (_, _, germs) in enumerate(cases):
        ref = simul_linearize_sequential(germs).phi
        for perm in itertools.permutations(range(len(germs))):
            orderings += 1
            err = _err(simul_linearize_sequential([germs[i] for i in perm]).phi, ref)
            if err > 1e-18:
                problems.append(f"case {idx} order {perm}: {err:.2e}")
        err = _err(simul_linearize_direct(germs).phi, ref)
        if err > 1e-18:
            problems.append(f"case {idx} direct vs sequential: {err:.2e}")
    verdict(2, problems, time.perf_counter() - t0, None, f"{orderings} orderings over {len(cases)} families")


# -- 3: obstructions -----------------------------------------------------------

def test_criterion_03_obstructions():
    t0 = time.perf_counter()
    problems = []
    f = Germ.from_terms(1, 4, E, [[E.one]], [(0, (2,), E.one)])
    res = formal_linearize(f)
    if res.status != "Obstructed" or res.obstructions[0].Q != (2,) or res.obstructions[0].residual != E.one:
        problems.append("z + z^2 not obstructed at 2 with residual 1")
    for k in range(3, 9):
        if k == 3:
            field, lam = E, E.convert(-1)
        elif k == 5:
            field, lam = E, E.i
        else:
            field, lam = B, rotation(B, gmpy2.mpq(1, k - 1))
        g = Germ.from_terms(1, k + 1, field, [[lam]], [(0, (k,), field.one)])
        res = formal_linearize(g)
        got = res.obstructions[0].Q if res.obstructions else None
        if res.status != "Obstructed" or got != (k,):
            problems.append(f"k={k}: {res.status} at {got}")
    verdict(3, problems, time.perf_counter() - t0, None, "z+z^2 at q=2 (residual 1); roots of unity k=3..8 at q=k")


# -- 4: matrix counterexamples ----------------------------------------------------

def test_criterion_04_jordan_pairs():
    t0 = time.perf_counter()
    problems = []
    L, M = commuting_pair_not_jordanizable(E)
    if not commute_check([L, M], E).commute:
        problems.append("pair 1 does not commute")
    if simultaneous_diagonalize([L, M], E).status != "NotDiagonalizable":
        problems.append("pair 1 diagonalized")
    Lt, Mt = jordan_pair_not_commuting(E)
    if not check_form([Lt, Mt], E).is_almost_sim_jordan:
        problems.append("pair 2 not in almost simultaneous Jordan form")
    if commute_check([Lt, Mt], E).commute:
        problems.append("pair 2 commutes")
    verdict(4, problems, time.perf_counter() - t0, 1)


# -- 5, 6: majorant and counting ---------------------------------------------------

def _one_dim_families():
    return [("i", E, [[E.i]]), ("golden", B, [[golden_lambda(B)]])]


def _two_dim_families():
    rng = random.Random(5)
    return [
        ("(1/2, i)", E, [[E.parse("1/2"), E.i]]),
        ("(3/4,1/2),(i,-1/2)", E, [[E.parse("3/4"), E.parse("1/2")], [E.i, E.parse("-1/2")]]),
        ("golden x i", B, [[golden_lambda(B), B.convert(E.i)]]),
        ("unit circle h=1", B, unit_circle_tuples(B, rng, 2, 1)),
        ("unit circle h=2", B, unit_circle_tuples(B, rng, 2, 2)),
    ]


def _majorants():
    out = [(name, field, t, delta_map(t, 10, field)) for name, field, t in _one_dim_families()]
    out += [(name, field, t, delta_map(t, 8, field)) for name, field, t in _two_dim_families()]
    return out


def test_criterion_05_majorant():
    t0 = time.perf_counter()
    problems = []
    if alpha_seq(5) != [1, 1, 3, 11, 45] or alpha_seq(12) != alpha_bruteforce(12):
        problems.append("alpha differs from composition enumeration")
    rows = 0
    for name, field, tuples in _one_dim_families():
        lam = tuples[0][0]
        f = Germ.from_terms(1, 10, field, [[lam]], [(0, (2,), field.one)])
        g, _ = sigma_normalize(f)
        res = formal_linearize(g, on_obstruction="continue")
        rep = certify_coefficients(res, [g], delta_map(tuples, 10, field))
        rows += len(rep.rows)
        problems += [f"{name} q={Q[0]}: {float(v):.3e} > {float(b):.3e}" for Q, v, b, ok in rep.rows if not ok]
    compared = 0
    for name, field, tuples, maj in _majorants():
        brute = delta_bruteforce(tuples, maj.mMax, field)
        if set(brute) != set(maj.delta):
            problems.append(f"{name}: delta index sets differ")
        for Q, v in brute.items():
            compared += 1
            if Q in maj.delta and abs(maj.delta[Q].value - v) > mpfr(2) ** -180 * v:
                problems.append(f"{name} {Q}: delta {maj.delta[Q].value} vs {v}")
        for Q, entry in maj.delta.items():
            if abs(delta_product(entry, maj) - entry.value) > mpfr(2) ** -180 * entry.value:
                problems.append(f"{name} {Q}: stored factors do not reproduce delta")
    verdict(5, problems, time.perf_counter() - t0, 120,
            f"{rows} coefficient bounds; {compared} delta values match the partition oracle")


def test_criterion_06_counting():
    t0 = time.perf_counter()
    problems = []
    checked = counted = 0
    for name, field, tuples, maj in _majorants():
        for m in (2, 3, 4, 6, 8):
            for j in range(len(tuples[0])):
                rep = counting_check(maj, tuples, m, j, field)
                checked += len(rep.rows)
                counted += sum(r[1] for r in rep.rows)
                problems += [f"{name} m={m} j={j + 1} {Q}: N={c} > {b}" for Q, c, b, ok in rep.rows if not ok]
                problems += [f"{name} m={m} j={j + 1} {A}-{Bq}: |diff|={d} < m" for A, Bq, d, ok in rep.siegel_pairs if not ok]
    verdict(6, problems, time.perf_counter() - t0, None, f"{checked} decompositions checked, {counted} counted factors, 0 violations")


# -- 7: series inequalities ----------------------------------------------------

def test_criterion_07_series_inequalities():
    t0 = time.perf_counter()
    problems = []
    for seed in range(100):
        w = random_omega(random.Random(seed), 2**15)
        rep = appendix_inequalities(w, 14, slack=1e-12)
        for name, (ok, margin) in rep.checks.items():
            if not ok:
                problems.append(f"seed {seed} {name}: margin {float(margin):.3e}")
    nu = 30
    K = 2 ** (nu + 1) - 1
    for c in ("0.5", "0.9", "0.99"):
        w = OmegaSequence.constant(mpfr(c), K + 1)
        L = -math.log(float(c))
        G = float(series_partial_sum(w, "Gamma", K))
        Bv = float(series_partial_sum(w, "B", nu))
        # the partial sums themselves, in closed form at this truncation
        if abs(G - (1 - 1 / (K + 1)) * L) > 1e-10 or abs(Bv - 2 * (1 - 2.0 ** (-nu - 1)) * L) > 1e-10:
            problems.append(f"c={c}: partial sums differ from their closed forms")
        # the limits
        if abs(G - L) > 1e-10:
            problems.append(f"c={c}: |Gamma - log(1/c)| = {abs(G - L):.2e}")
        if abs(Bv - 2 * L) > 1e-10:
            problems.append(f"c={c}: |B - 2log(1/c)| = {abs(Bv - 2 * L):.2e}")
    verdict(7, problems, time.perf_counter() - t0, 30, "100 random sequences and constant closed forms")


# -- 8: omega variants and sum vs max -------------------------------------------

def test_criterion_08_variants():
    t0 = time.perf_counter()
    problems = []
    rng = random.Random(8)
    for fam in range(50):
        n, h = rng.randint(1, 3), rng.randint(1, 3)
        tuples = [[random_eigen(rng) for _ in range(n)] for _ in range(h)]
        prof = {v: omega_profile(tuples, 6, E, v) for v in OmegaVariant}
        for m, w in prof[OmegaVariant.SimultaneousMinMax].items():
            bar, tilde = prof[OmegaVariant.BarMinMaxMin][m], prof[OmegaVariant.TildeMaxMinMin][m]
            if not tilde <= bar <= w:
                problems.append(f"family {fam} m={m}: {tilde} {bar} {w}")
    for s in range(500):
        n, h = rng.randint(1, 3), rng.randint(1, 3)
        tuples = [[random_eigen(rng) for _ in range(n)] for _ in range(h)]
        Q = tuple(rng.randint(0, 4) for _ in range(n))
        if sum(Q) < 2:
            Q = (2 + Q[0],) + Q[1:]
        min_sum, sum_min, bound = sum_vs_max(tuples, Q, E)
        if not sum_min <= min_sum <= bound:
            problems.append(f"sample {s}: {sum_min} <= {min_sum} <= {bound} fails")
    verdict(8, problems, time.perf_counter() - t0, None, "50 families, 500 samples")


# -- 9: resonant support --------------------------------------------------------

def test_criterion_09_resonant_support():
    t0 = time.perf_counter()
    problems = []
    shapes = [
        [[-1, 0], [1, -1]],
        [[2, 0], [0, 4]],
        [[1, 0], [1, 1]],
        [[(0, 1), 0], [0, -1]],
        [[2, 0, 0], [1, 2, 0], [0, 0, 4]],
    ]
    rng = random.Random(9)
    for k in range(20):
        rows = shapes[k % len(shapes)]
        Lam = E.matrix([[E.parse(list(map(str, x)) if isinstance(x, tuple) else str(x)) for x in r] for r in rows])
        f = commuting_germ(E, Lam, 5 if len(rows) == 2 else 4, rng)
        bad = resonant_support_check(f, Lam)
        if bad:
            problems.append(f"germ {k}: {len(bad)} non-resonant terms")
    # triangular example with lambda_2 = 2, lambda_3 = 3 and A = Lambda
    T = E.matrix([[E.convert(x) for x in r] for r in [[6, 0, 0], [0, 2, 0], [-3, 1, 3]]])
    s = [(1, 1, 0), (0, 2, 0), (0, 1, 1)]
    terms = [(0, Q, E.one) for Q in s] + [(2, Q, E.convert(-1)) for Q in s]
    f = Germ.from_terms(3, 3, E, T, terms)
    lin = Germ(3, 3, E, T)
    if germ_compose(f, lin) != germ_compose(lin, f):
        problems.append("triangular example does not commute with its linear part")
    try:
        resonant_support_check(f, T)
        problems.append("triangular matrix accepted")
    except NotJordanForm:
        pass
    verdict(9, problems, time.perf_counter() - t0, None, "20 commuting germs clean; triangular matrix refused")


# -- 10: command line -------------------------------------------------------------

CLI_RUNS = [
    (["resonances", "square_resonance"], 0),
    (["resonances", "roundtrip"], 0),
    (["linearize", "roundtrip", "--verify"], 0),
    (["linearize", "roundtrip", "--mode", "direct"], 0),
    (["brjuno", "golden_mean", "--mmax", "64"], 0),
    (["brjuno", "i_quadratic", "--mmax", "16", "--omega-override", "0.5"], 0),
    (["jordan", "commuting_not_jordanizable"], 0),
    (["jordan", "jordan_not_commuting"], 0),
    (["jordan", "diagonal"], 0),
    (["majorant", "i_quadratic"], 0),
    (["majorant", "golden_mean"], 0),
    (["resonances", "bad_exponent"], 2),
    (["majorant", "expanding"], 3),
    (["linearize", "parabolic", "--mode", "single"], 4),
    (["linearize", "not_commuting"], 4),
]


def test_criterion_10_cli(tmp_path):
    t0 = time.perf_counter()
    problems = []
    for argv, want in CLI_RUNS:
        cmd, name, *rest = argv
        src = tmp_path / f"{name}.json"
        shutil.copy(FIXTURES / f"{name}.json", src)
        outs = []
        for _ in range(2):
            out, err = io.StringIO(), io.StringIO()
            code = run([cmd, str(src), *rest], stdout=out, stderr=err)
            outs.append((code, out.getvalue(), err.getvalue()))
        if outs[0] != outs[1]:
            problems.append(f"{' '.join(argv)}: reruns differ")
        if outs[0][0] != want:
            problems.append(f"{' '.join(argv)}: exit {outs[0][0]}, expected {want}")
    verdict(10, problems, time.perf_counter() - t0, None, f"{len(CLI_RUNS)} invocations byte-identical, exit codes 0/2/3/4")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
