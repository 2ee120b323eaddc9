"""Command-line front end.

Input is a JSON problem file::

    {
      "n": 1, "N": 10,
      "scalar": {"mode": "exact", "precision_bits": 256, "zero_tol": null},
      "germs": [{"linear": [["2"]], "terms": [{"j": 1, "q": [2], "c": "1"}]}],
      "matrices": [[["2", "0"], ["1", "2"]]]
    }

Coordinates ``j`` are 1-based in files and reports.  Complex literals are
``"p/q"`` or ``["re", "im"]`` (decimal strings in bigfloat mode).

Exit codes: 0 success, 2 parse error, 3 precondition violation,
4 obstruction or non-commuting input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass
from typing import Any, Sequence

from gmpy2 import mpfr, mpq

from . import __version__
from . import matrices as mx
from .brjuno import OmegaSequence, brjuno_report, certify_coefficients, counting_check, delta_map, series_partial_sum
from .errors import NotCommuting, SimlinError
from .jordan import check_form, commute_check, simultaneous_diagonalize, verify_conjugation
from .linearize import (
    formal_linearize,
    sigma_normalize_family,
    simul_linearize_direct,
    simul_linearize_sequential,
    verify_conjugacy,
)
from .resonance import OmegaVariant, resonance_table
from .scalars import ScalarParseError, _fmt_mpfr, make_field
from .series import Germ

EXIT_OK, EXIT_PARSE, EXIT_PRECONDITION, EXIT_OBSTRUCTED = 0, 2, 3, 4
COUNTING_SCHEDULE = (2, 3, 4, 6, 8)


class ProblemFileError(ValueError):
    """Malformed input, with a JSON-path style locus."""

    def __init__(self, locus: str, message: str):
        self.locus = locus
        super().__init__(f"{locus}: {message}")


@dataclass
class Problem:
    n: int
    N: int
    field: Any
    germs: list
    matrices: list | None
    raw_scalar: dict


# -- parsing ------------------------------------------------------------------

def _int(value, locus, lo=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ProblemFileError(locus, f"expected an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ProblemFileError(locus, f"must be >= {lo}")
    return value


def _scalar(field, literal, locus):
    try:
        return field.parse(literal)
    except ScalarParseError as exc:
        raise ProblemFileError(locus, str(exc)) from None


def _matrix(field, rows, n, locus):
    if not isinstance(rows, list) or len(rows) != n:
        raise ProblemFileError(locus, f"expected {n} rows")
    out = []
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != n:
            raise ProblemFileError(f"{locus}[{i}]", f"expected {n} entries")
        out.append(tuple(_scalar(field, x, f"{locus}[{i}][{k}]") for k, x in enumerate(row)))
    return tuple(out)


def make_problem_field(scalar: dict, precision_bits=None, zero_tol=None):
    mode = scalar.get("mode", "exact")
    if mode not in ("exact", "bigfloat"):
        raise ProblemFileError("scalar.mode", f"unknown mode {mode!r}")
    bits = precision_bits or scalar.get("precision_bits") or 256
    tol = zero_tol if zero_tol is not None else scalar.get("zero_tol")
    if tol is not None:
        try:
            tol = mpq(tol) if mode == "exact" else mpfr(str(tol))
        except ValueError:
            raise ProblemFileError("scalar.zero_tol", f"not a number: {tol!r}") from None
    try:
        return make_field(mode, int(bits), tol)
    except ValueError as exc:
        raise ProblemFileError("scalar", str(exc)) from None


def parse_problem(text: str, precision_bits=None, zero_tol=None) -> Problem:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"line {exc.lineno} column {exc.colno}", exc.msg) from None
    if not isinstance(data, dict):
        raise ProblemFileError("$", "expected a JSON object")
    n = _int(data.get("n"), "n", 1)
    N = _int(data.get("N", data.get("truncation_degree")), "N", 1)
    scalar = data.get("scalar", {"mode": "exact"})
    if not isinstance(scalar, dict):
        raise ProblemFileError("scalar", "expected an object")
    field = make_problem_field(scalar, precision_bits, zero_tol)
    germs = []
    for g_idx, g in enumerate(data.get("germs", [])):
        locus = f"germs[{g_idx}]"
        if not isinstance(g, dict) or "linear" not in g:
            raise ProblemFileError(locus, "expected an object with 'linear' and 'terms'")
        linear = _matrix(field, g["linear"], n, f"{locus}.linear")
        terms, seen = [], set()
        for t_idx, t in enumerate(g.get("terms", [])):
            tl = f"{locus}.terms[{t_idx}]"
            if not isinstance(t, dict) or not {"j", "q", "c"} <= set(t):
                raise ProblemFileError(tl, "expected keys j, q, c")
            j = _int(t["j"], f"{tl}.j", 1)
            if j > n:
                raise ProblemFileError(f"{tl}.j", f"coordinate {j} outside 1..{n}")
            q = t["q"]
            if not isinstance(q, list) or len(q) != n:
                raise ProblemFileError(f"{tl}.q", f"exponent vector must have length {n}")
            Q = tuple(_int(x, f"{tl}.q", 0) for x in q)
            if not 2 <= sum(Q) <= N:
                raise ProblemFileError(f"{tl}.q", f"degree {sum(Q)} outside 2..{N}")
            if (j, Q) in seen:
                raise ProblemFileError(tl, f"duplicate term for j={j}, q={list(Q)}")
            seen.add((j, Q))
            terms.append((j - 1, Q, _scalar(field, t["c"], f"{tl}.c")))
        try:
            germs.append(Germ.from_terms(n, N, field, linear, terms))
        except SimlinError as exc:
            raise _Precondition(f"{locus}: {exc}") from None
    matrices = None
    if "matrices" in data:
        if not isinstance(data["matrices"], list):
            raise ProblemFileError("matrices", "expected a list of matrices")
        matrices = [_matrix(field, M, n, f"matrices[{k}]") for k, M in enumerate(data["matrices"])]
    return Problem(n, N, field, germs, matrices, scalar)


class _Precondition(SimlinError):
    pass


# -- formatting ---------------------------------------------------------------

def fmt_real(x) -> str | int | None:
    if x is None:
        return None
    if isinstance(x, int):
        return x
    if isinstance(x, type(mpq())):
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    if not isinstance(x, type(mpfr())):
        x = mpfr(x)
    return _fmt_mpfr(x, int(x.precision * 0.30103) + 3)


def germ_json(field, g: Germ) -> dict:
    return {
        "linear": [[field.format(x) for x in row] for row in g.linear],
        "terms": [{"j": j + 1, "q": list(Q), "c": field.format(c)} for j, Q, c in g.terms()],
    }


def _germs_required(problem: Problem):
    if not problem.germs:
        raise _Precondition("the problem file has no germs")
    return problem.germs


def _tuples(problem: Problem) -> list:
    germs = _germs_required(problem)
    rep = check_form([g.linear for g in germs], problem.field)
    if not rep.is_almost_sim_jordan:
        raise _Precondition("linear parts are not almost in simultaneous Jordan form: "
                            + "; ".join(f"germ {v['matrix'] + 1} ({v['row'] + 1},{v['col'] + 1}) {v['reason']}" for v in rep.violations))
    return [list(mx.diagonal(g.linear)) for g in germs]


# -- commands -----------------------------------------------------------------

def cmd_resonances(problem: Problem, args) -> tuple[dict, int]:
    field = problem.field
    tuples = _tuples(problem)
    table = resonance_table(tuples, args.mmax, field)
    per_tuple = []
    for k, lam in enumerate(tuples):
        per_tuple.append({
            "tuple": k + 1,
            "eigenvalues": [field.format(x) for x in lam],
            "resonances": [{"j": j + 1, "Q": [list(Q) for Q in table.per_tuple_per_coord[k][j]]} for j in range(problem.n)],
        })
    payload = {
        "mmax": args.mmax,
        "per_tuple": per_tuple,
        "simultaneous": [{"j": j + 1, "Q": [list(Q) for Q in table.simultaneous[j]]} for j in range(problem.n)],
        "near_misses": [{"tuple": k + 1, "j": j + 1, "Q": list(Q), "distance": fmt_real(v)} for k, j, Q, v in table.near],
    }
    return payload, EXIT_OK


def _obstruction_json(field, o) -> dict:
    return {
        "Q": list(o.Q),
        "j": o.j + 1,
        "residual": field.format(o.residual),
        "germ": None if o.germ is None else o.germ + 1,
        "stage": None if o.stage is None else o.stage + 1,
    }


def _not_commuting(exc: NotCommuting) -> dict:
    return {
        "status": "NotCommuting",
        "pair": [exc.pair[0] + 1, exc.pair[1] + 1],
        "degree": exc.degree,
        "magnitude": fmt_real(exc.magnitude),
    }


def cmd_linearize(problem: Problem, args) -> tuple[dict, int]:
    field = problem.field
    germs = _germs_required(problem)
    if args.mode == "single" and len(germs) != 1:
        raise _Precondition(f"mode 'single' needs exactly one germ, the file has {len(germs)}")
    try:
        if args.mode == "single":
            res = formal_linearize(germs[0], on_obstruction=args.on_obstruction)
        elif args.mode == "sequential":
            res = simul_linearize_sequential(germs, on_obstruction=args.on_obstruction)
        else:
            res = simul_linearize_direct(germs, on_obstruction=args.on_obstruction)
    except NotCommuting as exc:
        return _not_commuting(exc), EXIT_OBSTRUCTED
    payload = {
        "mode": args.mode,
        "status": res.status,
        "degree_reached": res.degree_reached,
        "phi": germ_json(field, res.phi),
        "obstructions": [_obstruction_json(field, o) for o in res.obstructions],
        "near_misses": [
            {"pair": [p + 1, q + 1], "Q": list(Q), "j": j + 1, "magnitude": fmt_real(v)} for p, q, Q, j, v in res.near_misses
        ],
    }
    if args.verify:
        payload["residuals"] = [fmt_real(r) for r in verify_conjugacy(germs, res.phi)]
    return payload, EXIT_OK if res.linearized else EXIT_OBSTRUCTED


def _variants(spec: str) -> list[str]:
    out = []
    for name in spec.split(","):
        name = name.strip()
        try:
            out.append(OmegaVariant(name).value)
        except ValueError:
            raise ProblemFileError("--variants", f"unknown variant {name!r}") from None
    return out


def _csv_blocks(blocks: Sequence[tuple[list, list]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for idx, (header, rows) in enumerate(blocks):
        if idx:
            buf.write("\n")
        w.writerow(header)
        w.writerows(rows)
    return buf.getvalue()


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def cmd_brjuno(problem: Problem, args) -> tuple[dict, int]:
    tuples = _tuples(problem)
    variants = _variants(args.variants)
    override = None
    if args.omega_override is not None:
        try:
            override = mpfr(args.omega_override)
        except ValueError:
            raise ProblemFileError("--omega-override", f"not a number: {args.omega_override!r}") from None
        if not 0 < override:
            raise _Precondition("--omega-override must be positive")
    rep = brjuno_report(tuples, problem.field, args.mmax, args.nu_max, variants, override)
    main = rep.omega_tables[variants[0]]
    b_by_variant = {}
    for v in variants:
        seq = OmegaSequence.from_profile(rep.omega_tables[v])
        b_by_variant[v] = fmt_real(series_partial_sum(seq, "B", rep.nu_max))
    ineq = rep.inequality_checks
    payload = {
        "mmax": args.mmax,
        "nu_max": rep.nu_max,
        "variants": variants,
        "omega_override": None if override is None else fmt_real(override),
        "theta": fmt_real(rep.theta),
        "omega_table": {v: [{"m": m, "omega": fmt_real(w)} for m, w in sorted(t.items()) if m <= args.mmax] for v, t in rep.omega_tables.items()},
        "cremer_indicator": [{"m": m, "value": fmt_real(x)} for m, x in sorted(rep.cremer_indicator.items()) if m <= args.mmax],
        "B_partials": [{"nu": nu, "B": fmt_real(b)} for nu, b in rep.b_partials],
        "R_Gamma_partials": [{"k": k, "R": fmt_real(r), "Gamma": fmt_real(g)} for k, r, g in rep.rg_partials],
        "B_by_variant": b_by_variant,
        "inequalities": None if ineq is None else {
            "K": ineq.K,
            "B": fmt_real(ineq.B),
            "R": fmt_real(ineq.R),
            "Gamma": fmt_real(ineq.Gamma),
            "checks": {name: {"ok": ok, "margin": fmt_real(margin)} for name, (ok, margin) in ineq.checks.items()},
            "all_pass": ineq.all_pass,
            "omega_at_most_one": ineq.omega_at_most_one,
        },
    }
    if args.csv:
        _write_text(args.csv, _csv_blocks([
            (["m", "omega"], [[m, fmt_real(w)] for m, w in sorted(main.items())]),
            (["nu", "B_partial"], [[nu, fmt_real(b)] for nu, b in rep.b_partials]),
            (["k", "R_partial", "Gamma_partial"], [[k, fmt_real(r), fmt_real(g)] for k, r, g in rep.rg_partials]),
        ]))
    return payload, EXIT_OK


def _matrix_json(field, M):
    return [[field.format(x) for x in row] for row in M]


def cmd_jordan(problem: Problem, args) -> tuple[dict, int]:
    field = problem.field
    if not problem.matrices:
        raise _Precondition("the problem file has no 'matrices' section")
    fam = problem.matrices
    com = commute_check(fam, field)
    form = check_form(fam, field)
    diag = simultaneous_diagonalize(fam, field)
    payload = {
        "commute": {"commute": com.commute, "pair": None if com.pair is None else [com.pair[0] + 1, com.pair[1] + 1]},
        "form": _form_json(form),
        "diagonalization": {
            "status": diag.status,
            "A": None if diag.A is None else _matrix_json(field, diag.A),
            "index": None if diag.index is None else diag.index + 1,
            "pair": None if diag.pair is None else [diag.pair[0] + 1, diag.pair[1] + 1],
            "eigenvalues": None if diag.eigenvalues is None else [[field.format(x) for x in e] for e in diag.eigenvalues],
        },
    }
    if args.conjugator:
        try:
            with open(args.conjugator, encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ProblemFileError(f"{args.conjugator}: line {exc.lineno} column {exc.colno}", exc.msg) from None
        rows = data.get("matrix") if isinstance(data, dict) else data
        A = _matrix(field, rows, problem.n, "conjugator.matrix")
        payload["conjugator"] = _form_json(verify_conjugation(fam, A, field))
    return payload, EXIT_OK


def _form_json(form) -> dict:
    return {
        "is_almost_sim_jordan": form.is_almost_sim_jordan,
        "is_sim_jordan": form.is_sim_jordan,
        "violations": [
            {"matrix": v["matrix"] + 1, "row": v["row"] + 1, "col": v["col"] + 1, "reason": v["reason"]} for v in form.violations
        ],
    }


def cmd_majorant(problem: Problem, args) -> tuple[dict, int]:
    field = problem.field
    tuples = _tuples(problem)
    germs = problem.germs
    mmax = min(args.mmax, problem.N)
    normalized, sigma = sigma_normalize_family(germs)
    try:
        if len(normalized) == 1:
            res = formal_linearize(normalized[0], on_obstruction="continue")
        else:
            res = simul_linearize_sequential(normalized, on_obstruction="continue")
    except NotCommuting as exc:
        return _not_commuting(exc), EXIT_OBSTRUCTED
    md = delta_map(tuples, mmax, field)
    counting = []
    for m in COUNTING_SCHEDULE:
        if m > mmax:
            continue
        for j in range(problem.n):
            c = counting_check(md, tuples, m, j, field)
            counting.append({
                "m": m,
                "j": j + 1,
                "threshold": fmt_real(mpfr(c.theta) * c.omega_m),
                "max_count": max((r[1] for r in c.rows), default=0),
                "siegel_pairs": len(c.siegel_pairs),
                "violations": c.violations,
            })
    cert = certify_coefficients(res, normalized, md)
    payload = {
        "mmax": mmax,
        "sigma": field.format(sigma),
        "linearization_status": res.status,
        "obstructions": [_obstruction_json(field, o) for o in res.obstructions],
        "alpha": md.alpha,
        "delta": [
            {
                "Q": list(Q),
                "value": fmt_real(e.value),
                "eps": fmt_real(e.eps),
                "k": e.k + 1,
                "i": e.i + 1,
                "factors": [list(L) for L in e.factors],
            }
            for Q, e in sorted(md.delta.items(), key=lambda kv: (sum(kv[0]), kv[0]))
        ],
        "skipped": [list(Q) for Q in md.skipped],
        "bounds": [{"Q": list(Q), "norm": fmt_real(v), "bound": fmt_real(b), "ok": ok} for Q, v, b, ok in cert.rows],
        "bounds_all_pass": cert.all_pass,
        "counting": counting,
        "counting_all_pass": all(c["violations"] == 0 for c in counting),
    }
    if args.csv:
        _write_text(args.csv, _csv_blocks([
            (["Q", "norm", "bound"], [[" ".join(map(str, Q)), fmt_real(v), fmt_real(b)] for Q, v, b, _ in cert.rows]),
        ]))
    return payload, EXIT_OK


COMMANDS = {
    "resonances": cmd_resonances,
    "linearize": cmd_linearize,
    "brjuno": cmd_brjuno,
    "jordan": cmd_jordan,
    "majorant": cmd_majorant,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--precision-bits", type=int, default=None, help="bigfloat precision (overrides the file)")
    common.add_argument("--zero-tol", default=None, help="zero tolerance (overrides the file)")
    common.add_argument("--seed", type=int, default=0, help="seed recorded in the report")
    common.add_argument("--output", default=None, help="report path (default stdout)")

    parser = argparse.ArgumentParser(prog="simlin", description="Simultaneous linearization of germs", parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("resonances", parents=[common], help="resonance sets per tuple and simultaneous")
    p.add_argument("file")
    p.add_argument("--mmax", type=int, default=10)

    p = sub.add_parser("linearize", parents=[common], help="formal (simultaneous) linearization")
    p.add_argument("file")
    p.add_argument("--mode", choices=["single", "sequential", "direct"], default="sequential")
    p.add_argument("--verify", action="store_true", help="report conjugacy residuals")
    p.add_argument("--on-obstruction", choices=["stop", "continue"], default="stop")

    p = sub.add_parser("brjuno", parents=[common], help="omega tables and Brjuno-type series")
    p.add_argument("file")
    p.add_argument("--mmax", type=int, default=16)
    p.add_argument("--nu-max", type=int, default=None)
    p.add_argument("--variants", default=OmegaVariant.SimultaneousMinMax.value,
                   help="comma separated: " + ",".join(v.value for v in OmegaVariant))
    p.add_argument("--omega-override", default=None, help="constant omega for the series block")
    p.add_argument("--csv", default=None)

    p = sub.add_parser("jordan", parents=[common], help="commutation, Jordan shape, diagonalization")
    p.add_argument("file")
    p.add_argument("--conjugator", default=None, help="JSON file with a matrix to verify")

    p = sub.add_parser("majorant", parents=[common], help="alpha/delta tables and coefficient bounds")
    p.add_argument("file")
    p.add_argument("--mmax", type=int, default=10)
    p.add_argument("--csv", default=None)
    return parser


def _report(args, problem: Problem, payload: dict) -> dict:
    command = {k: v for k, v in sorted(vars(args).items()) if k not in ("output",)}
    return {
        "tool": "simlin",
        "version": __version__,
        "command": command,
        "config": problem.field.config(),
        "seed": args.seed,
        "status": payload.get("status", "ok"),
        "input": {"n": problem.n, "N": problem.N, "germs": [germ_json(problem.field, g) for g in problem.germs]},
        "payload": payload,
    }


def run(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        with open(args.file, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read {args.file}: {exc.strerror}", file=stderr)
        return EXIT_PARSE
    try:
        problem = parse_problem(text, args.precision_bits, args.zero_tol)
        payload, code = COMMANDS[args.command](problem, args)
    except ProblemFileError as exc:
        print(f"parse error: {exc}", file=stderr)
        return EXIT_PARSE
    except NotCommuting as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_OBSTRUCTED
    except (SimlinError, ZeroDivisionError) as exc:
        print(f"precondition violated: {exc}", file=stderr)
        return EXIT_PRECONDITION
    text = json.dumps(_report(args, problem, payload), indent=2) + "\n"
    if args.output:
        _write_text(args.output, text)
    else:
        stdout.write(text)
    return code


def main(argv: Sequence[str] | None = None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
