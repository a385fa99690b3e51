"""Command-line front end: generate inputs, run single operators, check suites, run experiment configs
and tabulate their CSV output.

Exit codes: 0 success, 1 a check or suite failed, 2 usage error. Errors are one line on stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import czd as czd_mod
from . import harness
from .families import (AveragingFamily, anisotropic_family, build_dyadic_family, cube_family, disk_family,
                       format_family, format_sets, jrw_profiles, parse_family, parse_sets, rectangle_family,
                       verify_separation_lemma)
from .lattice import FormatError, LatticeFunction, Rectangle, format_latfn, read_latfn, write_latfn
from .operators import MAXIMAL_KINDS, family_average, good_lambda_check, martingale_decompose, martingale_expectation, maximal
from .squarefn import (discretized_sf, jump_count, long_sf, oscillation, rect_sf, sample_sequence, shifted_sf,
                       short_sf, variation)

OPERATORS = ("family_average", "martingale_expectation", "martingale_decompose", "maximal", "good_lambda_check",
             "long_sf", "short_sf", "shifted_sf", "discretized_sf", "rect_sf", "variation", "jump_count",
             "oscillation", "cz_decompose", "fibred_split")
SUITES = ("lemmas", "czd", "families")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ------------------------------------------------------------- family files

def write_family_file(fam: AveragingFamily, path) -> None:
    """The dyadic table as 'family v1', followed by a 'sets' section listing E_1, E_2, ..."""
    Path(path).write_text(format_family(fam.base) + "sets\n" + format_sets(fam))


def read_family_file(path) -> AveragingFamily:
    text = Path(path).read_text()
    lines = text.splitlines()
    if "sets" in (l.strip() for l in lines):
        i = [l.strip() for l in lines].index("sets")
        base = parse_family("\n".join(lines[:i]) + "\n")
        try:
            return parse_sets("\n".join(lines[i + 1:]), base)
        except FormatError as exc:
            # report the line number within the whole file
            msg = str(exc)
            if msg.startswith("line "):
                n, rest = msg[5:].split(":", 1)
                raise FormatError(f"line {int(n) + i + 1}:{rest}") from None
            raise
    return rectangle_family(parse_family(text))


def _preset(name: str, dim: int, levels: int) -> AveragingFamily:
    if name == "cubes":
        return cube_family(dim, levels)
    if name == "anisotropic":
        if dim != 2:
            raise UsageError("anisotropic preset is two-dimensional")
        return anisotropic_family(levels)
    if name == "disks":
        if dim != 2:
            raise UsageError("disks preset is two-dimensional")
        return disk_family(2, levels)
    raise UsageError(f"unknown preset {name!r}")


# ----------------------------------------------------------------- verbs

def _grid(text: str, dim: int) -> tuple[int, ...]:
    parts = [int(x) for x in text.lower().split("x")]
    if len(parts) == 1:
        parts = parts * dim
    if len(parts) != dim or any(n < 1 for n in parts):
        raise UsageError(f"--grid must be N or N1x...xNd with d = {dim} positive sides")
    return tuple(parts)


def cmd_gen_function(a) -> int:
    shape = _grid(a.grid, a.dim)
    rng = np.random.default_rng(a.seed)
    if a.kind == "delta":
        f = LatticeFunction.delta(tuple(n // 2 for n in shape), a.value)
        f = LatticeFunction(f.on_box(Rectangle.from_shape(shape)))
    elif a.kind == "random":
        f = LatticeFunction(rng.uniform(-1.0, 1.0, shape))
    elif a.kind == "indicator":
        f = LatticeFunction(np.full(shape, a.value))
    else:
        f = harness.make_input(f"spikes({a.count})", shape, rng)
    if a.out:
        write_latfn(f, a.out)
    else:
        sys.stdout.write(format_latfn(f))
    return 0


def cmd_gen_family(a) -> int:
    if a.preset == "file":
        if not a.file:
            raise UsageError("--preset file needs --file")
        fam = read_family_file(a.file)
    else:
        fam = _preset(a.preset, a.dim, a.levels)
    rep = jrw_profiles(fam)
    if a.out:
        write_family_file(fam, a.out)
    else:
        sys.stdout.write(format_family(fam.base) + "sets\n" + format_sets(fam))
    print(f"# kind {fam.kind} dim {fam.dim} levels {fam.base.levels} L {rep.L} K {rep.K} "
          f"regular {rep.regular} cubic {rep.cubic}", file=sys.stderr)
    return 0


def _need(a, *names):
    for n in names:
        if getattr(a, n) is None:
            raise UsageError(f"operator {a.name} needs --{n.replace('_', '-')}")


def _emit(f: LatticeFunction, a) -> None:
    if a.out:
        write_latfn(f, a.out)
    else:
        sys.stdout.write(format_latfn(f))


def _samples(text: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.split(",") if x.strip()])
    except ValueError:
        raise UsageError(f"--samples must be comma-separated numbers, got {text!r}") from None


def cmd_op(a) -> int:
    name = a.name
    if name not in OPERATORS:
        raise UsageError(f"unknown operator {name!r}; operators: {', '.join(OPERATORS)}")
    if name in ("variation", "jump_count") and a.samples is not None:
        seq = _samples(a.samples)
    else:
        _need(a, "inp")
        f = read_latfn(a.inp)
        fam = read_family_file(a.family) if a.family else None
        if name in ("variation", "jump_count"):
            _need(a, "family", "point")
            seq = sample_sequence(f, fam, [int(x) for x in a.point.split(",")]).values
    if name == "variation":
        _need(a, "s")
        print(repr(variation(seq, a.s)))
        return 0
    if name == "jump_count":
        _need(a, "lam")
        print(jump_count(seq, a.lam))
        return 0
    if name == "maximal":
        kind = (a.kind or "HL")
        if kind.upper() not in MAXIMAL_KINDS and kind != "HL_t":
            raise UsageError(f"unknown maximal kind {kind!r}; kinds: {', '.join(MAXIMAL_KINDS)}")
        _emit(maximal(kind, f, fam, a.aux), a)
        return 0
    if fam is None:
        raise UsageError(f"operator {name} needs --family")
    if name == "family_average":
        _need(a, "t")
        _emit(family_average(f, fam, a.t), a)
    elif name == "martingale_expectation":
        _need(a, "level")
        _emit(martingale_expectation(f, fam, level=a.level), a)
    elif name == "martingale_decompose":
        _need(a, "depth", "out")
        m = martingale_decompose(f, fam, a.depth)
        out = Path(a.out)
        out.mkdir(parents=True, exist_ok=True)
        for k, d in enumerate(m.differences, start=1):
            write_latfn(d, out / f"d_{k}.latfn")
        write_latfn(m.tail, out / "tail.latfn")
        print(f"wrote {len(m.differences)} differences and the tail to {out}")
    elif name == "good_lambda_check":
        rep = good_lambda_check(f, fam)
        print(f"violations {rep.violations} worst_ratio {rep.worst_ratio!r} constant {rep.constant!r}")
        for n in rep.notes:
            print(f"note: {n}")
        return 0 if rep.violations == 0 else 1
    elif name in ("long_sf", "short_sf"):
        _emit((long_sf if name == "long_sf" else short_sf)(f, fam).aggregate, a)
    elif name == "shifted_sf":
        _emit(shifted_sf(a.variant or "LONG", f, fam).aggregate, a)
    elif name == "discretized_sf":
        _emit(discretized_sf(a.which or "D", f, fam, a.variant or "LONG").aggregate, a)
    elif name == "rect_sf":
        _emit(rect_sf(a.which or "LONG", f, harness.nested_rects(fam)).aggregate, a)
    elif name == "oscillation":
        _need(a, "indices")
        _emit(oscillation(f, fam, [int(x) for x in a.indices.split(",")]), a)
    else:
        _need(a, "lam", "out")
        dec = czd_mod.cz_decompose(f, a.lam, fam)
        if name == "fibred_split":
            dec = czd_mod.fibred_split(dec, a.axis)
        czd_mod.dump_decomposition(dec, a.out)
        res = czd_mod.check_invariants(dec, f)
        print(f"{len(dec.bad_parts)} cubes; invariants " + " ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in res.items()))
        return 0 if all(res.values()) else 1
    return 0


def _check_czd() -> bool:
    fam = build_dyadic_family([[k] for k in range(4)])
    f = LatticeFunction.delta((0,), 8.0)
    dec = czd_mod.cz_decompose(f, 1.0, fam)
    for line in dec.trace:
        print(f"trace: {line}")
    cubes = [bp.cube for bp in dec.bad_parts]
    ok = cubes == [Rectangle((0,), (4,))] and [float(v) for v in dec.bad_parts[0].b.values] == [6.0, -2.0, -2.0, -2.0]
    print(f"{'PASS' if ok else 'FAIL'} delta fixture: P = [0,4), b = 6,-2,-2,-2, g = 2 on P")
    rng = np.random.default_rng(0)
    bad = 0
    for i in range(100):
        d = 1 + i % 2
        shape = tuple(int(n) for n in rng.integers(3, 16, d))
        v = rng.random(shape) * (rng.random(shape) < 0.3) * rng.pareto(1.5, shape)
        g = LatticeFunction(v)
        fam_r = cube_family(d, 3).base
        dec = czd_mod.cz_decompose(g, float(rng.uniform(0.05, 2.0)), fam_r)
        if d == 2:
            dec = czd_mod.fibred_split(dec)
        bad += not all(czd_mod.check_invariants(dec, g).values())
    print(f"{'PASS' if bad == 0 else 'FAIL'} invariants on 100 random decompositions ({bad} failing)")
    return ok and bad == 0


def _check_families() -> bool:
    results = []
    for label, fam, regular, cubic in (("cubes d=1", cube_family(1, 8), True, True),
                                       ("cubes d=2", cube_family(2, 5), True, True),
                                       ("disks d=2", disk_family(2, 4), True, True),
                                       ("anisotropic (k, k/2)", anisotropic_family(8), True, False)):
        rep = jrw_profiles(fam)
        ok = rep.regular == regular and rep.cubic == cubic
        results.append(ok)
        print(f"{'PASS' if ok else 'FAIL'} {label}: regular {rep.regular} cubic {rep.cubic} L {rep.L} K {rep.K}")
    ecc = build_dyadic_family([(1 << k, k) for k in range(7)])
    sep = verify_separation_lemma(ecc)
    ok = sep.separation_ok and sep.decay_ok and not jrw_profiles(rectangle_family(ecc, 4)).cubic
    results.append(ok)
    print(f"{'PASS' if ok else 'FAIL'} (2^k, k) table: separated, eps decays, not cubic")
    return all(results)


def _check_lemmas(full: bool) -> bool:
    rep = harness.lemma_suite(quick=not full)
    for k, v in rep.checks.items():
        print(f"{'PASS' if v else 'FAIL'} {k}")
    print(f"1d1 slope {rep.one_d_one['slope']:.4f}; wk best {', '.join(f'{x:.4f}' for x in rep.weak_sum['best'])}")
    return rep.passed


def cmd_check(a) -> int:
    ok = {"czd": _check_czd, "families": _check_families}.get(a.suite, lambda: _check_lemmas(a.full))()
    return 0 if ok else 1


def _summary(rep: harness.ExperimentReport) -> str:
    exp = rep.experiment
    out = []
    for stat, vals in rep.ladder.items():
        cells = " ".join(f"{v:10.4g}" for v in vals)
        out.append(f"{exp.name:<18} d={exp.dim} {stat:<24} {cells}   slope {rep.slope(stat):+.4f}")
    return "\n".join(out)


def cmd_run(a) -> int:
    exp = harness.load_config(a.config)
    if a.out:
        exp.out = a.out
    rep = harness.run_inequality(exp, workers=a.workers)
    print("grid".ljust(52) + " ".join(f"{n:>10}" for n in exp.grid))
    print(_summary(rep))
    for n in rep.notes:
        print(f"note: {n}")
    if not exp.out:
        sys.stdout.write(rep.to_csv())
    return 0


def cmd_report(a) -> int:
    text = Path(a.csv).read_text()
    best = harness.read_csv_best(text)
    grids = sorted({g for series in best.values() for g, _ in series})
    print(f"{'experiment':<18} {'d':>2} {'statistic':<24} " + " ".join(f"{g:>10}" for g in grids) + "      slope")
    plot = ["series,x,y"]
    for (e, d, stat), series in sorted(best.items()):
        by = dict(series)
        cells = " ".join(f"{by[g]:10.4g}" if g in by else " " * 10 for g in grids)
        xs, ys = zip(*sorted(series))
        print(f"{e:<18} {d:>2} {stat:<24} {cells} {harness.log_slope(xs, ys):+10.4f}")
        plot += [f"{e}/d{d}/{stat},{x},{y!r}" for x, y in zip(xs, ys)]
    if a.plot:
        Path(a.plot).write_text("\n".join(plot) + "\n")
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="latosc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("gen-function", help="write a latfn v1 input")
    g.add_argument("--kind", required=True, choices=("delta", "random", "indicator", "spikes"))
    g.add_argument("--dim", type=int, default=1)
    g.add_argument("--grid", default="16")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--value", type=float, default=1.0)
    g.add_argument("--count", type=int, default=3)
    g.add_argument("--out")
    g.set_defaults(run=cmd_gen_function)

    g = sub.add_parser("gen-family", help="write a family file")
    g.add_argument("--preset", required=True, choices=("cubes", "anisotropic", "disks", "file"))
    g.add_argument("--dim", type=int, default=2)
    g.add_argument("--levels", type=int, default=4)
    g.add_argument("--file")
    g.add_argument("--out")
    g.set_defaults(run=cmd_gen_family)

    g = sub.add_parser("op", help="apply one operator")
    g.add_argument("--name", required=True)
    g.add_argument("--in", dest="inp")
    g.add_argument("--family")
    g.add_argument("--out")
    g.add_argument("--samples")
    g.add_argument("--point")
    g.add_argument("--s", type=float)
    g.add_argument("--lam", type=float)
    g.add_argument("--t", type=int)
    g.add_argument("--level", type=int)
    g.add_argument("--depth", type=int)
    g.add_argument("--kind")
    g.add_argument("--aux", type=float)
    g.add_argument("--which")
    g.add_argument("--variant")
    g.add_argument("--indices")
    g.add_argument("--axis", type=int, default=0)
    g.set_defaults(run=cmd_op)

    g = sub.add_parser("check", help="run an invariant suite")
    g.add_argument("--suite", required=True, choices=SUITES)
    g.add_argument("--full", action="store_true", help="full-size lemma suite")
    g.set_defaults(run=cmd_check)

    g = sub.add_parser("run", help="run an experiment config")
    g.add_argument("--config", required=True)
    g.add_argument("--out")
    g.add_argument("--workers", type=int, default=1)
    g.set_defaults(run=cmd_run)

    g = sub.add_parser("report", help="tabulate a harness CSV")
    g.add_argument("--csv", required=True)
    g.add_argument("--plot")
    g.set_defaults(run=cmd_report)
    return p


def _one_line(exc: BaseException) -> str:
    return " ".join(str(exc).split()) or type(exc).__name__


def main(argv=None) -> int:
    try:
        a = build_parser().parse_args(argv)
        return a.run(a)
    except UsageError as exc:
        print(f"error: {_one_line(exc)}", file=sys.stderr)
        return 2
    except harness.OracleMismatch as exc:
        print(f"error: {_one_line(exc)}", file=sys.stderr)
        return 1
    except (ValueError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {_one_line(exc)}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
