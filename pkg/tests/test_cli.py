import subprocess
import sys

import numpy as np
import pytest

from latosc.cli import OPERATORS, main, read_family_file, write_family_file
from latosc.families import anisotropic_family, cube_family, disk_family, format_family
from latosc.harness import CSV_HEADER
from latosc.lattice import FormatError, LatticeFunction, read_latfn, write_latfn
from latosc.squarefn import long_sf


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_variation_of_three_samples(capsys):
    code, out, _ = run(capsys, "op", "--name", "variation", "--s", "2", "--samples", "0,1,0")
    assert code == 0 and out.strip() == "1.4142135623730951"


def test_jump_count_from_samples(capsys):
    code, out, _ = run(capsys, "op", "--name", "jump_count", "--lam", "0.5", "--samples", "0,1,0,1")
    assert code == 0 and out.strip() == "4"


def test_unknown_operator_lists_catalogue(capsys):
    code, _, err = run(capsys, "op", "--name", "fourier")
    assert code == 2
    assert err.startswith("error: unknown operator 'fourier'; operators: ") and err.count("\n") == 1
    assert all(name in err for name in OPERATORS)


@pytest.mark.parametrize("argv", [[], ["bogus"], ["op"], ["gen-function", "--kind", "noise"],
                                  ["run", "--config", "/nonexistent.cfg"],
                                  ["op", "--name", "long_sf", "--in", "x.latfn"]])
def test_usage_errors_exit_2_with_one_line(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and err.startswith("error: ") and err.count("\n") == 1


def test_missing_operator_argument(capsys, tmp_path):
    write_latfn(LatticeFunction.delta((0,)), tmp_path / "f.latfn")
    write_family_file(cube_family(1, 2), tmp_path / "fam")
    code, _, err = run(capsys, "op", "--name", "family_average", "--in", str(tmp_path / "f.latfn"),
                       "--family", str(tmp_path / "fam"))
    assert code == 2 and "needs --t" in err


@pytest.mark.parametrize("kind,grid,dim", [("random", "16", 1), ("random", "4x8", 2), ("delta", "9", 2),
                                           ("spikes", "6", 3), ("indicator", "5", 1)])
def test_gen_function_round_trip(capsys, tmp_path, kind, grid, dim):
    p = tmp_path / "f.latfn"
    assert run(capsys, "gen-function", "--kind", kind, "--dim", str(dim), "--grid", grid, "--seed", "7",
               "--out", str(p))[0] == 0
    f = read_latfn(p)
    assert f.dim == dim and np.any(f.values)
    q = tmp_path / "g.latfn"
    write_latfn(f, q)
    assert q.read_text() == p.read_text()
    code, out, _ = run(capsys, "gen-function", "--kind", kind, "--dim", str(dim), "--grid", grid, "--seed", "7")
    assert out == p.read_text()


def test_gen_function_bad_grid(capsys):
    code, _, err = run(capsys, "gen-function", "--kind", "random", "--dim", "2", "--grid", "4x4x4")
    assert code == 2 and "--grid" in err


@pytest.mark.parametrize("preset,dim,levels", [("cubes", 1, 5), ("cubes", 2, 3), ("disks", 2, 3),
                                               ("anisotropic", 2, 4)])
def test_gen_family_round_trip(capsys, tmp_path, preset, dim, levels):
    p = tmp_path / "fam.txt"
    code, _, err = run(capsys, "gen-family", "--preset", preset, "--dim", str(dim), "--levels", str(levels),
                       "--out", str(p))
    assert code == 0 and f"levels {levels}" in err
    fam = read_family_file(p)
    ref = {"cubes": lambda: cube_family(dim, levels), "disks": lambda: disk_family(2, levels),
           "anisotropic": lambda: anisotropic_family(levels)}[preset]()
    assert fam.kind == ref.kind and fam.base.levels == levels
    assert fam.ts == ref.ts and all(fam.set(t) == ref.set(t) for t in fam.ts)
    q = tmp_path / "again.txt"
    assert run(capsys, "gen-family", "--preset", "file", "--file", str(p), "--out", str(q))[0] == 0
    assert q.read_text() == p.read_text()


def test_family_file_without_sets(tmp_path):
    p = tmp_path / "table.txt"
    p.write_text(format_family(cube_family(2, 3).base))
    fam = read_family_file(p)
    assert fam.kind == "rectangles" and fam.base.levels == 3


def test_family_file_error_carries_whole_file_line(tmp_path):
    p = tmp_path / "fam.txt"
    write_family_file(cube_family(1, 2), p)
    lines = p.read_text().splitlines()
    lines[-1] = "rect 0 oops"
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError, match=f"line {len(lines)}:"):
        read_family_file(p)


def test_op_long_sf_matches_library(capsys, tmp_path):
    f = LatticeFunction(np.random.default_rng(1).normal(size=(12, 12)))
    fam = cube_family(2, 2)
    write_latfn(f, tmp_path / "f.latfn")
    write_family_file(fam, tmp_path / "fam")
    out = tmp_path / "s.latfn"
    assert run(capsys, "op", "--name", "long_sf", "--in", str(tmp_path / "f.latfn"), "--family",
               str(tmp_path / "fam"), "--out", str(out))[0] == 0
    assert read_latfn(out) == long_sf(f, fam).aggregate


@pytest.mark.parametrize("name,extra", [
    ("family_average", ["--t", "2"]), ("martingale_expectation", ["--level", "1"]), ("maximal", ["--kind", "HL"]),
    ("short_sf", []), ("shifted_sf", ["--variant", "SHORT"]), ("discretized_sf", ["--which", "d"]),
    ("rect_sf", []), ("oscillation", ["--indices", "1,2,4"])])
def test_field_operators_write_latfn(capsys, tmp_path, name, extra):
    write_latfn(LatticeFunction(np.random.default_rng(2).random((8, 8))), tmp_path / "f.latfn")
    write_family_file(cube_family(2, 2), tmp_path / "fam")
    code, out, _ = run(capsys, "op", "--name", name, "--in", str(tmp_path / "f.latfn"), "--family",
                       str(tmp_path / "fam"), *extra)
    assert code == 0 and out.startswith("latfn v1\ndim 2\n")


def test_op_decompositions(capsys, tmp_path):
    f = LatticeFunction.delta((0, 0), 8.0)
    write_latfn(f, tmp_path / "f.latfn")
    write_family_file(cube_family(2, 2), tmp_path / "fam")
    for name in ("cz_decompose", "fibred_split"):
        code, out, _ = run(capsys, "op", "--name", name, "--in", str(tmp_path / "f.latfn"), "--family",
                           str(tmp_path / "fam"), "--lam", "1", "--out", str(tmp_path / name))
        assert code == 0 and "FAIL" not in out and out.startswith("1 cubes")
    code, out, _ = run(capsys, "op", "--name", "martingale_decompose", "--in", str(tmp_path / "f.latfn"),
                       "--family", str(tmp_path / "fam"), "--depth", "2", "--out", str(tmp_path / "md"))
    assert code == 0 and sorted(p.name for p in (tmp_path / "md").iterdir()) == ["d_1.latfn", "d_2.latfn", "tail.latfn"]
    code, out, _ = run(capsys, "op", "--name", "good_lambda_check", "--in", str(tmp_path / "f.latfn"),
                       "--family", str(tmp_path / "fam"))
    assert code == 0 and out.startswith("violations 0")


def test_check_czd_fixture(capsys):
    code, out, _ = run(capsys, "check", "--suite", "czd")
    assert code == 0
    assert "PASS delta fixture: P = [0,4)" in out and "trace: " in out and "FAIL" not in out


def test_check_families(capsys):
    code, out, _ = run(capsys, "check", "--suite", "families")
    assert code == 0 and out.count("PASS") == 5


def test_check_lemmas_quick(capsys):
    code, out, _ = run(capsys, "check", "--suite", "lemmas")
    assert code == 0 and "FAIL" not in out and "PASS 1d1 slope" in out


def test_run_rejects_zero_trials(capsys, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("experiment = LP_HIGH\ntrials = 0\n")
    code, out, err = run(capsys, "run", "--config", str(cfg))
    assert code == 2 and err == "error: trials must be >= 1\n" and out == ""


def test_run_rejects_non_cubic_family(capsys, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("experiment = WEIGHTED_L2\ndim = 2\ngrid = 2^16\ntrials = 1\nfamily = anisotropic(8)\n")
    code, _, err = run(capsys, "run", "--config", str(cfg))
    assert code == 2 and err.startswith("error: family is not cubic")


def test_run_and_report(capsys, tmp_path):
    cfg = tmp_path / "c.cfg"
    csv = tmp_path / "r.csv"
    cfg.write_text(f"experiment = VAR_LP\ngrid = 64, 128\ntrials = 2\nseed = 3\nout = {csv}\n")
    code, out, _ = run(capsys, "run", "--config", str(cfg))
    assert code == 0 and "VAR_LP" in out and "slope" in out
    text = csv.read_text()
    assert text.startswith(CSV_HEADER) and text.count("\n") == 1 + 2 * 2 + 2
    plot = tmp_path / "p.csv"
    code, out, _ = run(capsys, "report", "--csv", str(csv), "--plot", str(plot))
    assert code == 0
    header, row = out.splitlines()
    assert header.split()[:3] == ["experiment", "d", "statistic"] and row.split()[:3] == ["VAR_LP", "1", "ratio"]
    lines = plot.read_text().splitlines()
    assert lines[0] == "series,x,y" and [l.split(",")[1] for l in lines[1:]] == ["64", "128"]


def test_report_bad_csv(capsys, tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n")
    code, _, err = run(capsys, "report", "--csv", str(p))
    assert code == 2 and "line 1" in err


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "latosc", "op", "--name", "variation", "--s", "2", "--samples", "0,1,0"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip() == "1.4142135623730951"
