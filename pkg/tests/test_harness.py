import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latosc.families import cube_family
from latosc.harness import (CSV_HEADER, FamilyRejected, FibredTestFunction, InequalityExperiment,
                            _pointwise_max_ratio, _trial, deepest_family, family_for, grid_shape, log_slope,
                            make_input, nested_rects, one_d_one, parse_config, parse_grid, read_csv_best,
                            run_inequality, run_pooled, sharp_sides, spot_check, transference_demo, weak_sum,
                            wk_constant)
from latosc.lattice import LatticeFunction, Rectangle, lp_norm
from latosc.squarefn import computation_box, discretized_sf


# ---------------------------------------------------------------- configs

def test_parse_config_fields():
    exp = parse_config("""
        # a comment
        experiment = lp_high
        dim = 2
        grid = 2^6..2^8
        trials = 3
        seed = 11
        p = 6
        lambda = 0.1, 0.5
        distribution = spikes(2)
    """)
    assert exp.name == "LP_HIGH" and exp.dim == 2 and exp.grid == (64, 128, 256)
    assert exp.trials == 3 and exp.seed == 11 and exp.p == 6.0 and exp.lam == (0.1, 0.5)
    assert exp.family == "cubes" and exp.weight == "constant"


def test_defaults_per_experiment():
    assert InequalityExperiment("WEIGHTED_LP").p == 3.0
    assert InequalityExperiment("WEIGHTED_L2").weight == "random"
    assert InequalityExperiment("WEIGHTED_WEAK11").weight == "cr(0.5)"
    assert InequalityExperiment("WEAK11_RECT_LONG").family == "random"
    assert InequalityExperiment("SHARP_DOMINATION").p == 2.0


@pytest.mark.parametrize("text,msg", [
    ("experiment = LP_HIGH\ntrials = 0", "trials must be >= 1"),
    ("experiment = LP_HIGH\ncolour = red", "line 2: unknown key 'colour'"),
    ("experiment = LP_HIGH\n\ndim = two", "line 3: bad value for dim"),
    ("experiment = LP_HIGH\nnonsense", "line 2: expected 'key = value'"),
    ("dim = 1", "needs an 'experiment' key"),
    ("experiment = NOPE", "unknown experiment 'NOPE'; catalogue: WEAK11_RECT_LONG"),
    ("experiment = VAR_LP\ndim = 4", "dim must be 1, 2 or 3"),
    ("experiment = VAR_LP\ngrid = 128, 64", "strictly increasing"),
    ("experiment = VAR_LP\np = 0.5", "p must be >= 1"),
    ("experiment = VAR_LP\ns = 0.5", "s must be >= 1"),
    ("experiment = JUMP_LP\nlambda = 0.1, -1", "lambda values must be positive"),
    ("experiment = VAR_LP\ndistribution = gaussian", "unknown distribution 'gaussian'"),
])
def test_config_errors(text, msg):
    with pytest.raises(ValueError, match=msg.replace("(", r"\(").replace(")", r"\)")):
        parse_config(text)


def test_parse_grid_forms():
    assert parse_grid("2^6..2^10") == (64, 128, 256, 512, 1024)
    assert parse_grid("64, 128 2^8") == (64, 128, 256)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 14), st.integers(1, 3))
def test_grid_shape_is_near_cubic_and_exact(e, d):
    shape = grid_shape(1 << e, d)
    assert math.prod(shape) == 1 << e and len(shape) == d
    assert max(shape) <= 2 * min(shape)
    assert all(n & (n - 1) == 0 for n in shape)


def test_grid_shape_rejects_non_powers():
    with pytest.raises(ValueError, match="power of 2"):
        grid_shape(96, 2)


# ----------------------------------------------------------------- inputs

@pytest.mark.parametrize("dist", ["random_uniform", "random_sparse(0.01)", "spikes(3)", "smooth_bumps(2)",
                                  "adversarial(spike)", "adversarial(cantor)", "adversarial(checker)",
                                  "adversarial(cz_box)"])
def test_inputs_nonzero_and_shaped(dist):
    f = make_input(dist, (8, 16), np.random.default_rng(0))
    assert f.shape == (8, 16) and np.any(f.values)


def test_cantor_and_spike_presets():
    f = make_input("adversarial(cantor)", (16,), np.random.default_rng(0))
    assert list(np.flatnonzero(f.values)) == [0, 3, 12, 15]
    g = make_input("adversarial(spike)", (8, 8), np.random.default_rng(0))
    assert g.values[4, 4] == 1.0 and g.values.sum() == 1.0
    with pytest.raises(ValueError, match="adversarial preset"):
        make_input("adversarial(zigzag)", (8,), np.random.default_rng(0))


def test_family_presets():
    assert family_for("cubes", (1024,)).base.levels == 7
    assert family_for("cubes(3)", (32, 32)).base.levels == 3
    assert deepest_family("cubes", 2, (64, 1024)) == "cubes(3)"
    assert deepest_family("cubes(5)", 2, (64, 1024)) == "cubes(5)"
    with pytest.raises(ValueError, match="two-dimensional"):
        family_for("disks", (64,))
    with pytest.raises(ValueError, match="unknown family"):
        family_for("blobs", (64,))


# ------------------------------------------------------------------ runs

def test_spot_checks_cover_operators():
    done = spot_check("SHARP_DOMINATION", 2, np.random.default_rng(0))
    assert {"rect_average", "long square function", "sharp maximal", "atom means"} <= set(done)
    done = spot_check("WEIGHTED_LP", 1, np.random.default_rng(1))
    assert {"HL maximal", "A_1 constant", "A_p characteristic"} & set(done) == {"A_1 constant", "A_p characteristic"}


def test_run_is_deterministic_across_workers(tmp_path):
    exp = dict(name="LP_HIGH", dim=1, grid=(64, 128), trials=3, seed=4, distribution="spikes(2)")
    a = run_inequality(InequalityExperiment(**exp), workers=1)
    b = run_inequality(InequalityExperiment(**exp, out=str(tmp_path / "r.csv")), workers=2)
    assert a.to_csv() == b.to_csv() == (tmp_path / "r.csv").read_text()
    assert a.to_csv().startswith(CSV_HEADER + "\n")
    best = read_csv_best(a.to_csv())
    assert [g for g, _ in best[("LP_HIGH", 1, "ratio_long")]] == [64, 128]
    assert set(a.certification) == {64, 128}


def test_read_csv_best_rejects_bad_input():
    with pytest.raises(ValueError, match="line 1"):
        read_csv_best("grid,value\n")
    with pytest.raises(ValueError, match="line 2"):
        read_csv_best(CSV_HEADER + "\nLP_HIGH,1,64\n")


def test_sharp_sides_vanish_for_constant():
    # a finite box can only hold c * 1_box; points whose every atom and window stays inside see a constant
    fam = cube_family(2, 3)
    sharp, Mp = sharp_sides(LatticeFunction(np.full((128, 128), 2.5)), fam)
    margin = 3 * max(fam.base.atom_sides(3)) + max(fam.extent().shape)
    inner = Rectangle((margin, margin), (128 - margin, 128 - margin))
    assert not np.any(sharp.on_box(inner)) and np.all(Mp.on_box(inner) == 6.25)
    assert _pointwise_max_ratio(sharp.on_box(inner), Mp.on_box(inner)) == (0.0, 0)
    exp = InequalityExperiment("SHARP_DOMINATION", dim=2)
    res = _trial(exp, LatticeFunction(np.full((32, 32), 2.5)), fam, np.random.default_rng(0))
    assert res["zero_violations"] == 0.0


def _direct_weak_delta(rects):
    """Weak (1,1) quotient of the consecutive-difference square function of delta_0, from set counts."""
    R = rects[-1]
    vals = {}
    for x in R.minkowski(R).points():
        s2 = 0.0
        for a, b in zip(rects, rects[1:]):
            u = (1.0 / a.size if a.contains(x) else 0.0) - (1.0 / b.size if b.contains(x) else 0.0)
            s2 += u * u
        vals[x] = math.sqrt(s2)
    best = 0.0
    for lam in set(vals.values()):
        if lam > 0:
            # sup over lambda' < lam of lambda' * #{S > lambda'} is lam * #{S >= lam}
            best = max(best, lam * sum(1 for v in vals.values() if v >= lam))
    return best


def test_weak11_on_delta_matches_direct_count():
    exp = InequalityExperiment("WEAK11_RECT_LONG", dim=2, family="cubes(4)")
    fam = family_for("cubes(4)", (32, 32))
    f = LatticeFunction.delta((0, 0))
    res = _trial(exp, f, fam, np.random.default_rng(0))
    assert res["ratio"] == pytest.approx(_direct_weak_delta(nested_rects(fam)), rel=1e-12)


def test_weighted_l2_with_unit_weight_is_unweighted_ratio():
    exp = InequalityExperiment("WEIGHTED_L2", dim=1, weight="constant")
    fam = cube_family(1, 4)
    f = make_input("random_uniform", (128,), np.random.default_rng(3))
    res = _trial(exp, f, fam, np.random.default_rng(0))
    box = computation_box(f.box, fam, "discrete")
    for v in ("LONG", "SHORT"):
        S = discretized_sf("D", f, fam, v, box, prune=True).aggregate
        assert res[f"ratio_{v.lower()}"] == pytest.approx(lp_norm(S, 2.0) ** 2 / lp_norm(f, 2.0) ** 2, rel=1e-12)


def test_non_cubic_family_rejected_with_report():
    exp = InequalityExperiment("WEIGHTED_L2", dim=2, grid=(1 << 16,), trials=1, family="anisotropic(8)")
    with pytest.raises(FamilyRejected, match="not cubic") as info:
        run_inequality(exp)
    assert not info.value.report.cubic and info.value.report.K > 2


def test_uncertified_weights_rejected():
    with pytest.raises(ValueError, match="not certified A_p"):
        run_inequality(InequalityExperiment("WEIGHTED_LP", grid=(64,), trials=1, weight="power(-1.5)"))
    with pytest.raises(ValueError, match="not certified A_1"):
        run_inequality(InequalityExperiment("WEIGHTED_WEAK11", grid=(64,), trials=1, weight="power(0.5)"))


def test_run_pooled_takes_best_over_distributions():
    best, reps = run_pooled("VAR_LP", 1, (64, 128), 2, distributions=("random_uniform", "spikes(1)"), seed=3)
    assert len(reps) == 2 and all(r.experiment.family == "cubes(4)" for r in reps)
    assert best["ratio"] == list(np.maximum(reps[0].ladder["ratio"], reps[1].ladder["ratio"]))


def test_log_slope():
    assert log_slope([1, 2, 4, 8], [3, 6, 12, 24]) == pytest.approx(1.0)
    assert log_slope([1, 2, 4], [5, 5, 5]) == pytest.approx(0.0, abs=1e-12)
    assert log_slope([1], [2]) == 0.0


# ----------------------------------------------------------------- lemmas

def test_fibred_test_function_validation():
    with pytest.raises(ValueError, match="sum zero"):
        FibredTestFunction(1, [0], [np.array([1, 1])])
    with pytest.raises(ValueError, match="disjoint"):
        FibredTestFunction(1, [0, 1], [np.array([1, -1]), np.array([1, -1])])
    with pytest.raises(ValueError, match="length 2\\^n"):
        FibredTestFunction(2, [0], [np.array([1, -1])])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 300))
def test_smoothed_l1_matches_direct_convolution(seed, length):
    F = FibredTestFunction.random(np.random.default_rng(seed))
    v = F.values()
    direct = np.abs(np.convolve(v, np.ones(length, np.int64))).sum() / length
    assert F.smoothed_l1(length) == direct
    assert F.smoothed_l1(length) <= F.l1()


def test_haar_decay_halves_per_scale():
    F = FibredTestFunction.haar(4)
    ratios = [F.smoothed_l1(1 << (4 + s)) / F.l1() for s in range(8)]
    # a Haar function smoothed at length 2^(n+s) keeps exactly 2^-(s+1) of its mass
    assert ratios == [2.0 ** -(s + 1) for s in range(8)]


def test_one_d_one_slope():
    res = one_d_one(40, 8, seed=2)
    assert -1.15 <= res["slope"] <= -0.85
    assert res["best"].shape == (9,) and np.all(res["best"] <= 1.0)


def test_weak_sum_single_term_and_growth():
    assert wk_constant([np.random.default_rng(0).random(100)]) == 1.0
    res = weak_sum(counts=(1, 4, 16), trials=3, size=256)
    assert res["best"][0] == 1.0 and res["slope"] <= 0.05


# ----------------------------------------------------------- transference

@pytest.mark.parametrize("d,N,levels", [(1, 256, 4), (2, 64, 3)])
def test_transference_exact_on_random(d, N, levels):
    rep = transference_demo(N, d, cube_family(d, levels))
    assert rep.exact and rep.checked == rep.interior.size > 0


def test_transference_constant_and_delta():
    fam = cube_family(2, 3)
    rep = transference_demo(64, 2, fam, f=np.full((64, 64), 3.0))
    assert rep.exact
    f = np.zeros((64, 64))
    f[30, 33] = 1.0
    assert transference_demo(64, 2, fam, f=f).exact


def test_transference_errors():
    fam = cube_family(1, 5)
    with pytest.raises(ValueError, match="too small"):
        transference_demo(64, 1, fam)
    with pytest.raises(ValueError, match="power of 2"):
        transference_demo(100, 1, fam)
    with pytest.raises(ValueError, match="shape"):
        transference_demo(256, 1, fam, f=np.zeros(128))
