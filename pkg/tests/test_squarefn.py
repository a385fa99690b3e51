import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from latosc import _kernels
from latosc.families import anisotropic_family, cube_family, disk_family
from latosc.lattice import LatticeFunction, Rectangle, rect_average
from latosc.oracles import brute_long_scale, enum_jump, enum_short, enum_variation
from latosc.squarefn import (computation_box, discretize, discretized_sf, jump_count, long_sf, oscillation,
                             rect_sf, sample_matrix, sample_sequence, shift_fields, shifted_sf, short_sf,
                             variation, variation_field)
from latosc.squarefn import SquareFunctionOutput

seqs = arrays(np.float64, st.integers(1, 10), elements=st.floats(-10, 10))


def _rand(rng, shape, origin=None):
    return LatticeFunction(rng.normal(size=shape), origin if origin is not None else (0,) * len(shape))


def _check_output(out: SquareFunctionOutput):
    agg2 = out.aggregate.values ** 2
    tot = sum(p.values ** 2 for p in out.per_scale)
    assert np.all(np.abs(agg2 - tot) <= 1e-12 * np.maximum(tot, 1e-300))
    assert all(np.all(p.values >= 0) for p in out.per_scale)


def test_constant_gives_zero():
    fam = cube_family(1, 3)
    c = LatticeFunction.constant(Rectangle((-200,), (200,)), 1.5)
    box = Rectangle((-16,), (16,))
    assert not np.any(long_sf(c, fam, box).aggregate.values)
    assert not np.any(short_sf(c, fam, box).aggregate.values)
    rects = [Rectangle.symmetric((k,)) for k in range(4)]
    for which in ("LONG", "SHORT", "CONSEC"):
        assert np.all(rect_sf(which, c, rects, box).aggregate.values == 0)
    assert not np.any(oscillation(c, fam, [1, 3, 7], box).values)
    assert variation([2.0] * 5, 2) == 0 and jump_count([2.0] * 5, 0.1) == 1


def test_long_sf_delta_value():
    fam = cube_family(1, 3)
    out = long_sf(LatticeFunction.delta((0,)), fam)
    k1 = out.per_scale[out.scales.index(1)]
    assert k1((0,)) == pytest.approx(1 / 6, rel=1e-15)
    _check_output(out)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_long_sf_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    fam = [cube_family(2, 2), disk_family(2, 2), anisotropic_family(3)][seed % 3]
    f = _rand(rng, (4, 5), (1, -2))
    out = long_sf(f, fam)
    _check_output(out)
    for x in list(out.box.points())[::11]:
        for k, field in zip(out.scales, out.per_scale):
            assert field(x) == pytest.approx(brute_long_scale(f, fam, k, x), rel=1e-12, abs=1e-14)


def test_short_sf_block_example():
    assert enum_short([0.0, 1.0, 0.0]) == pytest.approx(math.sqrt(2), rel=1e-15)
    assert _kernels.chain_power_rows(np.array([[0.0, 1.0, 0.0]]), 2.0)[0] == 2


@settings(max_examples=200, deadline=None)
@given(seqs, st.sampled_from([1.0, 1.5, 2.0, 3.0]))
def test_variation_dp_equals_enumeration(a, s):
    assert variation(a, s) == enum_variation(a, s)
    assert math.sqrt(_kernels.chain_power_rows(a[None, :].copy(), 2.0)[0]) == enum_short(a)


@settings(max_examples=200, deadline=None)
@given(seqs, st.floats(0.01, 5))
def test_jump_dp_equals_enumeration(a, lam):
    assert jump_count(a, lam) == enum_jump(a, lam)


@settings(max_examples=100, deadline=None)
@given(seqs, st.sampled_from([1.0, 2.0, 3.0]))
def test_pruned_dp_close(a, s):
    full = _kernels.chain_power_rows(a[None, :].copy(), s)[0]
    pruned = _kernels.chain_power_rows_pruned(a[None, :].copy(), s)[0]
    assert pruned == pytest.approx(full, rel=1e-12, abs=1e-300)


def test_sequence_examples():
    assert variation([0, 1, 0], 2) == pytest.approx(math.sqrt(2), rel=1e-15)
    assert variation([0.5, 1, 3, 7.25], 1) == 6.75
    assert jump_count([0, 1, 0, 1], 0.5) == 4
    assert jump_count([0, 1, 0, 1], 2) == 1
    with pytest.raises(ValueError):
        variation([1, 2], 0.5)
    with pytest.raises(ValueError):
        jump_count([1, 2], 0)


@settings(max_examples=100, deadline=None)
@given(seqs, st.floats(0.01, 5), st.sampled_from([1.0, 2.0, 3.0]))
def test_sequence_inequalities(a, lam, s):
    v = variation(a, s)
    anchor = int(len(a) // 2)
    assert np.max(np.abs(a)) <= v + abs(a[anchor]) + 1e-12 * np.max(np.abs(a))
    assert lam * jump_count(a, lam) ** (1 / s) <= v + lam + 1e-12
    m = np.ptp(a)
    if m > 0:
        b = a / m
        vs = [variation(b, q) for q in (1, 1.5, 2, 3, 6)]
        assert all(x >= y - 1e-12 for x, y in zip(vs, vs[1:]))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_short_sf_dominated_by_consecutive_l1(seed):
    rng = np.random.default_rng(seed)
    fam = cube_family(1, 4)
    f = _rand(rng, (12,))
    out = short_sf(f, fam)
    _check_output(out)
    box = out.box
    for k, field in zip(out.scales, out.per_scale):
        ts = fam.block(k)
        m = sample_matrix(f, fam, box, ts)
        l1 = np.abs(np.diff(m, axis=1)).sum(axis=1).reshape(box.shape)
        assert np.all(field.values <= l1 * (1 + 1e-12) + 1e-15)
        x = box.lo
        assert field(x) == pytest.approx(enum_short(m[0]), rel=1e-12, abs=1e-300) if len(ts) <= 10 else True


def test_shift_of_spike():
    fam = cube_family(1, 2)
    S = np.zeros(9)
    S[4] = 1.0  # box [-4, 5), spike at 0
    out = shift_fields([S], fam, [1])[0]
    assert [x - 4 for x in np.flatnonzero(out)] == [-1, 0, 1, 2]
    assert not np.any(shift_fields([np.zeros(9)], fam, [1])[0])


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_shifted_and_discretized_orderings(seed):
    rng = np.random.default_rng(seed)
    fam = cube_family(2, 2)
    f = _rand(rng, (5, 5))
    box = computation_box(f.box, fam, "discrete")
    un = long_sf(f, fam, box)
    sh = shifted_sf("LONG", f, fam, box)
    for a, b in zip(un.per_scale, sh.per_scale):
        assert np.all(b.values >= a.values)
    D = discretize(sh, fam, "D")
    d = discretize(sh, fam, "d")
    _check_output(D)
    for a, b in zip(d.per_scale, D.per_scale):
        assert np.all(a.values <= b.values)
    assert discretized_sf("D", f, fam).aggregate == D.aggregate


def test_discretize_constant_field():
    fam = cube_family(2, 2)
    box = Rectangle((-8, -8), (8, 8))
    const = SquareFunctionOutput("SHIFTED_LONG", [LatticeFunction(np.full(box.shape, 2.0), box.lo)] * 3,
                                 LatticeFunction.zeros(box), [0, 1, 2])
    d = discretize(const, fam, "d")
    D = discretize(const, fam, "D")
    for a, b in zip(d.per_scale, D.per_scale):
        assert np.all(a.values == 2.0)
        assert np.all((b.values >= 2.0) & (b.values <= 9 * 2.0))
        assert b.values.max() == 18.0


def test_rect_long_delta():
    rects = [Rectangle.symmetric((k,)) for k in range(4)]
    out = rect_sf("LONG", LatticeFunction.delta((0,)), rects)
    assert out.aggregate((0,)) ** 2 == pytest.approx(sum(2.0 ** (-2 * k - 4) for k in range(3)), rel=1e-15)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rect_long_separable_factorization(seed):
    rng = np.random.default_rng(seed)
    g, h = rng.random(6), rng.random(5)
    f = LatticeFunction(np.outer(g, h))
    rects = [Rectangle.symmetric((k, k // 2)) for k in range(4)]
    box = f.box.minkowski(rects[-1])
    out = rect_sf("LONG", f, rects, box)
    for i, field in enumerate(out.per_scale):
        a, b = rects[i], rects[i + 1]
        ga = rect_average(LatticeFunction(g), Rectangle(a.lo[:1], a.hi[:1]), Rectangle(box.lo[:1], box.hi[:1])).values
        ha = rect_average(LatticeFunction(h), Rectangle(a.lo[1:], a.hi[1:]), Rectangle(box.lo[1:], box.hi[1:])).values
        gb = rect_average(LatticeFunction(g), Rectangle(b.lo[:1], b.hi[:1]), Rectangle(box.lo[:1], box.hi[:1])).values
        hb = rect_average(LatticeFunction(h), Rectangle(b.lo[1:], b.hi[1:]), Rectangle(box.lo[1:], box.hi[1:])).values
        assert np.allclose(field.values, np.abs(np.outer(ga, ha) - np.outer(gb, hb)), rtol=0, atol=1e-10)


def test_rect_sf_validation():
    f = LatticeFunction.delta((0, 0))
    with pytest.raises(ValueError, match="nested"):
        rect_sf("LONG", f, [Rectangle.symmetric((2, 2)), Rectangle.symmetric((1, 1))])
    odd = [Rectangle((0, 0), (3, 3)), Rectangle((0, 0), (5, 4))]
    with pytest.raises(ValueError, match="dyadic"):
        rect_sf("LONG", f, odd)
    assert rect_sf("CONSEC", f, odd).variant == "CONSEC"


def test_oscillation_examples_and_bound():
    rng = np.random.default_rng(5)
    fam = cube_family(1, 3)
    f = _rand(rng, (10,))
    box = Rectangle((-12,), (22,))
    one = oscillation(f, fam, [1, 2], box)
    a1 = rect_average(f, fam.set(1), box).values
    a2 = rect_average(f, fam.set(2), box).values
    assert np.array_equal(one.values, np.abs(a1 - a2))
    O = oscillation(f, fam, [1, 3, 7, 15], box)
    V = variation_field(f, fam, 2.0, box, ts=list(range(1, 16)), prune=False)
    assert np.all(O.values <= V.values * (1 + 1e-12) + 1e-15)
    with pytest.raises(ValueError):
        oscillation(f, fam, [3, 2], box)


def test_variation_field_pointwise_matches_sequence():
    rng = np.random.default_rng(2)
    fam = cube_family(1, 2)
    f = _rand(rng, (6,))
    V = variation_field(f, fam, 2.0, prune=False)
    seq = sample_sequence(f, fam, (2,))
    assert V((2,)) == enum_variation(seq.values, 2.0)
