import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latosc.czd import (check_invariants, cz_decompose, dump_decomposition, exact_sum, exceptional_constant,
                        fibred_parts, fibred_split, load_decomposition, stopping_chain)
from latosc.families import anisotropic_family, isotropic_family, random_nested_family
from latosc.lattice import LatticeFunction, Rectangle
from latosc.oracles import brute_cz


def test_delta_fixture():
    fam = isotropic_family(1, 3)
    f = LatticeFunction.delta((0,), 8.0)
    dec = cz_decompose(f, 1.0, fam)
    assert [bp.cube for bp in dec.bad_parts] == [Rectangle((0,), (4,))]
    bp = dec.bad_parts[0]
    assert bp.mean == 2 and bp.numerator == 8 and bp.denominator == 4
    assert list(bp.b.values) == [6.0, -2.0, -2.0, -2.0]
    assert dec.good == LatticeFunction.indicator(Rectangle((0,), (4,)), 2.0)
    assert all(check_invariants(dec, f).values())


def test_nothing_selected():
    fam = isotropic_family(2, 3)
    f = LatticeFunction(np.full((8, 8), 0.5))
    dec = cz_decompose(f, 1.0, fam)
    assert dec.bad_parts == [] and dec.exceptional is None
    assert dec.good == f


def test_near_extremal_total_measure():
    fam = isotropic_family(1, 6)
    lam = 1.0
    f = LatticeFunction.indicator(Rectangle((0,), (64,)), 1.01 * lam)
    dec = cz_decompose(f, lam, fam)
    total = sum(bp.denominator for bp in dec.bad_parts)
    assert total == 64
    assert total / (f.total() / lam) > 0.99


def test_errors():
    fam = isotropic_family(1, 2)
    with pytest.raises(ValueError, match="f >= 0"):
        cz_decompose(LatticeFunction([1.0, -1.0]), 1.0, fam)
    with pytest.raises(ValueError, match="altitude"):
        cz_decompose(LatticeFunction([1.0]), 0.0, fam)
    dec = cz_decompose(LatticeFunction([5.0]), 1.0, fam)
    with pytest.raises(ValueError, match="d >= 2"):
        fibred_split(dec)


def test_exact_sum():
    vals = np.array([1e300, 1.0, -1e300, 2.0 ** -60, 3.5])
    assert exact_sum(vals) == Fraction(1) + Fraction(1, 2 ** 60) + Fraction(7, 2)
    rng = np.random.default_rng(0)
    v = rng.normal(size=500) * 10.0 ** rng.integers(-20, 20, 500)
    assert exact_sum(v) == sum(Fraction(x) for x in v)


def test_chain_reaches_points_and_mass_bound():
    base = isotropic_family(2, 3, offset=2)
    chain = stopping_chain(base, 1e6, 1.0)
    assert chain[0] == (0, 0)
    assert all(sum(b) - sum(a) == 1 for a, b in zip(chain, chain[1:]))
    assert 2.0 ** sum(chain[-1]) >= 1e6
    assert tuple(base.refined[0]) in chain


def _random_f(rng, d):
    shape = tuple(rng.integers(3, 20, d))
    v = rng.random(shape) * (rng.random(shape) < rng.uniform(0.05, 0.6)) * rng.pareto(1.5, shape)
    return LatticeFunction(v, tuple(rng.integers(-10, 10, d)))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_invariants_random(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 3))
    fam = random_nested_family(d, 4, rng, max_exponent=3)
    f = _random_f(rng, d)
    lam = float(rng.uniform(0.02, 3.0))
    dec = cz_decompose(f, lam, fam)
    if d == 2:
        dec = fibred_split(dec)
        assert dec.fibred_constant <= 3.0
    res = check_invariants(dec, f)
    assert all(res.values()), res
    key = lambda r: (r.lo, r.hi)
    assert sorted((bp.cube for bp in dec.bad_parts), key=key) == sorted(brute_cz(f, lam, dec.chain), key=key)
    # stopping rule: the parent of every selected cube has average at most lambda
    for bp in dec.bad_parts:
        parent_sides = [1 << a for a in dec.chain[bp.level + 1]] if bp.level + 1 < len(dec.chain) else None
        if parent_sides:
            lo = tuple((x // s) * s for x, s in zip(bp.cube.lo, parent_sides))
            parent = Rectangle(lo, tuple(a + s for a, s in zip(lo, parent_sides)))
            assert exact_sum(f.on_box(parent)) <= Fraction(lam) * parent.size


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_exceptional_set_in_hl_level_set(seed):
    rng = np.random.default_rng(seed)
    fam = isotropic_family(2, 4)
    f = _random_f(rng, 2)
    lam = float(rng.uniform(0.05, 1.0))
    dec = cz_decompose(f, lam, fam)
    if not dec.bad_parts:
        return
    measured, bound = exceptional_constant(dec, f)
    assert measured <= bound


def test_fibred_parts_examples():
    rng = np.random.default_rng(1)
    b = rng.normal(size=(4, 4))
    b -= b.mean(axis=0, keepdims=True)  # mean zero along every x1-fibre
    b0, b1 = fibred_parts(b)
    assert np.abs(b1).max() <= 1e-15
    u = np.array([1.0, -2.0, 3.0, -2.0])
    v = np.array([0.5, 1.0, 2.0])
    b = np.outer(u, v)
    b0, b1 = fibred_parts(b)
    assert np.array_equal(b0, b) and not np.any(b1)
    b = rng.normal(size=(4, 4))
    b -= b.mean()
    b0, b1 = fibred_parts(b)
    scale = np.abs(b).sum()
    assert max(abs(math.fsum(b0[:, j])) for j in range(4)) <= 1e-12 * scale
    assert max(abs(math.fsum(b1[i, :])) for i in range(4)) <= 1e-12 * scale


def test_dump_and_load(tmp_path):
    fam = anisotropic_family(4)
    rng = np.random.default_rng(4)
    f = _random_f(rng, 2)
    dec = cz_decompose(f, 0.3, fam)
    dump_decomposition(dec, tmp_path)
    back = load_decomposition(tmp_path, fam)
    assert back.good == dec.good
    assert [(b.cube, b.mean) for b in back.bad_parts] == [(b.cube, b.mean) for b in dec.bad_parts]
    assert all(x.b == y.b for x, y in zip(back.bad_parts, dec.bad_parts))
