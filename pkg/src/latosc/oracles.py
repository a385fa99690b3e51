"""Slow reference implementations used to cross-check the fast operators.

Every routine here is a direct transcription of a definition: explicit loops,
exhaustive enumeration, math.fsum for sums. Sizes must be kept small.
"""

from __future__ import annotations

import itertools
import math
from typing import Sequence

import numpy as np

from .lattice import LatticeFunction, Rectangle, as_pointset


def naive_rect_average(f: LatticeFunction, E, out_box: Rectangle) -> np.ndarray:
    """x -> fsum_{m in E} f(x - m) / |E| by a double loop."""
    pts = as_pointset(E).points()
    out = np.empty(out_box.shape)
    for idx, x in zip(np.ndindex(*out_box.shape), out_box.points()):
        out[idx] = math.fsum(f(tuple(xi - mi for xi, mi in zip(x, m))) for m in pts) / len(pts)
    return out


def _chains(n: int):
    for r in range(2, n + 1):
        yield from itertools.combinations(range(n), r)


def enum_chain_power(seq: Sequence[float], s: float) -> float:
    """max over increasing index subsets of the left-to-right sum of |a_i - a_j|**s (0 for no pair)."""
    a = [float(v) for v in seq]
    best = 0.0
    for ch in _chains(len(a)):
        acc = 0.0
        for i, j in zip(ch, ch[1:]):
            acc = acc + abs(a[i] - a[j]) ** s
        if acc > best:
            best = acc
    return best


def enum_variation(seq: Sequence[float], s: float) -> float:
    return enum_chain_power(seq, float(s)) ** (1.0 / float(s))


def enum_jump(seq: Sequence[float], lam: float) -> int:
    a = [float(v) for v in seq]
    best = 1 if a else 0
    for ch in _chains(len(a)):
        if len(ch) > best and all(abs(a[i] - a[j]) > lam for i, j in zip(ch, ch[1:])):
            best = len(ch)
    return best


def enum_short(seq: Sequence[float]) -> float:
    """Short square-function value of one block: sqrt of the best chain sum of squared jumps."""
    return math.sqrt(enum_chain_power(seq, 2.0))


def brute_hl(f: LatticeFunction, x: Sequence[int], max_side: int) -> float:
    """max over cubes [y, y + s)^d containing x, s <= max_side, of the average of |f|."""
    d = len(x)
    best = 0.0
    for s in range(1, max_side + 1):
        for off in itertools.product(range(s), repeat=d):
            y = [xi - o for xi, o in zip(x, off)]
            tot = math.fsum(abs(f(tuple(yi + c for yi, c in zip(y, cc)))) for cc in itertools.product(range(s), repeat=d))
            best = max(best, tot / s ** d)
    return best


def brute_boundary_count(E, H: Rectangle) -> int:
    """#{x : H - x meets the inner boundary of E}, by enumeration."""
    P = as_pointset(E)
    pts = set(P.points())
    d = P.dim
    bd = [p for p in pts if any(tuple(pi + oi for pi, oi in zip(p, o)) not in pts
                                for o in itertools.product((-1, 0, 1), repeat=d))]
    hits = set()
    for p in bd:
        for h in H.points():
            hits.add(tuple(hi - pi for hi, pi in zip(h, p)))
    return len(hits)


def brute_atom_mean(f: LatticeFunction, x: Sequence[int], sides: Sequence[int]) -> float:
    """Average of f over the dyadic atom of the given sides that contains x."""
    lo = [(xi // s) * s for xi, s in zip(x, sides)]
    cells = itertools.product(*[range(l, l + s) for l, s in zip(lo, sides)])
    return math.fsum(f(c) for c in cells) / math.prod(sides)


def brute_sharp(f: LatticeFunction, base, x: Sequence[int]) -> float:
    """max over refined atoms R containing x of min_a avg_R |f - a|, scanning every a in f(R)."""
    best = 0.0
    for j in range(base.refined_levels + 1):
        sides = base.atom_sides(refined=j)
        if math.prod(sides) == 1:
            continue
        lo = [(xi // s) * s for xi, s in zip(x, sides)]
        vals = [f(c) for c in itertools.product(*[range(l, l + s) for l, s in zip(lo, sides)])]
        osc = min(math.fsum(abs(v - a) for v in vals) for a in vals) / len(vals)
        best = max(best, osc)
    return best


def brute_long_scale(f: LatticeFunction, fam, k: int, x: Sequence[int]) -> float:
    """max_{t in block k} |A_t f(x) - E_k f(x)| from naive sums."""
    ek = brute_atom_mean(f, x, fam.base.atom_sides(k))
    best = 0.0
    for t in fam.block(k):
        pts = as_pointset(fam.set(t)).points()
        at = math.fsum(f(tuple(xi - mi for xi, mi in zip(x, m))) for m in pts) / len(pts)
        best = max(best, abs(at - ek))
    return best


def cube_scan_ap(w: LatticeFunction, p: float, max_side: int | None = None) -> float:
    """max over every cube inside box(w) of avg(w) * avg(w^(1/(1-p)))^(p-1), by enumeration."""
    box = w.box
    v = w.values
    n = min(box.shape) if max_side is None else min(max_side, min(box.shape))
    best = 0.0
    for s in range(1, n + 1):
        for y in itertools.product(*[range(0, m - s + 1) for m in box.shape]):
            sl = tuple(slice(yi, yi + s) for yi in y)
            cube = v[sl].ravel()
            a = math.fsum(cube) / cube.size
            b = math.fsum(cube ** (1.0 / (1.0 - p))) / cube.size
            best = max(best, a * b ** (p - 1.0))
    return best


def brute_a1(w: LatticeFunction) -> float:
    """max over cubes Q inside box(w) of avg_Q w / min_Q w."""
    v = w.values
    best = 0.0
    for s in range(1, min(v.shape) + 1):
        for y in itertools.product(*[range(0, m - s + 1) for m in v.shape]):
            cube = v[tuple(slice(yi, yi + s) for yi in y)]
            best = max(best, math.fsum(cube.ravel()) / cube.size / float(cube.min()))
    return best


def brute_cz(f: LatticeFunction, lam: float, chain: Sequence[Sequence[int]]) -> list[Rectangle]:
    """Selected cubes of the coarsest-first stopping time, by explicit recursion over atoms."""
    top = [1 << a for a in chain[-1]]
    box = f.box.align(top)
    out: list[Rectangle] = []

    def visit(level: int, lo: tuple[int, ...]):
        sides = [1 << a for a in chain[level]]
        R = Rectangle(lo, tuple(l + s for l, s in zip(lo, sides)))
        total = math.fsum(f(p) for p in R.points())
        if total > lam * R.size:
            out.append(R)
            return
        if level == 0:
            return
        child = [1 << a for a in chain[level - 1]]
        for off in itertools.product(*[range(0, s, c) for s, c in zip(sides, child)]):
            visit(level - 1, tuple(l + o for l, o in zip(lo, off)))

    for lo in itertools.product(*[range(l, h, s) for l, h, s in zip(box.lo, box.hi, top)]):
        visit(len(chain) - 1, lo)
    return out
