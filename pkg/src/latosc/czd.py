"""Calderon-Zygmund decomposition along the refined dyadic filtration, plus the fibred split.

The stopping time walks the refined chain from the coarsest atoms to single
points and selects every maximal atom whose average exceeds height * lambda.
Means f_P are kept as exact rationals so the cancellation of each bad part is
checkable without rounding.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import _kernels
from .families import AveragingFamily, DyadicRectangleFamily
from .lattice import LatticeFunction, PointSet, Rectangle, hull_all, read_latfn, write_latfn
from .operators import _blocked, maximal


def exact_sum(values: np.ndarray) -> Fraction:
    """Exact rational sum of a float array (every double is an integer times a power of 2)."""
    v = np.asarray(values, dtype=np.float64).ravel()
    v = v[v != 0]
    if v.size == 0:
        return Fraction(0)
    if not np.all(np.isfinite(v)):
        raise ValueError("exact_sum needs finite values")
    mant, ex = np.frexp(v)
    m = np.ldexp(mant, 53).astype(np.int64)
    ex = ex.astype(np.int64) - 53
    emin = int(ex.min())
    total = 0
    # split 53-bit mantissas so per-exponent int64 sums cannot overflow
    hi = m >> 26
    lo = m - (hi << 26)
    for e in np.unique(ex):
        sel = ex == e
        part = (int(hi[sel].sum()) << 26) + int(lo[sel].sum())
        total += part << int(e - emin)
    return Fraction(total, 1) * Fraction(2) ** emin


def stopping_chain(base: DyadicRectangleFamily, top_mass: float = 0.0, threshold: float = 1.0) -> list[tuple[int, ...]]:
    """Exponent rows from single points up to the coarsest atoms, one axis step at a time.

    Below the first level the chain is extended down to points; above the last
    level it keeps growing (smallest exponent first) until an atom holding the
    whole mass `top_mass` has average <= threshold.
    """
    first = list(base.refined[0])
    down = []
    cur = first[:]
    while any(cur):
        axis = max(range(len(cur)), key=lambda i: (cur[i], i))
        cur[axis] -= 1
        down.append(tuple(cur))
    chain = down[::-1] + list(base.refined)
    cur = list(chain[-1])
    while top_mass > threshold * 2.0 ** sum(cur):
        axis = min(range(len(cur)), key=lambda i: (cur[i], i))
        cur[axis] += 1
        chain.append(tuple(cur))
    return chain


@dataclass
class BadPart:
    cube: Rectangle
    level: int           # index into the stopping chain
    group: int           # first base level k whose atoms contain the cube (levels + 1 if none)
    numerator: Fraction  # exact sum of f over the cube
    denominator: int     # |cube|
    b: LatticeFunction
    b0: LatticeFunction | None = None
    b1: LatticeFunction | None = None

    @property
    def mean(self) -> Fraction:
        return self.numerator / self.denominator


@dataclass
class CZDecomposition:
    altitude: float
    height: float
    dilation: int
    chain: list[tuple[int, ...]]
    box: Rectangle
    good: LatticeFunction
    bad_parts: list[BadPart]
    exceptional: PointSet | None
    C_g: float
    C_b: float
    fibred_axis: int | None = None
    fibred_constant: float | None = None
    trace: list[str] = field(default_factory=list)

    def groups(self) -> dict[int, list[Rectangle]]:
        out: dict[int, list[Rectangle]] = {}
        for bp in self.bad_parts:
            out.setdefault(bp.group, []).append(bp.cube)
        return out

    def bad_sum(self) -> LatticeFunction:
        acc = np.zeros(self.box.shape)
        for bp in self.bad_parts:
            acc[bp.cube.slices(self.box)] += bp.b.values
        return LatticeFunction(acc, self.box.lo)


def exceptional_set(cubes: Sequence[Rectangle], dilation: int) -> PointSet | None:
    """Union of the concentric dilates of the selected cubes."""
    if not cubes:
        return None
    dil = [c.dilate(dilation) for c in cubes]
    hull = hull_all(dil)
    mask = np.zeros(hull.shape, dtype=bool)
    for r in dil:
        mask[r.slices(hull)] = True
    return PointSet(mask, hull.lo)


def _group_of(base: DyadicRectangleFamily, exps: Sequence[int]) -> int:
    for k in range(base.levels + 1):
        if all(e <= a for e, a in zip(exps, base.a(k))):
            return k
    return base.levels + 1


def cz_decompose(f: LatticeFunction, lam: float, fam, height: float = 1.0, dilation: int = 10) -> CZDecomposition:
    """Stopping-time decomposition f = g + sum_P b_P at altitude lam (threshold height * lam)."""
    base = fam.base if isinstance(fam, AveragingFamily) else fam
    if not lam > 0:
        raise ValueError(f"altitude must be > 0, got {lam}")
    if not height > 0:
        raise ValueError(f"height must be > 0, got {height}")
    if np.any(f.values < 0):
        raise ValueError("cz_decompose needs f >= 0")
    thr = height * lam
    thr_exact = Fraction(height) * Fraction(lam)
    mass = float(exact_sum(f.values))
    chain = stopping_chain(base, mass, thr)
    top = tuple(1 << a for a in chain[-1])
    box = f.box.align(top)
    v = f.on_box(box)
    covered = np.zeros(box.shape, dtype=bool)
    good = v.copy()
    parts: list[BadPart] = []
    trace = []
    for level in range(len(chain) - 1, -1, -1):
        exps = chain[level]
        sides = tuple(1 << a for a in exps)
        vol = math.prod(sides)
        rows, grid = _blocked(v, sides)
        crow, _ = _blocked(covered, sides)
        sums = _kernels.dd_row_sums(rows)
        cand = ~crow[:, 0] & (sums >= thr * vol * (1 - 1e-9))
        for idx in np.flatnonzero(cand):
            num = exact_sum(rows[idx])
            if not num > thr_exact * vol:
                continue
            pos = np.unravel_index(idx, grid)
            lo = tuple(b + p * s for b, p, s in zip(box.lo, pos, sides))
            P = Rectangle(lo, tuple(a + s for a, s in zip(lo, sides)))
            sl = P.slices(box)
            mean = num / vol
            fp = float(mean)
            covered[sl] = True
            good[sl] = fp
            b = LatticeFunction(v[sl] - fp, P.lo)
            parts.append(BadPart(P, level, _group_of(base, exps), num, vol, b))
            trace.append(f"level {level} sides {sides}: select {P.lo}..{P.hi} mean {mean}")
    X = exceptional_set([bp.cube for bp in parts], dilation)
    return CZDecomposition(lam, height, dilation, chain, box, LatticeFunction(good, box.lo), parts, X,
                           2.0 * height, 4.0 * height, trace=trace)


def fibred_parts(b: np.ndarray, axis: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """(b - m, m) with m the average of b along `axis`, broadcast back over that axis."""
    col = np.mean(b, axis=axis, keepdims=True)
    b1 = np.broadcast_to(col, b.shape).copy()
    return b - b1, b1


def fibred_split(dec: CZDecomposition, axis: int = 0) -> CZDecomposition:
    """b_P = b0_P + b1_P with b1_P = 1_I (x) (average of b_P over I along `axis`), I the side of P on that axis."""
    if dec.box.dim < 2:
        raise ValueError("fibred split needs d >= 2")
    if not 0 <= axis < dec.box.dim:
        raise ValueError(f"axis {axis} outside 0..{dec.box.dim - 1}")
    parts = []
    worst = 0.0
    for bp in dec.bad_parts:
        b = bp.b.values
        b0, b1 = fibred_parts(b, axis)
        n = float(np.abs(b).sum())
        if n > 0:
            worst = max(worst, float(np.abs(b0).sum() + np.abs(b1).sum()) / n)
        parts.append(BadPart(bp.cube, bp.level, bp.group, bp.numerator, bp.denominator, bp.b,
                             LatticeFunction(b0, bp.cube.lo), LatticeFunction(b1, bp.cube.lo)))
    out = CZDecomposition(**{**dec.__dict__, "bad_parts": parts})
    out.fibred_axis = axis
    out.fibred_constant = worst
    return out


def _fibre_sums_rel(a: np.ndarray, axis: int, scale: float) -> float:
    moved = np.moveaxis(a, axis, -1)
    rows = np.ascontiguousarray(moved).reshape(-1, moved.shape[-1])
    s = np.array([math.fsum(r) for r in rows])
    return float(np.max(np.abs(s))) / scale if scale > 0 else 0.0


def check_invariants(dec: CZDecomposition, f: LatticeFunction, tol: float = 1e-12) -> dict[str, bool]:
    """Every structural guarantee of the decomposition, evaluated on f."""
    box = dec.box
    v = f.on_box(box)
    thr = dec.height * dec.altitude
    out = {}
    rec = dec.good.values + dec.bad_sum().values
    mag = np.maximum(np.abs(v), np.abs(dec.good.values))
    out["reconstruction"] = bool(np.all(np.abs(rec - v) <= 4 * np.spacing(mag)))
    out["good_sup"] = float(np.max(np.abs(dec.good.values), initial=0.0)) <= dec.C_g * dec.altitude
    out["good_l1"] = math.fsum(np.abs(dec.good.values).ravel()) <= math.fsum(np.abs(v).ravel()) * (1 + 1e-12)
    supp = moment = bl1 = True
    for bp in dec.bad_parts:
        supp &= bp.b.box == bp.cube
        exact = exact_sum(f.on_box(bp.cube)) - bp.denominator * bp.mean
        scale = math.fsum(np.abs(bp.b.values).ravel()) + 1e-300
        moment &= exact == 0 and abs(math.fsum(bp.b.values.ravel())) <= tol * max(scale, float(bp.numerator))
        bl1 &= math.fsum(np.abs(bp.b.values).ravel()) <= dec.C_b * dec.altitude * bp.denominator
    out["support"] = bool(supp)
    out["moment"] = bool(moment)
    out["bad_l1"] = bool(bl1)
    total = sum(bp.denominator for bp in dec.bad_parts)
    out["total_measure"] = total * thr <= float(exact_sum(v)) * (1 + 1e-12)
    disjoint = np.zeros(box.shape, dtype=np.int64)
    for bp in dec.bad_parts:
        disjoint[bp.cube.slices(box)] += 1
    out["disjoint"] = bool(np.all(disjoint <= 1))
    if dec.fibred_axis is not None:
        fib = True
        ax = dec.fibred_axis
        others = tuple(i for i in range(box.dim) if i != ax)
        for bp in dec.bad_parts:
            scale = float(np.abs(bp.b.values).sum()) or 1.0
            fib &= np.allclose(bp.b0.values + bp.b1.values, bp.b.values, rtol=0, atol=4 * np.spacing(scale))
            fib &= _fibre_sums_rel(bp.b0.values, ax, scale) <= tol
            # the other moment: sum over x' of b1 at fixed x_1
            b1 = np.moveaxis(bp.b1.values, ax, 0).reshape(bp.b1.values.shape[ax], -1)
            fib &= max(abs(math.fsum(r)) for r in b1) / scale <= tol if others else True
        out["fibred"] = bool(fib)
    return out


def exceptional_constant(dec: CZDecomposition, f: LatticeFunction) -> tuple[float, float]:
    """(measured, bound) for X within {M_HL f > lambda / C}: measured = lambda / min_X M_HL f,
    bound = max over P of |Q|/|P| with Q the cube of side dilation * max side containing dilated P."""
    if dec.exceptional is None:
        return 0.0, 0.0
    X = dec.exceptional
    m = maximal("HL", f, out_box=X.bbox)
    vals = m.values[X.mask]
    measured = dec.altitude / float(vals.min())
    bound = max((dec.dilation * max(bp.cube.shape)) ** bp.cube.dim / bp.denominator for bp in dec.bad_parts)
    return measured, float(bound)


# ------------------------------------------------------------------- dumps

def dump_decomposition(dec: CZDecomposition, directory) -> str:
    """Write g.latfn, one b_<i>.latfn per cube and a manifest; returns the manifest path."""
    os.makedirs(directory, exist_ok=True)
    write_latfn(dec.good, os.path.join(directory, "g.latfn"))
    lines = ["czd v1", f"altitude {dec.altitude!r}", f"height {dec.height!r}", f"dilation {dec.dilation}",
             f"cubes {len(dec.bad_parts)}"]
    for i, bp in enumerate(dec.bad_parts):
        name = f"b_{i}.latfn"
        write_latfn(bp.b, os.path.join(directory, name))
        lo = ",".join(map(str, bp.cube.lo))
        hi = ",".join(map(str, bp.cube.hi))
        lines.append(f"{lo} {hi} {bp.level} {bp.group} {bp.numerator.numerator}/{bp.numerator.denominator} "
                     f"{bp.denominator} {name}")
    path = os.path.join(directory, "manifest.txt")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def load_decomposition(directory, fam) -> CZDecomposition:
    """Inverse of dump_decomposition (chain and exceptional set are recomputed)."""
    base = fam.base if isinstance(fam, AveragingFamily) else fam
    with open(os.path.join(directory, "manifest.txt")) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "czd v1":
        raise ValueError("manifest line 1: expected 'czd v1'")
    lam = float(lines[1].split()[1])
    height = float(lines[2].split()[1])
    dilation = int(lines[3].split()[1])
    good = read_latfn(os.path.join(directory, "g.latfn"))
    parts = []
    for ln, line in enumerate(lines[5:], start=6):
        try:
            lo, hi, level, group, num, den, name = line.split()
            cube = Rectangle(tuple(map(int, lo.split(","))), tuple(map(int, hi.split(","))))
            parts.append(BadPart(cube, int(level), int(group), Fraction(num), int(den),
                                 read_latfn(os.path.join(directory, name))))
        except (ValueError, OSError) as exc:
            raise ValueError(f"manifest line {ln}: {exc}") from None
    X = exceptional_set([bp.cube for bp in parts], dilation)
    mass = float(exact_sum(good.values))
    return CZDecomposition(lam, height, dilation, stopping_chain(base, mass, height * lam), good.box, good, parts,
                           X, 2.0 * height, 4.0 * height)
