"""Averages A_t, conditional expectations E_k, martingale differences and maximal operators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .families import AveragingFamily, DyadicRectangleFamily
from .lattice import LatticeFunction, Rectangle, SummedAreaTable, rect_average, sliding_max


def _base(fam) -> DyadicRectangleFamily:
    return fam.base if isinstance(fam, AveragingFamily) else fam


# ----------------------------------------------------------------- averages

def family_average(f: LatticeFunction, fam: AveragingFamily, t: int, out_box: Rectangle | None = None) -> LatticeFunction:
    """A_t f = chi_t * f, the normalized sum of f over x - E_t."""
    return rect_average(f, fam.set(t), out_box)


class FamilyAverager:
    """Reuses one summed-area table of f for many A_t evaluations on a fixed box."""

    def __init__(self, f: LatticeFunction, fam: AveragingFamily, box: Rectangle):
        self.f = f
        self.fam = fam
        self.box = box
        self.table = SummedAreaTable.of(f)

    def average(self, t: int) -> np.ndarray:
        E = self.fam.set(t)
        return self.table.set_sums(E, self.box) / E.size

    def stack(self, ts: Sequence[int]) -> np.ndarray:
        """Array of shape (len(ts),) + box.shape."""
        return np.stack([self.average(t) for t in ts])


# ------------------------------------------------------ conditional expectation

def _blocked(values: np.ndarray, sides: Sequence[int]) -> tuple[np.ndarray, tuple[int, ...]]:
    """Rearrange an aligned array into (atoms, cells) rows; returns rows and the atom-grid shape."""
    grid = tuple(n // s for n, s in zip(values.shape, sides))
    inter = []
    for g, s in zip(grid, sides):
        inter += [g, s]
    d = len(sides)
    v = values.reshape(inter).transpose(list(range(0, 2 * d, 2)) + list(range(1, 2 * d, 2)))
    return np.ascontiguousarray(v).reshape(math.prod(grid), math.prod(sides)), grid


def _unblocked(per_atom: np.ndarray, grid: Sequence[int], sides: Sequence[int]) -> np.ndarray:
    """Broadcast per-atom values back to the point grid."""
    out = per_atom.reshape(grid)
    for ax, s in enumerate(sides):
        out = np.repeat(out, s, axis=ax)
    return out


def atom_means(values: np.ndarray, sides: Sequence[int]) -> np.ndarray:
    """Per-atom averages (double-double sums) broadcast to every point; `values` must be aligned."""
    rows, grid = _blocked(values, sides)
    means = _kernels.dd_row_sums(rows) / rows.shape[1]
    return _unblocked(means, grid, sides)


def expectation_box(box: Rectangle, sides: Sequence[int]) -> Rectangle:
    return box.align(sides)


def martingale_expectation(f: LatticeFunction, fam, level: int | None = None, refined: int | None = None,
                           box: Rectangle | None = None) -> LatticeFunction:
    """E_k f (or E'_j f): on each atom Q the output is the average of f over Q.

    The output lives on the atom-aligned hull of box(f) (or of the given box);
    every atom outside it has zero average.
    """
    base = _base(fam)
    if (level is None) == (refined is None):
        raise ValueError("give exactly one of level / refined")
    if level is not None and not 0 <= level <= base.levels:
        raise ValueError(f"level {level} outside 0..{base.levels}")
    if refined is not None and not 0 <= refined <= base.refined_levels:
        raise ValueError(f"refined level {refined} outside 0..{base.refined_levels}")
    sides = base.atom_sides(level, refined)
    out_box = (box or f.box).hull(f.box).align(sides)
    return LatticeFunction(atom_means(f.on_box(out_box), sides), out_box.lo)


@dataclass
class MartingaleDecomposition:
    """f = sum_k d_k + tail with d_k = E_(k-1) f - E_k f (E_0 read as the identity) and tail = E_K f."""

    base: DyadicRectangleFamily
    depth: int
    differences: list[LatticeFunction]
    tail: LatticeFunction

    def reconstruct(self) -> LatticeFunction:
        out = self.tail
        for d in self.differences:
            out = out + d
        return out


def martingale_decompose(f: LatticeFunction, fam, depth: int) -> MartingaleDecomposition:
    base = _base(fam)
    if not 1 <= depth <= base.levels:
        raise ValueError(f"depth {depth} outside 1..{base.levels}")
    box = f.box.align(base.atom_sides(depth))
    v = f.on_box(box)
    prev = v
    diffs = []
    for k in range(1, depth + 1):
        cur = atom_means(v, base.atom_sides(k))
        diffs.append(LatticeFunction(prev - cur, box.lo))
        prev = cur
    return MartingaleDecomposition(base, depth, diffs, LatticeFunction(prev, box.lo))


# ------------------------------------------------------------------ maximal

MAXIMAL_KINDS = ("HL", "HL_t", "FAMILY", "REFINED", "MARTINGALE", "SHARP", "FIBRED_1", "FIBRED_PERP")


def uncentered_box_max(f: LatticeFunction, side_list: Sequence[Sequence[int]], out_box: Rectangle,
                       within: Rectangle | None = None, table: SummedAreaTable | None = None) -> np.ndarray:
    """x -> max over the given side vectors s and all boxes y + prod[0, s_i) containing x of avg |f|.

    Per side vector: box sums at every anchor y whose box meets out_box, then a
    separable sliding maximum of width s_i along each axis. With `within`,
    only boxes contained in that rectangle compete.
    """
    if table is None:
        table = SummedAreaTable(np.abs(f.values), f.origin)
    if f.dim == 1 and not table.exact and len(side_list):
        big = np.iinfo(np.int64).max // 4
        wlo, whi = (within.lo[0], within.hi[0]) if within is not None else (-big, big)
        return _kernels.interval_max_1d(table.hi, table.lo, table.origin[0],
                                        np.array([int(s[0]) for s in side_list], np.int64),
                                        out_box.lo[0], out_box.shape[0], wlo, whi)
    out = np.zeros(out_box.shape)
    for sides in side_list:
        sides = tuple(int(s) for s in sides)
        ybox = Rectangle(tuple(a - s + 1 for a, s in zip(out_box.lo, sides)), out_box.hi)
        E = Rectangle(tuple(1 - s for s in sides), (1,) * len(sides))
        avg = table.window_sums(E, ybox) / math.prod(sides)
        if within is not None:
            ok = np.ones(ybox.shape, dtype=bool)
            for ax, (ylo, s, wlo, whi) in enumerate(zip(ybox.lo, sides, within.lo, within.hi)):
                y = np.arange(ylo, ylo + ybox.shape[ax])
                shape = [1] * len(sides)
                shape[ax] = -1
                ok &= ((y >= wlo) & (y + s <= whi)).reshape(shape)
            avg = np.where(ok, avg, -np.inf)
        for ax, s in enumerate(sides):
            avg = sliding_max(avg, s, ax)
        out = np.maximum(out, avg)
    return out


def _refined_block_stats(values: np.ndarray, base: DyadicRectangleFamily):
    """Yield (j, sides, rows, grid) for every refined level on an aligned array."""
    for j in range(base.refined_levels + 1):
        sides = base.atom_sides(refined=j)
        rows, grid = _blocked(values, sides)
        yield j, sides, rows, grid


def martingale_maximal(f: LatticeFunction, base: DyadicRectangleFamily, box: Rectangle) -> np.ndarray:
    """sup over refined j of |E'_j f|, together with |f| itself; box must be top-aligned."""
    v = f.on_box(box)
    out = np.abs(v)
    for j, sides, rows, grid in _refined_block_stats(v, base):
        means = _kernels.dd_row_sums(rows) / rows.shape[1]
        out = np.maximum(out, _unblocked(np.abs(means), grid, sides))
    return out


def lower_median_rows(rows: np.ndarray) -> np.ndarray:
    k = (rows.shape[1] - 1) // 2
    return np.partition(rows, k, axis=1)[:, k]


def sharp_maximal(f: LatticeFunction, base: DyadicRectangleFamily, box: Rectangle) -> np.ndarray:
    """sup over refined atoms R containing x of min_a avg_R |f - a|, realized at the lower median."""
    v = f.on_box(box)
    out = np.zeros(box.shape)
    for j, sides, rows, grid in _refined_block_stats(v, base):
        if rows.shape[1] == 1:
            continue
        med = lower_median_rows(rows)
        osc = _kernels.dd_row_sums(np.abs(rows - med[:, None])) / rows.shape[1]
        out = np.maximum(out, _unblocked(osc, grid, sides))
    return out


def maximal(kind: str, f: LatticeFunction, fam=None, aux: float | None = None,
            out_box: Rectangle | None = None) -> LatticeFunction:
    """Maximal operators evaluated exactly on out_box (default: box of f, atom-aligned for the
    martingale kinds). f is zero outside its stored box, so HL side lengths beyond the
    diameter of box(f) + out_box cannot increase an average and are not scanned."""
    kind = kind.upper() if kind not in ("HL_t",) else kind
    if kind == "HL_T":
        kind = "HL_t"
    if kind not in MAXIMAL_KINDS:
        raise ValueError(f"unknown maximal kind {kind!r}; expected one of {', '.join(MAXIMAL_KINDS)}")
    if kind not in ("HL", "HL_t") and fam is None:
        raise ValueError(f"maximal kind {kind} needs a family")
    base = _base(fam) if fam is not None else None
    box = out_box or f.box
    if kind in ("HL", "HL_t"):
        g = f
        if kind == "HL_t":
            if aux is None or not aux > 1:
                raise ValueError("HL_t needs aux = t > 1")
            g = abs(f) ** float(aux)
        nmax = max(box.hull(f.box).shape)
        vals = uncentered_box_max(g, [(s,) * f.dim for s in range(1, nmax + 1)], box)
        if kind == "HL_t":
            vals = vals ** (1.0 / float(aux))
        return LatticeFunction(vals, box.lo)
    if kind == "FAMILY":
        table = SummedAreaTable(np.abs(f.values), f.origin)
        out = np.zeros(box.shape)
        for k in range(base.levels + 1):
            E = base.H(k).scale(5)
            out = np.maximum(out, table.window_sums(E, box) / E.size)
        return LatticeFunction(out, box.lo)
    if kind == "REFINED":
        sides = [tuple(10 << a for a in base.refined[j]) for j in range(base.refined_levels + 1)]
        return LatticeFunction(uncentered_box_max(f, sides, box), box.lo)
    if kind in ("FIBRED_1", "FIBRED_PERP"):
        if f.dim < 2:
            raise ValueError("fibred maximal functions need d >= 2")
        sides = []
        for k in range(base.levels + 1):
            H = base.H(k).shape
            sides.append((H[0],) + (1,) * (f.dim - 1) if kind == "FIBRED_1" else (1,) + H[1:])
        return LatticeFunction(uncentered_box_max(f, sorted(set(sides)), box), box.lo)
    top = base.atom_sides(refined=base.refined_levels)
    abox = box.hull(f.box).align(top) if out_box is None else box.align(top)
    if kind == "MARTINGALE":
        return LatticeFunction(martingale_maximal(f, base, abox), abox.lo)
    return LatticeFunction(sharp_maximal(f, base, abox), abox.lo)


def refined_to_hl_constant(base: DyadicRectangleFamily) -> float:
    """C with M'f <= C M_HL f: each window 5H'_j sits in a cube of side its longest edge."""
    best = 0.0
    for row in base.refined:
        sides = [10 << a for a in row]
        best = max(best, max(sides) ** len(sides) / math.prod(sides))
    return best


def martingale_to_family_constant(base: DyadicRectangleFamily) -> float:
    """C with (MARTINGALE f) <= C (FAMILY f) pointwise for f >= 0.

    A tau_j atom Q containing x lies in x - 5H_k for the first base level k whose
    exponents dominate those of tau_j, so avg_Q f <= |5H_k| / |Q| (chi_5H_k * f)(x).
    Level j = 0 (the identity term) uses k = 0.
    """
    best = (10 ** base.dim) * 2.0 ** sum(base.a(0)) / 1.0
    for row in base.refined:
        k = next(k for k in range(base.levels + 1) if all(a >= b for a, b in zip(base.a(k), row)))
        best = max(best, (10 ** base.dim) * 2.0 ** (sum(base.a(k)) - sum(row)))
    return best


# --------------------------------------------------------------- good lambda

@dataclass
class GoodLambdaReport:
    lambdas: np.ndarray
    gammas: np.ndarray
    left: np.ndarray
    right: np.ndarray
    ratio: np.ndarray
    constant: float
    violations: int
    worst_ratio: float
    box: Rectangle | None = None
    notes: list[str] = field(default_factory=list)


def good_lambda_check(f: LatticeFunction, fam, lambdas=None, gammas=None, constant: float = 2.0,
                      box: Rectangle | None = None) -> GoodLambdaReport:
    """|{Mf > 2 lam, M#f <= gam lam}| <= constant * gam * |{Mf > lam}| over the grids.

    Both maximal functions use the refined filtration truncated at the family's
    top level; the sets are counted on the top-aligned box holding supp f, outside
    of which both functions vanish. ratio = left / (gam * right), so the claim is
    ratio <= constant. Only lambda >= the largest top-atom average is meaningful: there
    every component of {Mf > lam} is a maximal atom of the truncated filtration, and the
    missing coarser levels could only enlarge M#f (shrinking the left set).
    """
    base = _base(fam)
    if f.support_box() is None:
        raise ValueError("good-lambda check needs a nonzero f")
    top = base.atom_sides(refined=base.refined_levels)
    abox = (box or f.box).hull(f.box).align(top)
    Mf = martingale_maximal(f, base, abox).ravel()
    Sf = sharp_maximal(f, base, abox).ravel()
    top_avg = float(np.abs(martingale_expectation(f, base, refined=base.refined_levels, box=abox).values).max())
    notes = []
    if lambdas is None:
        # below the largest top-atom average the truncated filtration has no maximal atoms and the
        # inequality is not claimed; above max|f|/2 the left set is empty
        lo = max(top_avg, 1e-3 * f.max_abs())
        hi = 0.5 * f.max_abs()
        lambdas = np.geomspace(lo, hi, 12) if lo < hi else np.full(12, lo)
        if lo >= hi:
            notes.append("top-atom average >= max|f|/2: every left set is empty")
    if gammas is None:
        gammas = np.geomspace(1e-3, 0.5, 12)
    lambdas = np.asarray(lambdas, dtype=float)
    gammas = np.asarray(gammas, dtype=float)
    right = np.array([np.count_nonzero(Mf > lam) for lam in lambdas])
    left = np.zeros((lambdas.size, gammas.size), dtype=np.int64)
    for i, lam in enumerate(lambdas):
        big = Mf > 2 * lam
        for j, gam in enumerate(gammas):
            left[i, j] = np.count_nonzero(big & (Sf <= gam * lam))
    denom = gammas[None, :] * right[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(left == 0, 0.0, left / np.where(denom > 0, denom, np.nan))
    ratio = np.where(np.isnan(ratio), np.inf, ratio)
    viol = int(np.count_nonzero(left > constant * denom))
    if np.any(lambdas < top_avg):
        notes.append(f"lambda below the top-atom average {top_avg:.6g}: truncation can break the inequality there")
    return GoodLambdaReport(lambdas, gammas, left, right, ratio, constant, viol, float(ratio.max()), abox, notes)
