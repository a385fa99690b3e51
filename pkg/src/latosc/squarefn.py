"""Square functions (long, short, shifted, discretized, rectangular) and the sequence functionals
variation, jump count and oscillation.

All per-scale fields of one call live on a common box, chosen so that it holds
the whole support of every field (see `computation_box`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .families import AveragingFamily
from .lattice import LatticeFunction, Rectangle, SummedAreaTable, box_max_filter
from .operators import FamilyAverager, _unblocked, atom_means

VARIANTS = ("LONG", "SHORT", "SHIFTED_LONG", "SHIFTED_SHORT", "DISC_D", "DISC_d", "RECT_LONG", "RECT_SHORT", "CONSEC")


@dataclass
class SquareFunctionOutput:
    variant: str
    per_scale: list[LatticeFunction]
    aggregate: LatticeFunction
    scales: list[int] = field(default_factory=list)

    @property
    def box(self) -> Rectangle:
        return self.aggregate.box


@dataclass
class SampleSequence:
    values: np.ndarray
    point: tuple[int, ...] | None = None
    t_range: tuple[int, ...] | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).ravel()
        if v.size < 1:
            raise ValueError("sample sequence needs at least one value")
        if not np.all(np.isfinite(v)):
            raise ValueError("sample values must be finite")
        self.values = v


def _as_values(seq) -> np.ndarray:
    return seq.values if isinstance(seq, SampleSequence) else SampleSequence(seq).values


def aggregate(fields: Sequence[np.ndarray]) -> np.ndarray:
    """l2 sum over scales, accumulated in extended precision."""
    acc = np.zeros(fields[0].shape, dtype=np.longdouble)
    for v in fields:
        acc += np.asarray(v, dtype=np.longdouble) ** 2
    return np.sqrt(acc).astype(np.float64)


def _output(variant, fields, box, scales) -> SquareFunctionOutput:
    per = [LatticeFunction(v, box.lo) for v in fields]
    return SquareFunctionOutput(variant, per, LatticeFunction(aggregate(fields), box.lo), list(scales))


# ------------------------------------------------------------ computation box

def computation_box(f_box: Rectangle, fam: AveragingFamily, stage: str = "unshifted") -> Rectangle:
    """Box holding the full support of the requested stage, aligned to the top atoms.

    unshifted: box(f) + extent of the sets, rounded out to atoms;
    shifted:   additionally - H_K (the sup over v in H_k looks ahead);
    discrete:  additionally one top atom per side (the 3Q dilates).
    """
    base = fam.base
    top = base.atom_sides(max(fam.classes))
    box = f_box.minkowski(fam.extent()).align(top)
    if stage == "unshifted":
        return box
    box = box.minkowski(base.H(max(fam.classes)).reflect()).align(top)
    if stage == "shifted":
        return box
    if stage == "discrete":
        return box.pad(top)
    raise ValueError(f"unknown stage {stage!r}")


# ---------------------------------------------------------------- long/short

def _per_scale_long(f, fam, box):
    av = FamilyAverager(f, fam, box)
    v = f.on_box(box)
    fields, scales = [], []
    for k in fam.classes:
        Ek = atom_means(v, fam.base.atom_sides(k))
        S = np.zeros(box.shape)
        for t in fam.block(k):
            np.maximum(S, np.abs(av.average(t) - Ek), out=S)
        fields.append(S)
        scales.append(k)
    return fields, scales


def _per_scale_short(f, fam, box, prune=False):
    av = FamilyAverager(f, fam, box)
    fields, scales = [], []
    for k in fam.classes:
        ts = fam.block(k)
        stack = av.stack(ts).reshape(len(ts), -1).T.copy()
        kern = _kernels.chain_power_rows_pruned if prune else _kernels.chain_power_rows
        fields.append(np.sqrt(kern(stack, 2.0)).reshape(box.shape))
        scales.append(k)
    return fields, scales


def long_sf(f: LatticeFunction, fam: AveragingFamily, box: Rectangle | None = None) -> SquareFunctionOutput:
    """S^L_k f(x) = max_{t in block k} |A_t f(x) - E_k f(x)|."""
    box = box or computation_box(f.box, fam)
    fields, scales = _per_scale_long(f, fam, box)
    return _output("LONG", fields, box, scales)


def short_sf(f: LatticeFunction, fam: AveragingFamily, box: Rectangle | None = None, prune: bool = False) -> SquareFunctionOutput:
    """S^S_k f(x)^2 = max over increasing t-chains in block k of the summed squared jumps."""
    box = box or computation_box(f.box, fam)
    fields, scales = _per_scale_short(f, fam, box, prune)
    return _output("SHORT", fields, box, scales)


def shift_fields(fields: Sequence[np.ndarray], fam: AveragingFamily, scales: Sequence[int]) -> list[np.ndarray]:
    """Max-filter each per-scale field over v in H_k: window [x - 2^a, x + 2^a - 1] per axis."""
    out = []
    for S, k in zip(fields, scales):
        a = fam.base.a(k)
        out.append(box_max_filter(S, [1 << ai for ai in a], [(1 << ai) - 1 for ai in a], fill=0.0))
    return out


def shifted_sf(variant: str, f: LatticeFunction, fam: AveragingFamily, box: Rectangle | None = None,
               prune: bool = False) -> SquareFunctionOutput:
    """S~_k f(x) = sup_{v in H_k} S_k f(x + v) for variant LONG or SHORT."""
    variant = variant.upper().replace("SHIFTED_", "")
    if variant not in ("LONG", "SHORT"):
        raise ValueError(f"shifted variant must be LONG or SHORT, got {variant!r}")
    box = box or computation_box(f.box, fam, "shifted")
    if variant == "LONG":
        fields, scales = _per_scale_long(f, fam, box)
    else:
        fields, scales = _per_scale_short(f, fam, box, prune)
    return _output("SHIFTED_" + variant, shift_fields(fields, fam, scales), box, scales)


def discretize(shifted: SquareFunctionOutput, fam: AveragingFamily, which: str) -> SquareFunctionOutput:
    """Sample each S~_k at atom centers x_Q; spread over Q (d) or sum over the dilates 3Q (D)."""
    if which not in ("D", "d"):
        raise ValueError(f"which must be 'D' or 'd', got {which!r}")
    box = shifted.box
    fields = []
    for S, k in zip(shifted.per_scale, shifted.scales):
        sides = fam.base.atom_sides(k)
        if box.align(sides) != box:
            raise ValueError(f"box {box} is not aligned to the scale-{k} atoms")
        v = S.values[tuple(slice(s // 2, None, s) for s in sides)]
        if which == "D":
            padded = np.pad(v, 1)
            acc = np.zeros_like(v)
            for shift in np.ndindex(*([3] * v.ndim)):
                acc += padded[tuple(slice(c, c + n) for c, n in zip(shift, v.shape))]
            v = acc
        fields.append(_unblocked(v.ravel(), v.shape, sides))
    return _output("DISC_" + which, fields, box, shifted.scales)


def discretized_sf(which: str, f: LatticeFunction, fam: AveragingFamily, variant: str = "LONG",
                   box: Rectangle | None = None, prune: bool = False) -> SquareFunctionOutput:
    """S_D (sum over 3Q) or S_d (constant on Q) built from the shifted per-scale fields."""
    box = box or computation_box(f.box, fam, "discrete")
    return discretize(shifted_sf(variant, f, fam, box, prune), fam, which)


# -------------------------------------------------------------- rectangular

def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def rect_sf(which: str, f: LatticeFunction, rects: Sequence[Rectangle], box: Rectangle | None = None,
            blocks: Sequence[Rectangle] | None = None) -> SquareFunctionOutput:
    """Square functions over a nested list of rectangles.

    LONG and CONSEC: (sum_i |A_i f - A_(i+1) f|^2)^(1/2) over consecutive pairs
    (LONG additionally requires dyadic side lengths). SHORT: rectangles are grouped
    into blocks (the first H in `blocks` containing them; default: symmetric dyadic
    cubes) and each block contributes its sup over increasing sub-chains.
    """
    which = which.upper()
    if which not in ("LONG", "SHORT", "CONSEC"):
        raise ValueError(f"which must be LONG, SHORT or CONSEC, got {which!r}")
    rects = list(rects)
    if len(rects) < 2:
        raise ValueError("need at least two rectangles")
    for i, (a, b) in enumerate(zip(rects, rects[1:])):
        if not b.contains_rect(a):
            raise ValueError(f"rectangles not nested at position {i}: {a} not inside {b}")
    if which in ("LONG", "SHORT") and not all(_is_pow2(n) for r in rects for n in r.shape):
        raise ValueError("LONG and SHORT need dyadic side lengths; use CONSEC for general nestings")
    box = box or f.box.minkowski(rects[-1])
    table = SummedAreaTable.of(f)
    avgs = [table.window_sums(r, box) / r.size for r in rects]
    if which in ("LONG", "CONSEC"):
        fields = [np.abs(a - b) for a, b in zip(avgs, avgs[1:])]
        return _output("RECT_LONG" if which == "LONG" else "CONSEC", fields, box, range(len(fields)))
    if blocks is None:
        def level(r):
            return max(max(-lo, hi) for lo, hi in zip(r.lo, r.hi)).bit_length()
        keys = [level(r) for r in rects]
    else:
        keys = [next((i for i, H in enumerate(blocks) if H.contains_rect(r)), len(blocks)) for r in rects]
    fields, scales = [], []
    for key in sorted(set(keys)):
        idx = [i for i, kk in enumerate(keys) if kk == key]
        stack = np.stack([avgs[i].ravel() for i in idx], axis=1)
        fields.append(np.sqrt(_kernels.chain_power_rows(np.ascontiguousarray(stack), 2.0)).reshape(box.shape))
        scales.append(key)
    return _output("RECT_SHORT", fields, box, scales)


# --------------------------------------------------- sequence functionals

def variation(seq, s: float) -> float:
    """sup over increasing index chains of (sum |a_(i_k) - a_(i_(k+1))|^s)^(1/s)."""
    s = float(s)
    if not s >= 1.0:
        raise ValueError(f"s must be >= 1, got {s}")
    v = _as_values(seq)
    return float(_kernels.chain_power_rows(v[None, :].copy(), s)[0] ** (1.0 / s))


def jump_count(seq, lam: float) -> int:
    """Longest chain i_1 < ... < i_N with all consecutive differences > lam (N >= 1)."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    v = _as_values(seq)
    return int(_kernels.jump_rows(v[None, :].copy(), float(lam))[0])


def _sample_box(f: LatticeFunction, fam: AveragingFamily) -> Rectangle:
    return f.box.minkowski(fam.extent())


def sample_matrix(f: LatticeFunction, fam: AveragingFamily, box: Rectangle, ts: Sequence[int] | None = None) -> np.ndarray:
    """(points, len(ts)) matrix of A_t f(x), row-major over the box."""
    ts = list(fam.ts if ts is None else ts)
    av = FamilyAverager(f, fam, box)
    return np.ascontiguousarray(av.stack(ts).reshape(len(ts), -1).T)


def sample_sequence(f: LatticeFunction, fam: AveragingFamily, x: Sequence[int], ts: Sequence[int] | None = None) -> SampleSequence:
    ts = tuple(fam.ts if ts is None else ts)
    pt = Rectangle(tuple(x), tuple(c + 1 for c in x))
    return SampleSequence(sample_matrix(f, fam, pt, ts)[0], tuple(x), ts)


def variation_field(f: LatticeFunction, fam: AveragingFamily, s: float, box: Rectangle | None = None,
                    ts: Sequence[int] | None = None, prune: bool = True) -> LatticeFunction:
    """x -> V^s of (A_t f(x))_t over all graded t (or the given ts).

    prune=True runs the DP on the turning points of each sequence only (same
    value in exact arithmetic, last-bit differences possible).
    """
    s = float(s)
    if not s >= 1.0:
        raise ValueError(f"s must be >= 1, got {s}")
    box = box or _sample_box(f, fam)
    mat = sample_matrix(f, fam, box, ts)
    kern = _kernels.chain_power_rows_pruned if prune else _kernels.chain_power_rows
    return LatticeFunction((kern(mat, s) ** (1.0 / s)).reshape(box.shape), box.lo)


def jump_field(f: LatticeFunction, fam: AveragingFamily, lam: float, box: Rectangle | None = None,
               ts: Sequence[int] | None = None) -> LatticeFunction:
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    box = box or _sample_box(f, fam)
    mat = sample_matrix(f, fam, box, ts)
    return LatticeFunction(_kernels.jump_rows(mat, float(lam)).reshape(box.shape).astype(float), box.lo)


def oscillation(f: LatticeFunction, fam: AveragingFamily, indices: Sequence[int], box: Rectangle | None = None) -> LatticeFunction:
    """(sum_k max_{i_k < i <= i_(k+1)} |A_(i_k) f - A_i f|^2)^(1/2)."""
    idx = [int(i) for i in indices]
    if len(idx) < 2:
        raise ValueError("oscillation needs at least two indices")
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise ValueError("oscillation indices must be strictly increasing")
    for i in range(idx[0], idx[-1] + 1):
        fam.set(i)
    box = box or _sample_box(f, fam)
    av = FamilyAverager(f, fam, box)
    terms = []
    for a, b in zip(idx, idx[1:]):
        anchor = av.average(a)
        best = np.zeros(box.shape)
        for i in range(a + 1, b + 1):
            np.maximum(best, np.abs(anchor - av.average(i)), out=best)
        terms.append(best)
    return LatticeFunction(aggregate(terms), box.lo)
