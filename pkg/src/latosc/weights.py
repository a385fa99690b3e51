"""Discrete weights on a box: generators and measured A_1 / doubling / A_p constants.

A weight lives on a finite box; every constant is computed from cubes inside
that box, so boundary truncation never enters the measurement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import LatticeFunction, Rectangle, SummedAreaTable, lp_norm
from .operators import maximal, uncentered_box_max


class Weight:
    """Strictly positive LatticeFunction on its box, with lazily cached constants."""

    def __init__(self, w: LatticeFunction, kind: str = "custom", certified_a1: bool = True):
        if np.any(w.values <= 0):
            raise ValueError("weight must be strictly positive on its box")
        self.w = w
        self.kind = kind
        self.certified_a1 = certified_a1
        self._a1 = None
        self._doubling = None
        self._ap: dict[float, float] = {}

    @property
    def box(self) -> Rectangle:
        return self.w.box

    @property
    def a1_constant(self) -> float:
        if self._a1 is None:
            self._a1 = a1_constant(self.w)
        return self._a1

    @property
    def doubling_constant(self) -> float:
        if self._doubling is None:
            self._doubling = doubling_constant(self.w)
        return self._doubling

    def ap_characteristic(self, p: float) -> float:
        p = float(p)
        if p not in self._ap:
            self._ap[p] = ap_characteristic(self.w, p)
        return self._ap[p]


def make_weight(kind: str, box: Rectangle, alpha: float | None = None, g: LatticeFunction | None = None,
                delta: float | None = None) -> Weight:
    """constant: w = 1; power(alpha): w(x) = (1 + |x - c|)^alpha about the box center c;
    coifman_rochberg(g, delta): w = (M_HL g)^delta on the box."""
    if kind == "constant":
        return Weight(LatticeFunction.constant(box, 1.0), "constant")
    if kind == "power":
        if alpha is None:
            raise ValueError("power weight needs alpha")
        c = box.center
        r = np.sqrt(sum((x - ci).astype(float) ** 2 for x, ci in zip(box.grids(), c)))
        ok = -box.dim < alpha <= 0
        return Weight(LatticeFunction((1.0 + r) ** alpha, box.lo), f"power({alpha})", certified_a1=ok)
    if kind == "coifman_rochberg":
        if delta is None or not 0 < delta < 1:
            raise ValueError(f"coifman_rochberg needs 0 < delta < 1, got {delta}")
        if g is None or np.any(g.values < 0) or not np.any(g.values > 0):
            raise ValueError("coifman_rochberg needs g >= 0, not identically zero")
        m = maximal("HL", g, out_box=box).values
        if np.any(m <= 0):
            raise ValueError("M_HL g vanishes somewhere on the box")
        return Weight(LatticeFunction(m ** delta, box.lo), f"coifman_rochberg({delta})")
    raise ValueError(f"unknown weight kind {kind!r}; expected constant, power or coifman_rochberg")


def box_maximal(w: LatticeFunction) -> np.ndarray:
    """Uncentered cubic maximal function over cubes contained in the box of w."""
    box = w.box
    n = min(box.shape)
    return uncentered_box_max(w, [(s,) * w.dim for s in range(1, n + 1)], box, within=box)


def a1_constant(w: LatticeFunction) -> float:
    """max_x M w(x) / w(x) with M over cubes inside the box: the best B in w(Q)/|Q| <= B min_Q w."""
    return float(np.max(box_maximal(w) / w.values))


def _cube_sums(table: SummedAreaTable, box: Rectangle, side: int) -> np.ndarray:
    """Sums over every cube [y, y+side)^d contained in the box, indexed by y - box.lo."""
    ybox = Rectangle(box.lo, tuple(b - side + 1 for b in box.hi))
    return table.window_sums(Rectangle((1 - side,) * box.dim, (1,) * box.dim), ybox)


def doubling_constant(w: LatticeFunction) -> float:
    """max over dyadic test cubes Q (side 2^m, aligned to the box corner) with 2Q inside the box
    of w(2Q)/w(Q); 2Q = [lo - floor(s/2), lo - floor(s/2) + 2s)."""
    box = w.box
    table = SummedAreaTable.of(w)
    best = 1.0
    s = 1
    while 2 * s <= min(box.shape):
        grids = [np.arange(lo, hi - s + 1, s) for lo, hi in zip(box.lo, box.hi)]
        q = table.box_sums(grids, [g + s for g in grids])
        lo2 = [g - s // 2 for g in grids]
        q2 = table.box_sums(lo2, [g + 2 * s for g in lo2])
        inside = np.ones(q.shape, dtype=bool)
        for ax, (g, lo, hi) in enumerate(zip(lo2, box.lo, box.hi)):
            shape = [1] * box.dim
            shape[ax] = -1
            inside &= ((g >= lo) & (g + 2 * s <= hi)).reshape(shape)
        if inside.any():
            best = max(best, float(np.max(q2[inside] / q[inside])))
        s *= 2
    return best


def ap_characteristic(w: LatticeFunction, p: float) -> float:
    """max over all cubes Q inside the box of avg_Q(w) * avg_Q(w^(1/(1-p)))^(p-1)."""
    p = float(p)
    if not p > 1:
        raise ValueError(f"A_p characteristic needs p > 1, got {p}")
    box = w.box
    tw = SummedAreaTable.of(w)
    dual = LatticeFunction(w.values ** (1.0 / (1.0 - p)), w.origin)
    td = SummedAreaTable.of(dual)
    best = 0.0
    for s in range(1, min(box.shape) + 1):
        vol = float(s ** box.dim)
        a = _cube_sums(tw, box, s) / vol
        b = _cube_sums(td, box, s) / vol
        best = max(best, float(np.max(a * b ** (p - 1.0))))
    return best


@dataclass
class WeightReport:
    a1: float
    doubling: float
    ap_characteristic: float | None
    certified_a1: bool
    notes: list[str] = field(default_factory=list)


def weight_constants(w: Weight | LatticeFunction, p: float | None = None) -> WeightReport:
    wt = w if isinstance(w, Weight) else Weight(w)
    ap = wt.ap_characteristic(p) if p is not None else None
    return WeightReport(wt.a1_constant, wt.doubling_constant, ap, wt.certified_a1)


def operational_ratio(w: Weight, p: float, trials: int, rng: np.random.Generator) -> float:
    """max over random f on the box of ||M_HL f||_{L^p(w)} / ||f||_{L^p(w)} (M over cubes meeting the box)."""
    best = 0.0
    box = w.box
    for _ in range(trials):
        f = LatticeFunction(rng.random(box.shape) * (rng.random(box.shape) < 0.2), box.lo)
        if not np.any(f.values):
            continue
        mf = maximal("HL", f, out_box=box)
        best = max(best, lp_norm(mf, p, w) / lp_norm(f, p, w))
    return best


def hl_t_weight(w: LatticeFunction, t: float) -> Weight:
    """(M_HL (w^t))^(1/t) restricted to the box of w; A_1 for every t > 1."""
    return Weight(maximal("HL_t", w, aux=t, out_box=w.box), f"hl_t({t})")
