"""Finitely supported functions on Z^d, boxes, norms and prefix-sum box averaging.

A LatticeFunction stores a dense row-major block of values together with the
lattice index of its first entry; every point outside that block is zero.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class Rectangle:
    """Half-open lattice box prod [lo_i, hi_i)."""

    lo: tuple[int, ...]
    hi: tuple[int, ...]

    def __post_init__(self):
        lo = tuple(int(v) for v in self.lo)
        hi = tuple(int(v) for v in self.hi)
        if len(lo) == 0 or len(lo) != len(hi):
            raise ValueError(f"rectangle corners must have equal positive length: {lo} {hi}")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError(f"empty rectangle lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def from_shape(cls, shape: Sequence[int], origin: Sequence[int] | None = None) -> "Rectangle":
        origin = tuple(origin) if origin is not None else (0,) * len(shape)
        return cls(origin, tuple(o + n for o, n in zip(origin, shape)))

    @classmethod
    def symmetric(cls, exponents: Sequence[int]) -> "Rectangle":
        """prod [-2^a_i, 2^a_i)."""
        return cls(tuple(-(1 << a) for a in exponents), tuple(1 << a for a in exponents))

    @classmethod
    def dyadic(cls, exponents: Sequence[int]) -> "Rectangle":
        """prod [0, 2^a_i)."""
        return cls((0,) * len(exponents), tuple(1 << a for a in exponents))

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(b - a for a, b in zip(self.lo, self.hi))

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def center(self) -> tuple[int, ...]:
        return tuple((a + b) // 2 for a, b in zip(self.lo, self.hi))

    def contains(self, x: Sequence[int]) -> bool:
        return all(a <= int(v) < b for a, v, b in zip(self.lo, x, self.hi))

    def contains_rect(self, other: "Rectangle") -> bool:
        return all(a <= c and d <= b for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))

    def translate(self, v: Sequence[int]) -> "Rectangle":
        return Rectangle(tuple(a + int(s) for a, s in zip(self.lo, v)), tuple(b + int(s) for b, s in zip(self.hi, v)))

    def scale(self, c: int) -> "Rectangle":
        """c * R about the origin (used for 5H)."""
        return Rectangle(tuple(c * a for a in self.lo), tuple(c * b for b in self.hi))

    def dilate(self, c: int) -> "Rectangle":
        """Concentric dilate with c times the side lengths (3Q, 5Q, 2Q)."""
        lo = tuple(a - ((c - 1) * n) // 2 for a, n in zip(self.lo, self.shape))
        return Rectangle(lo, tuple(a + c * n for a, n in zip(lo, self.shape)))

    def reflect(self) -> "Rectangle":
        """The box -R = {-x : x in R}."""
        return Rectangle(tuple(1 - b for b in self.hi), tuple(1 - a for a in self.lo))

    def minkowski(self, other: "Rectangle") -> "Rectangle":
        return Rectangle(tuple(a + c for a, c in zip(self.lo, other.lo)),
                         tuple(b + d - 1 for b, d in zip(self.hi, other.hi)))

    def intersect(self, other: "Rectangle") -> "Rectangle | None":
        lo = tuple(max(a, c) for a, c in zip(self.lo, other.lo))
        hi = tuple(min(b, d) for b, d in zip(self.hi, other.hi))
        if any(a >= b for a, b in zip(lo, hi)):
            return None
        return Rectangle(lo, hi)

    def hull(self, other: "Rectangle") -> "Rectangle":
        return Rectangle(tuple(min(a, c) for a, c in zip(self.lo, other.lo)),
                         tuple(max(b, d) for b, d in zip(self.hi, other.hi)))

    def pad(self, widths: Sequence[int] | int) -> "Rectangle":
        if isinstance(widths, (int, np.integer)):
            widths = (int(widths),) * self.dim
        return Rectangle(tuple(a - w for a, w in zip(self.lo, widths)), tuple(b + w for b, w in zip(self.hi, widths)))

    def align(self, sides: Sequence[int]) -> "Rectangle":
        """Smallest box containing self whose corners are multiples of the given sides."""
        return Rectangle(tuple((a // s) * s for a, s in zip(self.lo, sides)),
                         tuple(-((-b) // s) * s for b, s in zip(self.hi, sides)))

    def points(self) -> Iterable[tuple[int, ...]]:
        return itertools.product(*(range(a, b) for a, b in zip(self.lo, self.hi)))

    def slices(self, outer: "Rectangle") -> tuple[slice, ...]:
        """Array slices selecting self inside an array laid out on `outer`."""
        return tuple(slice(a - o, b - o) for a, b, o in zip(self.lo, self.hi, outer.lo))

    def grids(self) -> tuple[np.ndarray, ...]:
        return np.meshgrid(*(np.arange(a, b) for a, b in zip(self.lo, self.hi)), indexing="ij")


def hull_all(rects: Iterable[Rectangle]) -> Rectangle:
    rects = list(rects)
    out = rects[0]
    for r in rects[1:]:
        out = out.hull(r)
    return out


class PointSet:
    """Explicit finite subset of Z^d stored as a boolean mask on its bounding box."""

    __slots__ = ("origin", "mask")

    def __init__(self, mask, origin: Sequence[int] | None = None):
        m = np.array(mask, dtype=bool)
        if m.ndim == 0 or not m.any():
            raise ValueError("point set must be nonempty")
        origin = tuple(int(v) for v in origin) if origin is not None else (0,) * m.ndim
        nz = np.nonzero(m)
        lo = [int(ix.min()) for ix in nz]
        hi = [int(ix.max()) + 1 for ix in nz]
        m = m[tuple(slice(a, b) for a, b in zip(lo, hi))].copy()
        m.setflags(write=False)
        self.mask = m
        self.origin = tuple(o + a for o, a in zip(origin, lo))

    @classmethod
    def from_points(cls, pts: Iterable[Sequence[int]]) -> "PointSet":
        arr = np.array(list(pts), dtype=np.int64)
        if arr.size == 0:
            raise ValueError("point set must be nonempty")
        lo = arr.min(axis=0)
        shape = arr.max(axis=0) - lo + 1
        m = np.zeros(tuple(shape), dtype=bool)
        m[tuple((arr - lo).T)] = True
        return cls(m, tuple(lo))

    @classmethod
    def from_rectangle(cls, r: Rectangle) -> "PointSet":
        return cls(np.ones(r.shape, dtype=bool), r.lo)

    @classmethod
    def disk(cls, radius: int, center: Sequence[int] | None = None, dim: int = 2) -> "PointSet":
        """{x : sum (x_i - c_i)^2 <= r^2}."""
        center = tuple(center) if center is not None else (0,) * dim
        r = int(radius)
        ax = np.arange(-r, r + 1)
        sq = sum(np.meshgrid(*([ax * ax] * len(center)), indexing="ij"))
        return cls(sq <= r * r, tuple(c - r for c in center))

    @property
    def dim(self) -> int:
        return self.mask.ndim

    @property
    def bbox(self) -> Rectangle:
        return Rectangle.from_shape(self.mask.shape, self.origin)

    @property
    def size(self) -> int:
        return int(self.mask.sum())

    def contains(self, x: Sequence[int]) -> bool:
        b = self.bbox
        if not b.contains(x):
            return False
        return bool(self.mask[tuple(int(v) - o for v, o in zip(x, self.origin))])

    def contains_set(self, other: "PointSet | Rectangle") -> bool:
        other = as_pointset(other)
        inter = self.bbox.intersect(other.bbox)
        if inter is None or inter.size < other.size:
            return False
        mine = self.mask[inter.slices(self.bbox)]
        theirs = other.mask[inter.slices(other.bbox)]
        return int(theirs.sum()) == other.size and not np.any(theirs & ~mine)

    def points(self) -> list[tuple[int, ...]]:
        return [tuple(int(i) + o for i, o in zip(ix, self.origin)) for ix in zip(*np.nonzero(self.mask))]

    def runs(self) -> list[Rectangle]:
        """Decomposition into maximal runs along the last axis (for prefix-sum averaging)."""
        out = []
        m = self.mask
        for head in itertools.product(*(range(n) for n in m.shape[:-1])):
            row = m[head]
            padded = np.concatenate(([False], row, [False]))
            diff = np.diff(padded.astype(np.int8))
            starts = np.nonzero(diff == 1)[0]
            ends = np.nonzero(diff == -1)[0]
            for a, b in zip(starts, ends):
                lo = tuple(h + o for h, o in zip(head, self.origin)) + (int(a) + self.origin[-1],)
                hi = tuple(h + o + 1 for h, o in zip(head, self.origin)) + (int(b) + self.origin[-1],)
                out.append(Rectangle(lo, hi))
        return out

    def reflect(self) -> "PointSet":
        m = self.mask[tuple(slice(None, None, -1) for _ in range(self.dim))]
        b = self.bbox.reflect()
        return PointSet(m, b.lo)

    def __eq__(self, other):
        if not isinstance(other, PointSet):
            return NotImplemented
        return self.origin == other.origin and np.array_equal(self.mask, other.mask)

    __hash__ = None

    def __repr__(self):
        return f"PointSet(size={self.size}, bbox={self.bbox})"


def as_pointset(E: "PointSet | Rectangle") -> PointSet:
    return E if isinstance(E, PointSet) else PointSet.from_rectangle(E)


def set_size(E: "PointSet | Rectangle") -> int:
    return E.size


def set_bbox(E: "PointSet | Rectangle") -> Rectangle:
    return E if isinstance(E, Rectangle) else E.bbox


class LatticeFunction:
    """Real function on Z^d, zero outside the stored box. Immutable."""

    __slots__ = ("origin", "values")

    def __init__(self, values, origin: Sequence[int] | None = None):
        v = np.array(values, dtype=np.float64)
        if v.ndim == 0:
            raise ValueError("values must have at least one axis")
        if any(n < 1 for n in v.shape):
            raise ValueError(f"shape entries must be >= 1, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        v.setflags(write=False)
        if origin is None:
            origin = (0,) * v.ndim
        origin = tuple(int(o) for o in origin)
        if len(origin) != v.ndim:
            raise ValueError(f"origin has {len(origin)} entries for a {v.ndim}-dimensional array")
        self.values = v
        self.origin = origin

    @classmethod
    def zeros(cls, box: Rectangle) -> "LatticeFunction":
        return cls(np.zeros(box.shape), box.lo)

    @classmethod
    def constant(cls, box: Rectangle, c: float) -> "LatticeFunction":
        return cls(np.full(box.shape, float(c)), box.lo)

    @classmethod
    def delta(cls, x: Sequence[int], value: float = 1.0) -> "LatticeFunction":
        return cls(np.full((1,) * len(x), float(value)), tuple(x))

    @classmethod
    def indicator(cls, E: "Rectangle | PointSet", value: float = 1.0) -> "LatticeFunction":
        if isinstance(E, Rectangle):
            return cls.constant(E, value)
        return cls(E.mask * float(value), E.origin)

    @classmethod
    def from_points(cls, items: dict) -> "LatticeFunction":
        keys = [tuple(k) if not isinstance(k, (int, np.integer)) else (int(k),) for k in items]
        box = hull_all(Rectangle(k, tuple(c + 1 for c in k)) for k in keys)
        v = np.zeros(box.shape)
        for k, val in zip(keys, items.values()):
            v[tuple(c - o for c, o in zip(k, box.lo))] = val
        return cls(v, box.lo)

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def box(self) -> Rectangle:
        return Rectangle.from_shape(self.values.shape, self.origin)

    def __call__(self, x) -> float:
        if isinstance(x, (int, np.integer)):
            x = (int(x),)
        idx = tuple(int(c) - o for c, o in zip(x, self.origin))
        if any(i < 0 or i >= n for i, n in zip(idx, self.shape)):
            return 0.0
        return float(self.values[idx])

    def on_box(self, box: Rectangle) -> np.ndarray:
        """Values laid out on `box` (zeros where the function is not stored)."""
        out = np.zeros(box.shape)
        inter = self.box.intersect(box)
        if inter is not None:
            out[inter.slices(box)] = self.values[inter.slices(self.box)]
        return out

    def restrict(self, box: Rectangle) -> "LatticeFunction":
        return LatticeFunction(self.on_box(box), box.lo)

    def support_box(self) -> Rectangle | None:
        nz = np.nonzero(self.values)
        if len(nz[0]) == 0:
            return None
        lo = tuple(int(ix.min()) + o for ix, o in zip(nz, self.origin))
        hi = tuple(int(ix.max()) + 1 + o for ix, o in zip(nz, self.origin))
        return Rectangle(lo, hi)

    def trimmed(self) -> "LatticeFunction":
        b = self.support_box()
        if b is None:
            return LatticeFunction.delta(self.origin, 0.0)
        return self.restrict(b)

    def _aligned(self, other: "LatticeFunction"):
        if other.dim != self.dim:
            raise ValueError(f"dimension mismatch {self.dim} vs {other.dim}")
        box = self.box.hull(other.box)
        return box, self.on_box(box), other.on_box(box)

    def __eq__(self, other):
        if not isinstance(other, LatticeFunction):
            return NotImplemented
        if other.dim != self.dim:
            return False
        _, a, b = self._aligned(other)
        return bool(np.array_equal(a, b))

    __hash__ = None

    def allclose(self, other: "LatticeFunction", rtol: float = 1e-12, atol: float = 0.0) -> bool:
        _, a, b = self._aligned(other)
        return bool(np.allclose(a, b, rtol=rtol, atol=atol))

    def _binary(self, other, op):
        if isinstance(other, LatticeFunction):
            box, a, b = self._aligned(other)
            return LatticeFunction(op(a, b), box.lo)
        return LatticeFunction(op(self.values, float(other)), self.origin)

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return LatticeFunction(self.values / float(other), self.origin)

    def __neg__(self):
        return LatticeFunction(-self.values, self.origin)

    def __abs__(self):
        return LatticeFunction(np.abs(self.values), self.origin)

    def __pow__(self, p):
        return LatticeFunction(np.abs(self.values) ** float(p) if float(p) != int(p) else self.values ** int(p), self.origin)

    def map(self, fn) -> "LatticeFunction":
        return LatticeFunction(fn(self.values), self.origin)

    def total(self) -> float:
        return math.fsum(self.values.ravel())

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def __repr__(self):
        return f"LatticeFunction(origin={self.origin}, shape={self.shape})"


def _weight_values(w, box: Rectangle) -> np.ndarray:
    wf = getattr(w, "w", w)
    return wf.on_box(box)


def lp_norm(f: LatticeFunction, p: float, w=None) -> float:
    """(sum |f|^p w)^(1/p); p = inf gives max |f|."""
    p = float(p)
    if not p >= 1.0:
        raise ValueError(f"p must be >= 1, got {p}")
    a = np.abs(f.values)
    if w is not None:
        wv = _weight_values(w, f.box)
        if np.any((wv <= 0) & (a > 0)):
            raise ValueError("weight must be positive on the support of f")
    if math.isinf(p):
        return float(a.max())
    m = float(a.max()) if a.size else 0.0
    if m == 0.0:
        return 0.0
    # scale by max |f| so tiny or huge values neither underflow nor overflow in |f|^p
    terms = (a / m) ** p if p != 1.0 else a
    if w is not None:
        terms = terms * wv
    s = float(np.sum(terms, dtype=np.longdouble))
    return s if p == 1.0 else m * s ** (1.0 / p)


def weak_quasinorm(f: LatticeFunction, p: float = 1.0, w=None) -> float:
    """sup_lambda lambda * w({|f| > lambda})^(1/p), exact as a max over the sorted values."""
    a = np.abs(f.values).ravel()
    if w is None:
        wv = np.ones_like(a)
    else:
        wv = _weight_values(w, f.box).ravel()
    keep = a > 0
    a, wv = a[keep], wv[keep]
    if a.size == 0:
        return 0.0
    order = np.argsort(-a, kind="stable")
    a, wv = a[order], wv[order]
    cum = np.cumsum(wv, dtype=np.float64)
    # tied values must be counted together: use the last index of each tie run
    last = np.r_[a[1:] != a[:-1], True]
    return float(np.max(a[last] * cum[last] ** (1.0 / p)))


def ulp_distance(a, b) -> np.ndarray:
    """|a - b| measured in units of the spacing at max(|a|, |b|)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = np.spacing(np.maximum(np.abs(a), np.abs(b)))
    return np.abs(a - b) / scale


class SummedAreaTable:
    """Exclusive d-dimensional prefix sums of a LatticeFunction.

    Float data is accumulated in double-double (hi, lo) pairs so that box sums
    are essentially correctly rounded regardless of the table extent; integer
    data uses exact int64 sums.
    """

    def __init__(self, values: np.ndarray, origin: Sequence[int]):
        values = np.asarray(values)
        self.origin = tuple(int(o) for o in origin)
        self.shape = values.shape
        self.exact = values.dtype.kind in "biu"
        if self.exact:
            t = values.astype(np.int64)
            for ax in range(t.ndim):
                t = np.cumsum(t, axis=ax)
                t = np.concatenate([np.zeros_like(t.take([0], axis=ax)), t], axis=ax)
            self.hi = t
            self.lo = None
            return
        hi = np.ascontiguousarray(values, dtype=np.float64)
        lo = np.zeros_like(hi)
        for ax in range(hi.ndim):
            hm = np.moveaxis(hi, ax, -1)
            lm = np.moveaxis(lo, ax, -1)
            lead = hm.shape[:-1]
            h2, l2 = _kernels.dd_prefix_rows(np.ascontiguousarray(hm).reshape(-1, hm.shape[-1]),
                                             np.ascontiguousarray(lm).reshape(-1, lm.shape[-1]))
            hi = np.ascontiguousarray(np.moveaxis(h2.reshape(lead + (h2.shape[-1],)), -1, ax))
            lo = np.ascontiguousarray(np.moveaxis(l2.reshape(lead + (l2.shape[-1],)), -1, ax))
        self.hi = hi
        self.lo = lo

    @classmethod
    def of(cls, f: LatticeFunction) -> "SummedAreaTable":
        return cls(f.values, f.origin)

    def box_sums(self, starts: Sequence[np.ndarray], stops: Sequence[np.ndarray], dd: bool = False):
        """Sums over prod [starts_i[j], stops_i[j]) in lattice coordinates, as an outer grid.

        With dd=True the unrounded double-double pair (hi, lo) is returned instead.
        """
        a = [np.clip(np.asarray(s, dtype=np.int64) - o, 0, n) for s, o, n in zip(starts, self.origin, self.shape)]
        b = [np.clip(np.asarray(s, dtype=np.int64) - o, 0, n) for s, o, n in zip(stops, self.origin, self.shape)]
        b = [np.maximum(bi, ai) for ai, bi in zip(a, b)]
        d = len(self.shape)
        if self.exact:
            out = 0
            for corner in itertools.product((0, 1), repeat=d):
                idx = np.ix_(*[(a[i] if c else b[i]) for i, c in enumerate(corner)])
                sign = -1 if sum(corner) % 2 else 1
                out = out + sign * self.hi[idx]
            out = np.asarray(out, dtype=np.int64)
            return (out.astype(np.float64), np.zeros(out.shape)) if dd else out
        if d == 1:
            h, l = _kernels.box_sums_1d(self.hi, self.lo, a[0], b[0])
        elif d == 2:
            h, l = _kernels.box_sums_2d(self.hi, self.lo, a[0], b[0], a[1], b[1])
        elif d == 3:
            h, l = _kernels.box_sums_3d(self.hi, self.lo, a[0], b[0], a[1], b[1], a[2], b[2])
        else:
            h = np.zeros(tuple(len(x) for x in a))
            l = np.zeros_like(h)
            for corner in itertools.product((0, 1), repeat=d):
                idx = np.ix_(*[(a[i] if c else b[i]) for i, c in enumerate(corner)])
                sign = -1.0 if sum(corner) % 2 else 1.0
                h, l = _dd_add_np(h, l, sign * self.hi[idx], sign * self.lo[idx])
        return (h, l) if dd else h + l

    def window_sums(self, E: Rectangle, out_box: Rectangle, dd: bool = False):
        """x -> sum_{m in E} f(x - m) for x in out_box, i.e. the sum of f over x - E."""
        starts = [np.arange(lo, hi) - eh + 1 for lo, hi, eh in zip(out_box.lo, out_box.hi, E.hi)]
        stops = [np.arange(lo, hi) - el + 1 for lo, hi, el in zip(out_box.lo, out_box.hi, E.lo)]
        return self.box_sums(starts, stops, dd)

    def set_sums(self, E: "Rectangle | PointSet", out_box: Rectangle) -> np.ndarray:
        """Window sums over an explicit set, decomposed into rectangular runs; the runs are
        combined in double-double and rounded once."""
        if isinstance(E, Rectangle):
            return self.window_sums(E, out_box)
        acc_h = np.zeros(out_box.shape)
        acc_l = np.zeros(out_box.shape)
        for r in E.runs():
            h, l = self.window_sums(r, out_box, dd=True)
            acc_h, acc_l = _dd_add_np(acc_h, acc_l, h, l)
        return acc_h + acc_l


def _dd_add_np(ah, al, bh, bl):
    s = ah + bh
    bb = s - ah
    e = (ah - (s - bb)) + (bh - bb)
    e = e + (al + bl)
    h = s + e
    return h, e - (h - s)


def rect_average(f: LatticeFunction, E: "Rectangle | PointSet", out_box: Rectangle | None = None,
                 table: SummedAreaTable | None = None) -> LatticeFunction:
    """x -> (1/|E|) sum_{m in E} f(x - m); output box defaults to box(f) + bbox(E)."""
    if E.dim != f.dim:
        raise ValueError(f"set dimension {E.dim} does not match function dimension {f.dim}")
    if out_box is None:
        out_box = f.box.minkowski(set_bbox(E))
    table = table or SummedAreaTable.of(f)
    return LatticeFunction(table.set_sums(E, out_box) / E.size, out_box.lo)


def sliding_max(a: np.ndarray, width: int, axis: int) -> np.ndarray:
    """Forward-window maxima along one axis: output length n - width + 1."""
    a = np.asarray(a, dtype=np.float64)
    moved = np.moveaxis(a, axis, -1)
    lead = moved.shape[:-1]
    n = moved.shape[-1]
    if width > n:
        raise ValueError(f"window {width} longer than axis {n}")
    out = _kernels.sliding_max_rows(np.ascontiguousarray(moved).reshape(-1, n), int(width))
    return np.moveaxis(out.reshape(lead + (n - width + 1,)), -1, axis)


def box_max_filter(a: np.ndarray, before: Sequence[int], after: Sequence[int], fill: float = -np.inf) -> np.ndarray:
    """out[x] = max of a over prod [x_i - before_i, x_i + after_i], same shape as a.

    Outside the array the value `fill` is assumed.
    """
    out = np.asarray(a, dtype=np.float64)
    for ax, (lb, la) in enumerate(zip(before, after)):
        pad = [(0, 0)] * out.ndim
        pad[ax] = (int(lb), int(la))
        padded = np.pad(out, pad, constant_values=fill)
        out = sliding_max(padded, int(lb) + int(la) + 1, ax)
    return out


# ---------------------------------------------------------------- latfn v1 I/O

class FormatError(ValueError):
    """Malformed text file; message carries the offending line number."""


def format_latfn(f: LatticeFunction) -> str:
    lines = ["latfn v1", f"dim {f.dim}", "origin " + " ".join(str(o) for o in f.origin),
             "shape " + " ".join(str(n) for n in f.shape)]
    lines.extend(" ".join(format(v, ".17g") for v in row) for row in f.values.reshape(-1, f.shape[-1]))
    return "\n".join(lines) + "\n"


def write_latfn(f: LatticeFunction, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_latfn(f))


def parse_latfn(text: str) -> LatticeFunction:
    lines = text.splitlines()

    def header(i, key):
        if i >= len(lines):
            raise FormatError(f"line {i + 1}: missing '{key}' header")
        parts = lines[i].split()
        if not parts or parts[0] != key:
            raise FormatError(f"line {i + 1}: expected '{key} ...', got {lines[i]!r}")
        try:
            return [int(v) for v in parts[1:]]
        except ValueError:
            raise FormatError(f"line {i + 1}: non-integer entry in {lines[i]!r}") from None

    if not lines or lines[0].strip() != "latfn v1":
        raise FormatError("line 1: expected 'latfn v1'")
    (d,) = header(1, "dim") or [None]
    if d is None or d < 1:
        raise FormatError("line 2: dim must be a positive integer")
    origin = header(2, "origin")
    shape = header(3, "shape")
    if len(origin) != d:
        raise FormatError(f"line 3: origin needs {d} entries")
    if len(shape) != d or any(n < 1 for n in shape):
        raise FormatError(f"line 4: shape needs {d} positive entries")
    want = math.prod(shape)
    vals: list[float] = []
    for i in range(4, len(lines)):
        for tok in lines[i].split():
            try:
                v = float(tok)
            except ValueError:
                raise FormatError(f"line {i + 1}: bad value {tok!r}") from None
            if not math.isfinite(v):
                raise FormatError(f"line {i + 1}: non-finite value {tok!r}")
            vals.append(v)
        if len(vals) > want:
            raise FormatError(f"line {i + 1}: more than {want} values")
    if len(vals) != want:
        raise FormatError(f"line {len(lines)}: expected {want} values, found {len(vals)}")
    return LatticeFunction(np.array(vals).reshape(shape), origin)


def read_latfn(path) -> LatticeFunction:
    with open(path) as fh:
        return parse_latfn(fh.read())
