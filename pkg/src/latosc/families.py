"""Anisotropic dyadic rectangle families, their refined filtrations, and graded averaging sets.

A family is generated by an exponent table a(k) = (a_1(k), ..., a_d(k)):

    R_k = prod [0, 2^a_i(k)),   H_k = prod [-2^a_i(k), 2^a_i(k)),

with sigma_k the partition of Z^d into translates of R_k by multiples of its
sides. The refined filtration tau_j inserts intermediate levels so that
consecutive atoms differ by exactly one factor of 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .lattice import FormatError, PointSet, Rectangle, SummedAreaTable, set_bbox


@dataclass(frozen=True)
class DyadicRectangleFamily:
    exponents: tuple[tuple[int, ...], ...]
    refined: tuple[tuple[int, ...], ...]
    level_index: tuple[int, ...]
    separation_L: float
    cubicity_K: int

    @property
    def dim(self) -> int:
        return len(self.exponents[0])

    @property
    def levels(self) -> int:
        """K_max: the table covers k = 0..K_max."""
        return len(self.exponents) - 1

    @property
    def refined_levels(self) -> int:
        return len(self.refined) - 1

    def a(self, k: int) -> tuple[int, ...]:
        return self.exponents[k]

    def R(self, k: int) -> Rectangle:
        return Rectangle.dyadic(self.exponents[k])

    def H(self, k: int) -> Rectangle:
        return Rectangle.symmetric(self.exponents[k])

    def refined_H(self, j: int) -> Rectangle:
        return Rectangle.symmetric(self.refined[j])

    def atom_sides(self, level: int | None = None, refined: int | None = None) -> tuple[int, ...]:
        exps = self.refined[refined] if refined is not None else self.exponents[level]
        return tuple(1 << a for a in exps)

    def top_sides(self) -> tuple[int, ...]:
        return tuple(1 << a for a in self.exponents[-1])

    def truncated(self, levels: int) -> "DyadicRectangleFamily":
        return build_dyadic_family(self.exponents[: levels + 1])


def _refine(table: Sequence[Sequence[int]]) -> tuple[list[tuple[int, ...]], list[int]]:
    cur = list(table[0])
    rows = [tuple(cur)]
    index = [0]
    for target in table[1:]:
        while list(target) != cur:
            axis = min((i for i in range(len(cur)) if cur[i] < target[i]), key=lambda i: (cur[i], i))
            cur[axis] += 1
            rows.append(tuple(cur))
        index.append(len(rows) - 1)
    return rows, index


def build_dyadic_family(exponent_table) -> DyadicRectangleFamily:
    """Validate an exponent table and derive the refined levels, L and K."""
    table = [tuple(int(v) for v in row) for row in exponent_table]
    if not table:
        raise ValueError("exponent table must have at least one level")
    d = len(table[0])
    if d == 0 or any(len(r) != d for r in table):
        raise ValueError("every level needs the same positive number of exponents")
    if any(v < 0 for r in table for v in r):
        raise ValueError("exponents must be nonnegative")
    for k in range(len(table) - 1):
        lo, hi = table[k], table[k + 1]
        if any(b < a for a, b in zip(lo, hi)):
            raise ValueError(f"exponent table not monotone between levels {k} and {k + 1}")
        if not any(b > a for a, b in zip(lo, hi)):
            raise ValueError(f"no axis strictly increases between levels {k} and {k + 1}")
    refined, index = _refine(table)
    K = len(table) - 1
    L: float = math.inf
    for cand in range(1, K + 1):
        if all(min(b - a for a, b in zip(table[k], table[k + cand])) >= 1 for k in range(K - cand + 1)):
            L = cand
            break
    cub = max(max(r) - min(r) for r in refined)
    return DyadicRectangleFamily(tuple(table), tuple(refined), tuple(index), L, cub)


def isotropic_family(dim: int, levels: int, offset: int = 0, step: int = 1) -> DyadicRectangleFamily:
    return build_dyadic_family([[offset + step * k] * dim for k in range(levels + 1)])


def random_nested_family(dim: int, levels: int, rng: np.random.Generator, max_exponent: int | None = None) -> DyadicRectangleFamily:
    """Random dyadic nesting: each level doubles a random nonempty subset of axes.

    With max_exponent set, axes that reached the cap are frozen and the table
    stops once every axis is capped.
    """
    cur = [0] * dim
    rows = [tuple(cur)]
    for _ in range(levels):
        free = [i for i in range(dim) if max_exponent is None or cur[i] < max_exponent]
        if not free:
            break
        mask = rng.random(len(free)) < 0.5
        if not mask.any():
            mask[rng.integers(len(free))] = True
        for i, m in zip(free, mask):
            if m:
                cur[i] += 1
        rows.append(tuple(cur))
    return build_dyadic_family(rows)


def atom_of(fam: DyadicRectangleFamily, x: Sequence[int], level: int | None = None, refined: int | None = None) -> Rectangle:
    """The sigma_k (or tau_j) atom containing x. Center, 3Q and 5Q come from Rectangle."""
    if (level is None) == (refined is None):
        raise ValueError("give exactly one of level / refined")
    sides = fam.atom_sides(level, refined)
    lo = tuple((int(v) // s) * s for v, s in zip(x, sides))
    return Rectangle(lo, tuple(a + s for a, s in zip(lo, sides)))


# ------------------------------------------------------------ boundary counts

def rect_boundary_count(E_shape: Sequence[int], H_shape: Sequence[int]) -> int:
    """B(E, H) for boxes: |H - E| minus the translates of H inside the interior of E."""
    outer = math.prod(n + m - 1 for n, m in zip(E_shape, H_shape))
    inner = math.prod(max(0, n - 1 - m) for n, m in zip(E_shape, H_shape))
    return outer - inner


def inner_boundary(E: PointSet) -> PointSet:
    """{x in E : some l-infinity neighbour lies outside E}."""
    m = np.pad(E.mask, 1, constant_values=False)
    # erosion by the 3^d cube is separable: three-point erosion along each axis in turn
    interior = m.copy()
    d = m.ndim
    for ax in range(d):
        shifted_lo = np.zeros_like(interior)
        shifted_hi = np.zeros_like(interior)
        sl_src = [slice(None)] * d
        sl_dst = [slice(None)] * d
        sl_src[ax], sl_dst[ax] = slice(0, -1), slice(1, None)
        shifted_lo[tuple(sl_dst)] = interior[tuple(sl_src)]
        shifted_hi[tuple(sl_src)] = interior[tuple(sl_dst)]
        interior = interior & shifted_lo & shifted_hi
    boundary = m & ~interior
    return PointSet(boundary, tuple(o - 1 for o in E.origin))


def boundary_count(E: "PointSet | Rectangle", H: Rectangle) -> int:
    """B(E, H) = #{x : dE meets H - x} = |H - dE|."""
    if isinstance(E, Rectangle):
        return rect_boundary_count(E.shape, H.shape)
    if E.size == 0:
        raise ValueError("E must be nonempty")
    dE = inner_boundary(E)
    # y in H - dE  iff  sum over y - G of 1_dE is positive, with G = -H
    G = H.reflect()
    table = SummedAreaTable(dE.mask.astype(np.int64), dE.origin)
    out_box = dE.bbox.minkowski(G)
    return int(np.count_nonzero(table.window_sums(G, out_box)))


# ---------------------------------------------------------- averaging families

class AveragingFamily:
    """Graded sets {E_t}: t in [2^k, 2^(k+1)) belongs to class A_k, tested against H_k."""

    def __init__(self, base: DyadicRectangleFamily, sets: dict, kind: str = "custom"):
        if not sets:
            raise ValueError("averaging family needs at least one set")
        self.base = base
        self.kind = kind
        self.sets = {int(t): E for t, E in sorted(sets.items())}
        for t, E in self.sets.items():
            if t < 1:
                raise ValueError(f"set index t must be >= 1, got {t}")
            if E.dim != base.dim:
                raise ValueError(f"set E_{t} has dimension {E.dim}, family has {base.dim}")
            if self.class_of(t) > base.levels:
                raise ValueError(f"t={t} lies in class {self.class_of(t)} beyond the table depth {base.levels}")
        self.ts = tuple(self.sets)
        self.size_constant_c = min(E.size / self.base.H(self.class_of(t)).size for t, E in self.sets.items())

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def classes(self) -> list[int]:
        return sorted({self.class_of(t) for t in self.ts})

    @staticmethod
    def class_of(t: int) -> int:
        return int(t).bit_length() - 1

    def set(self, t: int):
        try:
            return self.sets[int(t)]
        except KeyError:
            raise ValueError(f"t={t} is not a graded index of this family") from None

    def block(self, k: int) -> list[int]:
        return [t for t in self.ts if self.class_of(t) == k]

    def extent(self) -> Rectangle:
        """Hull of every set and of every H_k in play."""
        out = self.base.H(max(self.classes))
        for E in self.sets.values():
            out = out.hull(set_bbox(E))
        return out

    def violations(self) -> list[str]:
        out = []
        for t, E in self.sets.items():
            k = self.class_of(t)
            H = self.base.H(k)
            inside = H.contains_rect(E) if isinstance(E, Rectangle) else H.contains_rect(E.bbox)
            if not inside:
                out.append(f"location: E_{t} not inside H_{k}")
        for k in self.classes:
            blk = self.block(k)
            for t, u in zip(blk, blk[1:]):
                if not _contains(self.sets[u], self.sets[t]):
                    out.append(f"nesting: E_{t} not inside E_{u} (class {k})")
        return out


def _contains(big, small) -> bool:
    if isinstance(big, Rectangle) and isinstance(small, Rectangle):
        return big.contains_rect(small)
    return (big if isinstance(big, PointSet) else PointSet.from_rectangle(big)).contains_set(small)


def centered_box(sides: Sequence[int]) -> Rectangle:
    return Rectangle(tuple(-(s // 2) for s in sides), tuple(s - s // 2 for s in sides))


def rectangle_family(base: DyadicRectangleFamily, levels: int | None = None) -> AveragingFamily:
    """E_t = centered box with sides floor(t 2^a_i(k) / 2^k), t in [2^k, 2^(k+1)).

    For the isotropic table a(k) = k this is the family of centered cubes of side t.
    """
    K = base.levels if levels is None else levels
    sets = {}
    for k in range(K + 1):
        a = base.a(k)
        for t in range(1 << k, 1 << (k + 1)):
            sets[t] = centered_box([max(1, (t << ai) >> k) for ai in a])
    return AveragingFamily(base, sets, "rectangles")


def cube_family(dim: int, levels: int, anchor: str = "center") -> AveragingFamily:
    """Cubes of side t. Centered cubes sit in H_k for a(k) = k; corner cubes [0,t)^d need a(k) = k + 1."""
    if anchor == "center":
        return rectangle_family(isotropic_family(dim, levels))
    if anchor == "corner":
        base = isotropic_family(dim, levels, offset=1)
        sets = {t: Rectangle((0,) * dim, (t,) * dim) for t in range(1, 1 << (levels + 1))}
        return AveragingFamily(base, sets, "rectangles")
    raise ValueError(f"unknown anchor {anchor!r}")


def anisotropic_family(levels: int) -> AveragingFamily:
    return rectangle_family(build_dyadic_family([(k, k // 2) for k in range(levels + 1)]))


def disk_family(dim: int, levels: int) -> AveragingFamily:
    """Discrete balls of radius r in [2^k, 2^(k+1)) in class A_k; base a(k) = k + 1 contains them."""
    base = isotropic_family(dim, levels, offset=1)
    sets = {r: PointSet.disk(r, dim=dim) for r in range(1, 1 << (levels + 1))}
    return AveragingFamily(base, sets, "disks")


# --------------------------------------------------------------- JRW profiles

def _fit_slope(ys: Sequence[float]) -> float:
    """Least-squares slope of log2(y_l) against l (l = 1, 2, ...) over positive entries."""
    pts = [(l, math.log2(y)) for l, y in ys if y > 0]
    if len(pts) < 2:
        return math.nan
    x = np.array([p[0] for p in pts], dtype=float)
    y = np.array([p[1] for p in pts])
    return float(np.polyfit(x, y, 1)[0])


def eps_table(base: DyadicRectangleFamily) -> list[float]:
    K = base.levels
    out = []
    for l in range(K + 1):
        best = 0.0
        for k in range(K - l + 1):
            big = base.H(k + l)
            best = max(best, rect_boundary_count(big.shape, base.H(k).shape) / big.size)
        out.append(best)
    return out


def iota_table(fam: AveragingFamily, max_sets_per_class: int | None = None) -> list[float]:
    base = fam.base
    K = max(fam.classes)
    out = [0.0] * (K + 1)
    for m in fam.classes:
        ts = fam.block(m)
        if max_sets_per_class is not None and len(ts) > max_sets_per_class:
            pick = np.linspace(0, len(ts) - 1, max_sets_per_class).round().astype(int)
            ts = [ts[i] for i in sorted(set(pick))]
        denom = base.H(m).size
        for t in ts:
            E = fam.set(t)
            if isinstance(E, Rectangle):
                counts = [rect_boundary_count(E.shape, base.H(k).shape) for k in range(m + 1)]
            else:
                dE = inner_boundary(E)
                table = SummedAreaTable(dE.mask.astype(np.int64), dE.origin)
                counts = []
                for k in range(m + 1):
                    G = base.H(k).reflect()
                    counts.append(int(np.count_nonzero(table.window_sums(G, dE.bbox.minkowski(G)))))
            for k, c in enumerate(counts):
                l = m - k
                out[l] = max(out[l], c / denom)
    return out


@dataclass
class JRWReport:
    iota_sq: list[float]
    eps_sq: list[float]
    L: float
    K: int
    c: float
    regular: bool
    cubic: bool
    violations: list[str] = field(default_factory=list)
    iota_slope: float = math.nan
    eps_slope: float = math.nan
    delta: float = math.nan
    iota_partial: float = math.nan
    eps_partial: float = math.nan
    reasons: list[str] = field(default_factory=list)


def jrw_profiles(fam: AveragingFamily, cubic_bound: int = 2, max_sets_per_class: int | None = None) -> JRWReport:
    """Measure iota(l)^2, eps(l)^2 and classify the family as regular / cubic.

    Regularity at finite depth: no location or nesting violations, finite L,
    and both log2-profiles decay with fitted slope <= -1/(2L) over l >= 1.
    """
    base = fam.base
    iota = iota_table(fam, max_sets_per_class)
    eps = eps_table(base)
    L = base.separation_L
    viol = fam.violations()
    reasons = list(viol)
    delta = 1.0 / (2 * L) if math.isfinite(L) else math.nan
    lo_l = 1 if len(iota) > 2 else 0
    si = _fit_slope([(l, iota[l]) for l in range(lo_l, len(iota))])
    se = _fit_slope([(l, eps[l]) for l in range(lo_l, len(eps))])
    regular = not viol and fam.size_constant_c > 0
    if not math.isfinite(L):
        regular = False
        reasons.append("separation: no finite L")
    for name, s in (("iota", si), ("eps", se)):
        if math.isnan(s):
            regular = False
            reasons.append(f"{name}: too few levels to fit a decay rate")
        elif math.isfinite(L) and s > -delta:
            regular = False
            reasons.append(f"{name}: fitted log2 slope {s:.3f} > {-delta:.3f}")
    cubic = base.cubicity_K <= cubic_bound
    return JRWReport(iota_sq=iota, eps_sq=eps, L=L, K=base.cubicity_K, c=fam.size_constant_c,
                     regular=regular, cubic=cubic, violations=viol, iota_slope=si, eps_slope=se,
                     delta=delta, iota_partial=float(sum(math.sqrt(v) for v in iota)),
                     eps_partial=float(sum(math.sqrt(v) for v in eps)), reasons=reasons)


@dataclass
class SeparationReport:
    L: float
    eps_sq: list[float]
    C: float
    normalized_slope: float
    separated: list[bool]
    decay_ok: bool
    separation_ok: bool


def verify_separation_lemma(base: DyadicRectangleFamily, slope_tol: float = 0.05) -> SeparationReport:
    """Both directions of the eccentricity / separation equivalence at finite depth.

    (a) eps(l)^2 <= C 2^(-l/L): C is the max of eps(l)^2 2^(l/L), and the
        normalized profile must not grow (fitted log2 slope <= slope_tol).
    (b) H_(k+L) and H_k are 1-separated (every axis at least doubles).
    """
    eps = eps_table(base)
    L = base.separation_L
    K = base.levels
    if not math.isfinite(L):
        return SeparationReport(L, eps, math.inf, math.nan, [], False, False)
    Li = int(L)
    norm = [e * 2.0 ** (l / L) for l, e in enumerate(eps)]
    C = max(norm)
    slope = _fit_slope([(l, norm[l]) for l in range(1, len(norm))]) if K >= 3 else 0.0
    sep = [min(b - a for a, b in zip(base.a(k), base.a(k + Li))) >= 1 for k in range(K - Li + 1)]
    return SeparationReport(L, eps, C, slope, sep, bool(slope <= slope_tol), all(sep))


# ------------------------------------------------------------------ file I/O

def format_family(fam: DyadicRectangleFamily) -> str:
    lines = ["family v1", f"dim {fam.dim}", f"levels {fam.levels}"]
    lines += [" ".join(str(a) for a in row) for row in fam.exponents]
    return "\n".join(lines) + "\n"


def parse_family(text: str) -> DyadicRectangleFamily:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "family v1":
        raise FormatError("line 1: expected 'family v1'")
    try:
        key, d = lines[1].split()
        assert key == "dim"
        d = int(d)
    except Exception:
        raise FormatError("line 2: expected 'dim d'") from None
    try:
        key, K = lines[2].split()
        assert key == "levels"
        K = int(K)
    except Exception:
        raise FormatError("line 3: expected 'levels K'") from None
    rows = []
    for i in range(3, 3 + K + 1):
        if i >= len(lines):
            raise FormatError(f"line {i + 1}: missing exponent row ({K + 1} expected)")
        try:
            row = [int(v) for v in lines[i].split()]
        except ValueError:
            raise FormatError(f"line {i + 1}: non-integer exponent") from None
        if len(row) != d:
            raise FormatError(f"line {i + 1}: expected {d} exponents")
        rows.append(row)
    try:
        return build_dyadic_family(rows)
    except ValueError as exc:
        raise FormatError(f"line 4: {exc}") from None


def format_sets(fam: AveragingFamily) -> str:
    out = []
    for t in range(1, max(fam.ts) + 1):
        if t not in fam.sets:
            raise ValueError("set files require consecutive indices t = 1, 2, ...")
        E = fam.sets[t]
        if isinstance(E, Rectangle):
            out.append("rect " + " ".join(map(str, E.lo + E.hi)))
        else:
            r, center = _as_disk(E)
            out.append(f"disk {r} " + " ".join(map(str, center)))
    return "\n".join(out) + "\n"


def _as_disk(E: PointSet):
    r = (E.bbox.shape[0] - 1) // 2
    center = tuple(o + r for o in E.origin)
    if PointSet.disk(r, center) != E:
        raise ValueError("only rectangles and discrete disks can be written to a set file")
    return r, center


def parse_sets(text: str, base: DyadicRectangleFamily) -> AveragingFamily:
    sets = {}
    d = base.dim
    kinds = set()
    for i, line in enumerate(text.splitlines()):
        parts = line.split()
        if not parts:
            continue
        try:
            if parts[0] == "rect" and len(parts) == 1 + 2 * d:
                vals = [int(v) for v in parts[1:]]
                E = Rectangle(vals[:d], vals[d:])
                kinds.add("rectangles")
            elif parts[0] == "disk" and len(parts) == 2 + d:
                E = PointSet.disk(int(parts[1]), [int(v) for v in parts[2:]], dim=d)
                kinds.add("disks")
            else:
                raise ValueError(f"expected 'rect lo... hi...' or 'disk r c...' with d={d}")
        except ValueError as exc:
            raise FormatError(f"line {i + 1}: {exc}") from None
        sets[len(sets) + 1] = E
    kind = kinds.pop() if len(kinds) == 1 else "custom"
    return AveragingFamily(base, sets, kind)
