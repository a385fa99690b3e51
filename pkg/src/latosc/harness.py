"""Experiment engine: best observed constants for the catalogued inequalities, the lemma
suite and a finite transference demo on the torus (Z_N)^d.

An experiment walks a ladder of grid sizes n (total number of points of f). For
each size it draws `trials` inputs from per-trial seeds, evaluates left and right
sides exactly, and records every ratio plus the per-grid maximum. Nothing is
averaged, so a growing constant shows up in the ladder as it is.
"""

from __future__ import annotations

import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .families import (AveragingFamily, JRWReport, build_dyadic_family, cube_family, disk_family, jrw_profiles,
                       parse_family, random_nested_family, rectangle_family)
from .lattice import LatticeFunction, Rectangle, SummedAreaTable, lp_norm, rect_average, set_bbox, weak_quasinorm
from .operators import maximal, martingale_expectation
from .oracles import (brute_a1, brute_atom_mean, brute_hl, brute_long_scale, brute_sharp, cube_scan_ap,
                      enum_chain_power, enum_jump, naive_rect_average)
from .squarefn import (aggregate, computation_box, discretize, discretized_sf, jump_field, long_sf, rect_sf,
                       shifted_sf, short_sf, variation_field)
from .weights import Weight, hl_t_weight, make_weight

EXPERIMENTS = ("WEAK11_RECT_LONG", "LP_HIGH", "JUMP_LP", "VAR_LP", "WEIGHTED_L2", "WEIGHTED_WEAK11",
               "WEIGHTED_LP", "SHARP_DOMINATION", "L2_SHIFTED", "POINTWISE_MAX_DOM", "CONSEC")

# family property each experiment needs before it may run
REQUIRES = {
    "WEAK11_RECT_LONG": None, "CONSEC": None,
    "LP_HIGH": "regular", "JUMP_LP": "regular", "VAR_LP": "regular", "SHARP_DOMINATION": "regular",
    "L2_SHIFTED": "regular", "POINTWISE_MAX_DOM": "regular",
    "WEIGHTED_L2": "cubic", "WEIGHTED_WEAK11": "cubic", "WEIGHTED_LP": "cubic",
}

DEFAULT_P = {"LP_HIGH": 4.0, "JUMP_LP": 4.0, "VAR_LP": 4.0, "WEIGHTED_LP": 3.0}
DEFAULT_WEIGHT = {"WEIGHTED_L2": "random", "WEIGHTED_WEAK11": "cr(0.5)", "WEIGHTED_LP": "power(-0.5)"}
DEFAULT_FAMILY = {"WEAK11_RECT_LONG": "random", "CONSEC": "random"}
DISTRIBUTIONS = ("random_uniform", "random_sparse", "spikes", "adversarial", "smooth_bumps")
ADVERSARIAL = ("spike", "cantor", "checker", "cz_box")
CONFIG_KEYS = ("experiment", "dim", "grid", "trials", "seed", "p", "s", "lambda", "family", "weight",
               "distribution", "out")
CSV_HEADER = "experiment,dim,grid,trial,statistic,value"


class FamilyRejected(ValueError):
    """Raised when an experiment's family lacks a required property; carries the classification."""

    def __init__(self, message: str, report: JRWReport):
        super().__init__(message)
        self.report = report


class OracleMismatch(RuntimeError):
    pass


# ------------------------------------------------------------------ configs

@dataclass
class InequalityExperiment:
    name: str
    dim: int = 1
    grid: tuple[int, ...] = (64, 128, 256, 512, 1024)
    trials: int = 10
    seed: int = 0
    p: float | None = None
    s: float = 3.0
    lam: tuple[float, ...] | None = None
    family: str | None = None
    weight: str | None = None
    distribution: str = "random_uniform"
    out: str | None = None

    def __post_init__(self):
        self.name = self.name.upper()
        if self.name not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.name!r}; catalogue: {', '.join(EXPERIMENTS)}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        self.grid = tuple(int(n) for n in self.grid)
        if not self.grid or any(n < 1 for n in self.grid):
            raise ValueError("grid ladder needs positive sizes")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ValueError("grid ladder must be strictly increasing")
        if self.p is None:
            self.p = DEFAULT_P.get(self.name, 2.0)
        if not self.p >= 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if not self.s >= 1:
            raise ValueError(f"s must be >= 1, got {self.s}")
        if self.family is None:
            self.family = DEFAULT_FAMILY.get(self.name, "cubes")
        if self.weight is None:
            self.weight = DEFAULT_WEIGHT.get(self.name, "constant")
        if self.lam is not None and any(not x > 0 for x in self.lam):
            raise ValueError("lambda values must be positive")
        _split_call(self.distribution, DISTRIBUTIONS, "distribution")


def _split_call(text: str, allowed: Sequence[str] | None = None, what: str = "spec") -> tuple[str, list[str]]:
    """'name(a, b)' -> ('name', ['a', 'b']); a bare name has no arguments."""
    m = re.fullmatch(r"\s*([A-Za-z_][\w]*)\s*(?:\((.*)\))?\s*", text)
    if not m:
        raise ValueError(f"malformed {what} {text!r}")
    name, args = m.group(1), m.group(2)
    if allowed is not None and name not in allowed:
        raise ValueError(f"unknown {what} {name!r}; expected one of {', '.join(allowed)}")
    return name, [a.strip() for a in args.split(",")] if args and args.strip() else []


def parse_grid(text: str) -> tuple[int, ...]:
    """'64, 128, 256' or the doubling range '2^6..2^10'."""
    text = text.strip()
    m = re.fullmatch(r"2\^(\d+)\s*\.\.\s*2\^(\d+)", text)
    if m:
        a, b = int(m.group(1)), int(m.group(2))
        return tuple(1 << e for e in range(a, b + 1))
    out = []
    for tok in re.split(r"[,\s]+", text):
        if not tok:
            continue
        m = re.fullmatch(r"2\^(\d+)", tok)
        out.append(1 << int(m.group(1)) if m else int(tok))
    return tuple(out)


def parse_config(text: str) -> InequalityExperiment:
    kw: dict = {}
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {i}: expected 'key = value'")
        key, val = (x.strip() for x in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ValueError(f"line {i}: unknown key {key!r}; keys: {', '.join(CONFIG_KEYS)}")
        try:
            if key == "experiment":
                kw["name"] = val
            elif key in ("dim", "trials", "seed"):
                kw[key] = int(val)
            elif key in ("p", "s"):
                kw[key] = float(val)
            elif key == "grid":
                kw["grid"] = parse_grid(val)
            elif key == "lambda":
                kw["lam"] = tuple(float(x) for x in re.split(r"[,\s]+", val) if x)
            else:
                kw[key] = val
        except ValueError as e:
            raise ValueError(f"line {i}: bad value for {key}: {val!r}") from e
    if "name" not in kw:
        raise ValueError("config needs an 'experiment' key")
    return InequalityExperiment(**kw)


def load_config(path) -> InequalityExperiment:
    return parse_config(Path(path).read_text())


# ------------------------------------------------------------------- inputs

def grid_shape(n: int, d: int) -> tuple[int, ...]:
    """Near-cubic dyadic shape with n points in total (n a power of 2)."""
    if n < 1 or n & (n - 1):
        raise ValueError(f"grid size must be a power of 2, got {n}")
    e = n.bit_length() - 1
    return tuple(1 << (e // d + (1 if i < e % d else 0)) for i in range(d))


def _cantor_mask(shape) -> np.ndarray:
    """Indices whose base-4 digits all lie in {0, 3}."""
    masks = []
    for m in shape:
        i = np.arange(m)
        ok = np.ones(m, dtype=bool)
        while np.any(i):
            ok &= np.isin(i % 4, (0, 3))
            i = i // 4
        masks.append(ok)
    out = masks[0]
    for mk in masks[1:]:
        out = np.multiply.outer(out, mk)
    return out


def smooth_bumps(shape, rng: np.random.Generator, count: int = 3) -> np.ndarray:
    grids = np.indices(shape, dtype=float)
    out = np.zeros(shape)
    for _ in range(count):
        c = [rng.uniform(0, m) for m in shape]
        r = rng.uniform(0.05, 0.2) * max(shape)
        out += rng.uniform(0.5, 1.5) * np.exp(-sum((g - ci) ** 2 for g, ci in zip(grids, c)) / (2 * r * r))
    return out


def make_input(distribution: str, shape, rng: np.random.Generator) -> LatticeFunction:
    name, args = _split_call(distribution, DISTRIBUTIONS, "distribution")
    shape = tuple(shape)
    if name == "random_uniform":
        v = rng.uniform(-1.0, 1.0, shape)
    elif name == "random_sparse":
        dens = float(args[0]) if args else 0.05
        v = rng.uniform(-1.0, 1.0, shape) * (rng.random(shape) < dens)
        if not np.any(v):
            v.flat[rng.integers(v.size)] = 1.0
    elif name == "spikes":
        count = int(args[0]) if args else 1
        v = np.zeros(shape)
        idx = rng.choice(v.size, size=min(count, v.size), replace=False)
        v.flat[idx] = rng.uniform(0.5, 1.5, idx.size)
    elif name == "smooth_bumps":
        v = smooth_bumps(shape, rng, int(args[0]) if args else 3)
    else:
        preset = args[0] if args else "spike"
        if preset == "spike":
            v = np.zeros(shape)
            v[tuple(m // 2 for m in shape)] = 1.0
        elif preset == "cantor":
            v = _cantor_mask(shape).astype(float)
        elif preset == "checker":
            v = np.where(np.indices(shape).sum(axis=0) % 2 == 0, 1.0, -1.0)
        elif preset == "cz_box":
            v = np.full(shape, 1.01)
        else:
            raise ValueError(f"unknown adversarial preset {preset!r}; expected one of {', '.join(ADVERSARIAL)}")
    return LatticeFunction(v)


def _default_levels(shape) -> int:
    e = min(shape).bit_length() - 1
    return max(2, e - (3 if len(shape) == 1 else 2))


def family_for(spec: str, shape, rng: np.random.Generator | None = None) -> AveragingFamily:
    """Family presets sized to the grid: cubes, corner_cubes, disks, anisotropic, random, or file:<path>.
    An integer argument fixes the depth, e.g. cubes(3)."""
    d = len(shape)
    if spec.startswith("file:"):
        return rectangle_family(parse_family(Path(spec[5:]).read_text()))
    name, args = _split_call(spec, ("cubes", "corner_cubes", "disks", "anisotropic", "random"), "family")
    K = int(args[0]) if args else _default_levels(shape)
    if name == "cubes":
        return cube_family(d, K)
    if name == "corner_cubes":
        return cube_family(d, K, anchor="corner")
    if name == "disks":
        if d != 2:
            raise ValueError("disk family preset is two-dimensional")
        return disk_family(2, K)
    if name == "anisotropic":
        if d == 1:
            raise ValueError("anisotropic preset needs d >= 2")
        return rectangle_family(build_dyadic_family([(k,) + (k // 2,) * (d - 1) for k in range(K + 1)]))
    if rng is None:
        raise ValueError("random family preset needs an rng")
    return rectangle_family(random_nested_family(d, K * d, rng, max_exponent=K))


def nested_rects(fam) -> list[Rectangle]:
    """The symmetric rectangles H_0 < H_1 < ... of the family's dyadic table."""
    base = fam.base if isinstance(fam, AveragingFamily) else fam
    return [base.H(k) for k in range(base.levels + 1)]


def random_consecutive_rects(d: int, count: int, max_side: int, rng: np.random.Generator) -> list[Rectangle]:
    """A non-dyadic nesting: every step grows a random nonempty set of edges by random amounts."""
    lo = [0] * d
    hi = [1] * d
    out = [Rectangle(tuple(lo), tuple(hi))]
    for _ in range(count - 1):
        grew = False
        for i in range(d):
            if hi[i] - lo[i] >= max_side:
                continue
            if rng.random() < 0.5:
                lo[i] -= int(rng.integers(0, 3))
            if rng.random() < 0.6:
                hi[i] += int(rng.integers(1, 4))
            grew = grew or out[-1].lo[i] != lo[i] or out[-1].hi[i] != hi[i]
        if not grew:
            if all(h - l >= max_side for l, h in zip(lo, hi)):
                break
            i = min(range(d), key=lambda a: hi[a] - lo[a])
            hi[i] += 1
        out.append(Rectangle(tuple(lo), tuple(hi)))
    return out


def weight_for(spec: str, box: Rectangle, f_box: Rectangle, rng: np.random.Generator):
    """constant, power(alpha), cr(delta), hl_t(t), random. `random` is an arbitrary nonnegative
    LatticeFunction (zeros allowed); the others are strictly positive Weights."""
    name, args = _split_call(spec, ("constant", "power", "cr", "hl_t", "random"), "weight")
    if name == "constant":
        return make_weight("constant", box)
    if name == "power":
        return make_weight("power", box, alpha=float(args[0]) if args else -0.5)
    if name == "cr":
        g = LatticeFunction(rng.random(f_box.shape) * (rng.random(f_box.shape) < 0.1), f_box.lo)
        if not np.any(g.values):
            g = LatticeFunction.delta(f_box.center)
        return make_weight("coifman_rochberg", box, g=g, delta=float(args[0]) if args else 0.5)
    if name == "hl_t":
        return hl_t_weight(LatticeFunction(np.exp(rng.normal(size=box.shape)), box.lo), float(args[0]) if args else 2.0)
    v = np.exp(2.0 * rng.normal(size=box.shape)) * (rng.random(box.shape) < 0.7)
    return LatticeFunction(v, box.lo)


def _ap_certified(w, p: float, d: int) -> bool:
    if not isinstance(w, Weight):
        return False
    if w.kind == "constant" or w.kind.startswith(("coifman_rochberg", "hl_t")):
        return True
    if w.kind.startswith("power"):
        alpha = float(w.kind[6:-1])
        return -d < alpha < d * (p - 1)
    return False


# ----------------------------------------------------------- certification

def certify(fam: AveragingFamily, need: str | None) -> JRWReport:
    rep = jrw_profiles(fam)
    if need == "regular" and not rep.regular:
        raise FamilyRejected(f"family is not regular: {'; '.join(rep.reasons)}", rep)
    if need == "cubic" and not (rep.cubic and rep.regular):
        why = rep.reasons or [f"cubicity gap K = {rep.K} exceeds 2"]
        raise FamilyRejected(f"family is not cubic: {'; '.join(why)}", rep)
    return rep


# ------------------------------------------------------------ oracle spots

def spot_check(name: str, dim: int, rng: np.random.Generator) -> list[str]:
    """One small random instance per operator the experiment uses, against its brute-force oracle."""
    shape = (5,) * dim if dim < 3 else (3, 3, 3)
    f = LatticeFunction(rng.uniform(-1, 1, shape), tuple(int(x) for x in rng.integers(-3, 3, dim)))
    fam = cube_family(dim, 1)
    done = []

    def check(what, ok):
        if not ok:
            raise OracleMismatch(f"oracle spot check failed: {what}")
        done.append(what)

    E = Rectangle(tuple(int(x) for x in rng.integers(-2, 1, dim)), tuple(int(x) for x in rng.integers(1, 3, dim)))
    box = f.box.minkowski(E)
    a = rect_average(f, E, box).values
    check("rect_average", np.allclose(a, naive_rect_average(f, E, box), rtol=1e-13, atol=1e-15))
    pts = list(box.points())[:: max(1, len(list(box.points())) // 6)]
    if name in ("WEAK11_RECT_LONG", "LP_HIGH", "WEIGHTED_L2", "WEIGHTED_WEAK11", "WEIGHTED_LP",
                "SHARP_DOMINATION", "L2_SHIFTED", "POINTWISE_MAX_DOM"):
        out = long_sf(f, fam)
        ok = all(abs(out.per_scale[i](x) - brute_long_scale(f, fam, k, x)) <= 1e-12
                 for i, k in enumerate(out.scales) for x in pts if out.box.contains(x))
        check("long square function", ok)
    if name in ("LP_HIGH", "VAR_LP", "JUMP_LP", "L2_SHIFTED", "POINTWISE_MAX_DOM", "WEIGHTED_L2"):
        seq = rng.normal(size=8)
        check("chain DP", _kernels.chain_power_rows(seq[None, :].copy(), 2.0)[0] == enum_chain_power(seq, 2.0))
        lam = float(np.abs(np.diff(seq)).mean())
        check("jump DP", int(_kernels.jump_rows(seq[None, :].copy(), lam)[0]) == enum_jump(seq, lam))
    if name in ("WEIGHTED_L2", "POINTWISE_MAX_DOM", "WEIGHTED_WEAK11"):
        hl = maximal("HL", f, out_box=box)
        check("HL maximal", all(abs(hl(x) - brute_hl(f, x, max(box.shape))) <= 1e-12 * max(1.0, hl(x)) for x in pts))
    if name == "SHARP_DOMINATION":
        base = cube_family(dim, 2).base
        g = LatticeFunction(rng.random((8,) * dim if dim < 3 else (4, 4, 4)))
        sh = maximal("SHARP", g, base)
        check("sharp maximal", all(abs(sh(x) - brute_sharp(g, base, x)) <= 1e-12 for x in list(sh.box.points())[::5]))
        e = martingale_expectation(g, base, level=1)
        check("atom means", all(abs(e(x) - brute_atom_mean(g, x, base.atom_sides(1))) <= 1e-13
                                for x in list(e.box.points())[::5]))
    if name in ("WEIGHTED_WEAK11", "WEIGHTED_LP"):
        w = LatticeFunction(np.exp(rng.normal(size=(6,) * min(dim, 2))))
        check("A_1 constant", abs(Weight(w).a1_constant - brute_a1(w)) <= 1e-12 * brute_a1(w))
        if name == "WEIGHTED_LP":
            check("A_p characteristic", abs(Weight(w).ap_characteristic(2.0) - cube_scan_ap(w, 2.0)) <= 1e-12 * cube_scan_ap(w, 2.0))
    return done


# --------------------------------------------------------------- per trial

def _wsum(vals: np.ndarray, p: float, w: np.ndarray | None = None) -> float:
    a = np.abs(vals).astype(np.longdouble) ** p
    if w is not None:
        a = a * w
    return float(np.sum(a))


def _pointwise_max_ratio(num: np.ndarray, den: np.ndarray) -> tuple[float, int]:
    bad = int(np.count_nonzero((den <= 0) & (num > 0)))
    pos = den > 0
    r = float(np.max(num[pos] / den[pos])) if np.any(pos) else 0.0
    return r, bad


def sharp_sides(f: LatticeFunction, fam: AveragingFamily) -> tuple[LatticeFunction, LatticeFunction]:
    """Left and right sides of the sharp-function domination: M#((S_d f)^2) and M'(f^2) on one box."""
    Sd = discretized_sf("d", f, fam).aggregate
    sharp = maximal("SHARP", Sd * Sd, fam)
    return sharp, maximal("REFINED", f * f, fam, out_box=sharp.box)


def _trial(exp: InequalityExperiment, f: LatticeFunction, fam: AveragingFamily, rng: np.random.Generator) -> dict:
    name, p = exp.name, float(exp.p)
    if name == "WEAK11_RECT_LONG":
        S = rect_sf("LONG", f, nested_rects(fam)).aggregate
        return {"ratio": weak_quasinorm(S, 1.0) / lp_norm(f, 1.0)}
    if name == "CONSEC":
        side = max(f.shape)
        rects = random_consecutive_rects(f.dim, int(rng.integers(4, 4 + side)), side, rng)
        S = rect_sf("CONSEC", f, rects).aggregate
        return {"ratio": weak_quasinorm(S, 1.0) / lp_norm(f, 1.0)}
    if name == "LP_HIGH":
        nf = lp_norm(f, p)
        return {f"ratio_{v.lower()}": lp_norm(discretized_sf("D", f, fam, v, prune=True).aggregate, p) / nf
                for v in ("LONG", "SHORT")}
    if name == "VAR_LP":
        return {"ratio": lp_norm(variation_field(f, fam, exp.s), p) / lp_norm(f, p)}
    if name == "JUMP_LP":
        m = f.max_abs()
        lams = exp.lam if exp.lam is not None else tuple(np.geomspace(1e-2, 1.0, 8))
        nf = lp_norm(f, p)
        best = 0.0
        for rel in lams:
            lam = rel * m
            # counted as the number of jumps N - 1: the chain length itself is 1 everywhere off the support
            J = jump_field(f, fam, lam) - 1.0
            best = max(best, lam * lp_norm(J.map(np.sqrt), p) / nf)
        return {"ratio": best}
    if name == "L2_SHIFTED":
        nf = lp_norm(f, 2.0)
        return {f"ratio_{v.lower()}": lp_norm(shifted_sf(v, f, fam, prune=True).aggregate, 2.0) / nf
                for v in ("LONG", "SHORT")}
    if name == "POINTWISE_MAX_DOM":
        box = computation_box(f.box, fam)
        Mf = maximal("FAMILY", f, fam, out_box=box).values
        out = {}
        for v, per in (("long", long_sf(f, fam, box).per_scale), ("short", short_sf(f, fam, box, prune=True).per_scale)):
            r, bad = _pointwise_max_ratio(np.max([s.values for s in per], axis=0), Mf)
            out[f"ratio_{v}"] = r
            out[f"zero_violations_{v}"] = float(bad)
        return out
    if name == "SHARP_DOMINATION":
        sharp, Mp = sharp_sides(f, fam)
        r, bad = _pointwise_max_ratio(sharp.values, Mp.values)
        return {"ratio": r, "zero_violations": float(bad)}
    # weighted experiments: S_D lives on the discrete computation box, the weight is drawn there
    box = computation_box(f.box, fam, "discrete")
    w = weight_for(exp.weight, box, f.box, rng)
    wv = w.w.values if isinstance(w, Weight) else w.values
    outs = {v: discretized_sf("D", f, fam, v, box, prune=True).aggregate.values for v in ("LONG", "SHORT")}
    if name == "WEIGHTED_L2":
        wl = w.w if isinstance(w, Weight) else w
        Mw = maximal("HL", wl, out_box=f.box).values
        rhs = _wsum(f.values, 2.0, Mw)
        return {f"ratio_{v.lower()}": _wsum(S, 2.0, wv) / rhs for v, S in outs.items()}
    if not isinstance(w, Weight):
        raise ValueError(f"{name} needs a positive weight, got {exp.weight!r}")
    fw = w.w.on_box(f.box)
    if name == "WEIGHTED_WEAK11":
        rhs = _wsum(f.values, 1.0, fw)
        res = {f"ratio_{v.lower()}": weak_quasinorm(LatticeFunction(S, box.lo), 1.0, w) / rhs for v, S in outs.items()}
        res["a1"] = w.a1_constant
        return res
    rhs = _wsum(f.values, p, fw) ** (1.0 / p)
    res = {f"ratio_{v.lower()}": _wsum(S, p, wv) ** (1.0 / p) / rhs for v, S in outs.items()}
    res["ap"] = w.ap_characteristic(p)
    return res


# ------------------------------------------------------------------ driver

def log_slope(ns: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log(y) against log(n) over the positive entries (0 if fewer than two)."""
    pts = [(math.log(n), math.log(y)) for n, y in zip(ns, ys) if y > 0 and math.isfinite(y)]
    if len(pts) < 2:
        return 0.0
    x, y = np.array(pts).T
    if np.ptp(x) == 0:
        return 0.0
    return float(np.polyfit(x, y, 1)[0])


@dataclass
class ExperimentReport:
    experiment: InequalityExperiment
    rows: list[tuple] = field(default_factory=list)
    ladder: dict[str, list[float]] = field(default_factory=dict)
    certification: dict[int, JRWReport] = field(default_factory=dict)
    oracle_checks: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def slope(self, stat: str) -> float:
        return log_slope(self.experiment.grid, self.ladder[stat])

    def bounded(self, stat: str, tol: float = 0.05) -> bool:
        return self.slope(stat) <= tol

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        for r in self.rows:
            lines.append(",".join(str(x) if not isinstance(x, float) else repr(x) for x in r))
        return "\n".join(lines) + "\n"


def run_inequality(exp: InequalityExperiment, workers: int = 1,
                   family_factory: Callable | None = None) -> ExperimentReport:
    """Best observed constant per grid size; one row per (trial, statistic) plus a `best` row per grid.

    family_factory(shape, rng) overrides the family spec (the rng is the trial's, so random
    families are drawn per trial)."""
    rep = ExperimentReport(exp)
    rep.oracle_checks = spot_check(exp.name, exp.dim, np.random.default_rng(np.random.SeedSequence([exp.seed, 99991])))
    need = REQUIRES[exp.name]
    random_family = family_factory is not None or exp.family.startswith("random")
    if exp.name == "WEIGHTED_LP":
        probe = weight_for(exp.weight, Rectangle((0,) * exp.dim, (4,) * exp.dim), Rectangle((0,) * exp.dim, (4,) * exp.dim),
                           np.random.default_rng(0))
        if not _ap_certified(probe, exp.p, exp.dim):
            raise ValueError(f"weight {exp.weight!r} is not certified A_p for p = {exp.p}")
    if exp.name == "WEIGHTED_WEAK11":
        probe = weight_for(exp.weight, Rectangle((0,) * exp.dim, (4,) * exp.dim), Rectangle((0,) * exp.dim, (4,) * exp.dim),
                           np.random.default_rng(0))
        if not (isinstance(probe, Weight) and probe.certified_a1):
            raise ValueError(f"weight {exp.weight!r} is not certified A_1")
    for gi, n in enumerate(exp.grid):
        shape = grid_shape(n, exp.dim)
        fixed = None
        if not random_family:
            fixed = family_for(exp.family, shape)
            rep.certification[n] = certify(fixed, need)

        def one(trial, gi=gi, shape=shape, fixed=fixed):
            rng = np.random.default_rng(np.random.SeedSequence([exp.seed, gi, trial]))
            if fixed is not None:
                fam = fixed
            elif family_factory is not None:
                fam = family_factory(shape, rng)
            else:
                fam = family_for(exp.family, shape, rng)
            if fixed is None and need is not None:
                certify(fam, need)
            f = make_input(exp.distribution, shape, rng)
            if not np.any(f.values):
                return {}
            return _trial(exp, f, fam, rng)

        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                results = list(pool.map(one, range(exp.trials)))
        else:
            results = [one(t) for t in range(exp.trials)]
        best: dict[str, float] = {}
        for t, res in enumerate(results):
            for stat, val in res.items():
                rep.rows.append((exp.name, exp.dim, n, t, stat, float(val)))
                best[stat] = max(best.get(stat, 0.0), float(val))
        for stat, val in best.items():
            rep.rows.append((exp.name, exp.dim, n, "best", stat, val))
            rep.ladder.setdefault(stat, []).append(val)
    if exp.name == "CONSEC":
        rep.notes.append("exploratory: non-dyadic nestings, a growing constant is data")
    if exp.out:
        Path(exp.out).write_text(rep.to_csv())
    return rep


POOL = ("random_uniform", "random_sparse(0.05)", "spikes(1)", "spikes(4)", "smooth_bumps(3)",
        "adversarial(spike)", "adversarial(cantor)")


def deepest_family(spec: str, dim: int, grid: Sequence[int]) -> str:
    """The family spec pinned at the default depth of the largest grid, e.g. 'cubes' -> 'cubes(7)'."""
    name, args = _split_call(spec)
    return spec if args else f"{name}({_default_levels(grid_shape(max(grid), dim))})"


def run_pooled(name: str, dim: int, grid: Sequence[int], trials: int, distributions: Sequence[str] = POOL,
               family: str = "cubes", seed: int = 0, **kw) -> tuple[dict[str, list[float]], list[ExperimentReport]]:
    """Per-grid best constant over a pool of input distributions, with the family held at the depth of
    the largest grid so the ladder varies only the support of f."""
    fam = deepest_family(family, dim, grid)
    reports = []
    best: dict[str, list[float]] = {}
    for i, dist in enumerate(distributions):
        rep = run_inequality(InequalityExperiment(name, dim=dim, grid=tuple(grid), trials=trials, seed=seed + 1000 * i,
                                                  distribution=dist, family=fam, **kw))
        reports.append(rep)
        for stat, vals in rep.ladder.items():
            best[stat] = list(np.maximum(best[stat], vals)) if stat in best else list(vals)
    return best, reports


def random_families(dim: int, grid: Sequence[int], count: int, seed: int = 0) -> list[AveragingFamily]:
    """Random dyadic nestings, all at the depth of the largest grid; family i is drawn from seed [seed, i]."""
    K = _default_levels(grid_shape(max(grid), dim))
    return [rectangle_family(random_nested_family(dim, K * dim, np.random.default_rng([seed, i]), max_exponent=K))
            for i in range(count)]


def run_family_sweep(name: str, dim: int, grid: Sequence[int], families: Sequence[AveragingFamily], trials: int,
                     distributions: Sequence[str] = POOL, seed: int = 0, **kw) -> list[dict[str, list[float]]]:
    """Per-family ladders: family i is held fixed across the ladder and all pooled inputs."""
    out = []
    for i, fam in enumerate(families):
        best: dict[str, list[float]] = {}
        for j, dist in enumerate(distributions):
            exp = InequalityExperiment(name, dim=dim, grid=tuple(grid), trials=trials, distribution=dist,
                                       seed=seed + 1000 * j + 100003 * i, **kw)
            rep = run_inequality(exp, family_factory=lambda shape, rng, fam=fam: fam)
            for stat, vals in rep.ladder.items():
                best[stat] = list(np.maximum(best[stat], vals)) if stat in best else list(vals)
        out.append(best)
    return out


def read_csv_best(text: str) -> dict[tuple[str, int, str], list[tuple[int, float]]]:
    """(experiment, dim, statistic) -> [(grid, best)] from a harness CSV."""
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines or lines[0].strip() != CSV_HEADER:
        raise ValueError(f"line 1: expected header {CSV_HEADER!r}")
    out: dict = {}
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 6:
            raise ValueError(f"line {i}: expected 6 fields, got {len(parts)}")
        e, d, g, t, stat, v = parts
        if t == "best":
            out.setdefault((e, int(d), stat), []).append((int(g), float(v)))
    return out


# ------------------------------------------------------------ lemma suite

@dataclass
class FibredTestFunction:
    """Psi_n = sum of integer-valued psi_J, each supported on its own interval J of length 2^n with sum 0."""
    n: int
    starts: list[int]
    psis: list[np.ndarray]

    def __post_init__(self):
        L = 1 << self.n
        if len(self.starts) != len(self.psis):
            raise ValueError("one psi per interval")
        for psi in self.psis:
            if psi.shape != (L,):
                raise ValueError(f"psi must have length 2^n = {L}")
            if int(psi.sum()) != 0:
                raise ValueError("every psi_J must have sum zero")
        s = sorted(self.starts)
        if any(b < a + L for a, b in zip(s, s[1:])):
            raise ValueError("intervals must be pairwise disjoint")

    @classmethod
    def random(cls, rng: np.random.Generator, n: int | None = None, count: int | None = None,
               amplitude: int = 8) -> "FibredTestFunction":
        n = int(rng.integers(2, 6)) if n is None else n
        count = int(rng.integers(1, 9)) if count is None else count
        L = 1 << n
        starts, pos = [], 0
        psis = []
        for _ in range(count):
            pos += int(rng.integers(0, 8 * L))
            starts.append(pos)
            pos += L
            psi = rng.integers(-amplitude, amplitude + 1, L)
            psi[int(rng.integers(L))] -= int(psi.sum())
            psis.append(psi.astype(np.int64))
        return cls(n, starts, psis)

    @classmethod
    def haar(cls, n: int, count: int = 1, gap: int = 0) -> "FibredTestFunction":
        L = 1 << n
        psi = np.r_[np.ones(L // 2, np.int64), -np.ones(L // 2, np.int64)]
        return cls(n, [i * (L + gap) for i in range(count)], [psi.copy() for _ in range(count)])

    def values(self) -> np.ndarray:
        L = 1 << self.n
        out = np.zeros(max(self.starts) + L, np.int64)
        for a, psi in zip(self.starts, self.psis):
            out[a:a + L] = psi
        return out

    def l1(self) -> int:
        return int(sum(np.abs(p).sum() for p in self.psis))

    def smoothed_l1(self, length: int) -> float:
        """||chi_I * Psi_n||_1 for |I| = length, from exact integer window sums."""
        v = self.values()
        c = np.concatenate([[0], np.cumsum(np.concatenate([np.zeros(length, np.int64), v, np.zeros(length, np.int64)]))])
        win = c[length:] - c[:-length]
        return float(np.abs(win).sum()) / length


def one_d_one(count: int = 100, smax: int = 8, seed: int = 0) -> dict:
    """Best ratio ||chi_I * Psi_n||_1 / ||Psi_n||_1 per scale gap s over random fibred test functions,
    with |I| uniform in [2^(n+s), 2^(n+s+1))."""
    rng = np.random.default_rng(seed)
    ratios = np.zeros((count, smax + 1))
    for i in range(count):
        F = FibredTestFunction.random(rng)
        l1 = F.l1()
        for s in range(smax + 1):
            length = int(rng.integers(1 << (F.n + s), 1 << (F.n + s + 1)))
            ratios[i, s] = F.smoothed_l1(length) / l1
    best = ratios.max(axis=0)
    slope = float(np.polyfit(np.arange(smax + 1), np.log2(best), 1)[0])
    return {"ratios": ratios, "best": best, "slope": slope, "C": float(best[0])}


def wk_constant(gs: Sequence[np.ndarray]) -> float:
    """||(sum |g_k|^2)^(1/2)||_{1,inf} / sum ||g_k||_{1,inf}."""
    G = np.sqrt(aggregate(gs) ** 2)
    den = sum(weak_quasinorm(LatticeFunction(g), 1.0) for g in gs)
    return weak_quasinorm(LatticeFunction(G), 1.0) / den


def weak_sum(counts: Sequence[int] = (1, 2, 4, 8, 16, 32, 64), trials: int = 20, size: int = 512, seed: int = 0) -> dict:
    """Best wk constant per number of summands; each g_k is a scaled 1/(1 + |x - c_k|) profile."""
    rng = np.random.default_rng(seed)
    x = np.arange(size, dtype=float)
    best = []
    for K in counts:
        b = 0.0
        for _ in range(trials):
            gs = [rng.uniform(0.1, 10) / (1.0 + np.abs(x - rng.uniform(0, size))) for _ in range(K)]
            b = max(b, wk_constant(gs))
        best.append(b)
    return {"counts": list(counts), "best": best, "slope": log_slope(counts, best)}


def smooth_comparability(dim: int = 1, grid: Sequence[int] = (64, 128, 256, 512, 1024), ps=(1.0, 2.0, 4.0),
                         trials: int = 5, seed: int = 0, weight: str = "power(-0.5)") -> dict:
    """Two-sided constants ||S_{D,k} f||_p / ||S~_k f||_p (shifted vs 3Q-spread) and the A_infinity
    comparison ||S_{D,k} f||_{L^p(v)} / ||S_{d,k} f||_{L^p(v)}, per grid, over scales and trials.
    Also counts points where S~_k exceeds S_{D,k} (the pointwise domination)."""
    out = {"grid": list(grid), "smooth": {p: [] for p in ps}, "ainf": {p: [] for p in ps}, "pointwise_violations": 0}
    for gi, n in enumerate(grid):
        shape = grid_shape(n, dim)
        fam = cube_family(dim, _default_levels(shape))
        sm = {p: [math.inf, 0.0] for p in ps}
        ai = {p: [math.inf, 0.0] for p in ps}
        for t in range(trials):
            rng = np.random.default_rng(np.random.SeedSequence([seed, gi, t]))
            f = make_input("random_uniform", shape, rng)
            box = computation_box(f.box, fam, "discrete")
            sh = shifted_sf("LONG", f, fam, box)
            D = discretize(sh, fam, "D")
            dd = discretize(sh, fam, "d")
            v = weight_for(weight, box, f.box, rng)
            for St, SD, Sd in zip(sh.per_scale, D.per_scale, dd.per_scale):
                out["pointwise_violations"] += int(np.count_nonzero(St.values > SD.values))
                if not np.any(St.values):
                    continue
                for p in ps:
                    r = lp_norm(SD, p) / lp_norm(St, p)
                    sm[p] = [min(sm[p][0], r), max(sm[p][1], r)]
                    r = lp_norm(SD, p, v) / lp_norm(Sd, p, v)
                    ai[p] = [min(ai[p][0], r), max(ai[p][1], r)]
        for p in ps:
            out["smooth"][p].append(tuple(sm[p]))
            out["ainf"][p].append(tuple(ai[p]))
    return out


def stable_within(pairs: Sequence[tuple[float, float]], factor: float = 2.0) -> bool:
    lo = [a for a, _ in pairs]
    hi = [b for _, b in pairs]
    return max(lo) <= factor * min(lo) and max(hi) <= factor * min(hi)


@dataclass
class LemmaReport:
    one_d_one: dict
    weak_sum: dict
    smooth: dict
    good_lambda: dict
    checks: dict[str, bool]
    rows: list[tuple] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def good_lambda_bumps(count: int = 10, size: int = 256, seed: int = 0, levels: int = 8) -> dict:
    from .operators import good_lambda_check
    rng = np.random.default_rng(seed)
    fam = cube_family(2, levels)
    viol, worst, nonempty = 0, 0.0, 0
    for _ in range(count):
        f = LatticeFunction(smooth_bumps((size, size), rng, int(rng.integers(1, 6))))
        rep = good_lambda_check(f, fam)
        viol += rep.violations
        worst = max(worst, rep.worst_ratio)
        nonempty += int(rep.left.any())
    return {"violations": viol, "worst_ratio": worst, "nonempty": nonempty, "count": count}


def lemma_suite(seed: int = 0, quick: bool = False) -> LemmaReport:
    """1d1 decay, summing weak-type bounds, smooth and A_infinity comparability, good-lambda on bump fields."""
    n1 = 30 if quick else 100
    od = one_d_one(n1, 8, seed)
    ws = weak_sum(trials=5 if quick else 20, seed=seed)
    grid = (64, 128, 256) if quick else (64, 128, 256, 512, 1024)
    sm = {d: smooth_comparability(d, grid, trials=2 if quick else 5, seed=seed) for d in (1, 2)}
    gl = good_lambda_bumps(3 if quick else 10, 128 if quick else 256, seed, 7 if quick else 8)
    single = wk_constant([np.random.default_rng(seed).random(64)])
    checks = {
        "1d1 slope": -1.15 <= od["slope"] <= -0.85,
        "wk single term": single == 1.0,
        "wk bounded": ws["slope"] <= 0.05,
        "smooth pointwise": all(s["pointwise_violations"] == 0 for s in sm.values()),
        "smooth stable": all(stable_within(s["smooth"][p]) for s in sm.values() for p in s["smooth"]),
        "A_inf stable": all(stable_within(s["ainf"][p]) for s in sm.values() for p in s["ainf"]),
        "good lambda": gl["violations"] == 0 and gl["nonempty"] > 0,
    }
    rows = [("1d1", s, float(b)) for s, b in enumerate(od["best"])] + [("1d1_slope", "", od["slope"])]
    rows += [("wk", K, b) for K, b in zip(ws["counts"], ws["best"])]
    for d, s in sm.items():
        for p, pairs in s["smooth"].items():
            rows += [(f"smooth_d{d}_p{p:g}", n, f"{lo!r}..{hi!r}") for n, (lo, hi) in zip(s["grid"], pairs)]
        for p, pairs in s["ainf"].items():
            rows += [(f"ainf_d{d}_p{p:g}", n, f"{lo!r}..{hi!r}") for n, (lo, hi) in zip(s["grid"], pairs)]
    rows.append(("good_lambda_violations", "", gl["violations"]))
    return LemmaReport(od, ws, sm, gl, checks, rows)


# ------------------------------------------------------------ transference

@dataclass
class TransferenceReport:
    N: int
    dim: int
    interior: Rectangle
    mismatched_averages: int
    mismatched_square: int
    checked: int

    @property
    def exact(self) -> bool:
        return self.mismatched_averages == 0 and self.mismatched_square == 0


def torus_average(f: np.ndarray, E, out_box: Rectangle) -> np.ndarray:
    """Ergodic average (1/|E|) sum_{y in E} f(T^y x) for the shift action T^y x = x - y mod N.

    The orbit window x - E is gathered with modular indices, then summed with the
    double-double table, so every x in out_box sees exactly the values it visits."""
    N = f.shape[0]
    reach = out_box.minkowski(set_bbox(E).reflect())
    idx = [np.arange(lo, hi) % N for lo, hi in zip(reach.lo, reach.hi)]
    window = f[np.ix_(*idx)]
    return SummedAreaTable(window, reach.lo).set_sums(E, out_box) / E.size


def transference_demo(N: int, d: int, fam: AveragingFamily, f: np.ndarray | None = None,
                      rng: np.random.Generator | None = None) -> TransferenceReport:
    """Compare torus averages M_t f with lattice averages A_t f of f on [0, N)^d away from the collar,
    and the long square functions built from both."""
    if N < 1 or N & (N - 1):
        raise ValueError(f"N must be a power of 2, got {N}")
    ext = fam.extent()
    width = max(ext.shape)
    if N <= 2 * width:
        raise ValueError(f"N = {N} too small: needs N > 2 * {width} (largest H_k extent)")
    if f is None:
        rng = rng or np.random.default_rng(0)
        f = rng.uniform(-1, 1, (N,) * d)
    f = np.asarray(f, dtype=float)
    if f.shape != (N,) * d:
        raise ValueError(f"f must have shape {(N,) * d}")
    top = fam.base.atom_sides(max(fam.classes))
    # x - E_t stays inside [0, N) iff x in [hi(E), N + lo(E)); round inward to whole top atoms
    lo = [-(-h // s) * s for h, s in zip(ext.hi, top)]
    hi = [((N + l) // s) * s for l, s in zip(ext.lo, top)]
    interior = Rectangle(tuple(lo), tuple(hi))
    lat = LatticeFunction(f)
    mism, fields_t = 0, []
    table = SummedAreaTable.of(lat)
    for k in fam.classes:
        # E_k on the torus: atoms tile (Z_N)^d exactly since N is a multiple of the atom sides
        ek = martingale_expectation(lat, fam.base, level=k).on_box(interior)
        St = np.zeros(interior.shape)
        for t in fam.block(k):
            E = fam.set(t)
            m = torus_average(f, E, interior)
            a = table.set_sums(E, interior) / E.size
            mism += int(np.count_nonzero(m != a))
            np.maximum(St, np.abs(m - ek), out=St)
        fields_t.append(St)
    sq_t = aggregate(fields_t)
    sq_l = long_sf(lat, fam, computation_box(lat.box, fam)).aggregate.on_box(interior)
    return TransferenceReport(N, d, interior, mism, int(np.count_nonzero(sq_t != sq_l)), interior.size)
