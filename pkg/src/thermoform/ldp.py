"""Empirical-measure distributions and finite-n large-deviation estimates.

A cloud is the law of the moment vector ``(1/n) sum_{x<n} S(shift^x xi)``
when ``xi`` is drawn from a finite Gibbs-type ensemble: weighted periodic
points, a weighted maximal separated set, or the cylinders of an
equilibrium state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .convex import RateFunctionHandle, RateResult
from .errors import EnumerationCapError, SpaceError
from .measures import (MarkovMeasure, MeasureLike, as_invariant, cylinder_probabilities)
from .potential import ObservableFamily, Potential
from .pressure import equilibrium_state
from .shift import (DEFAULT_CAP, ShiftSpace, admissible_words, count_admissible,
                    enumerate_periodic_points, extend_canonically, overlap_edges,
                    separated_set_representatives, state_index, window_sums, word_codes)

MERGE_TOL = 1e-12
BOX_TOL = 1e-12
GRID_STEP = 0.02
REFINE_TOL = 1e-4
VARIANTS = ("periodic", "separated", "gibbs")


def _normalize(log_w: np.ndarray) -> np.ndarray:
    w = np.exp(log_w - log_w.max())
    return w / math.fsum(w)


@dataclass(frozen=True, eq=False)
class WeightedPointCloud:
    """Finitely supported probability on R^d with its scale index ``n``."""

    weights: np.ndarray
    points: np.ndarray
    n: int
    provenance: str

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        p = np.asarray(self.points, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if p.shape[0] != w.size:
            raise SpaceError("one point per weight is required")
        if (w <= 0).any():
            raise SpaceError("cloud weights must be positive")
        if abs(math.fsum(w) - 1.0) > 1e-12:
            raise SpaceError(f"cloud weights sum to {math.fsum(w)!r}, not 1")
        if self.provenance not in VARIANTS:
            raise SpaceError(f"unknown provenance {self.provenance!r}")
        w.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "points", p)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.weights.size

    def merged(self, tol: float = MERGE_TOL) -> "WeightedPointCloud":
        """Sort points lexicographically and add the weights of points within ``tol``."""
        order = np.lexsort(self.points.T[::-1])
        pts, w = self.points[order], self.weights[order]
        new = np.ones(len(w), dtype=bool)
        new[1:] = np.any(np.abs(np.diff(pts, axis=0)) > tol, axis=1)
        starts = np.flatnonzero(new)
        groups = np.split(np.arange(len(w)), starts[1:])
        weights = np.array([math.fsum(w[g]) for g in groups])
        return WeightedPointCloud(weights, pts[starts], self.n, self.provenance)

    def check_range(self, handle: RateFunctionHandle) -> bool:
        """Every atom lies in the closed moment range (extreme atoms suffice when d = 1)."""
        if self.d == 1:
            probe = [self.points[:, 0].min(), self.points[:, 0].max()]
            return all(handle.in_moment_range([x]) for x in probe)
        return all(handle.in_moment_range(p) for p in self.points)

    def to_json(self) -> dict:
        return {"n": self.n, "provenance": self.provenance,
                "atoms": [{"weight": float(w), "point": p.tolist()}
                          for w, p in zip(self.weights, self.points)]}


@dataclass(frozen=True)
class BoxQuery:
    """Product of intervals; each face is closed unless flagged open."""

    lo: tuple
    hi: tuple
    closed_lo: tuple | None = None
    closed_hi: tuple | None = None

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi) or not lo:
            raise SpaceError("box bounds must have the same positive length")
        if any(a > b for a, b in zip(lo, hi)):
            raise SpaceError(f"box has lo > hi: {lo} vs {hi}")
        d = len(lo)
        c_lo = (True,) * d if self.closed_lo is None else tuple(bool(c) for c in self.closed_lo)
        c_hi = (True,) * d if self.closed_hi is None else tuple(bool(c) for c in self.closed_hi)
        if len(c_lo) != d or len(c_hi) != d:
            raise SpaceError("one open/closed flag per face is required")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "closed_lo", c_lo)
        object.__setattr__(self, "closed_hi", c_hi)

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def is_closed(self) -> bool:
        return all(self.closed_lo) and all(self.closed_hi)

    def closure(self) -> "BoxQuery":
        return BoxQuery(self.lo, self.hi)

    def is_empty(self) -> bool:
        return any(a == b and not (cl and ch)
                   for a, b, cl, ch in zip(self.lo, self.hi, self.closed_lo, self.closed_hi))

    def contains(self, points) -> np.ndarray:
        """Membership with faces widened (closed) or narrowed (open) by ``BOX_TOL``."""
        P = np.atleast_2d(np.asarray(points, dtype=float))
        lo, hi = np.array(self.lo), np.array(self.hi)
        tol_lo = np.where(self.closed_lo, BOX_TOL, -BOX_TOL)
        tol_hi = np.where(self.closed_hi, BOX_TOL, -BOX_TOL)
        above = np.where(self.closed_lo, P >= lo - tol_lo, P > lo - tol_lo)
        below = np.where(self.closed_hi, P <= hi + tol_hi, P < hi + tol_hi)
        return np.all(above & below, axis=1)

    def label(self) -> str:
        parts = []
        for a, b, cl, ch in zip(self.lo, self.hi, self.closed_lo, self.closed_hi):
            parts.append(f"{'[' if cl else '('}{a:.12g},{b:.12g}{']' if ch else ')'}")
        return "x".join(parts)

    def to_json(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi),
                "closed_lo": list(self.closed_lo), "closed_hi": list(self.closed_hi)}


# ------------------------------------------------------------ clouds

def _require_1d(space: ShiftSpace):
    if space.dimension != 1:
        raise SpaceError("empirical distributions are implemented for 1-D spaces")


def empirical_distribution_periodic(space: ShiftSpace, f: Potential, n: int,
                                    S: ObservableFamily, cap: int | None = None
                                    ) -> WeightedPointCloud:
    """One atom per periodic point of period ``n``, weighted by its cyclic Birkhoff sum of ``f``."""
    _require_1d(space)
    words = enumerate_periodic_points(space, n, cap)
    if words.shape[0] == 0:
        raise SpaceError(f"there are no periodic points of period {n}")
    log_w = window_sums(words, space.k, f.table, f.window, n, cyclic=True)[:, 0]
    pts = window_sums(words, space.k, S.tables, S.window, n, cyclic=True) / n
    return WeightedPointCloud(_normalize(log_w), pts, n, "periodic")


def empirical_distribution_separated(space: ShiftSpace, f: Potential, n: int, r: int,
                                     S: ObservableFamily, cap: int | None = None
                                     ) -> WeightedPointCloud:
    """One atom per point of a maximal ``(2**-(r+1), n)``-separated set."""
    _require_1d(space)
    reps = separated_set_representatives(space, n, r, cap)
    window = max(f.window, S.window)
    ext = extend_canonically(space, reps, n + max(r, window - 1))
    log_w = window_sums(ext, space.k, f.table, f.window, n)[:, 0]
    pts = window_sums(ext, space.k, S.tables, S.window, n) / n
    return WeightedPointCloud(_normalize(log_w), pts, n, "separated")


def _gibbs_enumerated(mu: MeasureLike, n: int, S: ObservableFamily,
                      cap: int | None = None) -> WeightedPointCloud:
    """Pushforward by listing every admissible word of length ``n + window - 1``."""
    space = S.space
    words = admissible_words(space, n + S.window - 1, cap)
    w = cylinder_probabilities(mu, words)
    keep = w > 0
    pts = window_sums(words[keep], space.k, S.tables, S.window, n) / n
    w = w[keep]
    return WeightedPointCloud(w / math.fsum(w), pts, n, "gibbs").merged()


def _gibbs_dp(mu: MarkovMeasure, n: int, S: ObservableFamily, cap: int) -> tuple:
    """Forward recursion over (last ``Q`` symbols, partial sum) with atom merging.

    Returns raw ``(sums, probs)`` for words of length ``n + m - 1``.
    """
    space, k, m = S.space, S.space.k, S.window
    Q = max(mu.order, m - 1, 1)
    q = mu.order
    length = n + m - 1
    states = admissible_words(space, Q)
    probs = cylinder_probabilities(mu, states)
    # windows already complete inside the initial Q-word
    first = min(max(Q - m + 1, 0), n)
    sums = window_sums(states, k, S.tables, m, first) if first else np.zeros((states.shape[0], S.d))
    cur = np.arange(states.shape[0])
    live = probs > 0
    cur, sums, probs = cur[live], sums[live], probs[live]

    src, dst = overlap_edges(space, Q)
    edges = admissible_words(space, Q + 1)
    idx_q = state_index(space, q)
    pw = k ** np.arange(q - 1, -1, -1, dtype=np.int64)
    e_from = idx_q[edges[:, Q - q:Q].astype(np.int64) @ pw]
    e_to = idx_q[edges[:, Q - q + 1:].astype(np.int64) @ pw]
    e_prob = mu.Q[e_from, e_to]
    e_val = S.tables[:, word_codes(edges[:, Q + 1 - m:], k)].T      # (E, d)
    order = np.argsort(src, kind="stable")
    starts = np.searchsorted(src[order], np.arange(states.shape[0] + 1))

    for L in range(Q + 1, length + 1):
        deg = starts[cur + 1] - starts[cur]
        parent = np.repeat(np.arange(cur.size), deg)
        offs = np.arange(parent.size) - np.repeat(np.cumsum(deg) - deg, deg)
        e = order[starts[cur][parent] + offs]
        p = probs[parent] * e_prob[e]
        s = sums[parent]
        if L - m < n:  # window ending at the new symbol is counted
            s = s + e_val[e]
        live = p > 0
        cur, sums, probs = dst[e][live], s[live], p[live]
        # merge atoms that agree in state and (rounded) partial sum
        sums = np.round(sums, 12) + 0.0
        keys = np.column_stack([cur, sums])
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        probs = np.bincount(inv, weights=probs, minlength=uniq.shape[0])
        cur, sums = uniq[:, 0].astype(np.int64), uniq[:, 1:]
        if cur.size > cap:
            raise EnumerationCapError(f"distribution atoms at length {L}", int(cur.size), cap)
    return sums, probs


def empirical_distribution_gibbs(space: ShiftSpace, f_base: Potential | None, n: int,
                                 S: ObservableFamily, measure: MeasureLike | None = None,
                                 cap: int | None = None) -> WeightedPointCloud:
    """Exact law of the empirical moments under the equilibrium state of ``f_base``.

    ``measure`` overrides the equilibrium state (any Markov measure or
    mixture). The computation runs a merged-atom recursion, so its cost is
    governed by the number of distinct partial sums rather than by the
    number of words.
    """
    _require_1d(space)
    if n < 1:
        raise SpaceError(f"n must be >= 1, got {n}")
    mu = equilibrium_state(space, f_base) if measure is None else measure
    cap = DEFAULT_CAP if cap is None else cap
    all_sums, all_probs = [], []
    for beta, comp in as_invariant(mu).components:
        if n + S.window - 1 < max(comp.order, S.window - 1, 1):
            cloud = _gibbs_enumerated(comp, n, S, cap)
            all_sums.append(cloud.points * n)
            all_probs.append(beta * cloud.weights)
            continue
        sums, probs = _gibbs_dp(comp, n, S, cap)
        all_sums.append(sums)
        all_probs.append(beta * probs)
    probs = np.concatenate(all_probs)
    pts = np.concatenate(all_sums) / n
    raw = WeightedPointCloud(probs / math.fsum(probs), pts, n, "gibbs")
    return raw.merged()


# ------------------------------------------------------------ estimates

@dataclass(frozen=True)
class RateEstimate:
    mass: float
    value: float          # -inf when the box carries no mass
    empty: bool

    def to_json(self) -> dict:
        return {"mass": self.mass, "value": None if self.empty else self.value,
                "empty": self.empty}


def rate_estimate(cloud: WeightedPointCloud, B: BoxQuery) -> RateEstimate:
    """``(1/n) log cloud(B)``."""
    if B.d != cloud.d:
        raise SpaceError(f"box dimension {B.d} does not match the cloud ({cloud.d})")
    inside = B.contains(cloud.points)
    mass = math.fsum(cloud.weights[inside])
    if mass <= 0:
        return RateEstimate(0.0, -math.inf, True)
    if mass >= 1.0:
        return RateEstimate(1.0, 0.0, False)
    return RateEstimate(mass, math.log(mass) / cloud.n, False)


@dataclass(frozen=True)
class InfRate:
    value: float          # +inf when B misses the moment range
    argmin: np.ndarray | None
    infinite: bool
    resolution: float = 0.0

    def to_json(self) -> dict:
        return {"value": None if self.infinite else self.value, "infinite": self.infinite,
                "argmin": None if self.argmin is None else self.argmin.tolist(),
                "resolution": self.resolution}


def _box_clip(handle: RateFunctionHandle, B: BoxQuery):
    # moment range is contained in [min g, max g] coordinatewise
    vals = handle.S.values()
    lo = np.maximum(np.array(B.lo), vals.min(axis=1))
    hi = np.minimum(np.array(B.hi), vals.max(axis=1))
    return lo, hi


def inf_rate_over_box(handle: RateFunctionHandle, B: BoxQuery) -> InfRate:
    """``inf_{x in B} I(x)`` for ``d <= 2`` (sign not applied)."""
    if B.d != handle.d:
        raise SpaceError(f"box dimension {B.d} does not match the family ({handle.d})")
    if B.is_empty():
        return InfRate(math.inf, None, True)
    x0 = handle.gradient(np.zeros(handle.d))
    if B.contains(x0[None, :])[0]:
        return InfRate(0.0, x0, False)
    if handle.d == 1:
        lo, hi = B.lo[0], B.hi[0]
        x = lo if x0[0] < lo else hi
        res = handle.rate_at([x])
        if res.infinite:
            return InfRate(math.inf, None, True)
        return InfRate(res.value, np.array([x]), False)
    if handle.d != 2:
        raise SpaceError("box infima are implemented for d <= 2")
    return _inf_rate_2d(handle, B)


def _inf_rate_2d(handle: RateFunctionHandle, B: BoxQuery) -> InfRate:
    lo, hi = _box_clip(handle, B)
    if np.any(lo > hi):
        return InfRate(math.inf, None, True)
    axes = [np.unique(np.append(np.arange(a, b, GRID_STEP), b)) for a, b in zip(lo, hi)]
    best, arg = math.inf, None
    for x in axes[0]:
        for y in axes[1]:
            r = handle.rate_at([x, y])
            if not r.infinite and r.value < best:
                best, arg = r.value, np.array([x, y])
    if arg is None:
        return InfRate(math.inf, None, True)
    step = GRID_STEP / 2
    moves = np.array([[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1], [1, -1], [-1, 1], [-1, -1]])
    while step >= REFINE_TOL:
        improved = False
        for mv in moves:
            cand = np.clip(arg + step * mv, lo, hi)
            r = handle.rate_at(cand)
            if not r.infinite and r.value < best:
                best, arg, improved = r.value, cand, True
        if not improved:
            step /= 2
    return InfRate(best, arg, False, resolution=REFINE_TOL)


@dataclass(frozen=True)
class ReportRow:
    variant: str
    n: int
    box: str
    mass: float
    estimate: RateEstimate
    neg_inf_rate: float   # -inf when I = +inf on the box
    slack: float
    atoms: int

    @property
    def gap(self) -> float | None:
        a, b = self.neg_inf_rate, self.estimate.value
        if math.isinf(a) or math.isinf(b):
            return None if math.isinf(a) and math.isinf(b) else (a - b)
        return a - b

    def to_json(self) -> dict:
        gap = self.gap
        return {"variant": self.variant, "n": self.n, "box": self.box, "mass": self.mass,
                "rate_estimate": None if self.estimate.empty else self.estimate.value,
                "empty": self.estimate.empty,
                "neg_inf_rate": None if math.isinf(self.neg_inf_rate) else self.neg_inf_rate,
                "rate_infinite": math.isinf(self.neg_inf_rate),
                "slack": self.slack, "gap": None if gap is None or math.isinf(gap) else gap,
                "atoms": self.atoms}


@dataclass
class LdpReport:
    variant: str
    box: BoxQuery
    rows: list = field(default_factory=list)
    inf_rate: InfRate | None = None

    def upper_bound_holds(self) -> bool:
        """``estimate <= -inf_B I + slack`` on every row (closed boxes)."""
        return all(r.estimate.empty or r.estimate.value <= r.neg_inf_rate + r.slack + 1e-12
                   for r in self.rows)


def make_cloud(variant: str, space: ShiftSpace, f: Potential, n: int, S: ObservableFamily,
               r: int = 0, measure: MeasureLike | None = None,
               cap: int | None = None) -> WeightedPointCloud:
    if variant == "periodic":
        return empirical_distribution_periodic(space, f, n, S, cap)
    if variant == "separated":
        return empirical_distribution_separated(space, f, n, r, S, cap)
    if variant == "gibbs":
        return empirical_distribution_gibbs(space, f, n, S, measure, cap)
    raise SpaceError(f"unknown variant {variant!r}; expected one of {', '.join(VARIANTS)}")


def ldp_report(space: ShiftSpace, f: Potential, S: ObservableFamily, B: BoxQuery, ns,
               variant: str, r: int = 0, c: float = 1.0,
               handle: RateFunctionHandle | None = None, cap: int | None = None,
               pool=None) -> LdpReport:
    """Finite-n estimates against ``-inf_B I`` with the atom-counting slack.

    ``pool`` may be an executor; rows are assembled in the order of ``ns``.
    """
    if variant not in VARIANTS:
        raise SpaceError(f"unknown variant {variant!r}; expected one of {', '.join(VARIANTS)}")
    handle = handle or RateFunctionHandle(space, f, S)
    inf = inf_rate_over_box(handle, B.closure())
    neg = -inf.value
    label = B.label()

    def row(n: int) -> ReportRow:
        cloud = make_cloud(variant, space, f, n, S, r=r, cap=cap)
        est = rate_estimate(cloud, B)
        slack = (S.d * math.log(n + 1) + math.log(c)) / n
        return ReportRow(variant, n, label, est.mass, est, neg, slack, len(cloud))

    ns = [int(n) for n in ns]
    rows = list(pool.map(row, ns)) if pool is not None else [row(n) for n in ns]
    return LdpReport(variant, B, rows, inf)
