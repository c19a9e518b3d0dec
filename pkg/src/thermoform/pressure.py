"""Topological pressure by several routes, and equilibrium states.

Potentials are read on the order-``q`` block graph with ``q = max(m-1, 1)``
for window ``m``: an edge is an admissible ``(q+1)``-word, and a potential
of window ``m' <= q+1`` contributes its value on the last ``m'`` symbols of
the edge word.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, EnumerationCapError, NotPrimitiveError, SpaceError
from .measures import MarkovMeasure, MeasureLike, entropy_rate, integrate, stationary_distribution
from .potential import Potential
from .shift import (ShiftSpace, admissible_words, count_admissible,
                    enumerate_periodic_points, extend_canonically, overlap_edges,
                    separated_set_representatives, window_sums, word_codes)

#: Relative width at which the Collatz-Wielandt bracket is accepted.
CW_RTOL = 1e-12
STRIP_MAX_WIDTH = 6
STRIP_CAP = 4096
BOX_CAP = 2**20


@dataclass(frozen=True)
class PressureResult:
    value: float
    route: str
    params: dict = field(default_factory=dict)
    finite: bool = True

    def to_json(self) -> dict:
        return {"route": self.route, "value": self.value if self.finite else None,
                "finite": self.finite, "params": dict(self.params)}


# ------------------------------------------------------------------ Perron

def _positive(x: np.ndarray) -> np.ndarray:
    x = np.abs(x)
    top = x.max()
    if not top > 0 or not np.isfinite(top):
        return np.ones_like(x)
    x = x / top
    return np.maximum(x, np.finfo(float).tiny)


def _cw_polish(M: np.ndarray, y: np.ndarray, lo: float, hi: float, steps: int = 3):
    """A few more power steps, keeping the tightest bracket (down to rounding level)."""
    best = (hi - lo, 0.5 * (lo + hi), y / y.max())
    for _ in range(steps):
        if best[0] == 0:
            break
        x = best[2]
        y = M @ x
        ratios = y / x
        lo, hi = ratios.min(), ratios.max()
        if hi - lo < best[0]:
            best = (hi - lo, 0.5 * (lo + hi), y / y.max())
    return best[1], best[2]


def _cw_refine(M: np.ndarray, x: np.ndarray, rtol: float, maxiter: int, inverse_steps: int = 12):
    """Refine a Perron vector until the Collatz-Wielandt bounds meet.

    The first steps are shifted inverse iterations with the shift just above
    the upper bound (where ``sigma*I - M`` has a positive inverse), which
    converge even when the spectral gap is tiny; plain power steps follow.
    """
    x = _positive(x)
    eye = np.eye(M.shape[0])
    for it in range(maxiter):
        y = M @ x
        ratios = y / x
        lo, hi = ratios.min(), ratios.max()
        if hi - lo <= rtol * hi:
            return _cw_polish(M, y, lo, hi)
        if it < inverse_steps:
            try:
                x = _positive(np.linalg.solve(hi * (1 + 1e-9) * eye - M, x))
                continue
            except np.linalg.LinAlgError:
                pass
        x = _positive(y)
    raise ConvergenceError(f"Collatz-Wielandt bracket [{lo!r}, {hi!r}] did not close "
                           f"after {maxiter} iterations")


def perron(M: np.ndarray, rtol: float = CW_RTOL, maxiter: int = 20_000):
    """Perron root and positive right/left eigenvectors of a primitive matrix.

    The dense eigensolver seeds the iteration; the returned root is certified
    by a Collatz-Wielandt bracket of relative width ``rtol``.
    """
    M = np.asarray(M, dtype=float)
    if M.shape == (1, 1):
        one = np.ones(1)
        return float(M[0, 0]), one, one
    w, V = np.linalg.eig(M)
    i = int(np.argmax(w.real))
    lam_r, r = _cw_refine(M, V[:, i].real, rtol, maxiter)
    w, V = np.linalg.eig(M.T)
    i = int(np.argmax(w.real))
    _, l = _cw_refine(M.T, V[:, i].real, rtol, maxiter)
    return float(lam_r), r, l


# ----------------------------------------------------------- block graph

def block_order(window: int) -> int:
    return max(window - 1, 1)


def edge_values(space: ShiftSpace, q: int, pot: Potential) -> np.ndarray:
    """Value of ``pot`` on every edge of the order-``q`` block graph."""
    if pot.window > q + 1:
        raise SpaceError(f"window {pot.window} does not fit the order-{q} block graph")
    edges = admissible_words(space, q + 1)
    return pot.table[word_codes(edges[:, q + 1 - pot.window:], space.k)]


@dataclass(frozen=True, eq=False)
class GibbsChain:
    """Ruelle-Perron-Frobenius data for edge weights ``exp(phi_e)`` on a block graph."""

    space: ShiftSpace
    order: int
    src: np.ndarray
    dst: np.ndarray
    pressure: float
    Q: np.ndarray
    pi: np.ndarray

    @property
    def edge_prob(self) -> np.ndarray:
        return self.pi[self.src] * self.Q[self.src, self.dst]

    def measure(self) -> MarkovMeasure:
        return MarkovMeasure(self.space, self.order, self.Q, self.pi)


def _require_primitive(space: ShiftSpace):
    if space.dimension != 1:
        raise SpaceError("spectral routines are implemented for 1-D spaces")
    if not space.is_primitive:
        raise NotPrimitiveError("the transition matrix has no strictly positive power")


def gibbs_chain(space: ShiftSpace, q: int, phi: np.ndarray) -> GibbsChain:
    """Equilibrium chain for the edge potential ``phi`` on the order-``q`` block graph."""
    _require_primitive(space)
    src, dst = overlap_edges(space, q)
    N = count_admissible(space, q)
    shift = float(phi.max())
    M = np.zeros((N, N))
    M[src, dst] = np.exp(phi - shift)
    lam, r, _ = perron(M)
    Q = np.zeros((N, N))
    Q[src, dst] = M[src, dst] * r[dst] / (lam * r[src])
    Q /= Q.sum(axis=1, keepdims=True)
    pi = stationary_distribution(Q)
    return GibbsChain(space, q, src, dst, math.log(lam) + shift, Q, pi)


def weighted_transfer_matrix(space: ShiftSpace, f: Potential) -> np.ndarray:
    """``M[u, v] = exp(f(u+v))`` on the block graph of order ``max(m-1, 1)``."""
    q = block_order(f.window)
    src, dst = overlap_edges(space, q)
    N = count_admissible(space, q)
    M = np.zeros((N, N))
    M[src, dst] = np.exp(edge_values(space, q, f))
    return M


def pressure_spectral(space: ShiftSpace, f: Potential) -> PressureResult:
    """Log spectral radius of the weighted transfer matrix."""
    q = block_order(f.window)
    chain = gibbs_chain(space, q, edge_values(space, q, f))
    return PressureResult(chain.pressure, "spectral", {"order": q})


def equilibrium_state(space: ShiftSpace, f: Potential) -> MarkovMeasure:
    """The unique equilibrium state of ``f`` as a Markov measure of order ``max(m-1, 1)``."""
    q = block_order(f.window)
    return gibbs_chain(space, q, edge_values(space, q, f)).measure()


def _log_sum_exp(values: np.ndarray) -> float:
    # fsum is exactly rounded, so the result does not depend on summation order
    mx = float(values.max())
    return math.log(math.fsum(np.exp(values - mx))) + mx


def pressure_periodic(space: ShiftSpace, f: Potential, n: int,
                      cap: int | None = None) -> PressureResult:
    """``(1/n) log sum_{Per_n} exp(cyclic Birkhoff sum of f)``."""
    if n < 1:
        raise SpaceError(f"period must be >= 1, got {n}")
    words = enumerate_periodic_points(space, n, cap)
    if words.shape[0] == 0:
        return PressureResult(-math.inf, "periodic", {"n": n}, finite=False)
    sums = window_sums(words, space.k, f.table, f.window, n, cyclic=True)[:, 0]
    return PressureResult(_log_sum_exp(sums) / n, "periodic", {"n": n})


def pressure_separated(space: ShiftSpace, f: Potential, n: int, r: int,
                       cap: int | None = None, method: str = "transfer") -> PressureResult:
    """Weighted count over a maximal ``(2**-(r+1), n)``-separated set.

    Each representative (admissible ``(n+r)``-word) is extended canonically
    to ``n + max(r, m-1)`` symbols and weighted by ``exp`` of its first ``n``
    window values. ``method="transfer"`` sums over words as paths of the
    block graph (no enumeration); ``"enumerate"`` lists the representatives.
    """
    if n < 1 or r < 0:
        raise SpaceError(f"need n >= 1 and r >= 0, got n={n}, r={r}")
    params = {"n": n, "r": r}
    if method == "enumerate" or n + r < block_order(f.window):
        reps = separated_set_representatives(space, n, r, cap)
        ext = extend_canonically(space, reps, n + max(r, f.window - 1))
        sums = window_sums(ext, space.k, f.table, f.window, n)[:, 0]
        return PressureResult(_log_sum_exp(sums) / n, "separated", params)
    if method != "transfer":
        raise SpaceError(f"unknown method {method!r}")
    return PressureResult(_separated_transfer(space, f, n, r) / n, "separated", params)


def _separated_transfer(space: ShiftSpace, f: Potential, n: int, r: int) -> float:
    m = f.window
    q = block_order(m)
    free_len, total = n + r, n + max(r, m - 1)
    states = admissible_words(space, q)
    first = min(max(q - m + 1, 0), n)   # windows inside the initial q-word
    log_v = window_sums(states, space.k, f.table, m, first)[:, 0] if first else np.zeros(len(states))
    scale = float(log_v.max())
    v = np.exp(log_v - scale)
    src, dst = overlap_edges(space, q)
    edges = admissible_words(space, q + 1)
    weights = np.exp(edge_values(space, q, f))
    least = np.array([s[0] for s in space.successors])
    forced = edges[:, -1] == least[edges[:, -2]]
    for length in range(q + 1, total + 1):
        w = weights if length - m < n else np.ones_like(weights)
        if length > free_len:
            w = np.where(forced, w, 0.0)
        v = np.bincount(dst, weights=v[src] * w, minlength=len(states))
        top = float(v.max())
        v /= top
        scale += math.log(top)
    return math.log(math.fsum(v)) + scale


def variational_gap(space: ShiftSpace, f: Potential, mu: MeasureLike) -> float:
    """``P(f) - (mu(f) + h(mu))``; nonnegative by the variational principle."""
    return pressure_spectral(space, f).value - (integrate(mu, f) + entropy_rate(mu))


# ---------------------------------------------------------------- 2-D

def _nn_matrix(k: int, nn) -> np.ndarray:
    J = np.asarray(nn, dtype=float)
    if J.shape != (k, k) or not np.all(np.isfinite(J)):
        raise SpaceError(f"nearest-neighbour energy must be a finite {k}x{k} table")
    return J


def _configurations(k: int, size: int) -> np.ndarray:
    """All ``k**size`` configurations in lexicographic order."""
    idx = np.arange(k ** size, dtype=np.int64)
    out = np.empty((idx.size, size), dtype=np.int8 if k <= 127 else np.int64)
    for j in range(size):
        out[:, j] = (idx // k ** (size - 1 - j)) % k
    return out


def strip_transfer_matrix(k: int, nn, width: int) -> np.ndarray:
    """Row-to-row transfer matrix of the nearest-neighbour model on a periodic strip.

    Entry ``(u, v)`` is ``exp`` of one vertical bond per site between rows
    ``u`` and ``v`` plus one horizontal bond per site inside the new row
    ``v`` (periodic in the width).
    """
    J = _nn_matrix(k, nn)
    rows = _configurations(k, width)
    within = J[rows, np.roll(rows, -1, axis=1)].sum(axis=1)
    between = np.zeros((rows.shape[0], rows.shape[0]))
    for i in range(width):
        between += J[rows[:, i][:, None], rows[:, i][None, :]]
    return np.exp(between + within[None, :])


def pressure_2d_strip(k: int, nn, width: int, max_width: int = STRIP_MAX_WIDTH,
                      cap: int = STRIP_CAP) -> PressureResult:
    """Per-site pressure ``(1/w) log`` of the Perron root of the strip transfer matrix."""
    J = _nn_matrix(k, nn)
    if not 2 <= width <= max_width:
        raise SpaceError(f"strip width must be in 2..{max_width}, got {width}")
    if k ** width > cap:
        raise EnumerationCapError(f"strip states k^w for w={width}", k ** width, cap)
    # every site owns two bonds, so lowering all bonds by top lowers P by 2*top
    top = float(J.max())
    lam, _, _ = perron(strip_transfer_matrix(k, J - top, width))
    return PressureResult(math.log(lam) / width + 2 * top, "strip", {"k": k, "width": width})


def torus_energies(configs: np.ndarray, J: np.ndarray, a1: int, a2: int) -> np.ndarray:
    """Total energy of each configuration on the ``a1 x a2`` torus.

    Site ``(i, j)`` is column ``i * a2 + j``; every site owns one bond in
    each lattice direction, so a side of length 1 contributes a self-bond.
    """
    E = np.zeros(configs.shape[0])
    for i in range(a1):
        for j in range(a2):
            x = configs[:, i * a2 + j]
            E += J[x, configs[:, ((i + 1) % a1) * a2 + j]]
            E += J[x, configs[:, i * a2 + (j + 1) % a2]]
    return E


def pressure_2d_box(k: int, nn, a1: int, a2: int, cap: int = BOX_CAP) -> PressureResult:
    """``(1/|box|) log`` of the partition function over all doubly periodic configurations."""
    J = _nn_matrix(k, nn)
    if a1 < 1 or a2 < 1:
        raise SpaceError(f"box sides must be >= 1, got {a1}x{a2}")
    total = k ** (a1 * a2)
    if total > cap:
        raise EnumerationCapError(f"{a1}x{a2} periodic configurations", total, cap)
    configs = _configurations(k, a1 * a2)
    E = torus_energies(configs, J, a1, a2)
    return PressureResult(_log_sum_exp(E) / (a1 * a2), "box", {"k": k, "box": [a1, a2]})
