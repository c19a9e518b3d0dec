"""Invariant measures as finite mixtures of stationary Markov measures."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import ReducibleChainError, SpaceError
from .potential import ObservableFamily, Potential
from .shift import (ShiftSpace, admissible_codes, admissible_words, as_word, count_admissible,
                    format_word, overlap_edges, state_index, window_sums, word_codes)

ROW_TOL = 1e-12
STATIONARY_TOL = 1e-12


def stationary_distribution(Q) -> np.ndarray:
    """Stationary vector of an irreducible row-stochastic matrix.

    Uses Grassmann-Taksar-Heyman elimination, which involves no
    subtractions and therefore keeps full relative accuracy.
    """
    Q = np.array(Q, dtype=float)
    n = Q.shape[0]
    if Q.ndim != 2 or Q.shape != (n, n):
        raise SpaceError("transition matrix must be square")
    ncomp, labels = connected_components(Q > 0, directed=True, connection="strong")
    if ncomp > 1:
        # a closed class is a strong component with no edge leaving it
        for c in range(ncomp):
            members = np.flatnonzero(labels == c)
            outside = np.flatnonzero(labels != c)
            if not (Q[np.ix_(members, outside)] > 0).any():
                raise ReducibleChainError(
                    f"transition matrix is reducible: states {members.tolist()} form a "
                    f"trapped component ({ncomp} strong components in total)")
        raise ReducibleChainError(f"transition matrix is reducible ({ncomp} strong components)")
    P = Q.copy()
    for m in range(n - 1, 0, -1):
        s = P[m, :m].sum()
        P[:m, m] /= s
        P[:m, :m] += np.outer(P[:m, m], P[m, :m])
    pi = np.zeros(n)
    pi[0] = 1.0
    for m in range(1, n):
        pi[m] = pi[:m] @ P[:m, m]
    return pi / pi.sum()


@dataclass(frozen=True, eq=False)
class MarkovMeasure:
    """Stationary Markov measure of a given order on a 1-D SFT.

    The states are the admissible ``order``-words in lexicographic order and
    ``Q`` is supported on overlapping pairs of states.
    """

    space: ShiftSpace
    order: int
    Q: np.ndarray
    pi: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.order < 1:
            raise SpaceError(f"Markov order must be >= 1, got {self.order}")
        N = count_admissible(self.space, self.order)
        Q = np.array(self.Q, dtype=float)
        if Q.shape != (N, N):
            raise SpaceError(f"order-{self.order} transition matrix must be {N}x{N}, got {Q.shape}")
        if (Q < 0).any():
            raise SpaceError("transition probabilities must be nonnegative")
        rows = Q.sum(axis=1)
        bad = np.flatnonzero(np.abs(rows - 1.0) > ROW_TOL)
        if bad.size:
            raise SpaceError(f"row {int(bad[0])} of the transition matrix sums to {rows[bad[0]]!r}, not 1")
        allowed = np.zeros((N, N), dtype=bool)
        src, dst = overlap_edges(self.space, self.order)
        allowed[src, dst] = True
        if (Q[~allowed] > 0).any():
            i, j = np.argwhere((Q > 0) & ~allowed)[0]
            raise SpaceError(f"transition {int(i)}->{int(j)} is not an admissible overlap")
        pi = stationary_distribution(Q) if self.pi is None else np.array(self.pi, dtype=float)
        if pi.shape != (N,) or (pi < 0).any():
            raise SpaceError("stationary vector must be a nonnegative vector over the states")
        if abs(pi.sum() - 1.0) > STATIONARY_TOL:
            raise SpaceError(f"stationary vector sums to {pi.sum()!r}, not 1")
        resid = np.abs(pi @ Q - pi).max()
        if resid > STATIONARY_TOL:
            raise SpaceError(f"stationary vector is not invariant (residual {resid:.3g})")
        Q.setflags(write=False)
        pi.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "pi", pi)

    @property
    def states(self) -> np.ndarray:
        return admissible_words(self.space, self.order)

    def to_json(self) -> dict:
        return {"order": self.order, "transition": self.Q.tolist(), "stationary": self.pi.tolist()}


@dataclass(frozen=True, eq=False)
class InvariantMeasure:
    """Convex combination ``sum_i beta_i mu_i`` of Markov measures."""

    components: tuple[tuple[float, MarkovMeasure], ...]

    def __post_init__(self):
        comps = tuple((float(b), m) for b, m in self.components)
        if not comps:
            raise SpaceError("a mixture needs at least one component")
        if any(b <= 0 for b, _ in comps):
            raise SpaceError("mixture weights must be positive")
        total = math.fsum(b for b, _ in comps)
        if abs(total - 1.0) > 1e-12:
            raise SpaceError(f"mixture weights sum to {total!r}, not 1")
        if any(m.space != comps[0][1].space for _, m in comps):
            raise SpaceError("mixture components live on different spaces")
        object.__setattr__(self, "components", comps)

    @property
    def space(self) -> ShiftSpace:
        return self.components[0][1].space

    def to_json(self) -> dict:
        return {"components": [{"weight": b, **m.to_json()} for b, m in self.components]}


MeasureLike = MarkovMeasure | InvariantMeasure


def as_invariant(mu: MeasureLike) -> InvariantMeasure:
    if isinstance(mu, InvariantMeasure):
        return mu
    return InvariantMeasure(((1.0, mu),))


def mix(parts: Iterable[tuple[float, MeasureLike]]) -> InvariantMeasure:
    """Flattened convex combination of measures."""
    comps = []
    parts = list(parts)
    total = math.fsum(float(b) for b, _ in parts)
    if any(float(b) <= 0 for b, _ in parts) or abs(total - 1.0) > 1e-12:
        raise SpaceError("mixture weights must be positive and sum to 1")
    for beta, mu in parts:
        for b, m in as_invariant(mu).components:
            comps.append((float(beta) * b, m))
    return InvariantMeasure(tuple(comps))


# ------------------------------------------------------------- constructors

def bernoulli(space: ShiftSpace, p: Sequence[float]) -> MarkovMeasure:
    """I.i.d. measure with marginal ``p`` (full shifts only)."""
    p = np.asarray(p, dtype=float)
    if p.shape != (space.k,) or not np.all(space.A == 1):
        raise SpaceError("Bernoulli measures need a full shift and one probability per symbol")
    Q = np.tile(p, (space.k, 1))
    return MarkovMeasure(space, 1, Q, p.copy())


def periodic_orbit_measure(space: ShiftSpace, word) -> MarkovMeasure:
    """Uniform measure on the orbit of the periodic point ``word^inf``.

    The order is the smallest one for which the orbit's transitions are
    deterministic; rows of states off the orbit follow their least
    admissible successor.
    """
    w = as_word(word, space.k)
    if not space.is_cyclic_admissible(w):
        raise SpaceError(f"{format_word(w)} does not generate an admissible periodic point")
    p = w.size
    for q in range(1, p + 1):
        windows = np.array([w[(np.arange(q) + x) % p] for x in range(p)])
        nxt = np.array([w[(x + q) % p] for x in range(p)])
        seen: dict[int, int] = {}
        ok = True
        for code, c in zip(word_codes(windows, space.k), nxt):
            if seen.setdefault(int(code), int(c)) != int(c):
                ok = False
                break
        if ok:
            break
    index = state_index(space, q)
    N = count_admissible(space, q)
    Q = np.zeros((N, N))
    src, dst = overlap_edges(space, q)
    for s in range(N):  # default: least successor
        Q[s, dst[np.flatnonzero(src == s)[0]]] = 1.0
    pi = np.zeros(N)
    for x in range(p):
        u = index[int(word_codes(windows[x], space.k)[0])]
        v_word = np.append(windows[x][1:], nxt[x])
        v = index[int(word_codes(v_word, space.k)[0])]
        Q[u] = 0.0
        Q[u, v] = 1.0
        pi[u] += 1.0 / p
    return MarkovMeasure(space, q, Q, pi)


# ------------------------------------------------------------- functionals

def _chain_probabilities(mu: MarkovMeasure, words: np.ndarray) -> np.ndarray:
    space, q = mu.space, mu.order
    words = np.atleast_2d(words).astype(np.int64)
    N, L = words.shape
    k = space.k
    if L < q:
        codes = admissible_codes(space, q) // k ** (q - L)
        marg = np.bincount(codes, weights=mu.pi, minlength=k ** L)
        return marg[word_codes(words, k)]
    index = state_index(space, q)
    powers = k ** np.arange(q - 1, -1, -1, dtype=np.int64)
    s = index[words[:, :q] @ powers]
    ok = s >= 0
    prob = np.where(ok, mu.pi[np.maximum(s, 0)], 0.0)
    for j in range(1, L - q + 1):
        t = index[words[:, j:j + q] @ powers]
        ok &= t >= 0
        prob = np.where(ok, prob * mu.Q[np.maximum(s, 0), np.maximum(t, 0)], 0.0)
        s = t
    return prob


def cylinder_probabilities(mu: MeasureLike, words: np.ndarray) -> np.ndarray:
    """``mu([w])`` for every row ``w`` of ``words``."""
    out = None
    for beta, comp in as_invariant(mu).components:
        p = beta * _chain_probabilities(comp, words)
        out = p if out is None else out + p
    return out


def cylinder_probability(mu: MeasureLike, w) -> float:
    w = as_word(w, as_invariant(mu).space.k)
    return float(cylinder_probabilities(mu, w[None, :])[0])


def _chain_entropy(mu: MarkovMeasure) -> float:
    Q = mu.Q
    logs = np.zeros_like(Q)
    pos = Q > 0
    logs[pos] = np.log(Q[pos])
    return float(-(mu.pi[:, None] * Q * logs).sum())


def entropy_rate(mu: MeasureLike) -> float:
    """Measure-theoretic entropy in nats (affine over mixture components)."""
    return math.fsum(b * _chain_entropy(m) for b, m in as_invariant(mu).components)


def integrate(mu: MeasureLike, f: Potential) -> float:
    """``mu(f)`` for a locally constant ``f``."""
    words = admissible_words(f.space, f.window)
    return float(cylinder_probabilities(mu, words) @ f.values())


def moments(mu: MeasureLike, S: ObservableFamily) -> np.ndarray:
    """``p_S(mu) = (mu(g_1), ..., mu(g_d))``."""
    words = admissible_words(S.space, S.window)
    return S.values() @ cylinder_probabilities(mu, words)


def orbit_empirical(space: ShiftSpace, p, S: ObservableFamily
                    ) -> tuple[np.ndarray, Callable[[object], float]]:
    """Moments and cylinder frequencies of the empirical measure of a periodic orbit.

    Windows wrap around the period, so observables may be longer than it.
    """
    w = as_word(p, space.k)
    if not space.is_cyclic_admissible(w):
        raise SpaceError(f"{format_word(w)} does not generate an admissible periodic point")
    n = w.size
    mom = window_sums(w[None, :], space.k, S.tables, S.window, n, cyclic=True)[0] / n

    def cylinder(word) -> float:
        u = as_word(word, space.k)
        idx = (np.arange(n)[:, None] + np.arange(u.size)[None, :]) % n
        hits = np.all(w[idx] == u[None, :], axis=1).sum()
        return float(hits) / n

    return mom, cylinder
