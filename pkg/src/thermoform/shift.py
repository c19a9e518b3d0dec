"""Shift spaces and word combinatorics.

Words are stored as rows of a 2-D integer array; every enumeration routine
returns its words in lexicographic order, so results never depend on how
the work was scheduled.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Sequence

import numpy as np

from .errors import EnumerationCapError, SpaceError

#: Default upper bound on the number of words any enumeration may return.
DEFAULT_CAP = 2**24

WordLike = str | Sequence[int] | np.ndarray


@dataclass(frozen=True)
class ShiftSpace:
    """One-sided subshift of finite type (``dimension == 1``) or a 2-D full shift.

    ``matrix`` is the 0/1 transition matrix as nested tuples so that spaces
    hash and compare by value.
    """

    k: int
    matrix: tuple[tuple[int, ...], ...]
    dimension: int = 1
    primitivity_index: int | None = None

    @cached_property
    def A(self) -> np.ndarray:
        return np.array(self.matrix, dtype=np.int64)

    @property
    def is_primitive(self) -> bool:
        return self.primitivity_index is not None

    @cached_property
    def successors(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(int(j) for j in np.flatnonzero(row)) for row in self.A)

    def is_admissible(self, w: WordLike) -> bool:
        w = as_word(w, self.k)
        if self.dimension != 1:
            return True
        return bool(np.all(self.A[w[:-1], w[1:]] == 1))

    def is_cyclic_admissible(self, w: WordLike) -> bool:
        w = as_word(w, self.k)
        return self.is_admissible(w) and bool(self.A[w[-1], w[0]] == 1)


@dataclass(frozen=True)
class Box:
    """Rectangular index set {0..a_1-1} x ... x {0..a_l-1}."""

    sides: tuple[int, ...]

    def __post_init__(self):
        if not self.sides or any(int(a) < 1 for a in self.sides):
            raise SpaceError(f"box sides must be >= 1, got {self.sides}")

    @property
    def volume(self) -> int:
        return int(np.prod(self.sides))


def _primitivity_index(A: np.ndarray) -> int | None:
    k = A.shape[0]
    bound = (k - 1) ** 2 + 1
    B = (A > 0).astype(np.int64)
    P = B.copy()
    for m in range(1, bound + 1):
        if np.all(P > 0):
            return m
        P = ((P @ B) > 0).astype(np.int64)
    return None


def build_sft(k: int, A) -> ShiftSpace:
    """Validate a transition matrix and return the corresponding 1-D SFT."""
    if int(k) != k or k < 1:
        raise SpaceError(f"alphabet size must be a positive integer, got {k!r}")
    try:
        M = np.asarray(A)
    except Exception as exc:  # ragged input
        raise SpaceError(f"transition matrix is not rectangular: {exc}") from None
    if M.dtype == object or M.ndim != 2 or M.shape != (k, k):
        raise SpaceError(f"transition matrix must be {k}x{k}, got shape {getattr(M, 'shape', None)}")
    if not np.all(np.isin(M, (0, 1))):
        raise SpaceError("transition matrix entries must be 0 or 1")
    M = M.astype(np.int64)
    for i in range(k):
        if not M[i].any():
            raise SpaceError(f"row {i} of the transition matrix is zero (symbol {i} has no successor)")
        if not M[:, i].any():
            raise SpaceError(f"column {i} of the transition matrix is zero (symbol {i} has no predecessor)")
    return ShiftSpace(k=int(k), matrix=tuple(tuple(int(v) for v in row) for row in M),
                      dimension=1, primitivity_index=_primitivity_index(M))


def full_shift(k: int, dimension: int = 1) -> ShiftSpace:
    if dimension not in (1, 2):
        raise SpaceError(f"dimension must be 1 or 2, got {dimension}")
    space = build_sft(k, np.ones((k, k), dtype=np.int64))
    if dimension == 2:
        space = ShiftSpace(k=space.k, matrix=space.matrix, dimension=2,
                           primitivity_index=space.primitivity_index)
    return space


def golden_mean() -> ShiftSpace:
    """The SFT on {0, 1} forbidding the factor ``11``."""
    return build_sft(2, [[1, 1], [1, 0]])


# ---------------------------------------------------------------- words

def as_word(w: WordLike, k: int | None = None) -> np.ndarray:
    """Coerce a string (``"0101"`` or ``"0,1,10"``) or int sequence to a word array."""
    if isinstance(w, str):
        parts = w.split(",") if "," in w else list(w)
        try:
            arr = np.array([int(p) for p in parts], dtype=np.int64)
        except ValueError:
            raise SpaceError(f"cannot parse word {w!r}") from None
    else:
        arr = np.asarray(w, dtype=np.int64).reshape(-1)
    if arr.size == 0:
        raise SpaceError("words must have length >= 1")
    if k is not None and (arr.min() < 0 or arr.max() >= k):
        raise SpaceError(f"word {format_word(arr)} uses symbols outside 0..{k - 1}")
    return arr


def format_word(w, k: int | None = None) -> str:
    w = [int(s) for s in np.asarray(w).reshape(-1)]
    if (k is not None and k > 10) or any(s > 9 for s in w):
        return ",".join(str(s) for s in w)
    return "".join(str(s) for s in w)


def word_codes(words: np.ndarray, k: int) -> np.ndarray:
    """Base-``k`` integer code of every row (first symbol most significant)."""
    words = np.atleast_2d(np.asarray(words, dtype=np.int64))
    L = words.shape[1]
    powers = k ** np.arange(L - 1, -1, -1, dtype=np.int64)
    return words @ powers


def _symbol_dtype(k: int):
    return np.uint8 if k <= 255 else np.int32


def _matrix_power_sum(A: np.ndarray, p: int, trace: bool = False) -> int:
    """Exact integer sum (or trace) of ``A**p`` without overflow."""
    M = np.array(A, dtype=object)
    R = np.identity(A.shape[0], dtype=np.int64).astype(object)
    while p:
        if p & 1:
            R = R.dot(M)
        M = M.dot(M)
        p >>= 1
    return int(np.trace(R)) if trace else int(R.sum())


@lru_cache(maxsize=1024)
def count_admissible(space: ShiftSpace, n: int) -> int:
    return _matrix_power_sum(space.A, n - 1)


@lru_cache(maxsize=1024)
def count_periodic(space: ShiftSpace, n: int) -> int:
    return _matrix_power_sum(space.A, n, trace=True)


def _check_cap(what: str, count: int, cap: int | None):
    cap = DEFAULT_CAP if cap is None else cap
    if count > cap:
        raise EnumerationCapError(what, count, cap)


@lru_cache(maxsize=64)
def _successor_table(space: ShiftSpace) -> tuple[np.ndarray, np.ndarray]:
    deg = space.A.sum(axis=1)
    table = np.zeros((space.k, int(deg.max())), dtype=np.int64)
    for i, succ in enumerate(space.successors):
        table[i, :len(succ)] = succ
    return deg, table


def _extend_all(space: ShiftSpace, words: np.ndarray) -> np.ndarray:
    """Append every admissible symbol to every word, preserving lex order."""
    deg, table = _successor_table(space)
    last = words[:, -1].astype(np.int64)
    reps = deg[last]
    src = np.repeat(np.arange(words.shape[0]), reps)
    starts = np.cumsum(reps) - reps
    offset = np.arange(src.size) - np.repeat(starts, reps)
    new = table[last[src], offset].astype(words.dtype)
    return np.concatenate([words[src], new[:, None]], axis=1)


def admissible_words(space: ShiftSpace, n: int, cap: int | None = None) -> np.ndarray:
    """All admissible words of length ``n`` in lexicographic order, one per row.

    Small results are cached and returned read-only.
    """
    if n < 1:
        raise SpaceError(f"word length must be >= 1, got {n}")
    count = count_admissible(space, n)
    _check_cap(f"admissible words of length {n}", count, cap)
    if count <= _CACHE_LIMIT:
        return _cached_words(space, n)
    return _enumerate_words(space, n)


_CACHE_LIMIT = 1 << 16


def _enumerate_words(space: ShiftSpace, n: int) -> np.ndarray:
    words = np.arange(space.k, dtype=_symbol_dtype(space.k))[:, None]
    for _ in range(n - 1):
        words = _extend_all(space, words)
    return words


@lru_cache(maxsize=256)
def _cached_words(space: ShiftSpace, n: int) -> np.ndarray:
    words = _enumerate_words(space, n)
    words.setflags(write=False)
    return words


@lru_cache(maxsize=256)
def admissible_codes(space: ShiftSpace, n: int) -> np.ndarray:
    """Base-``k`` codes of :func:`admissible_words` (cached, read-only)."""
    codes = word_codes(admissible_words(space, n), space.k)
    codes.setflags(write=False)
    return codes


def enumerate_periodic_points(space: ShiftSpace, n: int, cap: int | None = None) -> np.ndarray:
    """Words of length ``n`` whose cyclic closure is admissible.

    Each row codes the ``n``-periodic point obtained by repeating it; the
    number of rows equals ``trace(A**n)``.
    """
    if space.dimension != 1:
        raise SpaceError("periodic point enumeration is implemented for 1-D spaces")
    words = admissible_words(space, n, cap)
    keep = space.A[words[:, -1], words[:, 0]] == 1
    return words[keep]


def separated_set_representatives(space: ShiftSpace, n: int, r: int,
                                  cap: int | None = None) -> np.ndarray:
    """A maximal (2**-(r+1), n)-separated set, one admissible (n+r)-word per point.

    With ``d(x, y) = 2**-(first index where x and y differ)`` the Bowen
    distance over ``n`` iterates exceeds ``2**-(r+1)`` exactly when two points
    differ within their first ``n + r`` symbols, so cylinder transversals of
    length ``n + r`` are maximal separated sets.
    """
    if space.dimension != 1:
        raise SpaceError("separated sets are implemented for 1-D spaces")
    if n < 1 or r < 0:
        raise SpaceError(f"need n >= 1 and r >= 0, got n={n}, r={r}")
    return admissible_words(space, n + r, cap)


def canonical_extension(space: ShiftSpace, w: WordLike, target_len: int) -> np.ndarray:
    """Extend ``w`` greedily by the least admissible symbol up to ``target_len``."""
    w = as_word(w, space.k)
    if target_len < w.size:
        raise SpaceError(f"target length {target_len} is shorter than the word ({w.size})")
    return extend_canonically(space, w[None, :], target_len)[0]


def extend_canonically(space: ShiftSpace, words: np.ndarray, target_len: int) -> np.ndarray:
    """Row-wise :func:`canonical_extension`."""
    words = np.atleast_2d(words)
    extra = target_len - words.shape[1]
    if extra <= 0:
        return words
    least = np.array([s[0] for s in space.successors], dtype=np.int64)
    out = np.empty((words.shape[0], target_len), dtype=words.dtype)
    out[:, :words.shape[1]] = words
    for j in range(words.shape[1], target_len):
        out[:, j] = least[out[:, j - 1].astype(np.int64)]
    return out


def higher_block_recode(space: ShiftSpace, m: int) -> tuple[ShiftSpace, np.ndarray]:
    """Recode ``space`` on its admissible ``m``-words.

    Returns the recoded SFT and the array of ``m``-words; symbol ``i`` of the
    new space is row ``i`` of that array. ``u -> v`` is allowed iff ``u`` and
    ``v`` overlap in ``m - 1`` symbols and the glued word is admissible.
    """
    if m < 1:
        raise SpaceError(f"block length must be >= 1, got {m}")
    if m == 1:
        return space, np.arange(space.k, dtype=_symbol_dtype(space.k))[:, None]
    states = admissible_words(space, m)
    src, dst = _overlap_edges(space, m)
    N = states.shape[0]
    M = np.zeros((N, N), dtype=np.int64)
    M[src, dst] = 1
    return build_sft(N, M), states


@lru_cache(maxsize=64)
def _overlap_edges(space: ShiftSpace, q: int) -> tuple[np.ndarray, np.ndarray]:
    """(source, target) state indices of the order-``q`` block graph.

    Edge ``e`` corresponds to row ``e`` of ``admissible_words(space, q + 1)``.
    """
    edges = admissible_words(space, q + 1)
    index = state_index(space, q)
    src = index[word_codes(edges[:, :q], space.k)]
    dst = index[word_codes(edges[:, 1:], space.k)]
    return src, dst


overlap_edges = _overlap_edges


@lru_cache(maxsize=256)
def state_index(space: ShiftSpace, q: int) -> np.ndarray:
    """Lookup from the base-``k`` code of a ``q``-word to its state index (-1 if inadmissible)."""
    index = np.full(space.k ** q, -1, dtype=np.int64)
    index[admissible_codes(space, q)] = np.arange(count_admissible(space, q))
    index.setflags(write=False)
    return index


def window_sums(words: np.ndarray, k: int, tables: np.ndarray, m: int,
                count: int, cyclic: bool = False) -> np.ndarray:
    """Birkhoff sums of window-``m`` functions over the first ``count`` positions.

    ``tables`` has shape ``(d, k**m)`` (one lookup row per function, indexed
    by window code). Returns an ``(N, d)`` array. With ``cyclic=True`` window
    indices wrap modulo the word length, so windows may exceed the period.
    """
    words = np.atleast_2d(words)
    tables = np.atleast_2d(tables)
    N, L = words.shape
    if not cyclic and count + m - 1 > L:
        raise SpaceError(f"words of length {L} have no {count} windows of length {m}")
    powers = k ** np.arange(m - 1, -1, -1, dtype=np.int64)
    out = np.zeros((N, tables.shape[0]))
    for x in range(count):
        cols = (np.arange(x, x + m) % L) if cyclic else np.arange(x, x + m)
        codes = words[:, cols].astype(np.int64) @ powers
        out += tables[:, codes].T
    return out
