"""Locally constant potentials on a shift space."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .errors import SpaceError
from .shift import (ShiftSpace, admissible_codes, admissible_words, as_word, format_word,
                    word_codes)


@dataclass(frozen=True, eq=False)
class Potential:
    """A function of the first ``window`` coordinates.

    ``table`` is indexed by the base-``k`` code of a window word and holds
    ``nan`` at inadmissible words.
    """

    space: ShiftSpace
    window: int
    table: np.ndarray

    def __post_init__(self):
        if self.window < 1:
            raise SpaceError(f"potential window must be >= 1, got {self.window}")
        table = np.asarray(self.table, dtype=float)
        if table.shape != (self.space.k ** self.window,):
            raise SpaceError("potential table has the wrong length")
        codes = admissible_codes(self.space, self.window)
        if not np.all(np.isfinite(table[codes])):
            raise SpaceError("potential values must be finite on admissible words")
        mask = np.ones(table.size, dtype=bool)
        mask[codes] = False
        table = table.copy()
        table[mask] = np.nan
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    # constructors -------------------------------------------------------
    @classmethod
    def zero(cls, space: ShiftSpace, window: int = 1) -> "Potential":
        return cls.constant(space, 0.0, window)

    @classmethod
    def constant(cls, space: ShiftSpace, c: float, window: int = 1) -> "Potential":
        return cls(space, window, np.full(space.k ** window, float(c)))

    @classmethod
    def from_function(cls, space: ShiftSpace, window: int,
                      fn: Callable[[tuple[int, ...]], float]) -> "Potential":
        table = np.full(space.k ** window, np.nan)
        words = admissible_words(space, window)
        for w, c in zip(words, word_codes(words, space.k)):
            table[c] = float(fn(tuple(int(s) for s in w)))
        return cls(space, window, table)

    @classmethod
    def from_values(cls, space: ShiftSpace, window: int,
                    values: Mapping[str, float]) -> "Potential":
        """Build from ``{word: value}``; the keys must be exactly the admissible words."""
        words = admissible_words(space, window)
        expected = {format_word(w, space.k): int(c)
                    for w, c in zip(words, word_codes(words, space.k))}
        table = np.full(space.k ** window, np.nan)
        seen = set()
        for key, val in values.items():
            w = as_word(key, space.k)
            name = format_word(w, space.k)
            if w.size != window or name not in expected:
                raise SpaceError(f"potential value given for word {key!r}, "
                                 f"which is not an admissible word of length {window}")
            if name in seen:
                raise SpaceError(f"potential value for word {key!r} given twice")
            seen.add(name)
            table[expected[name]] = float(val)
        missing = [name for name in expected if name not in seen]
        if missing:
            raise SpaceError(f"potential is missing admissible word {missing[0]!r}")
        return cls(space, window, table)

    @classmethod
    def indicator(cls, space: ShiftSpace, word) -> "Potential":
        """``1_[w]``: one on the cylinder of ``w`` at position 0."""
        w = as_word(word, space.k)
        if not space.is_admissible(w):
            raise SpaceError(f"cylinder word {format_word(w)} is not admissible")
        table = np.zeros(space.k ** w.size)
        table[int(word_codes(w, space.k)[0])] = 1.0
        return cls(space, int(w.size), table)

    @classmethod
    def random(cls, space: ShiftSpace, window: int, rng: np.random.Generator,
               scale: float = 1.0) -> "Potential":
        return cls(space, window, scale * rng.standard_normal(space.k ** window))

    # algebra -------------------------------------------------------------
    def lift(self, window: int) -> "Potential":
        """Same function read through a longer window (extra symbols ignored)."""
        if window < self.window:
            raise SpaceError(f"cannot lift window {self.window} potential to window {window}")
        if window == self.window:
            return self
        extra = window - self.window
        table = np.repeat(self.table, self.space.k ** extra)
        codes = admissible_codes(self.space, window)
        out = np.full(table.size, np.nan)
        out[codes] = table[codes]
        return Potential(self.space, window, out)

    def _combine(self, other: "Potential", op) -> "Potential":
        if other.space != self.space:
            raise SpaceError("potentials live on different spaces")
        m = max(self.window, other.window)
        a, b = self.lift(m), other.lift(m)
        return Potential(self.space, m, op(np.nan_to_num(a.table), np.nan_to_num(b.table)))

    def __add__(self, other):
        if isinstance(other, Potential):
            return self._combine(other, np.add)
        return Potential(self.space, self.window, np.nan_to_num(self.table) + float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Potential):
            return self._combine(other, np.subtract)
        return self + (-float(other))

    def __mul__(self, c: float):
        return Potential(self.space, self.window, np.nan_to_num(self.table) * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    # evaluation ------------------------------------------------------------
    def values(self) -> np.ndarray:
        """Values on the admissible window words, in lexicographic order."""
        words = admissible_words(self.space, self.window)
        return self.table[word_codes(words, self.space.k)]

    def __call__(self, word) -> float:
        w = as_word(word, self.space.k)[: self.window]
        if w.size < self.window:
            raise SpaceError(f"need at least {self.window} symbols to evaluate the potential")
        return float(self.table[int(word_codes(w, self.space.k)[0])])

    @property
    def sup_norm(self) -> float:
        return float(np.nanmax(np.abs(self.table)))

    def to_json(self) -> dict:
        words = admissible_words(self.space, self.window)
        return {"window": self.window,
                "values": {format_word(w, self.space.k): float(v)
                           for w, v in zip(words, self.values())}}


class ObservableFamily:
    """A d-tuple of potentials read through a common window.

    ``tables`` stacks the lifted lookup tables, shape ``(d, k**window)``.
    """

    def __init__(self, potentials):
        potentials = list(potentials)
        if not potentials:
            raise SpaceError("an observable family needs at least one potential")
        space = potentials[0].space
        if any(g.space != space for g in potentials):
            raise SpaceError("observables live on different spaces")
        self.space = space
        self.window = max(g.window for g in potentials)
        self.potentials = tuple(g.lift(self.window) for g in potentials)
        self.tables = np.stack([g.table for g in self.potentials])
        self.tables.setflags(write=False)

    @property
    def d(self) -> int:
        return len(self.potentials)

    def __len__(self):
        return self.d

    def __iter__(self):
        return iter(self.potentials)

    def combine(self, t) -> Potential:
        """The potential ``sum_i t_i g_i``."""
        t = np.asarray(t, dtype=float).reshape(-1)
        if t.size != self.d:
            raise SpaceError(f"expected {self.d} coefficients, got {t.size}")
        table = np.nan_to_num(self.tables).T @ t
        return Potential(self.space, self.window, table)

    def values(self) -> np.ndarray:
        """``(d, N)`` values on the admissible window words."""
        codes = admissible_codes(self.space, self.window)
        return self.tables[:, codes]
