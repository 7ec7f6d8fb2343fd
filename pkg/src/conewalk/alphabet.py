"""Finite label alphabets carrying an involution a -> a^{-1}.

Every graph in this package is labelled by such an alphabet: edge labels come
in inverse pairs (or are self-inverse, as for order-2 group generators), and
the reverse of an edge labelled ``a`` is labelled ``invert(a)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class AlphabetError(ValueError):
    """Unknown symbol, or an inverse map that is not an involution."""


@dataclass(frozen=True)
class LabelAlphabet:
    """Ordered symbol set with a total involution.

    Parameters
    ----------
    symbols : tuple of str
        Symbol names in a fixed order; the order is used for deterministic
        tie-breaking everywhere downstream.
    inverse_map : dict
        Maps every symbol to its inverse. Fixed points are allowed
        (self-inverse symbols, e.g. order-2 generators).
    """

    symbols: tuple[str, ...]
    inverse_map: dict = field(hash=False)

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise AlphabetError("duplicate symbols in alphabet")
        if set(self.inverse_map) != set(self.symbols):
            raise AlphabetError("inverse map must be total on the symbols")
        for a, b in self.inverse_map.items():
            if b not in self.inverse_map:
                raise AlphabetError(f"inverse of {a!r} is the unknown symbol {b!r}")
            if self.inverse_map[b] != a:
                raise AlphabetError(f"inverse map is not an involution at {a!r}")

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, a) -> bool:
        return a in self.inverse_map

    def invert(self, a: str) -> str:
        """Return a^{-1}; applying twice returns the original symbol."""
        try:
            return self.inverse_map[a]
        except KeyError:
            raise AlphabetError(f"unknown symbol {a!r}") from None

    def index(self, a: str) -> int:
        try:
            return self.symbols.index(a)
        except ValueError:
            raise AlphabetError(f"unknown symbol {a!r}") from None


def free_group_alphabet(rank: int) -> LabelAlphabet:
    """Standard symmetric generators of the rank-k free group: a/A, b/B, ..."""
    if rank < 1:
        raise AlphabetError("rank must be >= 1")
    if rank > 26:
        raise AlphabetError("rank > 26 not supported by the letter naming scheme")
    letters = "abcdefghijklmnopqrstuvwxyz"[:rank]
    symbols = []
    inverse = {}
    for c in letters:
        symbols += [c, c.upper()]
        inverse[c] = c.upper()
        inverse[c.upper()] = c
    return LabelAlphabet(tuple(symbols), inverse)


def involutive_alphabet(pairs: list[tuple[str, str]]) -> LabelAlphabet:
    """Build an alphabet from (symbol, inverse) pairs; (a, a) marks a self-inverse symbol."""
    symbols: list[str] = []
    inverse: dict = {}
    for a, b in pairs:
        for s in (a, b):
            if s not in inverse and s not in symbols:
                symbols.append(s)
        inverse[a] = b
        inverse[b] = a
    return LabelAlphabet(tuple(symbols), inverse)
